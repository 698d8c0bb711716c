#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "otkd/geometry.hpp"
#include "otkd/sinkhorn.hpp"
#include "otkd/tensor.hpp"

namespace otkd {

struct ConvLayerSpec {
  int kernel = 1;
  int stride = 1;

  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

// 1 + sum_i (k_i - 1) * prod_{j<i} s_j. Throws EmptyHead / InvalidArgument.
int receptive_field_extent(std::span<const ConvLayerSpec> head);

// Feature tensor plus the factor mapping output pixel coordinates onto its grid.
struct FeatureMap {
  Tensor3 data;
  double delta = 1.0;

  FeatureMap() = default;
  // Throws InvalidArgument for delta <= 0, empty spatial size or non-finite entries.
  FeatureMap(Tensor3 data, double delta);
};

// Integer feature-grid cell. row follows y, col follows x.
struct GridCell {
  long row = 0;
  long col = 0;

  friend bool operator==(const GridCell&, const GridCell&) = default;
};

// (row, col) = (round(delta * y), round(delta * x)) with ties to even.
GridCell region_center(const Keypoint2D& keypoint, double delta);

struct FeatureRegion {
  Tensor3 data;
  GridCell center;
  std::size_t sourceKeypoint = 0;
};

// extent x extent window around `center` from every channel; cells off the map read as zero.
// For even extents the extra cell lies below / right of the center. Throws CenterOutsideMap.
FeatureRegion extract_region(const FeatureMap& fmap, GridCell center, int extent,
                             std::size_t sourceKeypoint = 0);
FeatureRegion extract_region(const Tensor3& map, GridCell center, int extent,
                             std::size_t sourceKeypoint = 0);

// Writes the in-bounds cells of `region` back into `map` at its center.
void embed_region(Tensor3& map, const FeatureRegion& region);
// Same window, but adds `values` (region-shaped) instead of overwriting.
void accumulate_region(Tensor3& map, GridCell center, const Tensor3& values);

// `projection` is C_S x C_T (row-major). Mixes channels per cell, then average-pools to
// targetH x targetW with non-overlapping windows of size ceil(H / targetH), truncated at the
// edge. Throws ShapeMismatch when the shapes cannot be met.
FeatureRegion adapt_region(const FeatureRegion& teacherRegion, std::size_t targetC, std::size_t targetH,
                           std::size_t targetW, const MatrixRM& projection);

// Average pooling alone (channel count unchanged).
Tensor3 pool_region(const Tensor3& region, std::size_t targetH, std::size_t targetW);

// d loss / d projection given d loss / d adapted region.
MatrixRM adapt_region_projection_gradient(const FeatureRegion& teacherRegion, const Tensor3& adaptedGradient);

struct PfkdResult {
  double loss = 0.0;
  std::vector<Tensor3> studentGradients;   // one per student region
  std::vector<Tensor3> teacherGradients;   // one per (adapted) teacher region
};

// (1 / (N M)) sum_ij pi_ij MSE(R_i^T, R_j^S). `plan` is the solver's student-major M x N plan;
// it is transposed to teacher-major order here.
PfkdResult pfkd_loss(std::span<const FeatureRegion> teacherRegions,
                     std::span<const FeatureRegion> studentRegions, const TransportPlan& plan);

// Elementwise mean over members; regionsPerMember[e][k]. Centers are taken from member 0.
std::vector<FeatureRegion> aggregate_ensemble_regions(
    std::span<const std::vector<FeatureRegion>> regionsPerMember);

// Binary layout, little-endian: uint32 C, uint32 H, uint32 W, float32 delta, then C*H*W float32.
FeatureMap read_feature_map(std::istream& in, const std::string& source = "<feature map>");
void write_feature_map(std::ostream& out, const FeatureMap& fmap);

}  // namespace otkd
