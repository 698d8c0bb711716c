#include "otkd/pfkd.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>

#include "otkd/error.hpp"
#include "otkd/simd/kernels.hpp"

namespace otkd {

int receptive_field_extent(std::span<const ConvLayerSpec> head) {
  if (head.empty()) fail(ErrorCode::EmptyHead, "receptive field of an empty head");
  long extent = 1;
  long jump = 1;
  for (const ConvLayerSpec& layer : head) {
    if (layer.kernel < 1 || layer.stride < 1) {
      fail(ErrorCode::InvalidArgument, "kernel and stride must be positive");
    }
    extent += (layer.kernel - 1) * jump;
    jump *= layer.stride;
  }
  return static_cast<int>(extent);
}

FeatureMap::FeatureMap(Tensor3 values, double d) : data(std::move(values)), delta(d) {
  if (!(delta > 0.0) || !std::isfinite(delta)) fail(ErrorCode::InvalidArgument, "feature map delta must be > 0");
  if (data.height() == 0 || data.width() == 0) fail(ErrorCode::InvalidArgument, "feature map has no cells");
  if (!data.all_finite()) fail(ErrorCode::InvalidArgument, "feature map has non-finite entries");
}

GridCell region_center(const Keypoint2D& keypoint, double delta) {
  // nearbyint follows the default FE_TONEAREST mode, i.e. ties to even.
  return GridCell{static_cast<long>(std::nearbyint(delta * keypoint.y)),
                  static_cast<long>(std::nearbyint(delta * keypoint.x))};
}

namespace {

long window_start(long center, int extent) { return center - (extent - 1) / 2; }

bool inside(const Tensor3& map, long row, long col) {
  return row >= 0 && col >= 0 && row < static_cast<long>(map.height()) && col < static_cast<long>(map.width());
}

}  // namespace

FeatureRegion extract_region(const Tensor3& map, GridCell center, int extent, std::size_t sourceKeypoint) {
  if (extent < 1) fail(ErrorCode::InvalidArgument, "region extent must be positive");
  if (!inside(map, center.row, center.col)) {
    fail(ErrorCode::CenterOutsideMap, "center (" + std::to_string(center.row) + ", " + std::to_string(center.col) +
                                          ") outside " + std::to_string(map.height()) + "x" +
                                          std::to_string(map.width()) + " map");
  }
  const auto e = static_cast<std::size_t>(extent);
  FeatureRegion region{Tensor3(map.channels(), e, e), center, sourceKeypoint};
  const long r0 = window_start(center.row, extent);
  const long c0 = window_start(center.col, extent);
  for (std::size_t c = 0; c < map.channels(); ++c) {
    for (std::size_t y = 0; y < e; ++y) {
      const long row = r0 + static_cast<long>(y);
      for (std::size_t x = 0; x < e; ++x) {
        const long col = c0 + static_cast<long>(x);
        if (inside(map, row, col)) {
          region.data(c, y, x) = map(c, static_cast<std::size_t>(row), static_cast<std::size_t>(col));
        }
      }
    }
  }
  return region;
}

FeatureRegion extract_region(const FeatureMap& fmap, GridCell center, int extent, std::size_t sourceKeypoint) {
  return extract_region(fmap.data, center, extent, sourceKeypoint);
}

namespace {

template <typename Op>
void for_window(Tensor3& map, GridCell center, const Tensor3& values, Op op) {
  if (values.channels() != map.channels() || values.height() != values.width()) {
    fail(ErrorCode::ShapeMismatch, "region does not fit the map");
  }
  const int extent = static_cast<int>(values.height());
  const long r0 = window_start(center.row, extent);
  const long c0 = window_start(center.col, extent);
  for (std::size_t c = 0; c < map.channels(); ++c) {
    for (std::size_t y = 0; y < values.height(); ++y) {
      const long row = r0 + static_cast<long>(y);
      for (std::size_t x = 0; x < values.width(); ++x) {
        const long col = c0 + static_cast<long>(x);
        if (inside(map, row, col)) {
          op(map(c, static_cast<std::size_t>(row), static_cast<std::size_t>(col)), values(c, y, x));
        }
      }
    }
  }
}

}  // namespace

void embed_region(Tensor3& map, const FeatureRegion& region) {
  for_window(map, region.center, region.data, [](double& dst, double v) { dst = v; });
}

void accumulate_region(Tensor3& map, GridCell center, const Tensor3& values) {
  for_window(map, center, values, [](double& dst, double v) { dst += v; });
}

namespace {

std::size_t pool_window(std::size_t size, std::size_t target) {
  if (target == 0 || target > size) {
    fail(ErrorCode::ShapeMismatch, "cannot pool " + std::to_string(size) + " cells to " + std::to_string(target));
  }
  const std::size_t k = (size + target - 1) / target;
  if ((size + k - 1) / k != target) {
    fail(ErrorCode::ShapeMismatch, "no non-overlapping pooling maps " + std::to_string(size) + " cells to " +
                                       std::to_string(target));
  }
  return k;
}

}  // namespace

Tensor3 pool_region(const Tensor3& region, std::size_t targetH, std::size_t targetW) {
  const std::size_t kh = pool_window(region.height(), targetH);
  const std::size_t kw = pool_window(region.width(), targetW);
  Tensor3 out(region.channels(), targetH, targetW);
  for (std::size_t c = 0; c < region.channels(); ++c) {
    for (std::size_t oy = 0; oy < targetH; ++oy) {
      const std::size_t y1 = std::min(region.height(), (oy + 1) * kh);
      for (std::size_t ox = 0; ox < targetW; ++ox) {
        const std::size_t x1 = std::min(region.width(), (ox + 1) * kw);
        double sum = 0.0;
        for (std::size_t y = oy * kh; y < y1; ++y) {
          for (std::size_t x = ox * kw; x < x1; ++x) sum += region(c, y, x);
        }
        out(c, oy, ox) = sum / static_cast<double>((y1 - oy * kh) * (x1 - ox * kw));
      }
    }
  }
  return out;
}

namespace {

// out[s] = sum_t P(s, t) in[t], per cell.
Tensor3 mix_channels(const Tensor3& in, const MatrixRM& projection) {
  Tensor3 out(static_cast<std::size_t>(projection.rows()), in.height(), in.width());
  for (std::size_t s = 0; s < out.channels(); ++s) {
    auto dst = out.channel(s);
    for (std::size_t t = 0; t < in.channels(); ++t) {
      simd::axpy(projection(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)), in.channel(t), dst);
    }
  }
  return out;
}

}  // namespace

FeatureRegion adapt_region(const FeatureRegion& teacherRegion, std::size_t targetC, std::size_t targetH,
                           std::size_t targetW, const MatrixRM& projection) {
  if (projection.rows() != static_cast<Eigen::Index>(targetC) ||
      projection.cols() != static_cast<Eigen::Index>(teacherRegion.data.channels())) {
    fail(ErrorCode::ShapeMismatch, "projection must be " + std::to_string(targetC) + "x" +
                                       std::to_string(teacherRegion.data.channels()));
  }
  // pool, then mix channels
  const Tensor3 pooled = pool_region(teacherRegion.data, targetH, targetW);
  return FeatureRegion{mix_channels(pooled, projection), teacherRegion.center, teacherRegion.sourceKeypoint};
}

MatrixRM adapt_region_projection_gradient(const FeatureRegion& teacherRegion, const Tensor3& adaptedGradient) {
  const Tensor3 pooled = pool_region(teacherRegion.data, adaptedGradient.height(), adaptedGradient.width());
  MatrixRM grad(static_cast<Eigen::Index>(adaptedGradient.channels()), static_cast<Eigen::Index>(pooled.channels()));
  for (std::size_t s = 0; s < adaptedGradient.channels(); ++s) {
    for (std::size_t t = 0; t < pooled.channels(); ++t) {
      grad(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) =
          simd::dot(adaptedGradient.channel(s), pooled.channel(t));
    }
  }
  return grad;
}

PfkdResult pfkd_loss(std::span<const FeatureRegion> teacherRegions, std::span<const FeatureRegion> studentRegions,
                     const TransportPlan& plan) {
  const std::size_t n = teacherRegions.size();
  const std::size_t m = studentRegions.size();
  if (n == 0 || m == 0) fail(ErrorCode::EmptySet, "pfkd_loss needs teacher and student regions");
  const MatrixRM pi = plan.entries.transpose();
  if (pi.rows() != static_cast<Eigen::Index>(n) || pi.cols() != static_cast<Eigen::Index>(m)) {
    fail(ErrorCode::ShapeMismatch, "plan must be " + std::to_string(m) + "x" + std::to_string(n));
  }
  const Tensor3& ref = studentRegions[0].data;
  for (const auto& r : teacherRegions) {
    if (!r.data.same_shape(ref)) fail(ErrorCode::ShapeMismatch, "teacher region shape differs from student");
  }
  for (const auto& r : studentRegions) {
    if (!r.data.same_shape(ref)) fail(ErrorCode::ShapeMismatch, "student region shapes differ");
  }

  const double volume = static_cast<double>(ref.size());
  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(m));
  const double gscale = 2.0 * norm / volume;

  PfkdResult result;
  result.studentGradients.assign(m, Tensor3(ref.channels(), ref.height(), ref.width()));
  result.teacherGradients.assign(n, Tensor3(ref.channels(), ref.height(), ref.width()));
  std::vector<double> diff(ref.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = teacherRegions[i].data.values();
    for (std::size_t j = 0; j < m; ++j) {
      const double w = pi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (w == 0.0) continue;
      const auto s = studentRegions[j].data.values();
      result.loss += norm * w * simd::squared_distance(t, s) / volume;
      for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = t[k] - s[k];
      simd::axpy(-gscale * w, diff, result.studentGradients[j].values());
      simd::axpy(gscale * w, diff, result.teacherGradients[i].values());
    }
  }
  return result;
}

std::vector<FeatureRegion> aggregate_ensemble_regions(std::span<const std::vector<FeatureRegion>> regionsPerMember) {
  if (regionsPerMember.empty()) fail(ErrorCode::EmptyEnsemble, "no ensemble members");
  const auto& first = regionsPerMember[0];
  std::vector<FeatureRegion> out = first;
  for (std::size_t e = 1; e < regionsPerMember.size(); ++e) {
    const auto& member = regionsPerMember[e];
    if (member.size() != first.size()) fail(ErrorCode::ShapeMismatch, "members produced different region counts");
    for (std::size_t k = 0; k < member.size(); ++k) {
      if (!member[k].data.same_shape(out[k].data)) fail(ErrorCode::ShapeMismatch, "member region shapes differ");
      simd::axpy(1.0, member[k].data.values(), out[k].data.values());
    }
  }
  const double inv = 1.0 / static_cast<double>(regionsPerMember.size());
  for (auto& region : out) {
    for (double& v : region.data.values()) v *= inv;
  }
  return out;
}

namespace {

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

std::uint32_t read_u32(std::istream& in, const std::string& source, const char* what) {
  std::uint32_t raw = 0;
  if (!in.read(reinterpret_cast<char*>(&raw), sizeof raw)) {
    fail(ErrorCode::ParseError, source + ": truncated header (" + what + ")");
  }
  return to_little(raw);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const std::uint32_t raw = to_little(v);
  out.write(reinterpret_cast<const char*>(&raw), sizeof raw);
}

}  // namespace

FeatureMap read_feature_map(std::istream& in, const std::string& source) {
  const std::uint32_t c = read_u32(in, source, "C");
  const std::uint32_t h = read_u32(in, source, "H");
  const std::uint32_t w = read_u32(in, source, "W");
  const float delta = std::bit_cast<float>(read_u32(in, source, "delta"));
  const std::size_t count = static_cast<std::size_t>(c) * h * w;
  std::vector<double> values(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::uint32_t raw = 0;
    if (!in.read(reinterpret_cast<char*>(&raw), sizeof raw)) {
      fail(ErrorCode::ParseError, source + ": expected " + std::to_string(count) + " values, got " + std::to_string(k));
    }
    values[k] = std::bit_cast<float>(to_little(raw));
  }
  try {
    return FeatureMap(Tensor3(c, h, w, std::move(values)), delta);
  } catch (const Error& e) {
    fail(ErrorCode::ParseError, source + ": " + e.what());
  }
}

void write_feature_map(std::ostream& out, const FeatureMap& fmap) {
  write_u32(out, static_cast<std::uint32_t>(fmap.data.channels()));
  write_u32(out, static_cast<std::uint32_t>(fmap.data.height()));
  write_u32(out, static_cast<std::uint32_t>(fmap.data.width()));
  write_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(fmap.delta)));
  for (double v : fmap.data.values()) write_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

}  // namespace otkd
