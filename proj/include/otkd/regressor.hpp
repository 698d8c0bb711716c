#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "otkd/geometry.hpp"
#include "otkd/pfkd.hpp"
#include "otkd/tensor.hpp"

namespace otkd {

struct ConvStage {
  ConvLayerSpec layer;
  std::size_t outChannels = 1;
};

// Stride-1 'same' convolutions: leaky-ReLU backbone, then a head whose last stage emits one
// heatmap per keypoint (no ReLU). Keypoints are the spatial soft-argmax divided by delta.
struct RegressorSpec {
  std::size_t inputChannels = 1;
  std::size_t gridSize = 16;
  double delta = 0.25;
  double negativeSlope = 0.1;
  std::vector<ConvStage> backbone;
  std::vector<ConvStage> head;

  std::size_t keypoint_count() const { return head.back().outChannels; }
  std::size_t feature_channels() const { return backbone.empty() ? inputChannels : backbone.back().outChannels; }
  std::vector<ConvLayerSpec> head_spec() const;
  // Throws InvalidArgument: empty head, even kernels, stride != 1, zero channels.
  void validate() const;
};

class ToyRegressor {
 public:
  // Parameters start at zero; call initialize() for a random start.
  explicit ToyRegressor(RegressorSpec spec);

  // He-normal weights, zero biases.
  void initialize(std::uint64_t seed);

  const RegressorSpec& spec() const noexcept { return spec_; }
  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  struct Activations {
    std::vector<Tensor3> layers;   // [0] input, [l + 1] output of stage l
    std::size_t featureIndex = 0;  // layers[featureIndex] is the backbone output
    Tensor3 probabilities;         // per-keypoint spatial softmax
    KeypointSet keypoints;

    const Tensor3& features() const { return layers[featureIndex]; }
  };

  Activations forward(const Tensor3& input) const;
  KeypointSet predict(const Tensor3& input) const { return forward(input).keypoints; }

  // Adds d loss / d parameters to `gradient`. `keypointGradient` is M x 2 (pixels);
  // `featureGradient`, when given, is d loss / d backbone output.
  void backward(const Activations& act, const Eigen::MatrixX2d& keypointGradient, const Tensor3* featureGradient,
                std::span<double> gradient) const;

  friend bool operator==(const ToyRegressor& a, const ToyRegressor& b) { return a.params_ == b.params_; }

 private:
  struct LayerInfo {
    std::size_t in;
    std::size_t out;
    int kernel;
    bool relu;
    std::size_t weightOffset;
    std::size_t biasOffset;
  };

  RegressorSpec spec_;
  std::vector<LayerInfo> layers_;
  std::vector<double> params_;
};

}  // namespace otkd
