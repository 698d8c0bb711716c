#include "otkd/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "otkd/error.hpp"
#include "otkd/simd/kernels.hpp"

namespace otkd {

std::vector<ConvLayerSpec> RegressorSpec::head_spec() const {
  std::vector<ConvLayerSpec> out;
  for (const auto& stage : head) out.push_back(stage.layer);
  return out;
}

void RegressorSpec::validate() const {
  if (head.empty()) fail(ErrorCode::EmptyHead, "regressor needs at least one head stage");
  if (inputChannels == 0 || gridSize == 0) fail(ErrorCode::InvalidArgument, "regressor input must be non-empty");
  if (!(delta > 0.0)) fail(ErrorCode::InvalidArgument, "regressor delta must be > 0");
  if (!(negativeSlope >= 0.0 && negativeSlope < 1.0)) fail(ErrorCode::InvalidArgument, "negative slope must lie in [0, 1)");
  auto check = [](const ConvStage& s) {
    if (s.layer.kernel < 1 || s.layer.kernel % 2 == 0) fail(ErrorCode::InvalidArgument, "kernels must be odd");
    if (s.layer.stride != 1) fail(ErrorCode::InvalidArgument, "regressor layers must have stride 1");
    if (s.outChannels == 0) fail(ErrorCode::InvalidArgument, "stage with zero channels");
  };
  std::for_each(backbone.begin(), backbone.end(), check);
  std::for_each(head.begin(), head.end(), check);
}

ToyRegressor::ToyRegressor(RegressorSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t in = spec_.inputChannels;
  std::size_t offset = 0;
  const std::size_t total = spec_.backbone.size() + spec_.head.size();
  for (std::size_t l = 0; l < total; ++l) {
    const ConvStage& s = l < spec_.backbone.size() ? spec_.backbone[l] : spec_.head[l - spec_.backbone.size()];
    const auto k = static_cast<std::size_t>(s.layer.kernel);
    LayerInfo info{in, s.outChannels, s.layer.kernel, l + 1 < total, offset, offset + s.outChannels * in * k * k};
    offset = info.biasOffset + s.outChannels;
    layers_.push_back(info);
    in = s.outChannels;
  }
  params_.assign(offset, 0.0);
}

void ToyRegressor::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const LayerInfo& l : layers_) {
    const auto k = static_cast<std::size_t>(l.kernel);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(l.in * k * k)));
    for (std::size_t i = l.weightOffset; i < l.biasOffset; ++i) params_[i] = normal(rng);
    std::fill(params_.begin() + static_cast<std::ptrdiff_t>(l.biasOffset),
              params_.begin() + static_cast<std::ptrdiff_t>(l.biasOffset + l.out), 0.0);
  }
}

namespace {

// Calls fn(outRow, inRow, x0, len) for every output row segment whose shifted input is in bounds.
template <typename Fn>
void for_shift(std::size_t h, std::size_t w, long dy, long dx, Fn fn) {
  const long H = static_cast<long>(h);
  const long W = static_cast<long>(w);
  const long x0 = std::max(0L, -dx);
  const long x1 = std::min(W, W - dx);
  if (x1 <= x0) return;
  for (long y = std::max(0L, -dy); y < std::min(H, H - dy); ++y) {
    fn(static_cast<std::size_t>(y), static_cast<std::size_t>(y + dy), static_cast<std::size_t>(x0),
       static_cast<std::size_t>(x0 + dx), static_cast<std::size_t>(x1 - x0));
  }
}

}  // namespace

ToyRegressor::Activations ToyRegressor::forward(const Tensor3& input) const {
  const std::size_t g = spec_.gridSize;
  if (input.channels() != spec_.inputChannels || input.height() != g || input.width() != g) {
    fail(ErrorCode::ShapeMismatch, "regressor input must be " + std::to_string(spec_.inputChannels) + "x" +
                                       std::to_string(g) + "x" + std::to_string(g));
  }
  const simd::KernelTable& kt = simd::active_kernels();
  Activations act;
  act.layers.reserve(layers_.size() + 1);
  act.layers.push_back(input);
  act.featureIndex = spec_.backbone.size();
  for (const LayerInfo& l : layers_) {
    const Tensor3& in = act.layers.back();
    Tensor3 out(l.out, g, g);
    const long pad = l.kernel / 2;
    const auto k = static_cast<std::size_t>(l.kernel);
    for (std::size_t co = 0; co < l.out; ++co) {
      auto dst = out.channel(co);
      std::fill(dst.begin(), dst.end(), params_[l.biasOffset + co]);
      for (std::size_t ci = 0; ci < l.in; ++ci) {
        const auto src = in.channel(ci);
        const double* w = &params_[l.weightOffset + (co * l.in + ci) * k * k];
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const double wv = w[ky * k + kx];
            if (wv == 0.0) continue;
            for_shift(g, g, static_cast<long>(ky) - pad, static_cast<long>(kx) - pad,
                      [&](std::size_t yo, std::size_t yi, std::size_t xo, std::size_t xi, std::size_t n) {
                        kt.axpy(wv, &src[yi * g + xi], &dst[yo * g + xo], n);
                      });
          }
        }
      }
      if (l.relu) {
        for (double& v : dst) v = v > 0.0 ? v : spec_.negativeSlope * v;
      }
    }
    act.layers.push_back(std::move(out));
  }

  const Tensor3& logits = act.layers.back();
  const std::size_t m = logits.channels();
  act.probabilities = Tensor3(m, g, g);
  std::vector<Keypoint2D> points(m);
  for (std::size_t c = 0; c < m; ++c) {
    const auto z = logits.channel(c);
    const double shift = *std::max_element(z.begin(), z.end());
    auto p = act.probabilities.channel(c);
    const double total = kt.exp_shift_sum(z.data(), shift, p.data(), p.size());
    if (!std::isfinite(shift) || !std::isfinite(total)) {
      fail(ErrorCode::TrainingDiverged, "keypoint logits of channel " + std::to_string(c) + " are not finite");
    }
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t y = 0; y < g; ++y) {
      double rowSum = 0.0;
      for (std::size_t x = 0; x < g; ++x) {
        double& v = p[y * g + x];
        v /= total;
        rowSum += v;
        mx += v * static_cast<double>(x);
      }
      my += rowSum * static_cast<double>(y);
    }
    points[c] = Keypoint2D{mx / spec_.delta, my / spec_.delta};
  }
  act.keypoints = KeypointSet(std::move(points));
  return act;
}

void ToyRegressor::backward(const Activations& act, const Eigen::MatrixX2d& keypointGradient,
                            const Tensor3* featureGradient, std::span<double> gradient) const {
  const std::size_t g = spec_.gridSize;
  const std::size_t m = spec_.keypoint_count();
  if (keypointGradient.rows() != static_cast<Eigen::Index>(m)) {
    fail(ErrorCode::DimensionMismatch, "keypoint gradient must have one row per keypoint");
  }
  if (gradient.size() != params_.size()) fail(ErrorCode::DimensionMismatch, "gradient buffer has the wrong size");
  if (featureGradient && !featureGradient->same_shape(act.features())) {
    fail(ErrorCode::ShapeMismatch, "feature gradient shape differs from the backbone output");
  }
  const simd::KernelTable& kt = simd::active_kernels();

  // Soft-argmax: d x / d z_c = p_c (col_c - x) / delta, likewise for y.
  Tensor3 upstream(m, g, g);
  for (std::size_t c = 0; c < m; ++c) {
    const double gx = keypointGradient(static_cast<Eigen::Index>(c), 0) / spec_.delta;
    const double gy = keypointGradient(static_cast<Eigen::Index>(c), 1) / spec_.delta;
    const double mx = act.keypoints[c].x * spec_.delta;
    const double my = act.keypoints[c].y * spec_.delta;
    const auto p = act.probabilities.channel(c);
    auto d = upstream.channel(c);
    for (std::size_t y = 0; y < g; ++y) {
      for (std::size_t x = 0; x < g; ++x) {
        d[y * g + x] = p[y * g + x] * ((static_cast<double>(x) - mx) * gx + (static_cast<double>(y) - my) * gy);
      }
    }
  }

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const LayerInfo& l = layers_[li];
    const Tensor3& out = act.layers[li + 1];
    const Tensor3& in = act.layers[li];
    if (featureGradient && li + 1 == act.featureIndex) {
      simd::axpy(1.0, featureGradient->values(), upstream.values());
    }
    if (l.relu) {
      auto d = upstream.values();
      const auto o = out.values();
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(o[i] > 0.0)) d[i] *= spec_.negativeSlope;
      }
    }
    const long pad = l.kernel / 2;
    const auto k = static_cast<std::size_t>(l.kernel);
    const bool needInput = li > 0;
    Tensor3 down = needInput ? Tensor3(l.in, g, g) : Tensor3();
    for (std::size_t co = 0; co < l.out; ++co) {
      const auto dOut = upstream.channel(co);
      double bias = 0.0;
      for (double v : dOut) bias += v;
      gradient[l.biasOffset + co] += bias;
      for (std::size_t ci = 0; ci < l.in; ++ci) {
        const auto src = in.channel(ci);
        const std::size_t wbase = l.weightOffset + (co * l.in + ci) * k * k;
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            double acc = 0.0;
            const double wv = params_[wbase + ky * k + kx];
            for_shift(g, g, static_cast<long>(ky) - pad, static_cast<long>(kx) - pad,
                      [&](std::size_t yo, std::size_t yi, std::size_t xo, std::size_t xi, std::size_t n) {
                        acc += kt.dot(&dOut[yo * g + xo], &src[yi * g + xi], n);
                        if (needInput && wv != 0.0) {
                          kt.axpy(wv, &dOut[yo * g + xo], &down.channel(ci)[yi * g + xi], n);
                        }
                      });
            gradient[wbase + ky * k + kx] += acc;
          }
        }
      }
    }
    if (needInput) upstream = std::move(down);
  }
}

}  // namespace otkd
