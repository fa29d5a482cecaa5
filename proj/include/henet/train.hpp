#pragma once

#include <cmath>
#include <ostream>
#include <vector>

#include "henet/data_io.hpp"
#include "henet/graph.hpp"

namespace henet {

struct TrainConfig {
  double base_lr = 0.01;
  std::vector<long long> lr_steps = {32000, 48000};
  double lr_factor = 0.1;
  long long max_iter = 65000;
  double weight_decay = 0.0005;
  Index batch_size = 128;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  bool decay_bn_params = true;  // weight decay also hits BN gamma/beta
  bool augment = true;
  long long log_every = 100;
  long long eval_every = 0;    // 0 = no periodic evaluation
  double stop_accuracy = 0.0;  // early exit once periodic eval reaches this; 0 = off

  void validate() const {
    if (base_lr <= 0 || lr_factor <= 0 || momentum < 0 || weight_decay < 0 || batch_size < 1 ||
        max_iter < 0)
      throw BuildError("train config: rates and sizes must be positive");
    for (std::size_t i = 0; i < lr_steps.size(); ++i) {
      if (max_iter > 0 && lr_steps[i] >= max_iter)
        throw BuildError("train config: lr step beyond max_iter");
      if (i > 0 && lr_steps[i] <= lr_steps[i - 1])
        throw BuildError("train config: lr_steps must be strictly increasing");
    }
  }
};

// Piecewise-constant schedule: base_lr * lr_factor^(steps passed at iter).
inline double multistep_lr(long long iter, const TrainConfig& cfg) {
  if (iter < 0 || iter >= cfg.max_iter)
    throw BuildError("multistep_lr: iteration " + std::to_string(iter) +
                     " outside [0," + std::to_string(cfg.max_iter) + ")");
  double lr = cfg.base_lr;
  for (const long long s : cfg.lr_steps)
    if (s <= iter) lr *= cfg.lr_factor;
  return lr;
}

template <typename Scalar>
struct OptimizerState {
  std::vector<std::vector<Scalar>> velocity;  // aligned with the parameter registry

  static OptimizerState from_params(const std::vector<ParamRef<Scalar>>& refs) {
    OptimizerState st;
    st.velocity.resize(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i)
      st.velocity[i].assign(refs[i].size, Scalar(0));
    return st;
  }
};

// The Caffe-flavor Nesterov update: with g' = g + wd*w,
//   v_new = mu*v - lr*g'
//   w    += (1 + mu)*v_new - mu*v
template <typename Scalar>
void sgd_nesterov_step(std::vector<ParamRef<Scalar>>& params,
                       const std::vector<std::vector<Scalar>>& grads,
                       OptimizerState<Scalar>& state, double lr, const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.velocity.size())
    throw BuildError("sgd step: parameter/gradient/state counts differ");
  const double mu = cfg.momentum;
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamRef<Scalar>& p = params[i];
    if (grads[i].size() != p.size || state.velocity[i].size() != p.size)
      throw BuildError("sgd step: size mismatch for " + p.name);
    const double wd = (p.is_batch_norm() && !cfg.decay_bn_params) ? 0.0 : cfg.weight_decay;
    Scalar* w = p.data;
    const Scalar* g = grads[i].data();
    Scalar* v = state.velocity[i].data();
    for (std::size_t j = 0; j < p.size; ++j) {
      const double gj = static_cast<double>(g[j]);
      if (!std::isfinite(gj))
        throw NumericError("non-finite gradient in " + p.name);
      const double adj = gj + wd * static_cast<double>(w[j]);
      const double v_old = static_cast<double>(v[j]);
      const double v_new = mu * v_old - lr * adj;
      w[j] = static_cast<Scalar>(static_cast<double>(w[j]) + (1.0 + mu) * v_new - mu * v_old);
      v[j] = static_cast<Scalar>(v_new);
    }
  }
}

inline constexpr Index kAugmentPad = 4;

// Deterministic core of the training augmentation: crops the zero-padded
// image at the given offsets, optionally mirrored.
template <typename Scalar>
Tensor<Scalar> crop_pad_view(const Tensor<Scalar>& image, Index dy, Index dx, bool flip,
                             Index crop) {
  const Index s = image.h();
  if (image.n() != 1 || image.w() != s)
    throw DataError("augment_sample: expected a single square image, got " +
                    image.shape().str());
  Tensor<Scalar> out(Shape{1, image.c(), crop, crop});
  for (Index c = 0; c < image.c(); ++c) {
    const Scalar* src = image.plane(0, c);
    Scalar* dst = out.plane(0, c);
    for (Index y = 0; y < crop; ++y) {
      const Index sy = y + dy - kAugmentPad;
      for (Index x = 0; x < crop; ++x) {
        const Index sx = (flip ? (crop - 1 - x) + dx : x + dx) - kAugmentPad;
        dst[y * crop + x] = (sy >= 0 && sy < s && sx >= 0 && sx < s)
                                ? src[sy * s + sx]
                                : Scalar(0);
      }
    }
  }
  return out;
}

// Zero-pads 4 px per side, crops `crop` x `crop` at offsets drawn uniformly,
// and mirror-flips with probability 1/2. Draw order: row offset, column
// offset, flip.
template <typename Scalar>
Tensor<Scalar> augment_sample(const Tensor<Scalar>& image, Rng& rng, Index crop = 31) {
  const Index range = image.h() + 2 * kAugmentPad - crop + 1;
  if (range < 1) throw DataError("augment_sample: crop larger than padded image");
  const Index dy = static_cast<Index>(rng.uniform_int(static_cast<std::uint32_t>(range)));
  const Index dx = static_cast<Index>(rng.uniform_int(static_cast<std::uint32_t>(range)));
  const bool flip = rng.coin_flip();
  return crop_pad_view(image, dy, dx, flip, crop);
}

// Test-time preprocessing: centered crop (floor offsets), no flip.
template <typename Scalar>
Tensor<Scalar> center_crop(const Tensor<Scalar>& image, Index crop) {
  const Index s = image.h();
  if (crop > s || image.w() != s)
    throw DataError("center_crop: crop " + std::to_string(crop) + " from " + image.shape().str());
  const Index off = (s - crop) / 2;
  Tensor<Scalar> out(Shape{image.n(), image.c(), crop, crop});
  for (Index n = 0; n < image.n(); ++n)
    for (Index c = 0; c < image.c(); ++c) {
      const Scalar* src = image.plane(n, c);
      Scalar* dst = out.plane(n, c);
      for (Index y = 0; y < crop; ++y)
        for (Index x = 0; x < crop; ++x) dst[y * crop + x] = src[(y + off) * s + (x + off)];
    }
  return out;
}

struct TrainResult {
  long long iterations = 0;
  double final_loss = 0.0;
  double final_lr = 0.0;
  double train_accuracy = 0.0;
  bool stopped_early = false;
};

// Runs up to cfg.max_iter minibatches with per-epoch reshuffling, logging
// `iter=<n> lr=<v> loss=<v>` lines. Bit-reproducible for a fixed seed.
TrainResult train_loop(ModelGraph<float>& g, const LabeledDataset& data, const TrainConfig& cfg,
                       std::ostream& log);

// Top-1 accuracy with center-crop preprocessing.
double evaluate(ModelGraph<float>& g, const LabeledDataset& data);

}  // namespace henet
