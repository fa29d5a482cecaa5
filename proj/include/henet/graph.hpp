#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "henet/arch.hpp"
#include "henet/ops.hpp"

namespace henet {

enum class LayerKind { Conv, BatchNorm, ReLU, Shuffle, Add, Concat, Slice, FC };

const char* layer_kind_name(LayerKind k);

// Producer index for layer inputs; kGraphInput refers to the network input.
inline constexpr int kGraphInput = -1;
inline constexpr int kNoInput = -2;

struct ConvGeom {
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel = 1;
  Index stride = 1;
  Index padding = 0;
  Index groups = 1;
  bool has_bias = false;
};

struct LayerDef {
  LayerKind kind = LayerKind::ReLU;
  std::string name;
  int src0 = kGraphInput;
  int src1 = kNoInput;  // second input of Add/Concat
  ConvGeom conv{};
  Index bn_channels = 0;
  Index shuffle_groups = 0;
  Index slice_lo = 0, slice_hi = 0;
  Index fc_in = 0, fc_out = 0;
};

enum class ArchKind { HENet, ShuffleNetBaseline };

// One row of the architecture table: a block parametrization and how often
// it repeats back to back.
struct StageRow {
  int stage = 0;  // 1-based
  BlockSpec spec;
  int count = 1;
  Shape output;  // at batch 1
};

// Structural description of a built network: topologically ordered layers
// plus the block table used to build them. Parameter-free; shared by the
// analyzer, the describer and the executable graph.
struct GraphDef {
  ArchKind arch = ArchKind::HENet;
  NetworkConfig cfg;
  Shape input;  // declared input at batch 1
  std::vector<LayerDef> layers;
  std::vector<StageRow> rows;  // HENet only

  std::string id() const;
};

GraphDef build_henet_def(const NetworkConfig& cfg);
GraphDef build_shufflenet_def(const NetworkConfig& cfg);

// Output shape of every layer for the given input; validates wiring.
std::vector<Shape> trace_shapes(const GraphDef& def, Shape input);

// Index of the layer with the given name; throws BuildError when absent.
int layer_index(const GraphDef& def, std::string_view name);

Index weighted_layer_count(const GraphDef& def);  // convs + FC

// Executable network: structure plus parameter storage, templated on the
// scalar so the same graph runs in float (production) or double (gradient
// checking).
template <typename Scalar>
struct ModelGraph {
  using ParamStorage = std::variant<std::monostate, ConvParams<Scalar>,
                                    BatchNormParams<Scalar>, FcParams<Scalar>>;

  GraphDef def;
  std::vector<ParamStorage> params;  // aligned with def.layers
  // Per-channel input means subtracted during preprocessing; stored with the
  // model so evaluation is self-contained.
  std::array<float, 3> input_means{0.0f, 0.0f, 0.0f};

  ConvParams<Scalar>& conv_at(std::size_t i) { return std::get<ConvParams<Scalar>>(params[i]); }
  const ConvParams<Scalar>& conv_at(std::size_t i) const {
    return std::get<ConvParams<Scalar>>(params[i]);
  }
  BatchNormParams<Scalar>& bn_at(std::size_t i) {
    return std::get<BatchNormParams<Scalar>>(params[i]);
  }
  FcParams<Scalar>& fc_at(std::size_t i) { return std::get<FcParams<Scalar>>(params[i]); }
  const FcParams<Scalar>& fc_at(std::size_t i) const {
    return std::get<FcParams<Scalar>>(params[i]);
  }
};

// Allocates zero weights, identity batch norms.
template <typename Scalar>
ModelGraph<Scalar> materialize(GraphDef def) {
  ModelGraph<Scalar> g;
  g.def = std::move(def);
  g.params.resize(g.def.layers.size());
  for (std::size_t i = 0; i < g.def.layers.size(); ++i) {
    const LayerDef& l = g.def.layers[i];
    switch (l.kind) {
      case LayerKind::Conv: {
        ConvParams<Scalar> p;
        p.in_channels = l.conv.in_channels;
        p.out_channels = l.conv.out_channels;
        p.kernel = l.conv.kernel;
        p.stride = l.conv.stride;
        p.padding = l.conv.padding;
        p.groups = l.conv.groups;
        p.weights = Tensor<Scalar>(
            Shape{p.out_channels, p.in_channels / p.groups, p.kernel, p.kernel});
        if (l.conv.has_bias) p.bias.assign(static_cast<std::size_t>(p.out_channels), Scalar(0));
        g.params[i] = std::move(p);
        break;
      }
      case LayerKind::BatchNorm:
        g.params[i] = BatchNormParams<Scalar>::identity(l.bn_channels);
        break;
      case LayerKind::FC: {
        FcParams<Scalar> p;
        p.in_dim = l.fc_in;
        p.out_dim = l.fc_out;
        p.weights = Tensor<Scalar>(Shape{p.out_dim, p.in_dim, 1, 1});
        p.bias.assign(static_cast<std::size_t>(p.out_dim), Scalar(0));
        g.params[i] = std::move(p);
        break;
      }
      default:
        break;
    }
  }
  return g;
}

// Zero-mean Gaussian weights with stddev sqrt(2 / fan_in); biases stay zero.
template <typename Scalar>
void init_he_normal(ModelGraph<Scalar>& g, Rng& rng) {
  for (std::size_t i = 0; i < g.def.layers.size(); ++i) {
    const LayerDef& l = g.def.layers[i];
    if (l.kind == LayerKind::Conv) {
      auto& p = g.conv_at(i);
      const double fan_in =
          static_cast<double>(p.in_channels / p.groups) * p.kernel * p.kernel;
      fill_normal(p.weights, rng, std::sqrt(2.0 / fan_in));
    } else if (l.kind == LayerKind::FC) {
      auto& p = g.fc_at(i);
      fill_normal(p.weights, rng, std::sqrt(2.0 / static_cast<double>(p.in_dim)));
    }
  }
}

template <typename Scalar>
ModelGraph<Scalar> build_henet(const NetworkConfig& cfg, std::uint64_t seed) {
  auto g = materialize<Scalar>(build_henet_def(cfg));
  Rng rng(seed);
  init_he_normal(g, rng);
  return g;
}

template <typename Scalar>
ModelGraph<Scalar> build_shufflenet_baseline(const NetworkConfig& cfg, std::uint64_t seed) {
  auto g = materialize<Scalar>(build_shufflenet_def(cfg));
  Rng rng(seed);
  init_he_normal(g, rng);
  return g;
}

enum class ParamRole { ConvWeight, ConvBias, FcWeight, FcBias, BnGamma, BnBeta };

template <typename Scalar>
struct ParamRef {
  std::string name;
  ParamRole role;
  Scalar* data = nullptr;
  std::size_t size = 0;

  bool is_batch_norm() const {
    return role == ParamRole::BnGamma || role == ParamRole::BnBeta;
  }
};

// Trainable parameters in deterministic layer order. Gradient sets and
// optimizer state index into this list.
template <typename Scalar>
std::vector<ParamRef<Scalar>> trainable_parameters(ModelGraph<Scalar>& g) {
  std::vector<ParamRef<Scalar>> refs;
  for (std::size_t i = 0; i < g.def.layers.size(); ++i) {
    const LayerDef& l = g.def.layers[i];
    if (l.kind == LayerKind::Conv) {
      auto& p = g.conv_at(i);
      refs.push_back({l.name + ".w", ParamRole::ConvWeight, p.weights.data(),
                      static_cast<std::size_t>(p.weights.size())});
      if (p.has_bias())
        refs.push_back({l.name + ".b", ParamRole::ConvBias, p.bias.data(), p.bias.size()});
    } else if (l.kind == LayerKind::BatchNorm) {
      auto& p = g.bn_at(i);
      refs.push_back({l.name + ".gamma", ParamRole::BnGamma, p.gamma.data(), p.gamma.size()});
      refs.push_back({l.name + ".beta", ParamRole::BnBeta, p.beta.data(), p.beta.size()});
    } else if (l.kind == LayerKind::FC) {
      auto& p = g.fc_at(i);
      refs.push_back({l.name + ".w", ParamRole::FcWeight, p.weights.data(),
                      static_cast<std::size_t>(p.weights.size())});
      refs.push_back({l.name + ".b", ParamRole::FcBias, p.bias.data(), p.bias.size()});
    }
  }
  return refs;
}

// Batch-norm running statistics (serialized but not optimized).
template <typename Scalar>
std::vector<ParamRef<Scalar>> state_buffers(ModelGraph<Scalar>& g) {
  std::vector<ParamRef<Scalar>> refs;
  for (std::size_t i = 0; i < g.def.layers.size(); ++i) {
    const LayerDef& l = g.def.layers[i];
    if (l.kind != LayerKind::BatchNorm) continue;
    auto& p = g.bn_at(i);
    refs.push_back({l.name + ".rmean", ParamRole::BnGamma, p.running_mean.data(),
                    p.running_mean.size()});
    refs.push_back(
        {l.name + ".rvar", ParamRole::BnGamma, p.running_var.data(), p.running_var.size()});
  }
  return refs;
}

template <typename Scalar>
struct ForwardTrace {
  Tensor<Scalar> input;
  std::vector<Tensor<Scalar>> acts;                // one per layer
  std::vector<BatchNormCache<Scalar>> bn_caches;   // filled for BN layers in train mode
  Mode mode = Mode::Infer;
};

namespace detail {

template <typename Scalar>
void check_graph_input(const GraphDef& def, const Tensor<Scalar>& x) {
  if (x.c() != def.input.c || x.h() != def.input.h || x.w() != def.input.w)
    throw BuildError("forward: input " + x.shape().str() + " does not match graph input (C,H,W)=(" +
                     std::to_string(def.input.c) + "," + std::to_string(def.input.h) + "," +
                     std::to_string(def.input.w) + ")");
}

}  // namespace detail

// Executes layers in order. Train mode updates BN running statistics and,
// when a trace is supplied, records the caches backward needs.
template <typename Scalar>
void run_forward(ModelGraph<Scalar>& g, const Tensor<Scalar>& x, Mode mode,
                 std::vector<Tensor<Scalar>>& acts,
                 std::vector<BatchNormCache<Scalar>>* caches) {
  detail::check_graph_input(g.def, x);
  const auto& layers = g.def.layers;
  acts.resize(layers.size());
  if (caches) caches->assign(layers.size(), {});
  auto src = [&](int idx) -> const Tensor<Scalar>& {
    return idx == kGraphInput ? x : acts[static_cast<std::size_t>(idx)];
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerDef& l = layers[i];
    const Tensor<Scalar>& a = src(l.src0);
    switch (l.kind) {
      case LayerKind::Conv:
        acts[i] = group_conv2d_forward(a, g.conv_at(i));
        break;
      case LayerKind::BatchNorm:
        acts[i] = batch_norm(a, g.bn_at(i), mode, caches ? &(*caches)[i] : nullptr);
        break;
      case LayerKind::ReLU:
        acts[i] = relu(a);
        break;
      case LayerKind::Shuffle:
        acts[i] = channel_shuffle(a, l.shuffle_groups);
        break;
      case LayerKind::Add:
        acts[i] = add_elementwise(a, src(l.src1));
        break;
      case LayerKind::Concat:
        acts[i] = concat_channels(a, src(l.src1));
        break;
      case LayerKind::Slice:
        acts[i] = slice_channels(a, l.slice_lo, l.slice_hi);
        break;
      case LayerKind::FC:
        acts[i] = fully_connected(a, g.fc_at(i));
        break;
    }
  }
}

// N x K class scores for a batch.
template <typename Scalar>
Tensor<Scalar> forward_model(ModelGraph<Scalar>& g, const Tensor<Scalar>& x, Mode mode) {
  std::vector<Tensor<Scalar>> acts;
  run_forward(g, x, mode, acts, static_cast<std::vector<BatchNormCache<Scalar>>*>(nullptr));
  return std::move(acts.back());
}

template <typename Scalar>
ForwardTrace<Scalar> forward_trace(ModelGraph<Scalar>& g, const Tensor<Scalar>& x, Mode mode) {
  ForwardTrace<Scalar> tr;
  tr.input = x;
  tr.mode = mode;
  run_forward(g, x, mode, tr.acts, &tr.bn_caches);
  return tr;
}

template <typename Scalar>
struct GradientSet {
  std::vector<std::vector<Scalar>> by_param;  // aligned with trainable_parameters
  Tensor<Scalar> input;                       // gradient w.r.t. the network input
};

namespace detail {

template <typename Scalar>
void accumulate(Tensor<Scalar>& dst, const Tensor<Scalar>& src) {
  if (dst.size() == 0) {
    dst = src;
    return;
  }
  require_same_shape(dst.shape(), src.shape(), "grad accumulate");
  Scalar* d = dst.data();
  const Scalar* s = src.data();
  for (Index i = 0; i < dst.size(); ++i) d[i] += s[i];
}

template <typename Scalar>
void add_flat(std::vector<Scalar>& dst, const Scalar* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

}  // namespace detail

// Backpropagates grad_scores through the trace. Gradients for every trainable
// parameter are returned in registry order; fan-out points accumulate.
template <typename Scalar>
GradientSet<Scalar> backward_model(ModelGraph<Scalar>& g, const ForwardTrace<Scalar>& tr,
                                   const Tensor<Scalar>& grad_scores) {
  if (tr.bn_caches.size() != g.def.layers.size() && !g.def.layers.empty())
    throw BuildError("backward_model requires a forward trace with caches");
  const auto& layers = g.def.layers;
  const std::size_t nl = layers.size();

  // Slot assignment mirrors trainable_parameters' walk.
  std::vector<std::array<int, 2>> slots(nl, {-1, -1});
  std::vector<std::size_t> slot_sizes;
  for (std::size_t i = 0; i < nl; ++i) {
    const LayerDef& l = layers[i];
    if (l.kind == LayerKind::Conv) {
      slots[i][0] = static_cast<int>(slot_sizes.size());
      slot_sizes.push_back(static_cast<std::size_t>(g.conv_at(i).weights.size()));
      if (g.conv_at(i).has_bias()) {
        slots[i][1] = static_cast<int>(slot_sizes.size());
        slot_sizes.push_back(g.conv_at(i).bias.size());
      }
    } else if (l.kind == LayerKind::BatchNorm) {
      slots[i][0] = static_cast<int>(slot_sizes.size());
      slot_sizes.push_back(g.bn_at(i).gamma.size());
      slots[i][1] = static_cast<int>(slot_sizes.size());
      slot_sizes.push_back(g.bn_at(i).beta.size());
    } else if (l.kind == LayerKind::FC) {
      slots[i][0] = static_cast<int>(slot_sizes.size());
      slot_sizes.push_back(static_cast<std::size_t>(g.fc_at(i).weights.size()));
      slots[i][1] = static_cast<int>(slot_sizes.size());
      slot_sizes.push_back(g.fc_at(i).bias.size());
    }
  }

  GradientSet<Scalar> out;
  out.by_param.resize(slot_sizes.size());
  for (std::size_t s = 0; s < slot_sizes.size(); ++s)
    out.by_param[s].assign(slot_sizes[s], Scalar(0));
  out.input = Tensor<Scalar>(tr.input.shape());

  std::vector<Tensor<Scalar>> agrad(nl);  // grad w.r.t. each layer output
  auto src = [&](int idx) -> const Tensor<Scalar>& {
    return idx == kGraphInput ? tr.input : tr.acts[static_cast<std::size_t>(idx)];
  };
  auto add_to = [&](int idx, const Tensor<Scalar>& t) {
    if (idx == kGraphInput)
      detail::accumulate(out.input, t);
    else
      detail::accumulate(agrad[static_cast<std::size_t>(idx)], t);
  };

  agrad[nl - 1] = grad_scores;
  for (std::size_t ri = nl; ri-- > 0;) {
    const LayerDef& l = layers[ri];
    const Tensor<Scalar>& go = agrad[ri];
    if (go.size() == 0) continue;  // dead output, nothing flowed back
    switch (l.kind) {
      case LayerKind::Conv: {
        auto cg = group_conv2d_backward(src(l.src0), g.conv_at(ri), go);
        detail::add_flat(out.by_param[static_cast<std::size_t>(slots[ri][0])],
                         cg.weights.data(), static_cast<std::size_t>(cg.weights.size()));
        if (slots[ri][1] >= 0)
          detail::add_flat(out.by_param[static_cast<std::size_t>(slots[ri][1])],
                           cg.bias.data(), cg.bias.size());
        add_to(l.src0, cg.x);
        break;
      }
      case LayerKind::BatchNorm: {
        auto bg = batch_norm_backward(src(l.src0), g.bn_at(ri), tr.bn_caches[ri], go, tr.mode);
        detail::add_flat(out.by_param[static_cast<std::size_t>(slots[ri][0])],
                         bg.gamma.data(), bg.gamma.size());
        detail::add_flat(out.by_param[static_cast<std::size_t>(slots[ri][1])],
                         bg.beta.data(), bg.beta.size());
        add_to(l.src0, bg.x);
        break;
      }
      case LayerKind::ReLU:
        add_to(l.src0, relu_backward(src(l.src0), go));
        break;
      case LayerKind::Shuffle:
        add_to(l.src0, channel_shuffle_backward(go, l.shuffle_groups));
        break;
      case LayerKind::Add:
        add_to(l.src0, go);
        add_to(l.src1, go);
        break;
      case LayerKind::Concat: {
        const Index ca = src(l.src0).c();
        add_to(l.src0, slice_channels(go, 0, ca));
        add_to(l.src1, slice_channels(go, ca, go.c()));
        break;
      }
      case LayerKind::Slice: {
        Tensor<Scalar> padded(src(l.src0).shape());
        const std::size_t plane =
            static_cast<std::size_t>(go.h()) * static_cast<std::size_t>(go.w());
        if (go.c() > 0)
          for (Index n = 0; n < go.n(); ++n)
            std::memcpy(padded.plane(n, l.slice_lo), go.plane(n, 0),
                        sizeof(Scalar) * plane * static_cast<std::size_t>(go.c()));
        add_to(l.src0, padded);
        break;
      }
      case LayerKind::FC: {
        auto fg = fully_connected_backward(src(l.src0), g.fc_at(ri), go);
        detail::add_flat(out.by_param[static_cast<std::size_t>(slots[ri][0])],
                         fg.weights.data(), static_cast<std::size_t>(fg.weights.size()));
        detail::add_flat(out.by_param[static_cast<std::size_t>(slots[ri][1])],
                         fg.bias.data(), fg.bias.size());
        add_to(l.src0, fg.x);
        break;
      }
    }
    agrad[ri] = Tensor<Scalar>();  // free as we go
  }
  return out;
}

template <typename Scalar>
std::vector<int> argmax_scores(const Tensor<Scalar>& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.n()));
  for (Index n = 0; n < scores.n(); ++n) {
    const Scalar* row = scores.plane(n, 0);
    int best = 0;
    for (Index k = 1; k < scores.c(); ++k)
      if (row[k] > row[best]) best = static_cast<int>(k);
    out[static_cast<std::size_t>(n)] = best;
  }
  return out;
}

}  // namespace henet
