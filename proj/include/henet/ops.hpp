#pragma once

#include <Eigen/Core>

#include <cmath>
#include <vector>

#include "henet/tensor.hpp"

namespace henet {

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapRM = Eigen::Map<MatRM<S>>;
template <typename S>
using CMapRM = Eigen::Map<const MatRM<S>>;

enum class Mode { Train, Infer };

inline Index conv_out_dim(Index in, Index kernel, Index stride, Index pad) {
  const Index span = in + 2 * pad - kernel;
  if (span < 0) return 0;  // kernel does not fit
  return span / stride + 1;
}

// Square-kernel grouped 2-D convolution. Group g convolves input channels
// [g*Cin/G, (g+1)*Cin/G) into output channels [g*Cout/G, (g+1)*Cout/G).
template <typename Scalar>
struct ConvParams {
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel = 1;
  Index stride = 1;
  Index padding = 0;
  Index groups = 1;
  Tensor<Scalar> weights;      // (out_channels, in_channels/groups, k, k)
  std::vector<Scalar> bias;    // empty = no bias

  bool has_bias() const { return !bias.empty(); }

  void validate() const {
    if (in_channels < 1 || out_channels < 1)
      throw BuildError("conv: channel counts must be positive");
    if (groups < 1 || in_channels % groups != 0 || out_channels % groups != 0)
      throw BuildError("conv: groups=" + std::to_string(groups) +
                       " does not divide in=" + std::to_string(in_channels) +
                       " / out=" + std::to_string(out_channels));
    const Shape want{out_channels, in_channels / groups, kernel, kernel};
    if (!(weights.shape() == want))
      throw BuildError("conv: weight shape " + weights.shape().str() +
                       " does not match " + want.str());
    if (has_bias() && static_cast<Index>(bias.size()) != out_channels)
      throw BuildError("conv: bias length mismatch");
  }
};

namespace detail {

// Gathers sample n's patches for one channel group into a row-major
// (cg*k*k) x (ho*wo) matrix; row order matches the weight layout (ci, ki, kj).
template <typename S>
void im2col_group(const Tensor<S>& x, Index n, Index c0, Index cg, Index k,
                  Index stride, Index pad, Index ho, Index wo, S* cols) {
  const Index H = x.h(), W = x.w();
  const Index ncols = ho * wo;
  for (Index ci = 0; ci < cg; ++ci) {
    const S* plane = x.plane(n, c0 + ci);
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj) {
        S* row = cols + ((ci * k + ki) * k + kj) * ncols;
        for (Index oh = 0; oh < ho; ++oh) {
          const Index ih = oh * stride - pad + ki;
          S* dst = row + oh * wo;
          if (ih < 0 || ih >= H) {
            std::fill(dst, dst + wo, S(0));
            continue;
          }
          const S* src = plane + ih * W;
          if (stride == 1 && kj >= pad && wo + kj - pad <= W) {
            std::copy(src + kj - pad, src + kj - pad + wo, dst);
            continue;
          }
          for (Index ow = 0; ow < wo; ++ow) {
            const Index iw = ow * stride - pad + kj;
            dst[ow] = (iw >= 0 && iw < W) ? src[iw] : S(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col_group: scatter-adds patch gradients back onto the image.
template <typename S>
void col2im_group_add(const S* cols, Index n, Index c0, Index cg, Index k,
                      Index stride, Index pad, Index ho, Index wo, Tensor<S>& gx) {
  const Index H = gx.h(), W = gx.w();
  const Index ncols = ho * wo;
  for (Index ci = 0; ci < cg; ++ci) {
    S* plane = gx.plane(n, c0 + ci);
    for (Index ki = 0; ki < k; ++ki) {
      for (Index kj = 0; kj < k; ++kj) {
        const S* row = cols + ((ci * k + ki) * k + kj) * ncols;
        for (Index oh = 0; oh < ho; ++oh) {
          const Index ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) continue;
          S* dst = plane + ih * W;
          const S* src = row + oh * wo;
          for (Index ow = 0; ow < wo; ++ow) {
            const Index iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < W) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

inline void check_conv_input(Index xc, Index in_channels) {
  if (xc != in_channels)
    throw BuildError("conv: input has " + std::to_string(xc) + " channels, expected " +
                     std::to_string(in_channels));
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> group_conv2d_forward(const Tensor<Scalar>& x, const ConvParams<Scalar>& p) {
  p.validate();
  detail::check_conv_input(x.c(), p.in_channels);
  const Index ho = conv_out_dim(x.h(), p.kernel, p.stride, p.padding);
  const Index wo = conv_out_dim(x.w(), p.kernel, p.stride, p.padding);
  if (ho < 1 || wo < 1)
    throw BuildError("conv: non-positive output dims for input " + x.shape().str() +
                     " k=" + std::to_string(p.kernel) + " s=" + std::to_string(p.stride) +
                     " pad=" + std::to_string(p.padding));

  const Index G = p.groups;
  const Index cg = p.in_channels / G;
  const Index og = p.out_channels / G;
  const Index krows = cg * p.kernel * p.kernel;
  const Index ncols = ho * wo;
  // 1x1 stride-1 convolutions read the input group block in place.
  const bool direct = (p.kernel == 1 && p.stride == 1 && p.padding == 0);

  Tensor<Scalar> out(Shape{x.n(), p.out_channels, ho, wo});
  std::vector<Scalar> cols;
  if (!direct) cols.resize(static_cast<std::size_t>(krows * ncols));

  for (Index n = 0; n < x.n(); ++n) {
    for (Index g = 0; g < G; ++g) {
      const Scalar* src;
      if (direct) {
        src = x.plane(n, g * cg);
      } else {
        detail::im2col_group(x, n, g * cg, cg, p.kernel, p.stride, p.padding, ho, wo,
                             cols.data());
        src = cols.data();
      }
      CMapRM<Scalar> wg(p.weights.data() + g * og * krows, og, krows);
      CMapRM<Scalar> cm(src, krows, ncols);
      MapRM<Scalar> om(out.plane(n, g * og), og, ncols);
      om.noalias() = wg * cm;
    }
    if (p.has_bias()) {
      for (Index oc = 0; oc < p.out_channels; ++oc) {
        Scalar* plane = out.plane(n, oc);
        const Scalar b = p.bias[static_cast<std::size_t>(oc)];
        for (Index i = 0; i < ncols; ++i) plane[i] += b;
      }
    }
  }
  return out;
}

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> x;
  Tensor<Scalar> weights;
  std::vector<Scalar> bias;  // empty when the conv has no bias
};

// Gradients of sum(grad_out . forward(x, p)) w.r.t. x, weights and bias.
template <typename Scalar>
ConvGrads<Scalar> group_conv2d_backward(const Tensor<Scalar>& x, const ConvParams<Scalar>& p,
                                        const Tensor<Scalar>& grad_out) {
  p.validate();
  detail::check_conv_input(x.c(), p.in_channels);
  const Index ho = conv_out_dim(x.h(), p.kernel, p.stride, p.padding);
  const Index wo = conv_out_dim(x.w(), p.kernel, p.stride, p.padding);
  const Shape want{x.n(), p.out_channels, ho, wo};
  detail::require_same_shape(grad_out.shape(), want, "group_conv2d_backward");

  const Index G = p.groups;
  const Index cg = p.in_channels / G;
  const Index og = p.out_channels / G;
  const Index krows = cg * p.kernel * p.kernel;
  const Index ncols = ho * wo;
  const bool direct = (p.kernel == 1 && p.stride == 1 && p.padding == 0);

  ConvGrads<Scalar> g{Tensor<Scalar>(x.shape()), Tensor<Scalar>(p.weights.shape()), {}};
  if (p.has_bias()) g.bias.assign(static_cast<std::size_t>(p.out_channels), Scalar(0));

  std::vector<Scalar> cols;
  MatRM<Scalar> colgrad;
  if (!direct) {
    cols.resize(static_cast<std::size_t>(krows * ncols));
    colgrad.resize(krows, ncols);
  }

  for (Index n = 0; n < x.n(); ++n) {
    for (Index grp = 0; grp < G; ++grp) {
      const Scalar* src;
      if (direct) {
        src = x.plane(n, grp * cg);
      } else {
        detail::im2col_group(x, n, grp * cg, cg, p.kernel, p.stride, p.padding, ho, wo,
                             cols.data());
        src = cols.data();
      }
      CMapRM<Scalar> cm(src, krows, ncols);
      CMapRM<Scalar> go(grad_out.plane(n, grp * og), og, ncols);
      CMapRM<Scalar> wg(p.weights.data() + grp * og * krows, og, krows);

      MapRM<Scalar> gw(g.weights.data() + grp * og * krows, og, krows);
      gw.noalias() += go * cm.transpose();

      if (direct) {
        MapRM<Scalar> gx(g.x.plane(n, grp * cg), krows, ncols);
        gx.noalias() += wg.transpose() * go;
      } else {
        colgrad.noalias() = wg.transpose() * go;
        detail::col2im_group_add(colgrad.data(), n, grp * cg, cg, p.kernel, p.stride,
                                 p.padding, ho, wo, g.x);
      }
    }
    if (p.has_bias()) {
      for (Index oc = 0; oc < p.out_channels; ++oc) {
        const Scalar* plane = grad_out.plane(n, oc);
        Scalar s(0);
        for (Index i = 0; i < ncols; ++i) s += plane[i];
        g.bias[static_cast<std::size_t>(oc)] += s;
      }
    }
  }
  return g;
}

// Transpose of the groups x (C/groups) channel index matrix: input channel
// q*(C/groups)+r lands on output channel r*groups+q. Values are untouched.
template <typename Scalar>
Tensor<Scalar> channel_shuffle(const Tensor<Scalar>& x, Index groups) {
  if (groups < 1 || x.c() % groups != 0)
    throw BuildError("channel_shuffle: groups=" + std::to_string(groups) +
                     " does not divide C=" + std::to_string(x.c()));
  const Index per = x.c() / groups;
  Tensor<Scalar> out(x.shape());
  const std::size_t plane = static_cast<std::size_t>(x.h()) * static_cast<std::size_t>(x.w());
  for (Index n = 0; n < x.n(); ++n)
    for (Index q = 0; q < groups; ++q)
      for (Index r = 0; r < per; ++r)
        std::memcpy(out.plane(n, r * groups + q), x.plane(n, q * per + r),
                    sizeof(Scalar) * plane);
  return out;
}

// The inverse permutation of shuffle(groups) is shuffle(C/groups).
template <typename Scalar>
Tensor<Scalar> channel_shuffle_backward(const Tensor<Scalar>& grad_out, Index groups) {
  return channel_shuffle(grad_out, grad_out.c() / groups);
}

template <typename Scalar>
struct BatchNormParams {
  Index channels = 0;
  std::vector<Scalar> gamma, beta;
  std::vector<Scalar> running_mean, running_var;
  Scalar epsilon = Scalar(1e-5);
  Scalar momentum = Scalar(0.9);  // weight of the old running statistic

  static BatchNormParams identity(Index c) {
    BatchNormParams p;
    p.channels = c;
    p.gamma.assign(static_cast<std::size_t>(c), Scalar(1));
    p.beta.assign(static_cast<std::size_t>(c), Scalar(0));
    p.running_mean.assign(static_cast<std::size_t>(c), Scalar(0));
    p.running_var.assign(static_cast<std::size_t>(c), Scalar(1));
    return p;
  }
};

template <typename Scalar>
struct BatchNormCache {
  std::vector<Scalar> mean, inv_std;
};

// Train mode normalizes by batch statistics over N*H*W per channel and updates
// the running stats; infer mode uses the running stats. Statistics accumulate
// in double with a fixed order.
template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& x, BatchNormParams<Scalar>& p, Mode mode,
                          BatchNormCache<Scalar>* cache = nullptr) {
  if (x.c() != p.channels)
    throw BuildError("batch_norm: input has " + std::to_string(x.c()) +
                     " channels, params expect " + std::to_string(p.channels));
  const Index N = x.n(), C = x.c();
  const Index plane = x.h() * x.w();
  const double m = static_cast<double>(N) * static_cast<double>(plane);
  Tensor<Scalar> out(x.shape());
  if (cache) {
    cache->mean.assign(static_cast<std::size_t>(C), Scalar(0));
    cache->inv_std.assign(static_cast<std::size_t>(C), Scalar(0));
  }

  for (Index c = 0; c < C; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double sum = 0.0;
      for (Index n = 0; n < N; ++n) {
        const Scalar* src = x.plane(n, c);
        for (Index i = 0; i < plane; ++i) sum += static_cast<double>(src[i]);
      }
      mean = sum / m;
      double sq = 0.0;
      for (Index n = 0; n < N; ++n) {
        const Scalar* src = x.plane(n, c);
        for (Index i = 0; i < plane; ++i) {
          const double d = static_cast<double>(src[i]) - mean;
          sq += d * d;
        }
      }
      var = sq / m;
      const double keep = static_cast<double>(p.momentum);
      p.running_mean[c] = static_cast<Scalar>(keep * p.running_mean[c] + (1.0 - keep) * mean);
      p.running_var[c] = static_cast<Scalar>(keep * p.running_var[c] + (1.0 - keep) * var);
    } else {
      mean = static_cast<double>(p.running_mean[c]);
      var = static_cast<double>(p.running_var[c]);
    }
    const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(p.epsilon));
    if (cache) {
      cache->mean[c] = static_cast<Scalar>(mean);
      cache->inv_std[c] = static_cast<Scalar>(inv_std);
    }
    // subtract-first keeps constant channels exactly at beta
    const Scalar mu = static_cast<Scalar>(mean);
    const Scalar a = static_cast<Scalar>(static_cast<double>(p.gamma[c]) * inv_std);
    const Scalar be = p.beta[c];
    for (Index n = 0; n < N; ++n) {
      const Scalar* src = x.plane(n, c);
      Scalar* dst = out.plane(n, c);
      for (Index i = 0; i < plane; ++i) dst[i] = a * (src[i] - mu) + be;
    }
  }
  return out;
}

template <typename Scalar>
struct BatchNormGrads {
  Tensor<Scalar> x;
  std::vector<Scalar> gamma, beta;
};

// Backward through the forward cache. Train mode differentiates through the
// batch statistics; infer mode treats the running statistics as constants.
template <typename Scalar>
BatchNormGrads<Scalar> batch_norm_backward(const Tensor<Scalar>& x,
                                           const BatchNormParams<Scalar>& p,
                                           const BatchNormCache<Scalar>& cache,
                                           const Tensor<Scalar>& grad_out,
                                           Mode mode = Mode::Train) {
  detail::require_same_shape(x.shape(), grad_out.shape(), "batch_norm_backward");
  const Index N = x.n(), C = x.c();
  const Index plane = x.h() * x.w();
  const double m = static_cast<double>(N) * static_cast<double>(plane);
  BatchNormGrads<Scalar> g{Tensor<Scalar>(x.shape()),
                           std::vector<Scalar>(static_cast<std::size_t>(C), Scalar(0)),
                           std::vector<Scalar>(static_cast<std::size_t>(C), Scalar(0))};
  for (Index c = 0; c < C; ++c) {
    const double mean = static_cast<double>(cache.mean[c]);
    const double istd = static_cast<double>(cache.inv_std[c]);
    double s1 = 0.0, s2 = 0.0;  // sum(dy), sum(dy * xhat)
    for (Index n = 0; n < N; ++n) {
      const Scalar* xs = x.plane(n, c);
      const Scalar* dy = grad_out.plane(n, c);
      for (Index i = 0; i < plane; ++i) {
        const double xhat = (static_cast<double>(xs[i]) - mean) * istd;
        s1 += static_cast<double>(dy[i]);
        s2 += static_cast<double>(dy[i]) * xhat;
      }
    }
    g.beta[c] = static_cast<Scalar>(s1);
    g.gamma[c] = static_cast<Scalar>(s2);
    const double k = static_cast<double>(p.gamma[c]) * istd;
    for (Index n = 0; n < N; ++n) {
      const Scalar* xs = x.plane(n, c);
      const Scalar* dy = grad_out.plane(n, c);
      Scalar* dx = g.x.plane(n, c);
      for (Index i = 0; i < plane; ++i) {
        if (mode == Mode::Infer) {
          dx[i] = static_cast<Scalar>(k * static_cast<double>(dy[i]));
        } else {
          const double xhat = (static_cast<double>(xs[i]) - mean) * istd;
          dx[i] = static_cast<Scalar>(k * (static_cast<double>(dy[i]) - s1 / m - xhat * s2 / m));
        }
      }
    }
  }
  return g;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  Tensor<Scalar> out(x.shape());
  for (Index i = 0; i < x.size(); ++i) out[i] = x[i] > Scalar(0) ? x[i] : Scalar(0);
  return out;
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_out) {
  detail::require_same_shape(x.shape(), grad_out.shape(), "relu_backward");
  Tensor<Scalar> g(x.shape());
  for (Index i = 0; i < x.size(); ++i) g[i] = x[i] > Scalar(0) ? grad_out[i] : Scalar(0);
  return g;
}

template <typename Scalar>
struct FcParams {
  Index in_dim = 0;
  Index out_dim = 0;
  Tensor<Scalar> weights;    // (out_dim, in_dim, 1, 1)
  std::vector<Scalar> bias;  // out_dim

  void validate() const {
    const Shape want{out_dim, in_dim, 1, 1};
    if (!(weights.shape() == want))
      throw BuildError("fc: weight shape " + weights.shape().str() + " does not match " +
                       want.str());
    if (static_cast<Index>(bias.size()) != out_dim)
      throw BuildError("fc: bias length mismatch");
  }
};

// Flattens (N,C,H,W) to N x D and computes scores = x W^T + b, returned as
// an (N, out_dim, 1, 1) tensor.
template <typename Scalar>
Tensor<Scalar> fully_connected(const Tensor<Scalar>& x, const FcParams<Scalar>& p) {
  p.validate();
  const Index d = x.c() * x.h() * x.w();
  if (d != p.in_dim)
    throw BuildError("fc: input flattens to " + std::to_string(d) + ", weights expect " +
                     std::to_string(p.in_dim));
  Tensor<Scalar> out(Shape{x.n(), p.out_dim, 1, 1});
  CMapRM<Scalar> xm(x.data(), x.n(), d);
  CMapRM<Scalar> wm(p.weights.data(), p.out_dim, d);
  MapRM<Scalar> om(out.data(), x.n(), p.out_dim);
  om.noalias() = xm * wm.transpose();
  for (Index n = 0; n < x.n(); ++n)
    for (Index k = 0; k < p.out_dim; ++k) out(n, k, 0, 0) += p.bias[static_cast<std::size_t>(k)];
  return out;
}

template <typename Scalar>
struct FcGrads {
  Tensor<Scalar> x;
  Tensor<Scalar> weights;
  std::vector<Scalar> bias;
};

template <typename Scalar>
FcGrads<Scalar> fully_connected_backward(const Tensor<Scalar>& x, const FcParams<Scalar>& p,
                                         const Tensor<Scalar>& grad_out) {
  p.validate();
  const Index d = x.c() * x.h() * x.w();
  detail::require_same_shape(grad_out.shape(), Shape{x.n(), p.out_dim, 1, 1},
                             "fully_connected_backward");
  FcGrads<Scalar> g{Tensor<Scalar>(x.shape()), Tensor<Scalar>(p.weights.shape()),
                    std::vector<Scalar>(static_cast<std::size_t>(p.out_dim), Scalar(0))};
  CMapRM<Scalar> xm(x.data(), x.n(), d);
  CMapRM<Scalar> wm(p.weights.data(), p.out_dim, d);
  CMapRM<Scalar> go(grad_out.data(), x.n(), p.out_dim);
  MapRM<Scalar> gx(g.x.data(), x.n(), d);
  MapRM<Scalar> gw(g.weights.data(), p.out_dim, d);
  gx.noalias() = go * wm;
  gw.noalias() = go.transpose() * xm;
  for (Index k = 0; k < p.out_dim; ++k) {
    Scalar s(0);
    for (Index n = 0; n < x.n(); ++n) s += go(n, k);
    g.bias[static_cast<std::size_t>(k)] = s;
  }
  return g;
}

template <typename Scalar>
struct SoftmaxLoss {
  Scalar loss = Scalar(0);
  Tensor<Scalar> grad_scores;
};

// Mean cross-entropy over the batch with max-subtraction stabilization;
// grad = (softmax - one_hot) / N.
template <typename Scalar>
SoftmaxLoss<Scalar> softmax_cross_entropy(const Tensor<Scalar>& scores,
                                          const std::vector<int>& labels) {
  const Index N = scores.n();
  const Index K = scores.c();
  if (scores.h() != 1 || scores.w() != 1)
    throw BuildError("softmax_cross_entropy: scores must be (N,K,1,1), got " +
                     scores.shape().str());
  if (static_cast<Index>(labels.size()) != N)
    throw BuildError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(N));
  SoftmaxLoss<Scalar> r;
  r.grad_scores = Tensor<Scalar>(scores.shape());
  double total = 0.0;
  for (Index n = 0; n < N; ++n) {
    const int label = labels[static_cast<std::size_t>(n)];
    if (label < 0 || label >= K)
      throw DataError("softmax_cross_entropy: label " + std::to_string(label) +
                      " out of range [0," + std::to_string(K) + ")");
    const Scalar* row = scores.plane(n, 0);  // (K,1,1) block is contiguous
    double mx = static_cast<double>(row[0]);
    for (Index k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(row[k]));
    double z = 0.0;
    for (Index k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k]) - mx);
    total += -(static_cast<double>(row[label]) - mx - std::log(z));
    Scalar* grad = r.grad_scores.plane(n, 0);
    for (Index k = 0; k < K; ++k) {
      const double pk = std::exp(static_cast<double>(row[k]) - mx) / z;
      grad[k] = static_cast<Scalar>((pk - (k == label ? 1.0 : 0.0)) / static_cast<double>(N));
    }
  }
  r.loss = static_cast<Scalar>(total / static_cast<double>(N));
  return r;
}

}  // namespace henet
