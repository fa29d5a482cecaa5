#pragma once

// Shared test oracles, kept independent of the library's kernel paths: the
// convolution here is the textbook 7-loop form.

#include <cmath>
#include <vector>

#include "henet/ops.hpp"
#include "henet/tensor.hpp"

namespace testutil {

using henet::Index;
using henet::Shape;
using henet::Tensor;

// Dense (groups=1) convolution, straight loops over every output element.
template <typename S>
Tensor<S> naive_dense_conv(const Tensor<S>& x, const Tensor<S>& w, Index stride, Index pad,
                           const std::vector<S>& bias = {}) {
  const Index out_c = w.n(), in_c = w.c(), k = w.h();
  const Index ho = (x.h() + 2 * pad - k) / stride + 1;
  const Index wo = (x.w() + 2 * pad - k) / stride + 1;
  Tensor<S> out(Shape{x.n(), out_c, ho, wo});
  for (Index n = 0; n < x.n(); ++n)
    for (Index o = 0; o < out_c; ++o)
      for (Index oh = 0; oh < ho; ++oh)
        for (Index ow = 0; ow < wo; ++ow) {
          double acc = bias.empty() ? 0.0 : static_cast<double>(bias[o]);
          for (Index c = 0; c < in_c; ++c)
            for (Index ki = 0; ki < k; ++ki)
              for (Index kj = 0; kj < k; ++kj) {
                const Index ih = oh * stride - pad + ki;
                const Index iw = ow * stride - pad + kj;
                if (ih >= 0 && ih < x.h() && iw >= 0 && iw < x.w())
                  acc += static_cast<double>(x(n, c, ih, iw)) *
                         static_cast<double>(w(o, c, ki, kj));
              }
          out(n, o, oh, ow) = static_cast<S>(acc);
        }
  return out;
}

// Grouped convolution as G independent dense convolutions on channel slices.
template <typename S>
Tensor<S> group_conv_oracle(const Tensor<S>& x, const henet::ConvParams<S>& p) {
  const Index cg = p.in_channels / p.groups;
  const Index og = p.out_channels / p.groups;
  Tensor<S> out;
  for (Index g = 0; g < p.groups; ++g) {
    const Tensor<S> xs = henet::slice_channels(x, g * cg, (g + 1) * cg);
    Tensor<S> wg(Shape{og, cg, p.kernel, p.kernel});
    for (Index o = 0; o < og; ++o)
      for (Index c = 0; c < cg; ++c)
        for (Index ki = 0; ki < p.kernel; ++ki)
          for (Index kj = 0; kj < p.kernel; ++kj)
            wg(o, c, ki, kj) = p.weights(g * og + o, c, ki, kj);
    std::vector<S> bg;
    if (!p.bias.empty()) bg.assign(p.bias.begin() + g * og, p.bias.begin() + (g + 1) * og);
    const Tensor<S> og_t = naive_dense_conv(xs, wg, p.stride, p.padding, bg);
    out = g == 0 ? og_t : henet::concat_channels(out, og_t);
  }
  return out;
}

// Literal multiply-accumulate count of a naive grouped convolution.
inline long long naive_conv_mac_count(Index n, Index in_c, Index out_c, Index k, Index groups,
                                      Index in_h, Index in_w, Index stride, Index pad) {
  const Index ho = (in_h + 2 * pad - k) / stride + 1;
  const Index wo = (in_w + 2 * pad - k) / stride + 1;
  long long count = 0;
  const Index cg = in_c / groups;
  const Index og = out_c / groups;
  for (Index b = 0; b < n; ++b)
    for (Index g = 0; g < groups; ++g)
      for (Index o = 0; o < og; ++o)
        for (Index oh = 0; oh < ho; ++oh)
          for (Index ow = 0; ow < wo; ++ow)
            for (Index c = 0; c < cg; ++c)
              for (Index ki = 0; ki < k; ++ki)
                for (Index kj = 0; kj < k; ++kj) ++count;
  return count;
}

inline bool fd_close(double analytic, double fd, double tol = 1e-6, double floor_abs = 1e-8) {
  const double diff = std::abs(analytic - fd);
  if (diff <= floor_abs) return true;
  return diff <= tol * std::max({1.0, std::abs(analytic), std::abs(fd)});
}

template <typename S>
Tensor<S> random_tensor(Shape s, henet::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<S> t(s);
  henet::fill_uniform(t, rng, lo, hi);
  return t;
}

}  // namespace testutil
