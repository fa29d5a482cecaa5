#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstring>
#include <string>
#include <vector>

#include "henet/errors.hpp"
#include "henet/random.hpp"

namespace henet {

using Index = Eigen::Index;

// Rank-4 shape, NCHW.
struct Shape {
  Index n = 0;
  Index c = 0;
  Index h = 0;
  Index w = 0;

  Index numel() const { return n * c * h * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense rank-4 tensor, contiguous NCHW (N-major, then C, H, W). Shape is
// fixed at construction; operations return new tensors. float is the
// production scalar, double backs the gradient-check mode.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape s) : shape_(s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
      throw BuildError("tensor shape has negative component " + s.str());
    data_.assign(static_cast<std::size_t>(s.numel()), Scalar(0));
  }

  Tensor(Index n, Index c, Index h, Index w) : Tensor(Shape{n, c, h, w}) {}

  static Tensor constant(Shape s, Scalar v) {
    Tensor t(s);
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }
  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor ones(Shape s) { return constant(s, Scalar(1)); }

  const Shape& shape() const { return shape_; }
  Index n() const { return shape_.n; }
  Index c() const { return shape_.c; }
  Index h() const { return shape_.h; }
  Index w() const { return shape_.w; }
  Index size() const { return static_cast<Index>(data_.size()); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  Scalar operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  Scalar& operator()(Index n, Index c, Index h, Index w) {
    return data_[static_cast<std::size_t>(offset(n, c, h, w))];
  }
  Scalar operator()(Index n, Index c, Index h, Index w) const {
    return data_[static_cast<std::size_t>(offset(n, c, h, w))];
  }

  Index offset(Index n, Index c, Index h, Index w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  // Start of the (n, c) spatial plane; planes are contiguous h*w runs.
  Scalar* plane(Index n, Index c) { return data() + offset(n, c, 0, 0); }
  const Scalar* plane(Index n, Index c) const { return data() + offset(n, c, 0, 0); }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out(shape_);
    for (Index i = 0; i < size(); ++i) out[i] = static_cast<T>(data_[i]);
    return out;
  }

 private:
  Shape shape_{};
  std::vector<Scalar> data_;
};

namespace detail {
inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b))
    throw BuildError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}
}  // namespace detail

// out[i] = a[i] + b[i]; shapes must match exactly.
template <typename Scalar>
Tensor<Scalar> add_elementwise(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add_elementwise");
  Tensor<Scalar> out(a.shape());
  const Scalar* pa = a.data();
  const Scalar* pb = b.data();
  Scalar* po = out.data();
  for (Index i = 0; i < a.size(); ++i) po[i] = pa[i] + pb[i];
  return out;
}

// Stacks b's channels after a's. N/H/W must agree.
template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
    throw BuildError("concat_channels: N/H/W mismatch " + sa.str() + " vs " + sb.str());
  Tensor<Scalar> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t plane = static_cast<std::size_t>(sa.h) * static_cast<std::size_t>(sa.w);
  for (Index n = 0; n < sa.n; ++n) {
    if (sa.c > 0) std::memcpy(out.plane(n, 0), a.plane(n, 0), sizeof(Scalar) * plane * sa.c);
    if (sb.c > 0)
      std::memcpy(out.plane(n, sa.c), b.plane(n, 0), sizeof(Scalar) * plane * sb.c);
  }
  return out;
}

// Channels [lo, hi) of t, order preserved.
template <typename Scalar>
Tensor<Scalar> slice_channels(const Tensor<Scalar>& t, Index lo, Index hi) {
  const Shape& s = t.shape();
  if (lo < 0 || hi < lo || hi > s.c)
    throw BuildError("slice_channels: range [" + std::to_string(lo) + "," +
                     std::to_string(hi) + ") out of bounds for C=" + std::to_string(s.c));
  Tensor<Scalar> out(Shape{s.n, hi - lo, s.h, s.w});
  const std::size_t plane = static_cast<std::size_t>(s.h) * static_cast<std::size_t>(s.w);
  if (hi > lo)
    for (Index n = 0; n < s.n; ++n)
      std::memcpy(out.plane(n, 0), t.plane(n, lo), sizeof(Scalar) * plane * (hi - lo));
  return out;
}

template <typename Scalar>
void fill_normal(Tensor<Scalar>& t, Rng& rng, double stddev, double mean = 0.0) {
  for (Index i = 0; i < t.size(); ++i)
    t[i] = static_cast<Scalar>(mean + stddev * rng.normal());
}

template <typename Scalar>
void fill_uniform(Tensor<Scalar>& t, Rng& rng, double lo, double hi) {
  for (Index i = 0; i < t.size(); ++i)
    t[i] = static_cast<Scalar>(lo + (hi - lo) * rng.uniform());
}

template <typename Scalar>
double max_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  double m = 0.0;
  for (Index i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace henet
