#include "fairvoice/common/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fairvoice/common/error.hpp"

namespace fairvoice {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_size(shape_)) {
    throw InvalidArgument("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                          shape_string(shape_));
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reshape(Shape shape) {
  if (shape_size(shape) != data_.size()) {
    throw InvalidArgument("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!same_shape(other)) {
    throw InvalidArgument("shape mismatch " + shape_string(shape_) + " vs " + shape_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor Tensor::slice(std::size_t begin, std::size_t end) const {
  if (shape_.empty() || begin > end || end > shape_[0]) throw InvalidArgument("bad slice");
  Shape s = shape_;
  s[0] = end - begin;
  const std::size_t stride = shape_[0] ? data_.size() / shape_[0] : 0;
  std::vector<double> v(data_.begin() + begin * stride, data_.begin() + end * stride);
  return Tensor(std::move(s), std::move(v));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw InvalidArgument("concat_channels: incompatible " + shape_string(a.shape()) + " and " +
                          shape_string(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor out({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * ca * hw, ca * hw, out.data() + i * (ca + cb) * hw);
    std::copy_n(b.data() + i * cb * hw, cb * hw, out.data() + i * (ca + cb) * hw + ca * hw);
  }
  return out;
}

void split_channels(const Tensor& t, std::size_t first, Tensor& a, Tensor& b) {
  const std::size_t n = t.dim(0), c = t.dim(1), hw = t.dim(2) * t.dim(3);
  if (first > c) throw InvalidArgument("split_channels: split point beyond channel count");
  a = Tensor({n, first, t.dim(2), t.dim(3)});
  b = Tensor({n, c - first, t.dim(2), t.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(t.data() + i * c * hw, first * hw, a.data() + i * first * hw);
    std::copy_n(t.data() + i * c * hw + first * hw, (c - first) * hw, b.data() + i * (c - first) * hw);
  }
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw InvalidArgument("stack: no items");
  Shape s{items.size()};
  s.insert(s.end(), items[0].shape().begin(), items[0].shape().end());
  Tensor out(s);
  const std::size_t per = items[0].size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].shape() != items[0].shape()) throw InvalidArgument("stack: mismatched shapes");
    std::copy_n(items[i].data(), per, out.data() + i * per);
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace fairvoice
