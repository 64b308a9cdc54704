#include "odemri/tensor.hpp"

#include <string>

namespace odemri {

namespace {

Index checked_count(const std::vector<Index>& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  Index count = 1;
  for (Index d : shape) {
    if (d < 1) throw ShapeError("tensor dimensions must be positive, got " + std::to_string(d));
    count *= d;
  }
  return count;
}

}  // namespace

Tensor::Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
  data_ = Eigen::ArrayXd::Zero(checked_count(shape_));
}

Tensor::Tensor(std::vector<Index> shape, Eigen::ArrayXd values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (checked_count(shape_) != data_.size())
    throw ShapeError("tensor data length does not match shape");
}

Tensor Tensor::constant(std::vector<Index> shape, double value) {
  Tensor t(std::move(shape));
  t.data_.setConstant(value);
  return t;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string("shape mismatch in ") + what);
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "tensor add");
  return Tensor(a.shape(), a.flat() + b.flat());
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "tensor sub");
  return Tensor(a.shape(), a.flat() - b.flat());
}

Tensor operator*(double s, const Tensor& a) { return Tensor(a.shape(), s * a.flat()); }

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "tensor dot");
  return (a.flat() * b.flat()).sum();
}

double squared_norm(const Tensor& a) { return a.flat().square().sum(); }

ComplexImage::ComplexImage(Index height, Index width)
    : re({height, width}), im({height, width}) {}

ComplexImage::ComplexImage(Tensor real_plane, Tensor imag_plane)
    : re(std::move(real_plane)), im(std::move(imag_plane)) {
  if (re.ndim() != 2) throw ShapeError("complex image planes must be 2-D");
  require_same_shape(re, im, "complex image planes");
}

void require_same_shape(const ComplexImage& a, const ComplexImage& b, const char* what) {
  require_same_shape(a.re, b.re, what);
}

ComplexImage cadd(const ComplexImage& a, const ComplexImage& b) {
  require_same_shape(a, b, "complex add");
  return {a.re + b.re, a.im + b.im};
}

ComplexImage csub(const ComplexImage& a, const ComplexImage& b) {
  require_same_shape(a, b, "complex sub");
  return {a.re - b.re, a.im - b.im};
}

ComplexImage cmul(const ComplexImage& a, const ComplexImage& b) {
  require_same_shape(a, b, "complex mul");
  return {Tensor(a.re.shape(), a.re.flat() * b.re.flat() - a.im.flat() * b.im.flat()),
          Tensor(a.re.shape(), a.re.flat() * b.im.flat() + a.im.flat() * b.re.flat())};
}

ComplexImage cmul_conj(const ComplexImage& a, const ComplexImage& b) {
  require_same_shape(a, b, "complex conj-mul");
  return {Tensor(a.re.shape(), a.re.flat() * b.re.flat() + a.im.flat() * b.im.flat()),
          Tensor(a.re.shape(), a.im.flat() * b.re.flat() - a.re.flat() * b.im.flat())};
}

ComplexImage conjugate(const ComplexImage& a) {
  return {a.re, Tensor(a.im.shape(), -a.im.flat())};
}

ComplexImage scaled(const ComplexImage& a, double s) { return {s * a.re, s * a.im}; }

ComplexImage scaled(const ComplexImage& a, std::complex<double> s) {
  return {Tensor(a.re.shape(), s.real() * a.re.flat() - s.imag() * a.im.flat()),
          Tensor(a.re.shape(), s.real() * a.im.flat() + s.imag() * a.re.flat())};
}

Tensor magnitude(const ComplexImage& a) {
  return Tensor(a.re.shape(), (a.re.flat().square() + a.im.flat().square()).sqrt());
}

double squared_norm(const ComplexImage& a) { return squared_norm(a.re) + squared_norm(a.im); }

std::complex<double> inner(const ComplexImage& a, const ComplexImage& b) {
  require_same_shape(a, b, "complex inner product");
  const double re = (a.re.flat() * b.re.flat() + a.im.flat() * b.im.flat()).sum();
  const double im = (a.re.flat() * b.im.flat() - a.im.flat() * b.re.flat()).sum();
  return {re, im};
}

}  // namespace odemri
