#pragma once

#include <Eigen/Core>
#include <complex>
#include <initializer_list>
#include <vector>

#include "odemri/errors.hpp"

namespace odemri {

using Index = Eigen::Index;

// Dense n-dimensional array of doubles, contiguous row-major storage.
// The flat buffer is an Eigen array so elementwise math stays expression-based.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<Index> shape);
  Tensor(std::vector<Index> shape, Eigen::ArrayXd values);

  static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }
  static Tensor constant(std::vector<Index> shape, double value);

  Index ndim() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return data_.size(); }
  Index dim(Index axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  const std::vector<Index>& shape() const { return shape_; }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  Eigen::ArrayXd& flat() { return data_; }
  const Eigen::ArrayXd& flat() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator()(Index i) { return data_[i]; }
  double operator()(Index i) const { return data_[i]; }
  double& operator()(Index i, Index j) { return data_[i * dim(1) + j]; }
  double operator()(Index i, Index j) const { return data_[i * dim(1) + j]; }
  double& operator()(Index i, Index j, Index k) { return data_[(i * dim(1) + j) * dim(2) + k]; }
  double operator()(Index i, Index j, Index k) const { return data_[(i * dim(1) + j) * dim(2) + k]; }
  double& operator()(Index i, Index j, Index k, Index l) {
    return data_[((i * dim(1) + j) * dim(2) + k) * dim(3) + l];
  }
  double operator()(Index i, Index j, Index k, Index l) const {
    return data_[((i * dim(1) + j) * dim(2) + k) * dim(3) + l];
  }

  bool all_finite() const { return data_.isFinite().all(); }

 private:
  std::vector<Index> shape_;
  Eigen::ArrayXd data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
double squared_norm(const Tensor& a);

// Complex H-by-W image stored as separate real and imaginary planes.
struct ComplexImage {
  Tensor re;
  Tensor im;

  ComplexImage() = default;
  ComplexImage(Index height, Index width);
  ComplexImage(Tensor real_plane, Tensor imag_plane);

  Index height() const { return re.ndim() == 2 ? re.dim(0) : 0; }
  Index width() const { return re.ndim() == 2 ? re.dim(1) : 0; }

  std::complex<double> at(Index r, Index c) const { return {re(r, c), im(r, c)}; }
  void set(Index r, Index c, std::complex<double> v) {
    re(r, c) = v.real();
    im(r, c) = v.imag();
  }
};

void require_same_shape(const ComplexImage& a, const ComplexImage& b, const char* what);

ComplexImage cadd(const ComplexImage& a, const ComplexImage& b);
ComplexImage csub(const ComplexImage& a, const ComplexImage& b);
// Pointwise complex product a*b.
ComplexImage cmul(const ComplexImage& a, const ComplexImage& b);
// Pointwise a*conj(b).
ComplexImage cmul_conj(const ComplexImage& a, const ComplexImage& b);
ComplexImage conjugate(const ComplexImage& a);
ComplexImage scaled(const ComplexImage& a, double s);
ComplexImage scaled(const ComplexImage& a, std::complex<double> s);

Tensor magnitude(const ComplexImage& a);
double squared_norm(const ComplexImage& a);
// sum_i conj(a_i) * b_i
std::complex<double> inner(const ComplexImage& a, const ComplexImage& b);

}  // namespace odemri
