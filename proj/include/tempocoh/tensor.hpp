// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "tempocoh/error.hpp"
#include "tempocoh/rng.hpp"

namespace tempocoh {

struct Shape {
  std::vector<int64_t> dims;

  Shape() = default;
  Shape(std::initializer_list<int64_t> d) : dims(d) {}
  explicit Shape(std::vector<int64_t> d) : dims(std::move(d)) {}

  int64_t rank() const { return static_cast<int64_t>(dims.size()); }
  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
  }
  int64_t operator[](size_t i) const { return dims[i]; }
  bool operator==(const Shape&) const = default;
  std::string to_string() const;
};

// Dense row-major float64 tensor. Plain value type; all operations below
// are pure functions returning fresh tensors.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, {v}); }
  static Tensor from_vector(std::vector<double> v);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(int64_t n);
  static Tensor uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0);
  static Tensor normal(Shape shape, Rng& rng, double sigma = 1.0);

  const Shape& shape() const { return shape_; }
  int64_t rank() const { return shape_.rank(); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  int64_t dim(size_t i) const { return shape_.dims[i]; }

  double& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return data_[static_cast<size_t>(i)]; }
  double& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_.dims[1] + j)]; }
  double at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_.dims[1] + j)]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& vec() const { return data_; }

  // Value of a one-element tensor.
  double item() const;

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, double s);
Tensor sub(double s, const Tensor& a);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, double s);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, double s);
Tensor divide(double s, const Tensor& a);
Tensor negate(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // throws DomainError on non-positive input
Tensor sqrt(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);  // [M x K] * [K x N]
Tensor transpose(const Tensor& a);                // rank 2
Tensor row_sums(const Tensor& a);                 // [M x N] -> [M]
Tensor col_sums(const Tensor& a);                 // [M x N] -> [N]
double sum_all(const Tensor& a);

// Adds vector v (length N) to each row of a (M x N).
Tensor add_rowvec(const Tensor& a, const Tensor& v);
// Scales row i of a by s[i].
Tensor rows_scale(const Tensor& a, const Tensor& s);

// ---- structural ------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_row(const Tensor& a, int64_t row);            // [M x N] -> [N]
Tensor stack_rows(const std::vector<Tensor>& rows);        // M vectors [N] -> [M x N]
Tensor concat_cols(const std::vector<Tensor>& parts);      // [T x Ni] -> [T x sum(Ni)]

// ---- neural primitives -----------------------------------------------------

// Numerically stable softmax over the last dimension (max subtraction).
Tensor softmax_lastdim(const Tensor& a);

// Same-size 1-D convolution along the time axis of a [T x D] sequence with
// a shared odd-width kernel; out-of-range positions contribute zero.
// out[t, d] = sum_{o=-L..L} kernel[o + L] * seq[t + o, d]
Tensor conv1d_same(const Tensor& seq, const Tensor& kernel);

// ---- comparison helpers ----------------------------------------------------

double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace tempocoh
