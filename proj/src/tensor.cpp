// SPDX-License-Identifier: Apache-2.0

#include "tempocoh/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tempocoh {

std::string Shape::to_string() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) os << " x ";
    os << dims[i];
  }
  os << "]";
  return os.str();
}

namespace {

// Validates before any allocation so a negative dim cannot reach std::vector.
int64_t checked_numel(const Shape& s) {
  for (int64_t d : s.dims) {
    if (d <= 0) throw ShapeError("tensor dimension must be positive, got shape " + s.to_string());
  }
  return s.numel();
}

}  // namespace

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<size_t>(checked_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_numel(shape_) != static_cast<int64_t>(data_.size())) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_.to_string());
  }
}

Tensor Tensor::from_vector(std::vector<double> v) {
  int64_t n = static_cast<int64_t>(v.size());
  return Tensor(Shape{n}, std::move(v));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  int64_t m = static_cast<int64_t>(rows.size());
  int64_t n = static_cast<int64_t>(rows.begin()->size());
  std::vector<double> data;
  data.reserve(static_cast<size_t>(m * n));
  for (const auto& row : rows) {
    if (static_cast<int64_t>(row.size()) != n) throw ShapeError("ragged row in tensor literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{m, n}, std::move(data));
}

Tensor Tensor::identity(int64_t n) {
  Tensor t(Shape{n, n});
  for (int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::normal(Shape shape, Rng& rng, double sigma) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = sigma * rng.normal();
  return t;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() requires a one-element tensor, got shape " + shape_.to_string());
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shapes " + a.shape().to_string() + " vs " +
                     b.shape().to_string());
  }
}

template <typename F>
Tensor map1(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.at(i) = f(a.at(i));
  return out;
}

template <typename F>
Tensor map2(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.at(i) = f(a.at(i), b.at(i));
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return map2(a, b, "add", [](double x, double y) { return x + y; }); }
Tensor add(const Tensor& a, double s) { return map1(a, [=](double x) { return x + s; }); }
Tensor sub(const Tensor& a, const Tensor& b) { return map2(a, b, "sub", [](double x, double y) { return x - y; }); }
Tensor sub(const Tensor& a, double s) { return map1(a, [=](double x) { return x - s; }); }
Tensor sub(double s, const Tensor& a) { return map1(a, [=](double x) { return s - x; }); }
Tensor mul(const Tensor& a, const Tensor& b) { return map2(a, b, "mul", [](double x, double y) { return x * y; }); }
Tensor mul(const Tensor& a, double s) { return map1(a, [=](double x) { return x * s; }); }
Tensor divide(const Tensor& a, const Tensor& b) { return map2(a, b, "div", [](double x, double y) { return x / y; }); }
Tensor divide(const Tensor& a, double s) { return map1(a, [=](double x) { return x / s; }); }
Tensor divide(double s, const Tensor& a) { return map1(a, [=](double x) { return s / x; }); }
Tensor negate(const Tensor& a) { return map1(a, [](double x) { return -x; }); }
Tensor exp(const Tensor& a) { return map1(a, [](double x) { return std::exp(x); }); }

Tensor log(const Tensor& a) {
  for (int64_t i = 0; i < a.numel(); ++i) {
    if (a.at(i) <= 0.0) {
      throw DomainError("log of non-positive value " + std::to_string(a.at(i)) + " at index " +
                        std::to_string(i));
    }
  }
  return map1(a, [](double x) { return std::log(x); });
}

Tensor sqrt(const Tensor& a) { return map1(a, [](double x) { return std::sqrt(x); }); }
Tensor tanh(const Tensor& a) { return map1(a, [](double x) { return std::tanh(x); }); }

Tensor sigmoid(const Tensor& a) {
  return map1(a, [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
  });
}

Tensor clamp_min(const Tensor& a, double lo) { return map1(a, [=](double x) { return x < lo ? lo : x; }); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul requires rank-2 tensors, got " + a.shape().to_string() + " and " +
                     b.shape().to_string());
  }
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul inner dimensions disagree: " + a.shape().to_string() + " vs " +
                     b.shape().to_string());
  }
  int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out(Shape{m, n});
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      double av = a.at(i, p);
      if (av == 0.0) continue;
      for (int64_t j = 0; j < n; ++j) out.at(i, j) += av * b.at(p, j);
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose requires rank 2, got " + a.shape().to_string());
  Tensor out(Shape{a.dim(1), a.dim(0)});
  for (int64_t i = 0; i < a.dim(0); ++i)
    for (int64_t j = 0; j < a.dim(1); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor row_sums(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("row_sums requires rank 2, got " + a.shape().to_string());
  Tensor out(Shape{a.dim(0)});
  for (int64_t i = 0; i < a.dim(0); ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < a.dim(1); ++j) s += a.at(i, j);
    out.at(i) = s;
  }
  return out;
}

Tensor col_sums(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("col_sums requires rank 2, got " + a.shape().to_string());
  Tensor out(Shape{a.dim(1)});
  for (int64_t i = 0; i < a.dim(0); ++i)
    for (int64_t j = 0; j < a.dim(1); ++j) out.at(j) += a.at(i, j);
  return out;
}

double sum_all(const Tensor& a) {
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) s += a.at(i);
  return s;
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  if (a.rank() != 2 || v.rank() != 1 || v.dim(0) != a.dim(1)) {
    throw ShapeError("add_rowvec: shapes " + a.shape().to_string() + " vs " + v.shape().to_string());
  }
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.dim(0); ++i)
    for (int64_t j = 0; j < a.dim(1); ++j) out.at(i, j) = a.at(i, j) + v.at(j);
  return out;
}

Tensor rows_scale(const Tensor& a, const Tensor& s) {
  if (a.rank() != 2 || s.rank() != 1 || s.dim(0) != a.dim(0)) {
    throw ShapeError("rows_scale: shapes " + a.shape().to_string() + " vs " + s.shape().to_string());
  }
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.dim(0); ++i)
    for (int64_t j = 0; j < a.dim(1); ++j) out.at(i, j) = a.at(i, j) * s.at(i);
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape.numel() != a.numel()) {
    throw ShapeError("reshape " + a.shape().to_string() + " -> " + shape.to_string() +
                     " changes element count");
  }
  return Tensor(std::move(shape), a.vec());
}

Tensor slice_row(const Tensor& a, int64_t row) {
  if (a.rank() != 2) throw ShapeError("slice_row requires rank 2, got " + a.shape().to_string());
  if (row < 0 || row >= a.dim(0)) throw ContractError("slice_row index " + std::to_string(row) + " out of range");
  Tensor out(Shape{a.dim(1)});
  for (int64_t j = 0; j < a.dim(1); ++j) out.at(j) = a.at(row, j);
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ContractError("stack_rows on empty list");
  int64_t n = rows[0].numel();
  Tensor out(Shape{static_cast<int64_t>(rows.size()), n});
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].rank() != 1 || rows[i].numel() != n) {
      throw ShapeError("stack_rows: row " + std::to_string(i) + " has shape " + rows[i].shape().to_string());
    }
    for (int64_t j = 0; j < n; ++j) out.at(static_cast<int64_t>(i), j) = rows[i].at(j);
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols on empty list");
  int64_t t = parts[0].dim(0);
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != t) {
      throw ShapeError("concat_cols: incompatible part shape " + p.shape().to_string());
    }
    total += p.dim(1);
  }
  Tensor out(Shape{t, total});
  int64_t off = 0;
  for (const auto& p : parts) {
    for (int64_t i = 0; i < t; ++i)
      for (int64_t j = 0; j < p.dim(1); ++j) out.at(i, off + j) = p.at(i, j);
    off += p.dim(1);
  }
  return out;
}

Tensor softmax_lastdim(const Tensor& a) {
  if (a.rank() < 1) throw ShapeError("softmax_lastdim requires rank >= 1");
  int64_t n = a.dim(static_cast<size_t>(a.rank() - 1));
  int64_t slices = a.numel() / n;
  Tensor out(a.shape());
  for (int64_t s = 0; s < slices; ++s) {
    const double* in = a.data() + s * n;
    double* o = out.data() + s * n;
    double mx = in[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (int64_t j = 0; j < n; ++j) o[j] /= sum;
  }
  return out;
}

Tensor conv1d_same(const Tensor& seq, const Tensor& kernel) {
  if (seq.rank() != 2) throw ShapeError("conv1d_same sequence must be rank 2, got " + seq.shape().to_string());
  if (kernel.rank() != 1) throw ShapeError("conv1d_same kernel must be rank 1, got " + kernel.shape().to_string());
  int64_t w = kernel.dim(0);
  if (w % 2 == 0) throw ConfigError("conv1d_same kernel width must be odd, got " + std::to_string(w));
  int64_t t_len = seq.dim(0), d_len = seq.dim(1);
  int64_t radius = (w - 1) / 2;
  Tensor out(seq.shape());
  for (int64_t t = 0; t < t_len; ++t) {
    int64_t lo = std::max<int64_t>(-radius, -t);
    int64_t hi = std::min<int64_t>(radius, t_len - 1 - t);
    for (int64_t o = lo; o <= hi; ++o) {
      double k = kernel.at(o + radius);
      if (k == 0.0) continue;
      for (int64_t d = 0; d < d_len; ++d) out.at(t, d) += k * seq.at(t + o, d);
    }
  }
  return out;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a.at(i)));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a.at(i) - b.at(i)));
  return m;
}

}  // namespace tempocoh
