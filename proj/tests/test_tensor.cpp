// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "tempocoh/tensor.hpp"

using namespace tempocoh;

TEST_CASE("shape numel and equality") {
  Shape s{2, 3};
  CHECK(s.rank() == 2);
  CHECK(s.numel() == 6);
  CHECK(s == Shape{2, 3});
  CHECK(s != Shape{3, 2});
  CHECK(Shape{}.numel() == 1);
}

TEST_CASE("construction and element access") {
  Tensor t(Shape{2, 2}, 1.5);
  CHECK(t.numel() == 4);
  CHECK(t.at(1, 1) == 1.5);
  t.at(0, 1) = -2.0;
  CHECK(t.at(0, 1) == -2.0);

  Tensor v = Tensor::from_vector({1.0, 2.0, 3.0});
  CHECK(v.rank() == 1);
  CHECK(v.at(2) == 3.0);

  Tensor r = Tensor::from_rows({{1.0, 2.0}, {3.0, 4.0}});
  CHECK(r.dim(0) == 2);
  CHECK(r.at(1, 0) == 3.0);

  CHECK(Tensor::scalar(7.0).item() == 7.0);
  CHECK_THROWS_AS(r.item(), ContractError);
  CHECK_THROWS_AS(Tensor(Shape{-1, 2}), ShapeError);
}

TEST_CASE("identity and uniform bounds") {
  Tensor eye = Tensor::identity(3);
  CHECK(eye.at(1, 1) == 1.0);
  CHECK(eye.at(0, 2) == 0.0);

  Rng rng(42);
  Tensor u = Tensor::uniform(Shape{50}, rng, -0.25, 0.75);
  for (int64_t i = 0; i < u.numel(); ++i) {
    CHECK(u.at(i) >= -0.25);
    CHECK(u.at(i) < 0.75);
  }
}

TEST_CASE("elementwise arithmetic") {
  Tensor a = Tensor::from_vector({1.0, 2.0});
  Tensor b = Tensor::from_vector({3.0, 5.0});
  CHECK(add(a, b).at(1) == 7.0);
  CHECK(sub(a, b).at(0) == -2.0);
  CHECK(mul(a, b).at(1) == 10.0);
  CHECK(divide(b, a).at(1) == 2.5);
  CHECK(sub(1.0, a).at(0) == 0.0);
  CHECK(negate(a).at(0) == -1.0);
  CHECK(clamp_min(Tensor::from_vector({-1.0, 2.0}), 0.0).at(0) == 0.0);
  CHECK_THROWS_AS(add(a, Tensor::from_vector({1.0, 2.0, 3.0})), ShapeError);
  CHECK_THROWS_AS(log(Tensor::from_vector({0.0})), DomainError);
  CHECK(std::isinf(divide(a, Tensor::from_vector({1.0, 0.0})).at(1)));
}

TEST_CASE("matmul against a hand product") {
  Tensor a = Tensor::from_rows({{1.0, 2.0}, {3.0, 4.0}});
  Tensor b = Tensor::from_rows({{5.0, 6.0}, {7.0, 8.0}});
  Tensor c = matmul(a, b);
  CHECK(c.at(0, 0) == 19.0);
  CHECK(c.at(0, 1) == 22.0);
  CHECK(c.at(1, 0) == 43.0);
  CHECK(c.at(1, 1) == 50.0);
  CHECK_THROWS_AS(matmul(a, Tensor(Shape{3, 2})), ShapeError);
}

TEST_CASE("transpose, reductions and row helpers") {
  Tensor a = Tensor::from_rows({{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}});
  Tensor at = transpose(a);
  CHECK(at.dim(0) == 3);
  CHECK(at.at(2, 1) == 6.0);

  CHECK(row_sums(a).at(1) == 15.0);
  CHECK(col_sums(a).at(0) == 5.0);
  CHECK(sum_all(a) == 21.0);

  Tensor shifted = add_rowvec(a, Tensor::from_vector({10.0, 20.0, 30.0}));
  CHECK(shifted.at(1, 2) == 36.0);
  Tensor scaled = rows_scale(a, Tensor::from_vector({2.0, -1.0}));
  CHECK(scaled.at(0, 1) == 4.0);
  CHECK(scaled.at(1, 0) == -4.0);
}

TEST_CASE("structural operations") {
  Tensor a = Tensor::from_rows({{1.0, 2.0}, {3.0, 4.0}});
  Tensor flat = reshape(a, Shape{4});
  CHECK(flat.at(3) == 4.0);
  CHECK_THROWS_AS(reshape(a, Shape{3}), ShapeError);

  Tensor row = slice_row(a, 1);
  CHECK(row.rank() == 1);
  CHECK(row.at(0) == 3.0);
  CHECK_THROWS_AS(slice_row(a, 2), ContractError);

  Tensor stacked = stack_rows({row, row});
  CHECK(stacked.at(1, 1) == 4.0);

  Tensor wide = concat_cols({a, Tensor::from_rows({{9.0}, {8.0}})});
  CHECK(wide.dim(1) == 3);
  CHECK(wide.at(1, 2) == 8.0);
  CHECK_THROWS_AS(concat_cols({a, Tensor::from_rows({{1.0}})}), ShapeError);
}

TEST_CASE("softmax rows are normalized and stable under shift") {
  Tensor a = Tensor::from_rows({{1000.0, 1001.0}, {-3.0, -3.0}});
  Tensor s = softmax_lastdim(a);
  CHECK(s.all_finite());
  CHECK(std::abs(s.at(0, 0) + s.at(0, 1) - 1.0) < 1e-15);
  CHECK(s.at(1, 0) == 0.5);
  CHECK(s.at(0, 1) > s.at(0, 0));
}

TEST_CASE("conv1d_same matches a hand computation") {
  Tensor seq = Tensor::from_rows({{1.0}, {2.0}, {3.0}, {4.0}});
  Tensor kernel = Tensor::from_vector({1.0, 0.0, -1.0});  // out[t] = seq[t-1] - seq[t+1]
  Tensor out = conv1d_same(seq, kernel);
  CHECK(out.at(0, 0) == -2.0);
  CHECK(out.at(1, 0) == -2.0);
  CHECK(out.at(3, 0) == 3.0);
  CHECK_THROWS_AS(conv1d_same(seq, Tensor::from_vector({1.0, 2.0})), ConfigError);

  Tensor delta = Tensor::from_vector({0.0, 1.0, 0.0});
  CHECK(max_abs_diff(conv1d_same(seq, delta), seq) == 0.0);
}

TEST_CASE("comparison helpers") {
  Tensor a = Tensor::from_vector({1.0, -4.0});
  CHECK(max_abs(a) == 4.0);
  CHECK(max_abs_diff(a, Tensor::from_vector({1.0, -4.5})) == 0.5);
  CHECK_THROWS_AS(max_abs_diff(a, Tensor::from_vector({1.0})), ShapeError);
}
