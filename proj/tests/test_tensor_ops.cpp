#include <doctest.h>

#include "metadapt/ops.hpp"
#include "metadapt/rng.hpp"
#include "metadapt/tensor.hpp"
#include "oracles.hpp"

using namespace metadapt;

namespace {

Tensor random_tensor(int m, int n, Rng& rng, double lo = -2.0, double hi = 2.0) {
  std::vector<double> d(static_cast<std::size_t>(m) * n);
  for (auto& v : d) v = rng.uniform(lo, hi);
  return Tensor::from_data_unchecked({m, n}, std::move(d));
}

}  // namespace

TEST_CASE("tensor construction validates shape and data") {
  CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::from_data({0, 2}, {}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::from_data({1, 2}, {1.0, std::nan("")}), std::invalid_argument);
  // unchecked path admits non-finite values
  CHECK_NOTHROW(Tensor::from_data_unchecked({1, 1}, {std::nan("")}));
  Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6.0);
}

TEST_CASE("matmul identity and orthogonal rows") {
  Tensor i2 = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor prod = matmul(i2, a);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) CHECK(prod.at(r, c) == a.at(r, c));
  }

  Tensor row = Tensor::from_data({1, 2}, {1, 0});
  Tensor col = Tensor::from_data({2, 1}, {0, 5});
  CHECK(matmul(row, col).value() == 0.0);
}

TEST_CASE("matmul equals the triple-loop oracle exactly") {
  Rng rng(42);
  Tensor a = random_tensor(3, 4, rng);
  Tensor b = random_tensor(4, 2, rng);
  Tensor got = matmul(a, b);
  Tensor want = oracles::matmul_loop(a, b);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 2; ++c) CHECK(got.at(r, c) == want.at(r, c));
  }
}

TEST_CASE("matmul shape error names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  CHECK_THROWS_WITH_AS(matmul(a, b), "matmul: incompatible shapes [2x3] and [2x3]",
                       std::invalid_argument);
}

TEST_CASE("elementwise examples") {
  Tensor x = Tensor::from_data({1, 3}, {-1, 0, 2});
  Tensor r = relu(x);
  CHECK(r.at(0, 0) == 0.0);
  CHECK(r.at(0, 1) == 0.0);
  CHECK(r.at(0, 2) == 2.0);

  CHECK(sigmoid(Tensor::scalar(0.0)).value() == 0.5);

  for (double v : {0.1, 1.0, 7.0}) {
    CHECK(exp(log(Tensor::scalar(v))).value() == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("elementwise dispatcher covers the kind set") {
  Tensor a = Tensor::from_data({1, 2}, {1, 2});
  Tensor b = Tensor::from_data({1, 2}, {3, 4});
  CHECK(elementwise(EwKind::add, a, b).at(0, 1) == 6.0);
  CHECK(elementwise(EwKind::sub, a, b).at(0, 0) == -2.0);
  CHECK(elementwise(EwKind::mul, a, b).at(0, 1) == 8.0);
  CHECK(elementwise(EwKind::neg, a).at(0, 0) == -1.0);
  CHECK_THROWS_AS(elementwise(EwKind::add, a), std::invalid_argument);
}

TEST_CASE("log rejects non-positive input outside loss paths") {
  CHECK_THROWS_AS(log(Tensor::scalar(0.0)), std::domain_error);
  CHECK_THROWS_AS(log(Tensor::from_data({1, 2}, {1.0, -3.0})), std::domain_error);
}

TEST_CASE("broadcast rules: row vector and scalar only") {
  Tensor m = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor row = Tensor::from_data({1, 3}, {10, 20, 30});
  Tensor s = Tensor::scalar(2.0);

  Tensor mr = add(m, row);
  CHECK(mr.at(1, 2) == 36.0);
  Tensor rm = add(row, m);  // symmetric orientation
  CHECK(rm.at(1, 2) == 36.0);
  CHECK(mul(m, s).at(1, 0) == 8.0);

  // column-vector broadcast is a shape error
  Tensor col = Tensor::zeros({2, 1});
  CHECK_THROWS_AS(add(m, col), std::invalid_argument);
}

TEST_CASE("softmax rows: symmetry, overflow safety, row sums") {
  Tensor sym = softmax_rows(Tensor::from_data({1, 2}, {0, 0}));
  CHECK(sym.at(0, 0) == 0.5);
  CHECK(sym.at(0, 1) == 0.5);

  Tensor big = softmax_rows(Tensor::from_data({1, 2}, {1000, 0}));
  CHECK(big.all_finite());
  CHECK(big.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(7);
  Tensor x = softmax_rows(random_tensor(4, 5, rng, -3, 3));
  for (int r = 0; r < 4; ++r) {
    double s = 0.0;
    for (int c = 0; c < 5; ++c) {
      s += x.at(r, c);
      CHECK(x.at(r, c) >= 0.0);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("concat and slice round trip") {
  Rng rng(3);
  Tensor a = random_tensor(3, 2, rng);
  Tensor b = random_tensor(3, 4, rng);
  Tensor cat = concat_cols(a, b);
  CHECK(cat.cols() == 6);
  Tensor a2 = slice_cols(cat, 0, 2);
  Tensor b2 = slice_cols(cat, 2, 6);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 2; ++c) CHECK(a2.at(r, c) == a.at(r, c));
    for (int c = 0; c < 4; ++c) CHECK(b2.at(r, c) == b.at(r, c));
  }
  CHECK_THROWS_AS(slice_cols(cat, 4, 3), std::invalid_argument);
}

TEST_CASE("transpose and sums") {
  Tensor m = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor t = transpose(m);
  CHECK(t.rows() == 3);
  CHECK(t.at(2, 1) == 6.0);
  CHECK(sum(m).value() == 21.0);
  Tensor cs = sum_rows(m);
  CHECK(cs.at(0, 0) == 5.0);
  CHECK(cs.at(0, 2) == 9.0);
  CHECK(mean_all(m).value() == 3.5);
}

TEST_CASE("clamp") {
  Tensor x = Tensor::from_data({1, 3}, {-5, 0.5, 5});
  Tensor c = clamp(x, 0.0, 1.0);
  CHECK(c.at(0, 0) == 0.0);
  CHECK(c.at(0, 1) == 0.5);
  CHECK(c.at(0, 2) == 1.0);
}
