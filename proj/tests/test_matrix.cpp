#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mgrn/gradcheck.hpp"
#include "mgrn/matrix.hpp"
#include "mgrn/rng.hpp"

using namespace mgrn;

TEST_CASE("matmul basics", "[matrix]") {
  SECTION("identity times matrix") {
    Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    REQUIRE(matmul(Matrix::identity(2), a) == a);
  }
  SECTION("2x2 times 2x1") {
    Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    Matrix b = Matrix::from_rows({{5}, {6}});
    Matrix c = matmul(a, b);
    REQUIRE(c.rows() == 2);
    REQUIRE(c.cols() == 1);
    CHECK(c(0, 0) == 17.0);
    CHECK(c(1, 0) == 39.0);
  }
  SECTION("dimension mismatch") {
    Matrix a(2, 3), b(2, 2);
    REQUIRE_THROWS_MATCHES(matmul(a, b), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == Errc::dimension_mismatch;
                           }));
  }
}

TEST_CASE("matmul associativity on random triples", "[matrix]") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(6), n = 1 + rng.below(6),
                      p = 1 + rng.below(6);
    Matrix a(m, k), b(k, n), c(n, p);
    for (auto* mat : {&a, &b, &c})
      for (std::size_t i = 0; i < mat->size(); ++i) mat->data()[i] = rng.uniform(-1.0, 1.0);
    Matrix left = matmul(matmul(a, b), c);
    Matrix right = matmul(a, matmul(b, c));
    const double scale = std::max(1.0, std::max(max_abs(left), max_abs(right)));
    REQUIRE(max_abs_diff(left, right) / scale < 1e-9);
  }
}

TEST_CASE("transposed products match explicit transpose", "[matrix]") {
  Rng rng(11);
  Matrix a(4, 3), b(4, 5);
  for (auto* m : {&a, &b})
    for (std::size_t i = 0; i < m->size(); ++i) m->data()[i] = rng.uniform(-2.0, 2.0);
  REQUIRE(max_abs_diff(matmul_tn(a, b), matmul(transpose(a), b)) < 1e-15);
  Matrix c(5, 3);
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] = rng.uniform(-2.0, 2.0);
  REQUIRE(max_abs_diff(matmul_nt(a, c), matmul(a, transpose(c))) < 1e-15);
}

TEST_CASE("softmax", "[matrix]") {
  SECTION("symmetry") {
    auto p = softmax({0.0, 0.0});
    CHECK(p[0] == Catch::Approx(0.5).margin(1e-15));
    CHECK(p[1] == Catch::Approx(0.5).margin(1e-15));
  }
  SECTION("known ratio") {
    auto p = softmax({0.0, std::log(3.0)});
    CHECK(p[0] == Catch::Approx(0.25).margin(1e-12));
    CHECK(p[1] == Catch::Approx(0.75).margin(1e-12));
  }
  SECTION("large inputs do not overflow") {
    auto p = softmax({1000.0, 1000.0});
    CHECK(std::isfinite(p[0]));
    CHECK(p[0] == Catch::Approx(0.5).margin(1e-15));
  }
  SECTION("empty input") {
    REQUIRE_THROWS_AS(softmax({}), Error);
  }
  SECTION("shift invariance and normalization") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> v(1 + rng.below(8));
      for (auto& x : v) x = rng.uniform(-5.0, 5.0);
      const double c = rng.uniform(-100.0, 100.0);
      auto base = softmax(v);
      std::vector<double> shifted = v;
      for (auto& x : shifted) x += c;
      auto moved = softmax(shifted);
      double sum = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        CHECK(std::fabs(base[i] - moved[i]) < 1e-12);
        CHECK(base[i] > 0.0);
        sum += base[i];
      }
      CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("finite difference gradient", "[matrix]") {
  SECTION("square function") {
    auto g = finite_diff_grad([](const std::vector<double>& x) { return x[0] * x[0]; }, {3.0},
                              1e-5);
    REQUIRE(std::fabs(g[0] - 6.0) < 1e-8);
  }
  SECTION("constant function") {
    auto g = finite_diff_grad([](const std::vector<double>&) { return 4.25; }, {1.0, -2.0}, 1e-5);
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
  }
  SECTION("bilinear function") {
    auto g = finite_diff_grad([](const std::vector<double>& x) { return x[0] * x[1]; },
                              {2.0, 5.0}, 1e-5);
    CHECK(std::fabs(g[0] - 5.0) < 1e-8);
    CHECK(std::fabs(g[1] - 2.0) < 1e-8);
  }
  SECTION("non-finite evaluation") {
    REQUIRE_THROWS_MATCHES(
        finite_diff_grad([](const std::vector<double>& x) { return std::log(x[0]); }, {0.0},
                         1e-5),
        Error, Catch::Matchers::Predicate<Error>(
                   [](const Error& e) { return e.code() == Errc::non_finite; }));
  }
}
