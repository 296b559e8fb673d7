#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <random>

#include <doctest.h>

#include "sobolattr/design.hpp"
#include "sobolattr/errors.hpp"
#include "sobolattr/estimator.hpp"
#include "sobolattr/qmc.hpp"

using namespace sobolattr;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Matrix m(rows, cols);
  std::mt19937_64 rng(seed);
  for (double& v : m.data()) v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return m;
}

// closed-form Ishigami sensitivities, recomputed from the variance
// decomposition rather than hard-coded
struct IshigamiRefs {
  double s1, s2, st1, st2, st3;
};

IshigamiRefs ishigami_refs(double a = 7.0, double b = 0.1) {
  const double pi4 = std::pow(std::numbers::pi, 4);
  const double pi8 = pi4 * pi4;
  const double v1 = 0.5 * std::pow(1.0 + b * pi4 / 5.0, 2);
  const double v2 = a * a / 8.0;
  const double v13 = 8.0 * b * b * pi8 / 225.0;
  const double v = v1 + v2 + v13;
  return {v1 / v, v2 / v, (v1 + v13) / v, v2 / v, v13 / v};
}

double ishigami_unit(std::span<const double> u, double a = 7.0, double b = 0.1) {
  const double x = -std::numbers::pi + 2.0 * std::numbers::pi * u[0];
  const double y = -std::numbers::pi + 2.0 * std::numbers::pi * u[1];
  const double z = -std::numbers::pi + 2.0 * std::numbers::pi * u[2];
  return std::sin(x) + a * std::sin(y) * std::sin(y) + b * std::pow(z, 4) * std::sin(x);
}

}  // namespace

TEST_CASE("build_design row layout") {
  SUBCASE("default 11x11 budget") {
    const auto [a, b] = qmc::paired_mask_matrices(121, 32);
    const SampleDesign design = build_design(a, b);
    CHECK(design.total_rows() == 3936);
    CHECK(design.rows.rows() == 3936);
  }
  SUBCASE("d=1 collapses C to B's column") {
    Matrix a(1, 1);
    Matrix b(1, 1);
    a.at(0, 0) = 0.2;
    b.at(0, 0) = 0.9;
    const SampleDesign design = build_design(a, b);
    CHECK(design.rows.rows() == 3);
    CHECK(design.rows.at(0, 0) == 0.2);
    CHECK(design.rows.at(1, 0) == 0.9);
    CHECK(design.rows.at(2, 0) == 0.9);
  }
  SUBCASE("column substitution at d=2") {
    Matrix a(2, 2);
    Matrix b(2, 2);
    a.at(0, 0) = 1;  a.at(0, 1) = 2;  a.at(1, 0) = 3;  a.at(1, 1) = 4;
    b.at(0, 0) = 5;  b.at(0, 1) = 6;  b.at(1, 0) = 7;  b.at(1, 1) = 8;
    const SampleDesign design = build_design(a, b);
    // C(1) = [[b11 a12],[b21 a22]]
    CHECK(design.rows.at(4, 0) == 5);
    CHECK(design.rows.at(4, 1) == 2);
    CHECK(design.rows.at(5, 0) == 7);
    CHECK(design.rows.at(5, 1) == 4);
    // C(2) = [[a11 b12],[a21 b22]]
    CHECK(design.rows.at(6, 0) == 1);
    CHECK(design.rows.at(6, 1) == 6);
    CHECK(design.rows.at(7, 0) == 3);
    CHECK(design.rows.at(7, 1) == 8);
  }
  SUBCASE("C(i) invariant on random matrices") {
    const Matrix a = random_matrix(9, 6, 11);
    const Matrix b = random_matrix(9, 6, 12);
    const SampleDesign design = build_design(a, b);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 9; ++j) {
        const auto row = design.rows.row(9 * (2 + i) + j);
        for (std::size_t k = 0; k < 6; ++k) {
          CHECK(row[k] == (k == i ? b.at(j, k) : a.at(j, k)));
        }
      }
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(build_design(Matrix(2, 3), Matrix(2, 4)), DesignShapeError);
    CHECK_THROWS_AS(build_design(Matrix(2, 3), Matrix(3, 3)), DesignShapeError);
  }
}

TEST_CASE("estimator hand example is exact") {
  const std::vector<double> scores = {1, 3, 2, 4, 2, 2};
  const SobolResult r = estimate_indices(scores, 2, 1);
  CHECK(r.empirical_mean == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(r.empirical_variance == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(std::abs(r.first_order[0] - 0.5) <= 1e-12);
  CHECK(std::abs(r.total_order[0] - 0.25) <= 1e-12);
  CHECK(r.forwards_used == 6);
}

TEST_CASE("constant scores raise the degenerate-function error") {
  const std::vector<double> scores(12, 3.25);
  CHECK_THROWS_AS(estimate_indices(scores, 3, 2), DegenerateFunctionError);
}

TEST_CASE("estimator input validation") {
  const std::vector<double> scores = {1, 2, 3, 4, 5, 6};
  CHECK_THROWS_AS(estimate_indices(scores, 1, 1), DesignShapeError);   // N < 2
  CHECK_THROWS_AS(estimate_indices(scores, 2, 2), DesignShapeError);   // wrong length
  CHECK_THROWS_AS(estimate_indices(scores, 2, 0), DesignShapeError);
}

TEST_CASE("Ishigami indices converge to the closed form") {
  const std::size_t n = 4096;
  const std::size_t d = 3;
  const auto [a, b] = qmc::paired_mask_matrices(d, n);
  const SampleDesign design = build_design(a, b);
  std::vector<double> scores(design.rows.rows());
  for (std::size_t r = 0; r < scores.size(); ++r) {
    scores[r] = ishigami_unit(design.rows.row(r));
  }
  const SobolResult result = estimate_indices(scores, n, d);
  const IshigamiRefs refs = ishigami_refs();
  CHECK(std::abs(result.first_order[0] - refs.s1) <= 0.02);
  CHECK(std::abs(result.first_order[1] - refs.s2) <= 0.02);
  CHECK(std::abs(result.first_order[2] - 0.0) <= 0.02);
  CHECK(std::abs(result.total_order[0] - refs.st1) <= 0.02);
  CHECK(std::abs(result.total_order[1] - refs.st2) <= 0.02);
  CHECK(std::abs(result.total_order[2] - refs.st3) <= 0.02);
}

TEST_CASE("non-finite scores are rejected") {
  std::vector<double> scores = {1, 3, 2, 4, 2, 2};
  scores[3] = std::nan("");
  CHECK_THROWS_AS(estimate_indices(scores, 2, 1), Error);
  scores[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(estimate_indices(scores, 2, 1), Error);
}

TEST_CASE("estimation is bit-deterministic") {
  const auto run = [] {
    const auto [a, b] = qmc::paired_mask_matrices(3, 512);
    const SampleDesign design = build_design(a, b);
    std::vector<double> scores(design.rows.rows());
    for (std::size_t r = 0; r < scores.size(); ++r) {
      scores[r] = ishigami_unit(design.rows.row(r));
    }
    return estimate_indices(scores, 512, 3);
  };
  const SobolResult r1 = run();
  const SobolResult r2 = run();
  CHECK(std::memcmp(r1.first_order.data(), r2.first_order.data(),
                    3 * sizeof(double)) == 0);
  CHECK(std::memcmp(r1.total_order.data(), r2.total_order.data(),
                    3 * sizeof(double)) == 0);
  CHECK(r1.empirical_variance == r2.empirical_variance);
}

TEST_CASE("sign_indices") {
  SobolResult base;
  base.first_order = {0.1};
  base.total_order = {0.3};
  base.empirical_mean = 0.0;
  base.empirical_variance = 1.0;

  SUBCASE("positive difference keeps the sign") {
    const SobolResult r = sign_indices(base, 1.0, std::vector<double>{0.2});
    CHECK((*r.signed_total)[0] == doctest::Approx(0.3));
  }
  SUBCASE("negative difference flips the sign") {
    const SobolResult r = sign_indices(base, 0.2, std::vector<double>{1.0});
    CHECK((*r.signed_total)[0] == doctest::Approx(-0.3));
  }
  SUBCASE("tie counts as positive") {
    const SobolResult r = sign_indices(base, 0.3, std::vector<double>{0.3});
    CHECK((*r.signed_total)[0] == doctest::Approx(0.3));
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(sign_indices(base, 1.0, std::vector<double>{0.1, 0.2}),
                    DesignShapeError);
  }
  SUBCASE("|signed| equals total on random inputs") {
    std::mt19937_64 rng(3);
    SobolResult wide;
    wide.first_order.assign(16, 0.0);
    wide.total_order.resize(16);
    std::vector<double> occluded(16);
    for (std::size_t i = 0; i < 16; ++i) {
      wide.total_order[i] = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      occluded[i] = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
    }
    const SobolResult r = sign_indices(wide, 0.1, occluded);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(std::abs((*r.signed_total)[i]) == doctest::Approx(wide.total_order[i]));
    }
  }
}

TEST_CASE("SobolResult JSON round-trip") {
  SobolResult r;
  r.first_order = {0.25, 0.5};
  r.total_order = {0.375, 0.625};
  r.signed_total = std::vector<double>{0.375, -0.625};
  r.empirical_mean = 1.5;
  r.empirical_variance = 0.75;
  r.forwards_used = 128;
  int n = 0;
  const SobolResult back = SobolResult::from_json(r.to_json(32), &n);
  CHECK(n == 32);
  CHECK(back.first_order == r.first_order);
  CHECK(back.total_order == r.total_order);
  CHECK(back.signed_total == r.signed_total);
  CHECK(back.empirical_mean == r.empirical_mean);
  CHECK(back.empirical_variance == r.empirical_variance);
  CHECK(back.forwards_used == r.forwards_used);
  CHECK_THROWS_AS(SobolResult::from_json("{not json"), IoError);
}
