#include <cmath>
#include <numbers>

#include <doctest.h>

#include "sobolattr/analytic.hpp"
#include "sobolattr/design.hpp"
#include "sobolattr/errors.hpp"
#include "sobolattr/estimator.hpp"
#include "sobolattr/qmc.hpp"

using namespace sobolattr;

namespace {

AnalyticFunction on_unit_square(const char* name,
                                double (*fn)(std::span<const double>)) {
  AnalyticFunction f;
  f.name = name;
  f.dimension = 2;
  f.domain.assign(2, {0.0, 1.0});
  f.evaluator = fn;
  return f;
}

double fx1(std::span<const double> x) { return x[0]; }
double fsum(std::span<const double> x) { return x[0] + x[1]; }
double fprod(std::span<const double> x) { return x[0] * x[1]; }

}  // namespace

TEST_CASE("double-loop oracle on hand-integrable functions") {
  const AnalyticFunction only_x1 = on_unit_square("x1", fx1);
  CHECK(double_loop_oracle(only_x1, {0}) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(total_from_oracle(only_x1, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(total_from_oracle(only_x1, 1) == doctest::Approx(0.0).scale(1).epsilon(1e-9));

  const AnalyticFunction additive = on_unit_square("sum", fsum);
  CHECK(double_loop_oracle(additive, {0}) == doctest::Approx(0.5).epsilon(1e-3));
  // no interactions: S_Ti == S_i for both coordinates
  for (std::size_t i : {0u, 1u}) {
    CHECK(total_from_oracle(additive, i) ==
          doctest::Approx(double_loop_oracle(additive, {i})).epsilon(1e-3));
  }

  // Var = 7/144, Var(E[f|X1]) = 1/48 -> S1 = 3/7; ST1 = 1 - S2 = 4/7
  const AnalyticFunction product = on_unit_square("prod", fprod);
  CHECK(double_loop_oracle(product, {0}) == doctest::Approx(3.0 / 7.0).epsilon(1e-3));
  CHECK(total_from_oracle(product, 0) == doctest::Approx(4.0 / 7.0).epsilon(1e-3));
  // closed index of the full set is 1
  CHECK(double_loop_oracle(product, {0, 1}) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("oracle matches the Ishigami closed form") {
  const AnalyticFunction fn = make_ishigami();
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(double_loop_oracle(fn, {i}) ==
          doctest::Approx((*fn.reference_first)[i]).scale(1).epsilon(2e-3));
    CHECK(total_from_oracle(fn, i) ==
          doctest::Approx((*fn.reference_total)[i]).scale(1).epsilon(2e-3));
  }
}

TEST_CASE("oracle matches the g-function total-index formula") {
  const AnalyticFunction fn = make_gfunction({0.0, 2.0});
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(double_loop_oracle(fn, {i}) ==
          doctest::Approx((*fn.reference_first)[i]).scale(1).epsilon(2e-3));
    CHECK(total_from_oracle(fn, i) ==
          doctest::Approx((*fn.reference_total)[i]).scale(1).epsilon(2e-3));
  }
}

TEST_CASE("oracle refuses intractable inputs") {
  AnalyticFunction big;
  big.name = "big";
  big.dimension = 5;
  big.domain.assign(5, {0.0, 1.0});
  big.evaluator = [](std::span<const double> x) { return x[0]; };
  CHECK_THROWS_AS(double_loop_oracle(big, {0}), OracleIntractableError);
  CHECK_THROWS_AS(total_from_oracle(big, 0), OracleIntractableError);

  const AnalyticFunction small = on_unit_square("x1", fx1);
  CHECK_THROWS_AS(double_loop_oracle(small, {0}, 8), Error);  // grid too coarse
  CHECK_THROWS_AS(double_loop_oracle(small, {5}), Error);     // index out of range
  CHECK_THROWS_AS(double_loop_oracle(small, {}), Error);      // empty subset
}

TEST_CASE("builtin suite") {
  const auto fns = builtin_functions();
  REQUIRE(fns.size() == 5);
  CHECK(fns[0].name == "ishigami");
  CHECK(fns[1].name == "gfunction");
  CHECK(fns[2].name == "linear");
  CHECK(fns[3].name == "product");
  CHECK(fns[4].name == "constant");

  SUBCASE("g-function ordering follows the coefficients") {
    const auto& g = fns[1];
    REQUIRE(g.reference_first);
    const auto& s = *g.reference_first;
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] <= s[i - 1] + 1e-15);
    CHECK(s[0] > s[1]);
  }
  SUBCASE("ishigami domain mapping") {
    // unit midpoint maps to the origin where every term vanishes
    const std::vector<double> mid(3, 0.5);
    CHECK(fns[0].evaluate_unit(mid) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
  }
  SUBCASE("find_builtin specs") {
    CHECK(find_builtin("ishigami").dimension == 3);
    CHECK(find_builtin("gfunction:0,1,2").dimension == 3);
    CHECK(find_builtin("linear:7").dimension == 7);
    CHECK(find_builtin("product:2").dimension == 2);
    CHECK(find_builtin("constant:2.5,4").dimension == 4);
    CHECK_THROWS_AS(find_builtin("nope"), ConfigError);
    CHECK_THROWS_AS(find_builtin("gfunction:1,x"), ConfigError);
  }
  SUBCASE("dummy wrapper ignores the appended input") {
    const AnalyticFunction wrapped = with_dummy_dimension(fns[2]);
    CHECK(wrapped.dimension == 4);
    const std::vector<double> a{0.1, 0.2, 0.3, 0.0};
    const std::vector<double> b{0.1, 0.2, 0.3, 0.9};
    CHECK(wrapped.evaluate_unit(a) == wrapped.evaluate_unit(b));
  }
  SUBCASE("random quadratics are deterministic per seed") {
    const AnalyticFunction q1 = random_quadratic(5);
    const AnalyticFunction q2 = random_quadratic(5);
    const std::vector<double> p{0.3, 0.7, 0.9};
    CHECK(q1.evaluate_unit(p) == q2.evaluate_unit(p));
    CHECK(q1.evaluate_unit(p) != random_quadratic(6).evaluate_unit(p));
  }
}

TEST_CASE("evaluate_unit validates dimension") {
  const AnalyticFunction fn = make_ishigami();
  CHECK_THROWS_AS(fn.evaluate_unit(std::vector<double>{0.5, 0.5}), DesignShapeError);
}

TEST_CASE("Jansen estimates agree with the oracle on the low-dimensional builtins") {
  // the two routes are independent: pick-and-freeze sampling vs
  // tensor-grid quadrature of the conditional-variance integrals
  for (const auto& fn : {make_ishigami(), make_linear(3)}) {
    const std::size_t n = 4096;
    const auto [a, b] = qmc::paired_mask_matrices(fn.dimension, n);
    const SampleDesign design = build_design(a, b);
    std::vector<double> scores(design.rows.rows());
    for (std::size_t r = 0; r < scores.size(); ++r) {
      scores[r] = fn.evaluate_unit(design.rows.row(r));
    }
    const SobolResult jansen = estimate_indices(scores, n, fn.dimension);
    for (std::size_t i = 0; i < fn.dimension; ++i) {
      CHECK(std::abs(jansen.first_order[i] - double_loop_oracle(fn, {i})) <= 0.02);
      CHECK(std::abs(jansen.total_order[i] - total_from_oracle(fn, i)) <= 0.02);
    }
  }
}
