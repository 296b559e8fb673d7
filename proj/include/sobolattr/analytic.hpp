#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sobolattr {

/// Deterministic scalar test function with a box input domain, used by the
/// verification harness and the `fn:` backend.
struct AnalyticFunction {
  std::string name;
  std::size_t dimension = 0;
  std::vector<std::pair<double, double>> domain;  // per-dimension [lo, hi]
  std::function<double(std::span<const double>)> evaluator;  // domain coords
  std::optional<std::vector<double>> reference_first;
  std::optional<std::vector<double>> reference_total;

  /// Maps a unit-cube point through the domain and evaluates.
  double evaluate_unit(std::span<const double> unit) const;
};

/// The bundled test suite: ishigami, gfunction, linear, product, constant.
std::vector<AnalyticFunction> builtin_functions();

/// Lookup by name; also accepts parameterized specs ("gfunction:a0,a1,...").
/// Throws ConfigError for unknown names.
AnalyticFunction find_builtin(const std::string& spec);

AnalyticFunction make_ishigami(double a = 7.0, double b = 0.1);
AnalyticFunction make_gfunction(std::vector<double> a);
AnalyticFunction make_linear(std::size_t dimension);
AnalyticFunction make_product(std::size_t dimension);
AnalyticFunction make_constant(double value, std::size_t dimension);

/// Same function with one appended input the evaluator ignores.
AnalyticFunction with_dummy_dimension(const AnalyticFunction& f);

/// Random degree-2 polynomial on [0,1]^3 with coefficients in [-1,1) drawn
/// from a splitmix64 stream; term order 1, x, y, z, x2, xy, xz, y2, yz, z2.
AnalyticFunction random_quadratic(std::uint64_t seed);

/// Brute-force closed Sobol index S_u = Var(E[f|X_u]) / Var(f) by midpoint
/// tensor-grid quadrature. Tractable only at low dimension: throws
/// OracleIntractableError for f.dimension > 4. grid_points_per_dim >= 16;
/// 0 picks the default (128 for d <= 2, 64 for d = 3, 32 for d = 4).
double double_loop_oracle(const AnalyticFunction& f, const std::set<std::size_t>& subset,
                          std::size_t grid_points_per_dim = 0);

/// Total index E[Var(f|X_~i)] / Var(f) on the same tensor grid.
double total_from_oracle(const AnalyticFunction& f, std::size_t index,
                         std::size_t grid_points_per_dim = 0);

}  // namespace sobolattr
