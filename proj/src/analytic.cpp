#include "sobolattr/analytic.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "sobolattr/errors.hpp"
#include "sobolattr/qmc.hpp"

namespace sobolattr {

namespace {
constexpr double kPi = std::numbers::pi;
}

double AnalyticFunction::evaluate_unit(std::span<const double> unit) const {
  if (unit.size() != dimension) {
    throw DesignShapeError("AnalyticFunction " + name + ": point dimension mismatch");
  }
  std::vector<double> mapped(dimension);
  for (std::size_t i = 0; i < dimension; ++i) {
    mapped[i] = domain[i].first + (domain[i].second - domain[i].first) * unit[i];
  }
  return evaluator(mapped);
}

AnalyticFunction make_ishigami(double a, double b) {
  AnalyticFunction f;
  f.name = "ishigami";
  f.dimension = 3;
  f.domain.assign(3, {-kPi, kPi});
  f.evaluator = [a, b](std::span<const double> x) {
    return std::sin(x[0]) + a * std::sin(x[1]) * std::sin(x[1]) +
           b * std::pow(x[2], 4) * std::sin(x[0]);
  };
  // Closed-form variance decomposition:
  //   V1 = (1 + b*pi^4/5)^2 / 2,  V2 = a^2/8,  V13 = 8 b^2 pi^8 / 225
  const double pi4 = std::pow(kPi, 4);
  const double pi8 = pi4 * pi4;
  const double v1 = 0.5 * std::pow(1.0 + b * pi4 / 5.0, 2);
  const double v2 = a * a / 8.0;
  const double v13 = 8.0 * b * b * pi8 / 225.0;
  const double v = v1 + v2 + v13;
  f.reference_first = {v1 / v, v2 / v, 0.0};
  f.reference_total = {(v1 + v13) / v, v2 / v, v13 / v};
  return f;
}

AnalyticFunction make_gfunction(std::vector<double> a) {
  AnalyticFunction f;
  f.name = "gfunction";
  f.dimension = a.size();
  f.domain.assign(a.size(), {0.0, 1.0});
  f.evaluator = [a](std::span<const double> x) {
    double prod = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      prod *= (std::abs(4.0 * x[i] - 2.0) + a[i]) / (1.0 + a[i]);
    }
    return prod;
  };
  // Vi = (1/3)/(1+ai)^2, V = prod(1+Vi) - 1, S_Ti = Vi * prod_{j!=i}(1+Vj) / V
  const std::size_t d = a.size();
  std::vector<double> vi(d);
  double v_plus = 1.0;
  for (std::size_t i = 0; i < d; ++i) {
    vi[i] = (1.0 / 3.0) / ((1.0 + a[i]) * (1.0 + a[i]));
    v_plus *= 1.0 + vi[i];
  }
  const double v = v_plus - 1.0;
  std::vector<double> first(d);
  std::vector<double> total(d);
  for (std::size_t i = 0; i < d; ++i) {
    first[i] = vi[i] / v;
    total[i] = vi[i] * (v_plus / (1.0 + vi[i])) / v;
  }
  f.reference_first = std::move(first);
  f.reference_total = std::move(total);
  return f;
}

AnalyticFunction make_linear(std::size_t dimension) {
  AnalyticFunction f;
  f.name = "linear";
  f.dimension = dimension;
  f.domain.assign(dimension, {0.0, 1.0});
  f.evaluator = [](std::span<const double> x) {
    double sum = 0.0;
    for (double v : x) sum += v;
    return sum;
  };
  const double share = 1.0 / static_cast<double>(dimension);
  f.reference_first = std::vector<double>(dimension, share);
  f.reference_total = std::vector<double>(dimension, share);
  return f;
}

AnalyticFunction make_product(std::size_t dimension) {
  AnalyticFunction f;
  f.name = "product";
  f.dimension = dimension;
  f.domain.assign(dimension, {0.0, 1.0});
  f.evaluator = [](std::span<const double> x) {
    double prod = 1.0;
    for (double v : x) prod *= v;
    return prod;
  };
  return f;
}

AnalyticFunction make_constant(double value, std::size_t dimension) {
  AnalyticFunction f;
  f.name = "constant";
  f.dimension = dimension;
  f.domain.assign(dimension, {0.0, 1.0});
  f.evaluator = [value](std::span<const double>) { return value; };
  return f;
}

AnalyticFunction with_dummy_dimension(const AnalyticFunction& f) {
  AnalyticFunction g;
  g.name = f.name + "+dummy";
  g.dimension = f.dimension + 1;
  g.domain = f.domain;
  g.domain.emplace_back(0.0, 1.0);
  auto inner = f.evaluator;
  g.evaluator = [inner](std::span<const double> x) {
    return inner(x.first(x.size() - 1));
  };
  return g;
}

AnalyticFunction random_quadratic(std::uint64_t seed) {
  std::vector<double> coef(10);
  std::uint64_t z = seed;
  for (double& c : coef) {
    z = qmc::splitmix64(z);
    c = static_cast<double>(z >> 11) / 9007199254740992.0 * 2.0 - 1.0;  // [-1,1)
  }
  AnalyticFunction f;
  f.name = "quadratic-" + std::to_string(seed);
  f.dimension = 3;
  f.domain.assign(3, {0.0, 1.0});
  f.evaluator = [coef](std::span<const double> p) {
    const double x = p[0], y = p[1], z2 = p[2];
    const double terms[10] = {1.0, x, y, z2, x * x, x * y, x * z2, y * y, y * z2, z2 * z2};
    double sum = 0.0;
    for (int i = 0; i < 10; ++i) sum += coef[i] * terms[i];
    return sum;
  };
  return f;
}

std::vector<AnalyticFunction> builtin_functions() {
  std::vector<AnalyticFunction> fns;
  fns.push_back(make_ishigami());
  fns.push_back(make_gfunction({0.0, 1.0, 4.5, 9.0, 99.0, 99.0, 99.0, 99.0}));
  fns.push_back(make_linear(3));
  fns.push_back(make_product(5));
  fns.push_back(make_constant(1.0, 3));
  return fns;
}

AnalyticFunction find_builtin(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  std::vector<double> args;
  if (colon != std::string::npos) {
    std::istringstream in(spec.substr(colon + 1));
    std::string field;
    while (std::getline(in, field, ',')) {
      try {
        args.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw ConfigError("bad numeric argument in function spec: " + spec);
      }
    }
  }
  if (name == "ishigami") {
    if (args.empty()) return make_ishigami();
    if (args.size() == 2) return make_ishigami(args[0], args[1]);
  } else if (name == "gfunction") {
    if (args.empty()) return make_gfunction({0.0, 1.0, 4.5, 9.0, 99.0, 99.0, 99.0, 99.0});
    return make_gfunction(args);
  } else if (name == "linear") {
    return make_linear(args.empty() ? 3 : static_cast<std::size_t>(args[0]));
  } else if (name == "product") {
    return make_product(args.empty() ? 5 : static_cast<std::size_t>(args[0]));
  } else if (name == "constant") {
    return make_constant(args.empty() ? 1.0 : args[0],
                         args.size() > 1 ? static_cast<std::size_t>(args[1]) : 3);
  }
  throw ConfigError("unknown analytic function: " + spec);
}

namespace {

struct GridEval {
  std::size_t dims;
  std::size_t points;          // per dimension
  std::vector<double> values;  // points^dims, index = sum_i idx[i]*points^(d-1-i)
  double mean = 0.0;
  double variance = 0.0;
};

std::size_t default_grid(const AnalyticFunction& f, std::size_t requested) {
  if (f.dimension > 4) {
    throw OracleIntractableError("double-loop oracle limited to dimension <= 4, got " +
                                 std::to_string(f.dimension));
  }
  if (requested == 0) {
    return f.dimension <= 2 ? 128 : (f.dimension == 3 ? 64 : 32);
  }
  if (requested < 16) {
    throw Error("double-loop oracle needs grid_points_per_dim >= 16");
  }
  return requested;
}

GridEval evaluate_grid(const AnalyticFunction& f, std::size_t n) {
  GridEval grid;
  grid.dims = f.dimension;
  grid.points = n;
  std::size_t total = 1;
  for (std::size_t i = 0; i < f.dimension; ++i) total *= n;
  grid.values.resize(total);

  std::vector<double> unit(f.dimension);
  std::vector<std::size_t> idx(f.dimension, 0);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (std::size_t i = f.dimension; i-- > 0;) {
      idx[i] = rem % n;
      rem /= n;
      unit[i] = (static_cast<double>(idx[i]) + 0.5) / static_cast<double>(n);
    }
    const double v = f.evaluate_unit(unit);
    grid.values[flat] = v;
    sum += v;
    sum_sq += v * v;
  }
  grid.mean = sum / static_cast<double>(total);
  grid.variance = sum_sq / static_cast<double>(total) - grid.mean * grid.mean;
  return grid;
}

}  // namespace

double double_loop_oracle(const AnalyticFunction& f, const std::set<std::size_t>& subset,
                          std::size_t grid_points_per_dim) {
  const std::size_t n = default_grid(f, grid_points_per_dim);
  for (std::size_t i : subset) {
    if (i >= f.dimension) throw Error("double-loop oracle: subset index out of range");
  }
  if (subset.empty()) throw Error("double-loop oracle: empty subset");
  const GridEval grid = evaluate_grid(f, n);
  if (grid.variance <= 0.0) {
    throw DegenerateFunctionError("oracle: function has zero variance");
  }

  // E[f | X_u = u-grid point] = mean over the complementary axes, then the
  // closed index is (mean of conditional^2 - mean^2) / variance.
  std::size_t u_total = 1;
  for (std::size_t i = 0; i < subset.size(); ++i) u_total *= n;
  std::size_t comp_total = grid.values.size() / u_total;

  std::vector<std::size_t> stride(f.dimension);
  {
    std::size_t s = 1;
    for (std::size_t i = f.dimension; i-- > 0;) {
      stride[i] = s;
      s *= n;
    }
  }
  std::vector<std::size_t> u_dims(subset.begin(), subset.end());
  std::vector<std::size_t> comp_dims;
  for (std::size_t i = 0; i < f.dimension; ++i) {
    if (!subset.contains(i)) comp_dims.push_back(i);
  }

  double sum_cond_sq = 0.0;
  std::vector<std::size_t> u_idx(u_dims.size(), 0);
  for (std::size_t uflat = 0; uflat < u_total; ++uflat) {
    std::size_t rem = uflat;
    std::size_t base = 0;
    for (std::size_t k = u_dims.size(); k-- > 0;) {
      u_idx[k] = rem % n;
      rem /= n;
      base += u_idx[k] * stride[u_dims[k]];
    }
    double cond_sum = 0.0;
    for (std::size_t cflat = 0; cflat < comp_total; ++cflat) {
      std::size_t crem = cflat;
      std::size_t offset = base;
      for (std::size_t k = comp_dims.size(); k-- > 0;) {
        offset += (crem % n) * stride[comp_dims[k]];
        crem /= n;
      }
      cond_sum += grid.values[offset];
    }
    const double cond_mean = cond_sum / static_cast<double>(comp_total);
    sum_cond_sq += cond_mean * cond_mean;
  }
  const double var_cond = sum_cond_sq / static_cast<double>(u_total) -
                          grid.mean * grid.mean;
  return var_cond / grid.variance;
}

double total_from_oracle(const AnalyticFunction& f, std::size_t index,
                         std::size_t grid_points_per_dim) {
  const std::size_t n = default_grid(f, grid_points_per_dim);
  if (index >= f.dimension) throw Error("total_from_oracle: index out of range");
  const GridEval grid = evaluate_grid(f, n);
  if (grid.variance <= 0.0) {
    throw DegenerateFunctionError("oracle: function has zero variance");
  }

  std::vector<std::size_t> stride(f.dimension);
  {
    std::size_t s = 1;
    for (std::size_t i = f.dimension; i-- > 0;) {
      stride[i] = s;
      s *= n;
    }
  }
  std::vector<std::size_t> comp_dims;
  for (std::size_t i = 0; i < f.dimension; ++i) {
    if (i != index) comp_dims.push_back(i);
  }
  std::size_t comp_total = grid.values.size() / n;

  // E over X_~i of Var over X_i of f.
  double sum_var = 0.0;
  for (std::size_t cflat = 0; cflat < comp_total; ++cflat) {
    std::size_t crem = cflat;
    std::size_t base = 0;
    for (std::size_t k = comp_dims.size(); k-- > 0;) {
      base += (crem % n) * stride[comp_dims[k]];
      crem /= n;
    }
    double s1 = 0.0;
    double s2 = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = grid.values[base + t * stride[index]];
      s1 += v;
      s2 += v * v;
    }
    const double m = s1 / static_cast<double>(n);
    sum_var += s2 / static_cast<double>(n) - m * m;
  }
  return (sum_var / static_cast<double>(comp_total)) / grid.variance;
}

}  // namespace sobolattr
