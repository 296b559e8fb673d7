#include "sobolattr/estimator.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sobolattr/errors.hpp"

namespace sobolattr {

using nlohmann::ordered_json;

SobolResult estimate_indices(std::span<const double> scores, std::size_t n_designs,
                             std::size_t dims) {
  const std::size_t n = n_designs;
  const std::size_t d = dims;
  if (n < 2) throw DesignShapeError("estimate_indices: N must be >= 2");
  if (d < 1) throw DesignShapeError("estimate_indices: d must be >= 1");
  if (scores.size() != n * (d + 2)) {
    std::ostringstream os;
    os << "estimate_indices: got " << scores.size() << " scores, expected N(d+2) = "
       << n * (d + 2);
    throw DesignShapeError(os.str());
  }

  for (double v : scores) {
    if (!std::isfinite(v)) {
      throw Error("estimate_indices: scores contain non-finite values");
    }
  }

  const auto f_a = scores.subspan(0, n);
  const auto f_b = scores.subspan(n, n);

  double f0 = 0.0;
  for (double v : f_a) f0 += v;
  f0 /= static_cast<double>(n);

  double variance = 0.0;
  for (double v : f_a) variance += (v - f0) * (v - f0);
  variance /= static_cast<double>(n - 1);

  const double floor = kVarianceFloor * (f0 != 0.0 ? f0 * f0 : 1.0);
  if (variance < floor) {
    std::ostringstream os;
    os << "model output is constant under perturbation (variance " << variance
       << " < floor " << floor << "); no attribution possible";
    throw DegenerateFunctionError(os.str());
  }

  SobolResult result;
  result.empirical_mean = f0;
  result.empirical_variance = variance;
  result.forwards_used = scores.size();
  result.first_order.resize(d);
  result.total_order.resize(d);
  const double half_n = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < d; ++i) {
    const auto f_c = scores.subspan(n * (2 + i), n);
    double sum_bc = 0.0;
    double sum_ac = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double bc = f_b[j] - f_c[j];
      const double ac = f_a[j] - f_c[j];
      sum_bc += bc * bc;
      sum_ac += ac * ac;
    }
    result.first_order[i] = (variance - sum_bc / half_n) / variance;
    result.total_order[i] = (sum_ac / half_n) / variance;
  }
  return result;
}

SobolResult sign_indices(SobolResult result, double f_full,
                         std::span<const double> f_occluded) {
  if (f_occluded.size() != result.total_order.size()) {
    std::ostringstream os;
    os << "sign_indices: " << f_occluded.size() << " occlusion scores for "
       << result.total_order.size() << " dimensions";
    throw DesignShapeError(os.str());
  }
  std::vector<double> signed_total(result.total_order.size());
  for (std::size_t i = 0; i < signed_total.size(); ++i) {
    // sign(0) := +1 -- a tie means occlusion left the score unchanged.
    const double sign = (f_full - f_occluded[i]) < 0.0 ? -1.0 : 1.0;
    signed_total[i] = result.total_order[i] * sign;
  }
  result.signed_total = std::move(signed_total);
  return result;
}

std::string SobolResult::to_json(int n_designs) const {
  ordered_json doc;
  doc["version"] = 1;
  doc["N"] = n_designs;
  doc["d"] = dims();
  doc["forwards"] = forwards_used;
  doc["f0"] = empirical_mean;
  doc["variance"] = empirical_variance;
  doc["Si"] = first_order;
  doc["STi"] = total_order;
  if (signed_total) doc["STi_signed"] = *signed_total;
  return doc.dump(2);
}

SobolResult SobolResult::from_json(const std::string& text, int* n_designs) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw IoError(std::string("SobolResult: bad JSON: ") + e.what());
  }
  if (!doc.contains("version") || doc["version"].get<int>() != 1) {
    throw IoError("SobolResult: unsupported document version");
  }
  SobolResult result;
  result.first_order = doc.at("Si").get<std::vector<double>>();
  result.total_order = doc.at("STi").get<std::vector<double>>();
  result.empirical_mean = doc.at("f0").get<double>();
  result.empirical_variance = doc.at("variance").get<double>();
  result.forwards_used = doc.at("forwards").get<std::size_t>();
  if (doc.contains("STi_signed")) {
    result.signed_total = doc["STi_signed"].get<std::vector<double>>();
  }
  if (n_designs) *n_designs = doc.at("N").get<int>();
  return result;
}

}  // namespace sobolattr
