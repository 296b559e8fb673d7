#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sobolattr {

inline constexpr double kVarianceFloor = 1e-12;

/// Per-dimension sensitivity estimates plus estimator metadata.
struct SobolResult {
  std::vector<double> first_order;            // S_i
  std::vector<double> total_order;            // S_Ti
  std::optional<std::vector<double>> signed_total;  // S_Ti * sign(f(x) - f(x\i))
  double empirical_mean = 0.0;                // f0, mean of the A block
  double empirical_variance = 0.0;            // unbiased variance of the A block
  std::size_t forwards_used = 0;

  std::size_t dims() const { return total_order.size(); }

  /// Versioned JSON document:
  /// {version, N, d, forwards, f0, variance, Si[], STi[], STi_signed[]?}
  std::string to_json(int n_designs) const;
  static SobolResult from_json(const std::string& text, int* n_designs = nullptr);
};

/// Jansen pick-and-freeze estimators over a score vector laid out per
/// SampleDesign: [f(A) x N, f(B) x N, f(C(1)) x N, ..., f(C(d)) x N].
///
///   f0    = mean(fA)
///   V     = sum((fA - f0)^2) / (N-1)
///   S_i   = (V - sum((fB_j - fC(i)_j)^2) / 2N) / V
///   S_Ti  = (sum((fA_j - fC(i)_j)^2) / 2N) / V
///
/// Throws DegenerateFunctionError when V falls below the variance floor
/// (scaled by f0^2 when f0 != 0): constant output, no attribution possible.
SobolResult estimate_indices(std::span<const double> scores, std::size_t n_designs,
                             std::size_t dims);

/// Adds the occlusion-signed variant: signed_total[i] =
/// total_order[i] * sign(f_full - f_occluded[i]), with sign(0) = +1.
SobolResult sign_indices(SobolResult result, double f_full,
                         std::span<const double> f_occluded);

}  // namespace sobolattr
