#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sobolattr/attribution.hpp"
#include "sobolattr/blackbox.hpp"
#include "sobolattr/image.hpp"
#include "sobolattr/perturbation.hpp"

namespace sobolattr {

/// Model score as a function of the perturbed-feature share.
/// fractions[0] = 0 scores the curve's starting state; auc is the
/// trapezoid over fractions.
struct FidelityCurve {
  std::vector<double> fractions;
  std::vector<double> scores;
  double auc = 0.0;
};

/// Axis-aligned box, inclusive bounds; x = column, y = row.
struct Box {
  long x0 = 0;
  long y0 = 0;
  long x1 = 0;
  long y1 = 0;
};

struct PointingRecord {
  std::size_t argmax_row = 0;
  std::size_t argmax_col = 0;
  std::vector<Box> boxes;
  bool hit = false;
};

/// Pixel indices ordered by value descending; float ties broken by raster
/// (row-major) order. Shared by the fidelity metrics.
std::vector<std::size_t> rank_pixels_descending(const ImageTensor& heatmap);

/// Replaces the top-ranked t/steps share of pixels with `baseline` at each
/// step and records the model score; steps+1 forwards.
FidelityCurve deletion_curve(BlackBoxHandle& handle, const ImageTensor& x,
                             const ImageTensor& heatmap, double baseline, int steps);

/// Mirror of deletion: starts from the all-baseline image and restores the
/// top-ranked pixels first.
FidelityCurve insertion_curve(BlackBoxHandle& handle, const ImageTensor& x,
                              const ImageTensor& heatmap, double baseline, int steps);

/// Argmax (raster tie-break) against the boxes; throws UndefinedTargetError
/// on an empty box list. Dataset accuracy = sum(hit) / records.
PointingRecord pointing_game(const ImageTensor& heatmap, const std::vector<Box>& boxes);

/// Removes up to min(max_words, d) tokens in descending relevance, scoring
/// after each removal. fractions are removed-token shares of d.
FidelityCurve word_deletion_curve(BlackBoxHandle& handle, const TokenSequence& x,
                                  std::span<const double> scores_per_token,
                                  int max_words);

/// The reported word-deletion metric: mean score over the post-removal
/// steps (lower = more faithful).
double word_deletion_mean(const FidelityCurve& curve);

/// Average ranks (ties get the mean of their positions), 1-based.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of average-ranked values; throws
/// UndefinedCorrelationError for constant input.
double spearman_rank_correlation(std::span<const double> a, std::span<const double> b);

struct ConvergencePoint {
  std::size_t requested_budget = 0;
  std::size_t realized_forwards = 0;
  std::size_t n_designs = 0;
  std::optional<double> spearman;  // empty when this budget failed
  std::string note;
};

/// Total-order attributions from fresh prefixes of one QMC stream at each
/// budget, rank-correlated against the reference-budget attribution.
/// Budgets too small for the estimator (or degenerate variance) are
/// reported per-budget, not fatal. reference_budget >= max(budgets).
std::vector<ConvergencePoint> convergence_study(BlackBoxHandle& handle, const Input& x,
                                                const std::vector<std::size_t>& budgets,
                                                std::size_t reference_budget,
                                                const AttributionConfig& base);

/// Occlusion attribution g_i = f(x) - f(x with region i baselined);
/// d + 1 forwards. Image and text modalities.
AttributionMap occlusion_baseline(BlackBoxHandle& handle, const Input& x,
                                  std::size_t grid_h, std::size_t grid_w,
                                  double baseline);

/// RISE attribution: i.i.d. Bernoulli(keep_prob) binary masks at grid
/// resolution, bilinearly upsampled and applied multiplicatively;
/// importance = score-weighted mask average / (keep_prob * n_masks).
AttributionMap rise_baseline(BlackBoxHandle& handle, const Input& x, std::size_t grid_h,
                             std::size_t grid_w, std::size_t n_masks, double keep_prob,
                             std::uint64_t seed);

/// Uniform [0,1) heatmap from a seeded generator; the random ranking
/// baseline for the fidelity benchmarks.
ImageTensor random_heatmap(std::size_t height, std::size_t width, std::uint64_t seed);

/// One benchmark observation; serialized as a JSONL record.
struct BenchmarkRecord {
  std::string input_id;
  std::string method;
  std::string metric;
  double value = 0.0;  // auc / hit / curve mean
  std::uint64_t forwards = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

std::string benchmark_jsonl_text(const std::vector<BenchmarkRecord>& records);
void write_benchmark_jsonl(const std::vector<BenchmarkRecord>& records,
                           const std::string& path);
/// Per-method means of `value`, one CSV row per (method, metric).
void write_benchmark_summary_csv(const std::vector<BenchmarkRecord>& records,
                                 const std::string& path);

}  // namespace sobolattr
