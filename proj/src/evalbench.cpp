#include "sobolattr/evalbench.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sobolattr/errors.hpp"
#include "sobolattr/ioutil.hpp"
#include "sobolattr/qmc.hpp"

namespace sobolattr {

namespace {

double trapezoid_auc(std::span<const double> fractions, std::span<const double> scores) {
  double auc = 0.0;
  for (std::size_t k = 1; k < fractions.size(); ++k) {
    auc += (fractions[k] - fractions[k - 1]) * 0.5 * (scores[k] + scores[k - 1]);
  }
  return auc;
}

double uniform_from(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0,1), reproducible
}

}  // namespace

std::vector<std::size_t> rank_pixels_descending(const ImageTensor& heatmap) {
  std::vector<std::size_t> order(heatmap.pixel_count());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return heatmap.pixels[a] > heatmap.pixels[b];
  });
  return order;
}

FidelityCurve deletion_curve(BlackBoxHandle& handle, const ImageTensor& x,
                             const ImageTensor& heatmap, double baseline, int steps) {
  if (steps < 2) throw Error("deletion_curve: steps must be >= 2");
  if (heatmap.height != x.height || heatmap.width != x.width || heatmap.channels != 1) {
    throw DesignShapeError("deletion_curve: heatmap must be single-channel at image size");
  }
  const auto order = rank_pixels_descending(heatmap);
  const std::size_t total = x.pixel_count();

  FidelityCurve curve;
  ImageTensor work = x;
  std::size_t deleted = 0;
  for (int t = 0; t <= steps; ++t) {
    const std::size_t want = total * static_cast<std::size_t>(t) /
                             static_cast<std::size_t>(steps);
    for (; deleted < want; ++deleted) {
      const std::size_t p = order[deleted];
      for (std::size_t ch = 0; ch < work.channels; ++ch) {
        work.pixels[p * work.channels + ch] = baseline;
      }
    }
    curve.fractions.push_back(static_cast<double>(t) / static_cast<double>(steps));
    curve.scores.push_back(handle.evaluate_one(work));
  }
  curve.auc = trapezoid_auc(curve.fractions, curve.scores);
  return curve;
}

FidelityCurve insertion_curve(BlackBoxHandle& handle, const ImageTensor& x,
                              const ImageTensor& heatmap, double baseline, int steps) {
  if (steps < 2) throw Error("insertion_curve: steps must be >= 2");
  if (heatmap.height != x.height || heatmap.width != x.width || heatmap.channels != 1) {
    throw DesignShapeError("insertion_curve: heatmap must be single-channel at image size");
  }
  const auto order = rank_pixels_descending(heatmap);
  const std::size_t total = x.pixel_count();

  FidelityCurve curve;
  ImageTensor work(x.height, x.width, x.channels, baseline);
  std::size_t restored = 0;
  for (int t = 0; t <= steps; ++t) {
    const std::size_t want = total * static_cast<std::size_t>(t) /
                             static_cast<std::size_t>(steps);
    for (; restored < want; ++restored) {
      const std::size_t p = order[restored];
      for (std::size_t ch = 0; ch < work.channels; ++ch) {
        work.pixels[p * work.channels + ch] = x.pixels[p * work.channels + ch];
      }
    }
    curve.fractions.push_back(static_cast<double>(t) / static_cast<double>(steps));
    curve.scores.push_back(handle.evaluate_one(work));
  }
  curve.auc = trapezoid_auc(curve.fractions, curve.scores);
  return curve;
}

PointingRecord pointing_game(const ImageTensor& heatmap, const std::vector<Box>& boxes) {
  if (boxes.empty()) throw UndefinedTargetError("pointing_game: no boxes for this input");
  PointingRecord record;
  record.boxes = boxes;
  std::size_t best = 0;
  for (std::size_t p = 1; p < heatmap.pixel_count(); ++p) {
    if (heatmap.pixels[p] > heatmap.pixels[best]) best = p;  // ties keep raster order
  }
  record.argmax_row = best / heatmap.width;
  record.argmax_col = best % heatmap.width;
  const long row = static_cast<long>(record.argmax_row);
  const long col = static_cast<long>(record.argmax_col);
  for (const Box& box : boxes) {
    if (col >= box.x0 && col <= box.x1 && row >= box.y0 && row <= box.y1) {
      record.hit = true;
      break;
    }
  }
  return record;
}

FidelityCurve word_deletion_curve(BlackBoxHandle& handle, const TokenSequence& x,
                                  std::span<const double> scores_per_token,
                                  int max_words) {
  if (max_words < 1) throw Error("word_deletion_curve: max_words must be >= 1");
  const std::size_t d = x.dims();
  if (scores_per_token.size() != d) {
    throw DesignShapeError("word_deletion_curve: relevance length mismatch");
  }
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores_per_token[a] > scores_per_token[b];
  });
  const std::size_t removals = std::min<std::size_t>(static_cast<std::size_t>(max_words), d);

  std::vector<char> removed(d, 0);
  FidelityCurve curve;
  curve.fractions.push_back(0.0);
  curve.scores.push_back(handle.evaluate_one(x));
  for (std::size_t k = 0; k < removals; ++k) {
    removed[order[k]] = 1;
    TokenSequence survivor;
    for (std::size_t i = 0; i < d; ++i) {
      if (!removed[i]) survivor.tokens.push_back(x.tokens[i]);
    }
    curve.fractions.push_back(static_cast<double>(k + 1) / static_cast<double>(d));
    curve.scores.push_back(handle.evaluate_one(survivor));
  }
  curve.auc = trapezoid_auc(curve.fractions, curve.scores);
  return curve;
}

double word_deletion_mean(const FidelityCurve& curve) {
  if (curve.scores.size() < 2) throw Error("word_deletion_mean: empty curve");
  double sum = 0.0;
  for (std::size_t k = 1; k < curve.scores.size(); ++k) sum += curve.scores[k];
  return sum / static_cast<double>(curve.scores.size() - 1);
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double spearman_rank_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DesignShapeError("spearman: length mismatch");
  if (a.size() < 2) throw Error("spearman: need at least two observations");
  const auto constant = [](std::span<const double> v) {
    for (double x : v) {
      if (x != v[0]) return false;
    }
    return true;
  };
  if (constant(a) || constant(b)) {
    throw UndefinedCorrelationError("spearman undefined for constant input");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double cov = 0.0;
  double va = 0.0;
  double vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - mean) * (rb[i] - mean);
    va += (ra[i] - mean) * (ra[i] - mean);
    vb += (rb[i] - mean) * (rb[i] - mean);
  }
  return cov / std::sqrt(va * vb);
}

std::vector<ConvergencePoint> convergence_study(BlackBoxHandle& handle, const Input& x,
                                                const std::vector<std::size_t>& budgets,
                                                std::size_t reference_budget,
                                                const AttributionConfig& base) {
  if (budgets.empty()) throw ConfigError("convergence_study: no budgets");
  const std::size_t top = *std::max_element(budgets.begin(), budgets.end());
  if (reference_budget < top) {
    throw ConfigError("convergence_study: reference budget below the largest budget");
  }

  auto run_at = [&](std::size_t n_designs) {
    AttributionConfig config = base;
    config.variant = EstimatorVariant::Total;
    config.n_designs = n_designs;
    return attribute(handle, x, config);
  };

  // d follows the input modality exactly as attribute() derives it
  std::size_t d = base.grid_h * base.grid_w;
  if (const auto* vec = std::get_if<std::vector<double>>(&x)) d = vec->size();
  if (const auto* tok = std::get_if<TokenSequence>(&x)) d = tok->dims();

  const std::size_t n_ref = std::max<std::size_t>(2, reference_budget / (d + 2));
  const Attribution reference = run_at(n_ref);
  std::vector<ConvergencePoint> points;
  points.reserve(budgets.size());
  for (const std::size_t budget : budgets) {
    ConvergencePoint point;
    point.requested_budget = budget;
    const std::size_t n = budget / (d + 2);
    point.n_designs = n;
    if (n < 2) {
      point.note = "budget below the 2(d+2) estimator minimum";
      points.push_back(std::move(point));
      continue;
    }
    point.realized_forwards = n * (d + 2);
    try {
      const Attribution at = run_at(n);
      point.spearman = spearman_rank_correlation(at.result.total_order,
                                                 reference.result.total_order);
    } catch (const DegenerateFunctionError& e) {
      point.note = e.what();
    } catch (const UndefinedCorrelationError& e) {
      point.note = e.what();
    }
    points.push_back(std::move(point));
  }
  return points;
}

AttributionMap occlusion_baseline(BlackBoxHandle& handle, const Input& x,
                                  std::size_t grid_h, std::size_t grid_w,
                                  double baseline) {
  std::vector<Input> inputs;
  std::size_t target_h = 1;
  std::size_t target_w = 1;
  std::size_t d = grid_h * grid_w;
  if (const auto* image = std::get_if<ImageTensor>(&x)) {
    target_h = image->height;
    target_w = image->width;
    inputs.reserve(d + 1);
    inputs.push_back(*image);
    for (std::size_t i = 0; i < d; ++i) {
      MaskGrid grid(grid_h, grid_w, 1.0);
      grid.values[i] = 0.0;
      inputs.push_back(inpaint(*image, upsample_mask(grid, image->height, image->width),
                               baseline));
    }
  } else if (const auto* tokens = std::get_if<TokenSequence>(&x)) {
    d = tokens->dims();
    grid_h = d;
    grid_w = 1;
    target_h = d;
    inputs.reserve(d + 1);
    inputs.push_back(*tokens);
    for (std::size_t i = 0; i < d; ++i) {
      std::vector<double> mask(d, 1.0);
      mask[i] = 0.0;
      inputs.push_back(drop_tokens(*tokens, mask));
    }
  } else {
    throw ConfigError("occlusion baseline needs an image or token input");
  }
  const auto scores = handle.evaluate_batch(inputs);
  std::vector<double> importance(d);
  for (std::size_t i = 0; i < d; ++i) importance[i] = scores[0] - scores[i + 1];
  return render_heatmap(importance, grid_h, grid_w, target_h, target_w);
}

AttributionMap rise_baseline(BlackBoxHandle& handle, const Input& x, std::size_t grid_h,
                             std::size_t grid_w, std::size_t n_masks, double keep_prob,
                             std::uint64_t seed) {
  if (n_masks < 1) throw ConfigError("rise_baseline: n_masks must be >= 1");
  if (!(keep_prob > 0.0 && keep_prob < 1.0)) {
    throw ConfigError("rise_baseline: keep_prob must lie in (0,1)");
  }
  const ImageTensor* image = std::get_if<ImageTensor>(&x);
  const TokenSequence* tokens = std::get_if<TokenSequence>(&x);
  if (!image && !tokens) throw ConfigError("rise_baseline needs an image or token input");

  std::size_t d = grid_h * grid_w;
  std::size_t target_h = 1;
  std::size_t target_w = 1;
  if (image) {
    target_h = image->height;
    target_w = image->width;
  } else {
    d = tokens->dims();
    grid_h = d;
    grid_w = 1;
    target_h = d;
  }

  std::mt19937_64 rng(seed);
  std::vector<double> weighted_sum(d, 0.0);
  const std::size_t batch = handle.batch_size();
  std::vector<std::vector<double>> masks;
  std::vector<Input> chunk;
  std::size_t produced = 0;
  while (produced < n_masks) {
    const std::size_t count = std::min(batch, n_masks - produced);
    masks.clear();
    chunk.clear();
    for (std::size_t k = 0; k < count; ++k) {
      std::vector<double> mask(d);
      for (double& cell : mask) cell = uniform_from(rng) < keep_prob ? 1.0 : 0.0;
      if (image) {
        const ImageTensor up =
            bilinear_upsample(mask, grid_h, grid_w, image->height, image->width);
        chunk.emplace_back(inpaint(*image, up, 0.0));
      } else {
        chunk.emplace_back(drop_tokens(*tokens, mask));
      }
      masks.push_back(std::move(mask));
    }
    const auto scores = handle.evaluate_batch(chunk);
    for (std::size_t k = 0; k < count; ++k) {
      for (std::size_t i = 0; i < d; ++i) weighted_sum[i] += scores[k] * masks[k][i];
    }
    produced += count;
  }
  const double norm = keep_prob * static_cast<double>(n_masks);
  for (double& v : weighted_sum) v /= norm;
  // the upsampling is linear, so upsample(sum w_i m_i) == sum w_i upsample(m_i)
  return render_heatmap(weighted_sum, grid_h, grid_w, target_h, target_w);
}

ImageTensor random_heatmap(std::size_t height, std::size_t width, std::uint64_t seed) {
  ImageTensor out(height, width, 1);
  std::mt19937_64 rng(seed);
  for (double& v : out.pixels) v = uniform_from(rng);
  return out;
}

std::string benchmark_jsonl_text(const std::vector<BenchmarkRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) {
    nlohmann::ordered_json line;
    line["input_id"] = r.input_id;
    line["method"] = r.method;
    line["metric"] = r.metric;
    line["value"] = r.value;
    line["forwards"] = r.forwards;
    line["seed"] = r.seed;
    line["config_hash"] = r.config_hash;
    out << line.dump() << '\n';
  }
  return out.str();
}

void write_benchmark_jsonl(const std::vector<BenchmarkRecord>& records,
                           const std::string& path) {
  atomic_write_text(path, benchmark_jsonl_text(records));
}

void write_benchmark_summary_csv(const std::vector<BenchmarkRecord>& records,
                                 const std::string& path) {
  std::map<std::pair<std::string, std::string>, std::pair<double, std::size_t>> agg;
  for (const auto& r : records) {
    auto& [sum, count] = agg[{r.method, r.metric}];
    sum += r.value;
    ++count;
  }
  std::ostringstream out;
  out << "method,metric,mean_value,count\n";
  out.precision(17);
  for (const auto& [key, sc] : agg) {
    out << key.first << ',' << key.second << ',' << sc.first / static_cast<double>(sc.second)
        << ',' << sc.second << '\n';
  }
  atomic_write_text(path, out.str());
}

}  // namespace sobolattr
