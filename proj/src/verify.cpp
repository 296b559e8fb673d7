#include "sobolattr/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "sobolattr/analytic.hpp"
#include "sobolattr/attribution.hpp"
#include "sobolattr/blackbox.hpp"
#include "sobolattr/errors.hpp"
#include "sobolattr/estimator.hpp"
#include "sobolattr/evalbench.hpp"
#include "sobolattr/image.hpp"
#include "sobolattr/ioutil.hpp"
#include "sobolattr/qmc.hpp"

namespace sobolattr {

namespace fs = std::filesystem;

namespace {

struct Failure {
  std::ostringstream message;
};

// Runs one analytic attribution through the full pipeline.
Attribution run_analytic(const AnalyticFunction& fn, std::size_t n_designs,
                         EstimatorVariant variant = EstimatorVariant::Total,
                         std::optional<std::uint64_t> shift_seed = std::nullopt) {
  BlackBoxHandle handle(make_analytic_backend(fn));
  AttributionConfig config;
  config.n_designs = n_designs;
  config.variant = variant;
  config.shift_seed = shift_seed;
  const Input x = std::vector<double>(fn.dimension, 0.0);
  return attribute(handle, x, config);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

// Independent transliteration of the published total-order recipe; kept
// structurally distinct from estimate_indices on purpose.
std::vector<double> transliterated_total_order(const std::vector<double>& y,
                                               std::size_t n, std::size_t d) {
  std::vector<double> f_a(y.begin(), y.begin() + static_cast<long>(n));
  std::vector<std::vector<double>> f_c;
  for (std::size_t i = 0; i < d; ++i) {
    f_c.emplace_back(y.begin() + static_cast<long>(n * 2 + n * i),
                     y.begin() + static_cast<long>(n * 2 + n * (i + 1)));
  }
  double f0 = 0.0;
  for (double v : f_a) f0 += v;
  f0 /= static_cast<double>(f_a.size());
  double var = 0.0;
  for (double v : f_a) var += (v - f0) * (v - f0);
  var /= static_cast<double>(f_a.size() - 1);
  std::vector<double> st(d);
  for (std::size_t i = 0; i < d; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      acc += (f_a[j] - f_c[i][j]) * (f_a[j] - f_c[i][j]);
    }
    st[i] = acc / (2.0 * static_cast<double>(n)) / var;
  }
  return st;
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ImageTensor box_test_image(std::size_t size, double inside, double outside) {
  ImageTensor image(size, size, 1, outside);
  for (std::size_t r = size / 4; r < 3 * size / 4; ++r) {
    for (std::size_t c = size / 4; c < 3 * size / 4; ++c) {
      image.at(r, c) = inside;
    }
  }
  return image;
}

int run_command(const std::string& command) {
  const int status = std::system(command.c_str());
  if (status < 0) return -1;
  return WEXITSTATUS(status);
}

// ---- the 11 acceptance checks ----

CheckResult check_ishigami(int id) {
  CheckResult result{id, "ishigami-convergence", false, ""};
  const AnalyticFunction fn = make_ishigami();
  const auto start = std::chrono::steady_clock::now();
  const Attribution at = run_analytic(fn, 4096);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double err_s = max_abs_diff(at.result.first_order, *fn.reference_first);
  const double err_t = max_abs_diff(at.result.total_order, *fn.reference_total);
  std::ostringstream detail;
  detail << "max|S-ref| = " << err_s << ", max|ST-ref| = " << err_t << ", "
         << seconds << " s";
  result.detail = detail.str();
  result.pass = err_s <= 0.02 && err_t <= 0.02 && seconds < 1.0;
  return result;
}

CheckResult check_gfunction(int id) {
  CheckResult result{id, "g-function-first-order", false, ""};
  const AnalyticFunction fn =
      make_gfunction({0.0, 1.0, 4.5, 9.0, 99.0, 99.0, 99.0, 99.0});
  const Attribution at = run_analytic(fn, 8192);
  const double err = max_abs_diff(at.result.first_order, *fn.reference_first);
  result.detail = "max|Si - Vi/V| = " + std::to_string(err);
  result.pass = err <= 0.03;
  return result;
}

CheckResult check_oracle_equivalence(int id) {
  CheckResult result{id, "oracle-equivalence-quadratics", false, ""};
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const AnalyticFunction fn = random_quadratic(seed);
    const Attribution at = run_analytic(fn, 4096);
    for (std::size_t i = 0; i < 3; ++i) {
      const double s_oracle = double_loop_oracle(fn, {i});
      const double t_oracle = total_from_oracle(fn, i);
      worst = std::max(worst, std::abs(at.result.first_order[i] - s_oracle));
      worst = std::max(worst, std::abs(at.result.total_order[i] - t_oracle));
    }
  }
  result.detail = "worst |Jansen - oracle| over 10 seeded quadratics = " +
                  std::to_string(worst);
  result.pass = worst <= 0.02;
  return result;
}

CheckResult check_estimator_laws(int id) {
  CheckResult result{id, "estimator-laws", false, ""};
  const std::size_t n = 2048;
  std::ostringstream detail;
  bool ok = true;

  const std::vector<AnalyticFunction> suite = {
      make_ishigami(), make_gfunction({0.0, 1.0, 4.5, 9.0, 99.0, 99.0, 99.0, 99.0}),
      make_linear(3), make_product(5)};
  for (const auto& fn : suite) {
    const Attribution at = run_analytic(fn, n);
    const auto& si = at.result.first_order;
    const auto& st = at.result.total_order;
    double sum_si = 0.0;
    double sum_st = 0.0;
    for (std::size_t i = 0; i < si.size(); ++i) {
      ok = ok && si[i] <= st[i] + 0.02;
      ok = ok && si[i] >= -0.02 && si[i] <= 1.02 && st[i] >= -0.02 && st[i] <= 1.02;
      sum_si += si[i];
      sum_st += st[i];
    }
    ok = ok && sum_si <= 1.03 && sum_st >= 0.97;
    if (fn.name == "linear") {
      ok = ok && std::abs(sum_si - 1.0) <= 0.03;
      for (std::size_t i = 0; i < si.size(); ++i) ok = ok && std::abs(si[i] - st[i]) <= 0.02;
    }
    detail << fn.name << "(sumSi=" << sum_si << ",sumSTi=" << sum_st << ") ";
  }

  for (const auto& base : {make_linear(3), make_ishigami()}) {
    const Attribution at = run_analytic(with_dummy_dimension(base), n);
    const double dummy_total = at.result.total_order.back();
    ok = ok && dummy_total <= 0.01;
    detail << base.name << "+dummy(ST=" << dummy_total << ") ";
  }

  bool degenerate_raised = false;
  try {
    run_analytic(make_constant(1.0, 3), 64);
  } catch (const DegenerateFunctionError&) {
    degenerate_raised = true;
  }
  ok = ok && degenerate_raised;
  detail << "constant(degenerate=" << (degenerate_raised ? "raised" : "MISSING") << ")";

  result.detail = detail.str();
  result.pass = ok;
  return result;
}

CheckResult check_forward_budget(int id) {
  CheckResult result{id, "forward-budget", false, ""};
  const ImageTensor image = box_test_image(224, 1.0, 0.2);
  AttributionConfig config;  // library defaults: 11x11 grid, N=32

  BlackBoxHandle handle(make_box_mean_backend(0.25, 0.25, 0.75, 0.75));
  attribute(handle, image, config);
  const std::uint64_t plain = handle.calls();

  handle.reset_calls();
  config.variant = EstimatorVariant::SignedTotal;
  attribute(handle, image, config);
  const std::uint64_t with_sign = handle.calls();

  std::ostringstream detail;
  detail << "plain = " << plain << " (want 3936), signed = " << with_sign
         << " (want 4058)";
  result.detail = detail.str();
  result.pass = plain == 3936 && with_sign == 3936 + 122;
  return result;
}

CheckResult check_hand_example(int id) {
  CheckResult result{id, "hand-example-exact", false, ""};
  const std::vector<double> scores = {1.0, 3.0, 2.0, 4.0, 2.0, 2.0};
  const SobolResult estimate = estimate_indices(scores, 2, 1);
  const auto translit = transliterated_total_order(scores, 2, 1);
  const double err_s = std::abs(estimate.first_order[0] - 0.5);
  const double err_t = std::abs(estimate.total_order[0] - 0.25);
  const double err_x = std::abs(estimate.total_order[0] - translit[0]);
  std::ostringstream detail;
  detail << "S1 = " << estimate.first_order[0] << ", ST1 = " << estimate.total_order[0]
         << ", |ST - transliteration| = " << err_x;
  result.detail = detail.str();
  result.pass = err_s <= 1e-12 && err_t <= 1e-12 && err_x <= 1e-12;
  return result;
}

CheckResult check_qmc_quality(int id) {
  CheckResult result{id, "qmc-beats-monte-carlo", false, ""};
  const std::size_t n = 1024;
  const std::size_t d = 5;
  const double truth = 1.0 / 32.0;

  qmc::SobolSequence seq(d);
  const Matrix points = seq.next_points(n);
  double acc = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double prod = 1.0;
    for (double v : points.row(r)) prod *= v;
    acc += prod;
  }
  const double qmc_err = std::abs(acc / static_cast<double>(n) - truth);

  double mc_err_sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    double sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      double prod = 1.0;
      for (std::size_t j = 0; j < d; ++j) {
        prod *= static_cast<double>(rng() >> 11) * 0x1.0p-53;
      }
      sum += prod;
    }
    mc_err_sum += std::abs(sum / static_cast<double>(n) - truth);
  }
  const double mc_err = mc_err_sum / 20.0;
  std::ostringstream detail;
  detail << "qmc |err| = " << qmc_err << ", pseudo-random mean |err| = " << mc_err;
  result.detail = detail.str();
  result.pass = qmc_err < 1e-3 && qmc_err < mc_err;
  return result;
}

CheckResult check_convergence_harness(int id) {
  CheckResult result{id, "convergence-harness", false, ""};
  const AnalyticFunction fn = make_ishigami();
  const std::vector<std::size_t> budgets = {5 * 5, 50 * 5, 500 * 5};
  const std::size_t reference = 5000 * 5;

  std::vector<std::vector<double>> per_budget(budgets.size());
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    BlackBoxHandle handle(make_analytic_backend(fn));
    AttributionConfig config;
    config.shift_seed = seed;
    const Input x = std::vector<double>(fn.dimension, 0.0);
    const auto points = convergence_study(handle, x, budgets, reference, config);
    for (std::size_t b = 0; b < points.size(); ++b) {
      if (!points[b].spearman) {
        result.detail = "budget " + std::to_string(budgets[b]) + ": " + points[b].note;
        return result;
      }
      per_budget[b].push_back(*points[b].spearman);
    }
  }
  std::vector<double> medians;
  for (auto& rhos : per_budget) medians.push_back(median(rhos));
  bool ok = true;
  for (std::size_t b = 1; b < medians.size(); ++b) ok = ok && medians[b] >= medians[b - 1];
  ok = ok && medians.back() >= 0.99;
  std::ostringstream detail;
  detail << "median spearman by budget:";
  for (double m : medians) detail << ' ' << m;
  result.detail = detail.str();
  result.pass = ok;
  return result;
}

CheckResult check_fidelity_sanity(int id) {
  CheckResult result{id, "fidelity-sanity", false, ""};
  std::ostringstream detail;

  // image side: box-mean model, 64x64 image, 8x8 grid
  const ImageTensor image = box_test_image(64, 1.0, 0.25);
  const double baseline = 0.5;
  const int steps = 100;
  BlackBoxHandle model(make_box_mean_backend(0.25, 0.25, 0.75, 0.75));

  AttributionConfig config;
  config.grid_h = config.grid_w = 8;
  config.n_designs = 32;
  const Attribution sobol = attribute(model, image, config);
  const AttributionMap occlusion = occlusion_baseline(model, image, 8, 8, 0.0);
  const AttributionMap rise = rise_baseline(model, image, 8, 8, 500, 0.5, 1);

  auto del_auc = [&](const ImageTensor& heatmap) {
    return deletion_curve(model, image, heatmap, baseline, steps).auc;
  };
  auto ins_auc = [&](const ImageTensor& heatmap) {
    return insertion_curve(model, image, heatmap, baseline, steps).auc;
  };

  const double sobol_del = del_auc(sobol.map.heatmap);
  const double sobol_ins = ins_auc(sobol.map.heatmap);
  const double occ_del = del_auc(occlusion.heatmap);
  const double occ_ins = ins_auc(occlusion.heatmap);
  const double rise_del = del_auc(rise.heatmap);
  const double rise_ins = ins_auc(rise.heatmap);

  bool ok = true;
  double rand_del_min = 1e300;
  double rand_ins_max = -1e300;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const ImageTensor noise = random_heatmap(64, 64, seed);
    const double rd = del_auc(noise);
    const double ri = ins_auc(noise);
    rand_del_min = std::min(rand_del_min, rd);
    rand_ins_max = std::max(rand_ins_max, ri);
    ok = ok && sobol_del < rd && sobol_ins > ri;
    ok = ok && occ_del < rd && occ_ins > ri;
    ok = ok && rise_del < rd && rise_ins > ri;
  }
  detail << "deletion auc: sobol " << sobol_del << ", occlusion " << occ_del << ", rise "
         << rise_del << ", random min " << rand_del_min << "; insertion auc: sobol "
         << sobol_ins << ", occlusion " << occ_ins << ", rise " << rise_ins
         << ", random max " << rand_ins_max;

  // text side: keyword classifier
  const TokenSequence sentence = tokenize(
      "the long movie was surprisingly great despite its slow and clumsy start");
  BlackBoxHandle text_handle(make_keyword_backend("great"));
  AttributionConfig text_config;
  text_config.n_designs = 32;
  text_config.variant = EstimatorVariant::SignedTotal;
  text_config.perturb.kind = PerturbKind::Tokens;
  const Attribution text_at = attribute(text_handle, sentence, text_config);
  const FidelityCurve sobol_curve = word_deletion_curve(
      text_handle, sentence, *text_at.result.signed_total, 20);
  const double sobol_mean = word_deletion_mean(sobol_curve);

  const std::size_t d = sentence.dims();
  std::vector<double> inverted(*text_at.result.signed_total);
  for (double& v : inverted) v = -v;
  const double inverted_mean =
      word_deletion_mean(word_deletion_curve(text_handle, sentence, inverted, 20));
  double random_mean_sum = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const ImageTensor noise = random_heatmap(d, 1, seed);
    random_mean_sum +=
        word_deletion_mean(word_deletion_curve(text_handle, sentence, noise.pixels, 20));
  }
  const double random_mean = random_mean_sum / 20.0;
  ok = ok && sobol_mean < random_mean && sobol_mean < inverted_mean;
  detail << "; word-deletion mean: sobol-signed " << sobol_mean << ", random avg "
         << random_mean << ", inverted " << inverted_mean;

  result.detail = detail.str();
  result.pass = ok;
  return result;
}

CheckResult check_interaction_detection(int id) {
  CheckResult result{id, "total-order-captures-interactions", false, ""};
  const Attribution at = run_analytic(make_ishigami(), 4096);
  const double first_x3 = at.result.first_order[2];
  const double total_x3 = at.result.total_order[2];
  std::ostringstream detail;
  detail << "S3 = " << first_x3 << " (<= 0.01), ST3 = " << total_x3 << " (>= 0.20)";
  result.detail = detail.str();
  result.pass = first_x3 <= 0.01 && total_x3 >= 0.20;
  return result;
}

CheckResult check_cli_determinism(int id, const VerifyOptions& options) {
  CheckResult result{id, "cli-determinism", false, ""};
  if (options.cli_path.empty()) {
    result.detail = "no CLI binary supplied to the verification harness";
    return result;
  }
  const fs::path scratch = options.scratch_dir;
  fs::create_directories(scratch);
  const fs::path input_png = scratch / "verify-input.png";
  save_png(box_test_image(64, 1.0, 0.25), input_png.string());

  // identical config, including the output directory: run twice into the
  // same place, snapshotting the first result between runs
  const fs::path out = scratch / "run";
  const std::string command = "\"" + options.cli_path +
                              "\" explain --model fn:box_mean --grid 4x4 --samples 8 "
                              "--mu 0.0 --input \"" +
                              input_png.string() + "\" --out \"" + out.string() +
                              "\" > /dev/null 2>&1";
  std::string first;
  for (const char* tag : {"1", "2"}) {
    const int status = run_command(command);
    if (status != 0) {
      result.detail = "cmd_explain run " + std::string(tag) + " exited with status " +
                      std::to_string(status);
      return result;
    }
    if (first.empty()) first = read_text_file((out / "result.json").string());
  }
  const std::string a = first;
  const std::string b = read_text_file((out / "result.json").string());
  result.pass = !a.empty() && a == b;
  result.detail = result.pass ? "result.json byte-identical across runs ("
                                    + std::to_string(a.size()) + " bytes)"
                              : "result.json differs between runs";
  return result;
}

}  // namespace

std::vector<CheckResult> run_acceptance_checks(const VerifyOptions& options) {
  VerifyOptions opts = options;
  if (opts.scratch_dir.empty()) {
    opts.scratch_dir = (fs::temp_directory_path() /
                        ("sobolattr-verify-" + std::to_string(::getpid())))
                           .string();
  }
  std::vector<CheckResult> results;
  const std::vector<std::function<CheckResult(int)>> checks = {
      [](int id) { return check_ishigami(id); },
      [](int id) { return check_gfunction(id); },
      [](int id) { return check_oracle_equivalence(id); },
      [](int id) { return check_estimator_laws(id); },
      [](int id) { return check_forward_budget(id); },
      [](int id) { return check_hand_example(id); },
      [](int id) { return check_qmc_quality(id); },
      [](int id) { return check_convergence_harness(id); },
      [](int id) { return check_fidelity_sanity(id); },
      [](int id) { return check_interaction_detection(id); },
      [&opts](int id) { return check_cli_determinism(id, opts); },
  };
  for (std::size_t k = 0; k < checks.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    try {
      results.push_back(checks[k](id));
    } catch (const std::exception& e) {
      results.push_back({id, "check-" + std::to_string(id), false,
                         std::string("exception: ") + e.what()});
    }
  }
  return results;
}

}  // namespace sobolattr
