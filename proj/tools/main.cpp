#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sobolattr/attribution.hpp"
#include "sobolattr/blackbox.hpp"
#include "sobolattr/errors.hpp"
#include "sobolattr/evalbench.hpp"
#include "sobolattr/image.hpp"
#include "sobolattr/ioutil.hpp"
#include "sobolattr/runconfig.hpp"
#include "sobolattr/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace sobolattr;

namespace {

struct CommonFlags {
  std::string config_file;
  std::string model;
  std::string grid;
  std::size_t samples = 0;
  std::string perturbation;
  double mu = 0.0;
  double sigma_max = 0.0;
  double threshold = 0.0;
  std::string estimator;
  int target_class = 0;
  int steps = 0;
  std::uint64_t seed = 0;
  int jobs = 0;
  std::string out_dir;
  bool json_output = false;
};

void register_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_file, "flat JSON config file; flags override");
  cmd->add_option("--model", flags.model, "fn:<name>, cmd:<command> or http:<url>");
  cmd->add_option("--grid", flags.grid, "mask resolution HxW (default 11x11)");
  cmd->add_option("--samples", flags.samples, "designs per matrix N (default 32)");
  cmd->add_option("--perturbation", flags.perturbation, "inpaint | blur | tokens");
  cmd->add_option("--mu", flags.mu, "inpainting baseline intensity");
  cmd->add_option("--sigma-max", flags.sigma_max, "blur standard deviation, pixels");
  cmd->add_option("--threshold", flags.threshold, "token keep threshold in (0,1)");
  cmd->add_option("--estimator", flags.estimator, "total | first | signed");
  cmd->add_option("--target-class", flags.target_class, "score component for k-output models");
  cmd->add_option("--steps", flags.steps, "deletion/insertion curve steps");
  cmd->add_option("--seed", flags.seed, "seed for stochastic baselines (QMC is seed-free)");
  cmd->add_option("--jobs", flags.jobs, "parallel inputs for dataset runs");
  cmd->add_option("--out", flags.out_dir, "output directory");
  cmd->add_flag("--json", flags.json_output, "emit machine-readable results on stdout");
}

RunConfig effective_config(const CLI::App* cmd, const CommonFlags& flags) {
  RunConfig config;
  if (!flags.config_file.empty()) {
    config = RunConfig::from_json(read_text_file(flags.config_file));
  }
  if (cmd->count("--model")) config.model = flags.model;
  if (cmd->count("--grid")) {
    const auto x = flags.grid.find('x');
    if (x == std::string::npos) throw ConfigError("grid must look like HxW: " + flags.grid);
    config.grid_h = std::stoul(flags.grid.substr(0, x));
    config.grid_w = std::stoul(flags.grid.substr(x + 1));
  }
  if (cmd->count("--samples")) config.samples = flags.samples;
  if (cmd->count("--perturbation")) config.perturbation = flags.perturbation;
  if (cmd->count("--mu")) config.mu = flags.mu;
  if (cmd->count("--sigma-max")) config.sigma_max = flags.sigma_max;
  if (cmd->count("--threshold")) config.threshold = flags.threshold;
  if (cmd->count("--estimator")) config.estimator = flags.estimator;
  if (cmd->count("--target-class")) config.target_class = flags.target_class;
  if (cmd->count("--steps")) config.steps = flags.steps;
  if (cmd->count("--seed")) config.seed = flags.seed;
  if (cmd->count("--jobs")) config.jobs = flags.jobs;
  if (cmd->count("--out")) config.out_dir = flags.out_dir;
  config.validate();
  return config;
}

std::unique_ptr<BlackBoxHandle> open_model(const RunConfig& config) {
  auto handle = std::make_unique<BlackBoxHandle>(
      make_backend(config.model, config.modality_hint()));
  if (config.target_class) {
    handle->set_target_output(static_cast<std::size_t>(*config.target_class));
  }
  return handle;
}

Input load_input_for(const BlackBoxHandle& handle, const RunConfig& config,
                     const std::string& input_path) {
  switch (handle.modality()) {
    case Modality::Vector: {
      // analytic path: masks are the inputs; x only carries the dimension
      const auto backend_dim = handle.native_dimension();
      if (!backend_dim) throw ConfigError("vector model does not declare a dimension");
      return std::vector<double>(*backend_dim, 0.0);
    }
    case Modality::Image:
      if (input_path.empty()) throw ConfigError("image models need --input <png|ppm>");
      return load_image(input_path);
    case Modality::Text:
      if (input_path.empty()) throw ConfigError("text models need --input <file>");
      return tokenize(read_text_file(input_path));
  }
  throw ConfigError("unknown modality");
}

ordered_json result_document(const RunConfig& config, const SobolResult& result) {
  ordered_json doc = ordered_json::parse(result.to_json(static_cast<int>(config.samples)));
  doc["config"] = ordered_json::parse(config.to_json());
  return doc;
}

int cmd_explain(const CLI::App* cmd, const CommonFlags& flags,
                const std::string& input_path) {
  const RunConfig config = effective_config(cmd, flags);
  auto handle = open_model(config);
  const Input x = load_input_for(*handle, config, input_path);

  const Attribution attribution = attribute(*handle, x, config.attribution());
  const ordered_json doc = result_document(config, attribution.result);

  const fs::path out(config.out_dir);
  atomic_write_text((out / "result.json").string(), doc.dump(2) + "\n");
  write_grid_csv(attribution.map.grid, (out / "grid.csv").string());
  write_heatmap_png(attribution.map.heatmap, (out / "heatmap.png").string());

  if (flags.json_output) {
    std::cout << doc.dump(2) << "\n";
  } else {
    std::cout << "model: " << handle->describe() << "\n"
              << "forwards: " << attribution.result.forwards_used << "\n"
              << "wrote: " << (out / "result.json").string() << ", "
              << (out / "grid.csv").string() << ", " << (out / "heatmap.png").string()
              << "\n";
  }
  return 0;
}

struct ManifestEntry {
  std::string input_id;
  std::string path;
  std::optional<int> target_class;
  std::vector<Box> boxes;
};

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json doc;
    try {
      doc = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw IoError("manifest " + path + " line " + std::to_string(line_no) +
                    ": bad JSON: " + e.what());
    }
    ManifestEntry entry;
    entry.input_id = doc.contains("input_id") ? doc["input_id"].get<std::string>()
                                              : "line-" + std::to_string(line_no);
    if (doc.contains("path")) entry.path = doc["path"].get<std::string>();
    if (doc.contains("class") && !doc["class"].is_null()) {
      entry.target_class = doc["class"].get<int>();
    }
    if (doc.contains("boxes")) {
      for (const auto& item : doc["boxes"]) {
        if (!item.is_array() || item.size() != 4) {
          throw IoError("manifest boxes must be [x0,y0,x1,y1] quadruples");
        }
        entry.boxes.push_back(Box{item[0].get<long>(), item[1].get<long>(),
                                  item[2].get<long>(), item[3].get<long>()});
      }
    }
    entries.push_back(std::move(entry));
  }
  if (entries.empty()) throw IoError("manifest " + path + " lists no inputs");
  return entries;
}

// Per-region scores for the requested method; also returns forwards used.
struct MethodOutput {
  AttributionMap map;
  std::uint64_t forwards = 0;
};

MethodOutput run_method(const std::string& method, BlackBoxHandle& handle, const Input& x,
                        const RunConfig& config, std::uint64_t seed) {
  handle.reset_calls();
  MethodOutput out;
  if (method == "sobol" || method == "sobol-first" || method == "sobol-signed") {
    AttributionConfig attr = config.attribution();
    attr.variant = method == "sobol-first"    ? EstimatorVariant::First
                   : method == "sobol-signed" ? EstimatorVariant::SignedTotal
                                              : EstimatorVariant::Total;
    out.map = attribute(handle, x, attr).map;
  } else if (method == "occlusion") {
    out.map = occlusion_baseline(handle, x, config.grid_h, config.grid_w, config.mu);
  } else if (method == "rise") {
    out.map = rise_baseline(handle, x, config.grid_h, config.grid_w, config.rise_masks,
                            0.5, seed);
  } else if (method == "random") {
    std::size_t h = 1;
    std::size_t w = 1;
    if (const auto* image = std::get_if<ImageTensor>(&x)) {
      h = image->height;
      w = image->width;
    } else if (const auto* tokens = std::get_if<TokenSequence>(&x)) {
      h = tokens->dims();
    }
    const ImageTensor noise = random_heatmap(h, w, seed);
    out.map.grid = MaskGrid(h, w);
    out.map.grid.values = noise.pixels;
    out.map.heatmap = noise;
  } else {
    throw ConfigError("unknown method: " + method);
  }
  out.forwards = handle.calls();
  return out;
}

int cmd_benchmark(const CLI::App* cmd, const CommonFlags& flags,
                  const std::string& manifest_path, const std::string& metric,
                  const std::string& method) {
  const RunConfig config = effective_config(cmd, flags);
  const auto manifest = load_manifest(manifest_path);
  const std::string config_hash = config.config_hash();

  std::vector<std::optional<BenchmarkRecord>> records(manifest.size());
  std::vector<std::string> errors(manifest.size());

  auto process = [&](std::size_t index) {
    const ManifestEntry& entry = manifest[index];
    try {
      RunConfig local = config;
      if (entry.target_class) local.target_class = entry.target_class;
      auto handle = open_model(local);
      const Input x = load_input_for(*handle, local, entry.path);
      const std::uint64_t seed = config.seed + index;
      const MethodOutput method_out = run_method(method, *handle, x, local, seed);
      handle->reset_calls();

      BenchmarkRecord record;
      record.input_id = entry.input_id;
      record.method = method;
      record.metric = metric;
      record.seed = seed;
      record.config_hash = config_hash;
      if (metric == "deletion" || metric == "insertion") {
        const auto* image = std::get_if<ImageTensor>(&x);
        if (!image) throw ConfigError("metric " + metric + " needs image inputs");
        const FidelityCurve curve =
            metric == "deletion"
                ? deletion_curve(*handle, *image, method_out.map.heatmap,
                                 config.metric_baseline, config.steps)
                : insertion_curve(*handle, *image, method_out.map.heatmap,
                                  config.metric_baseline, config.steps);
        record.value = curve.auc;
      } else if (metric == "pointing") {
        record.value = pointing_game(method_out.map.heatmap, entry.boxes).hit ? 1.0 : 0.0;
      } else if (metric == "word-deletion") {
        const auto* tokens = std::get_if<TokenSequence>(&x);
        if (!tokens) throw ConfigError("metric word-deletion needs token inputs");
        const FidelityCurve curve = word_deletion_curve(
            *handle, *tokens, method_out.map.grid.values, config.max_words);
        record.value = word_deletion_mean(curve);
      } else {
        throw ConfigError("unknown metric: " + metric);
      }
      record.forwards = method_out.forwards + handle->calls();
      records[index] = std::move(record);
    } catch (const std::exception& e) {
      errors[index] = e.what();
    }
  };

  if (config.jobs <= 1) {
    for (std::size_t i = 0; i < manifest.size(); ++i) process(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < config.jobs; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= manifest.size()) break;
          process(i);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<BenchmarkRecord> flat;
  std::size_t failures = 0;
  std::ostringstream error_lines;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (records[i]) {
      flat.push_back(*records[i]);
    } else {
      ++failures;
      ordered_json err;
      err["input_id"] = manifest[i].input_id;
      err["method"] = method;
      err["metric"] = metric;
      err["error"] = errors[i];
      error_lines << err.dump() << '\n';
    }
  }

  const fs::path out(config.out_dir);
  atomic_write_text((out / "benchmark.jsonl").string(),
                    benchmark_jsonl_text(flat) + error_lines.str());
  write_benchmark_summary_csv(flat, (out / "summary.csv").string());

  double mean = 0.0;
  std::uint64_t total_forwards = 0;
  for (const auto& r : flat) {
    mean += r.value;
    total_forwards += r.forwards;
  }
  if (!flat.empty()) mean /= static_cast<double>(flat.size());
  if (flags.json_output) {
    ordered_json doc;
    doc["metric"] = metric;
    doc["method"] = method;
    doc["inputs"] = manifest.size();
    doc["failures"] = failures;
    doc["mean_value"] = mean;
    doc["forwards"] = total_forwards;
    doc["config"] = ordered_json::parse(config.to_json());
    std::cout << doc.dump(2) << "\n";
  } else {
    std::cout << metric << "/" << method << ": " << flat.size() << " inputs, mean value "
              << mean << ", " << failures << " failures\n"
              << "forwards: " << total_forwards << "\n"
              << "wrote: " << (out / "benchmark.jsonl").string() << ", "
              << (out / "summary.csv").string() << "\n";
  }
  return failures == 0 ? 0 : 1;
}

int cmd_convergence(const CLI::App* cmd, const CommonFlags& flags,
                    const std::string& input_path, std::vector<std::size_t> budgets,
                    std::size_t reference_budget, int trials) {
  const RunConfig config = effective_config(cmd, flags);
  if (budgets.empty()) throw ConfigError("--budgets is required");
  if (trials < 1) throw ConfigError("--trials must be >= 1");

  auto handle = open_model(config);
  const Input x = load_input_for(*handle, config, input_path);

  std::ostringstream jsonl;
  std::map<std::size_t, std::vector<double>> by_budget;
  for (int trial = 0; trial < trials; ++trial) {
    AttributionConfig base = config.attribution();
    if (trials > 1) base.shift_seed = config.seed + static_cast<std::uint64_t>(trial) + 1;
    const auto points = convergence_study(*handle, x, budgets, reference_budget, base);
    for (const auto& point : points) {
      ordered_json line;
      line["budget"] = point.requested_budget;
      line["realized_forwards"] = point.realized_forwards;
      line["N"] = point.n_designs;
      line["seed"] = base.shift_seed ? ordered_json(*base.shift_seed) : ordered_json(nullptr);
      if (point.spearman) {
        line["spearman"] = *point.spearman;
        by_budget[point.requested_budget].push_back(*point.spearman);
      } else {
        line["error"] = point.note;
      }
      jsonl << line.dump() << '\n';
    }
  }

  const fs::path out(config.out_dir);
  atomic_write_text((out / "convergence.jsonl").string(), jsonl.str());
  std::ostringstream csv;
  csv << "budget,median_spearman,trials\n";
  for (auto& [budget, rhos] : by_budget) {
    std::sort(rhos.begin(), rhos.end());
    const double med = rhos.size() % 2 ? rhos[rhos.size() / 2]
                                       : 0.5 * (rhos[rhos.size() / 2 - 1] + rhos[rhos.size() / 2]);
    csv << budget << ',' << med << ',' << rhos.size() << '\n';
  }
  atomic_write_text((out / "convergence.csv").string(), csv.str());
  std::cout << "forwards: " << handle->calls() << "\n"
            << "wrote: " << (out / "convergence.jsonl").string() << ", "
            << (out / "convergence.csv").string() << "\n";
  return 0;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const UnsupportedDimensionError*>(&e)) return "unsupported-dimension";
  if (dynamic_cast<const DesignShapeError*>(&e)) return "design-shape";
  if (dynamic_cast<const DegenerateFunctionError*>(&e)) return "degenerate-function";
  if (dynamic_cast<const OracleIntractableError*>(&e)) return "oracle-intractable";
  if (dynamic_cast<const TransportError*>(&e)) return "transport";
  if (dynamic_cast<const ProtocolError*>(&e)) return "protocol";
  if (dynamic_cast<const AmbiguousOutputError*>(&e)) return "ambiguous-output";
  if (dynamic_cast<const UndefinedTargetError*>(&e)) return "undefined-target";
  if (dynamic_cast<const UndefinedCorrelationError*>(&e)) return "undefined-correlation";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  return "error";
}

int cmd_verify(const std::string& self_path, bool json_output) {
  VerifyOptions options;
  options.cli_path = self_path;
  const auto results = run_acceptance_checks(options);
  bool all_pass = true;
  if (json_output) {
    ordered_json doc = ordered_json::array();
    for (const auto& r : results) {
      ordered_json item;
      item["id"] = r.id;
      item["name"] = r.name;
      item["pass"] = r.pass;
      item["detail"] = r.detail;
      doc.push_back(std::move(item));
      all_pass = all_pass && r.pass;
    }
    std::cout << doc.dump(2) << "\n";
  } else {
    for (const auto& r : results) {
      std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.id << " " << r.name << ": "
                << r.detail << "\n";
      all_pass = all_pass && r.pass;
    }
    std::cout << (all_pass ? "all checks passed" : "CHECKS FAILED") << "\n";
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box attribution via total-order sensitivity indices"};
  app.require_subcommand(1);

  CommonFlags explain_flags;
  std::string explain_input;
  auto* explain = app.add_subcommand("explain", "attribute one input");
  register_common(explain, explain_flags);
  explain->add_option("--input", explain_input, "input image (png/ppm) or text file");

  CommonFlags bench_flags;
  std::string manifest_path;
  std::string metric = "deletion";
  std::string method = "sobol";
  auto* bench = app.add_subcommand("benchmark", "run a metric over a dataset manifest");
  register_common(bench, bench_flags);
  bench->add_option("--manifest", manifest_path, "JSONL manifest {input_id, path, class, boxes?}")
      ->required();
  bench->add_option("--metric", metric, "deletion | insertion | pointing | word-deletion");
  bench->add_option("--method", method,
                    "sobol | sobol-first | sobol-signed | occlusion | rise | random");

  CommonFlags conv_flags;
  std::string conv_input;
  std::vector<std::size_t> budgets;
  std::size_t reference_budget = 0;
  int trials = 1;
  auto* conv = app.add_subcommand("convergence", "rank-correlation convergence study");
  register_common(conv, conv_flags);
  conv->add_option("--input", conv_input, "input image/text (omit for fn: models)");
  conv->add_option("--budgets", budgets, "forward budgets")->delimiter(',')->required();
  conv->add_option("--reference-budget", reference_budget, "converged reference budget")
      ->required();
  conv->add_option("--trials", trials, "randomized-QMC repeats (seeded)");

  bool verify_json = false;
  auto* verify = app.add_subcommand("verify", "run the analytic acceptance suite");
  verify->add_flag("--json", verify_json, "emit machine-readable results");

  CLI11_PARSE(app, argc, argv);

  try {
    if (explain->parsed()) return cmd_explain(explain, explain_flags, explain_input);
    if (bench->parsed()) {
      return cmd_benchmark(bench, bench_flags, manifest_path, metric, method);
    }
    if (conv->parsed()) {
      return cmd_convergence(conv, conv_flags, conv_input, budgets, reference_budget,
                             trials);
    }
    if (verify->parsed()) {
      std::error_code ec;
      const fs::path self = fs::canonical(argv[0], ec);
      return cmd_verify(ec ? std::string(argv[0]) : self.string(), verify_json);
    }
  } catch (const std::exception& e) {
    ordered_json err;
    err["error"] = {{"type", error_kind(e)}, {"message", e.what()}};
    std::cout << err.dump(2) << "\n";
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
