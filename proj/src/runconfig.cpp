#include "sobolattr/runconfig.hpp"

#include <nlohmann/json.hpp>

#include "sobolattr/errors.hpp"
#include "sobolattr/ioutil.hpp"

namespace sobolattr {

using nlohmann::ordered_json;

std::string RunConfig::to_json() const {
  ordered_json doc;
  doc["model"] = model;
  doc["grid"] = std::to_string(grid_h) + "x" + std::to_string(grid_w);
  doc["samples"] = samples;
  doc["perturbation"] = perturbation;
  doc["mu"] = mu;
  doc["sigma_max"] = sigma_max;
  doc["threshold"] = threshold;
  doc["estimator"] = estimator;
  if (target_class) {
    doc["target_class"] = *target_class;
  } else {
    doc["target_class"] = nullptr;
  }
  doc["steps"] = steps;
  doc["metric_baseline"] = metric_baseline;
  doc["max_words"] = max_words;
  doc["rise_masks"] = rise_masks;
  doc["seed"] = seed;
  doc["jobs"] = jobs;
  doc["out"] = out_dir;
  return doc.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig config;
  auto read = [&](const char* key, auto& field) {
    if (doc.contains(key) && !doc[key].is_null()) {
      field = doc[key].template get<std::decay_t<decltype(field)>>();
    }
  };
  read("model", config.model);
  if (doc.contains("grid") && !doc["grid"].is_null()) {
    const std::string grid = doc["grid"].get<std::string>();
    const auto x = grid.find('x');
    if (x == std::string::npos) throw ConfigError("grid must look like HxW: " + grid);
    try {
      config.grid_h = std::stoul(grid.substr(0, x));
      config.grid_w = std::stoul(grid.substr(x + 1));
    } catch (const std::exception&) {
      throw ConfigError("grid must look like HxW: " + grid);
    }
  }
  read("samples", config.samples);
  read("perturbation", config.perturbation);
  read("mu", config.mu);
  read("sigma_max", config.sigma_max);
  read("threshold", config.threshold);
  read("estimator", config.estimator);
  if (doc.contains("target_class") && !doc["target_class"].is_null()) {
    config.target_class = doc["target_class"].get<int>();
  }
  read("steps", config.steps);
  read("metric_baseline", config.metric_baseline);
  read("max_words", config.max_words);
  read("rise_masks", config.rise_masks);
  read("seed", config.seed);
  read("jobs", config.jobs);
  read("out", config.out_dir);
  config.validate();
  return config;
}

void RunConfig::validate() const {
  if (samples < 2) throw ConfigError("samples (N) must be >= 2");
  if (grid_h < 1 || grid_w < 1) throw ConfigError("grid dims must be >= 1");
  if (perturbation != "inpaint" && perturbation != "blur" && perturbation != "tokens") {
    throw ConfigError("perturbation must be inpaint, blur or tokens");
  }
  if (estimator != "total" && estimator != "first" && estimator != "signed") {
    throw ConfigError("estimator must be total, first or signed");
  }
  if (steps < 2) throw ConfigError("steps must be >= 2");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0,1)");
  if (sigma_max <= 0.0) throw ConfigError("sigma-max must be > 0");
}

EstimatorVariant RunConfig::variant() const {
  if (estimator == "first") return EstimatorVariant::First;
  if (estimator == "signed") return EstimatorVariant::SignedTotal;
  return EstimatorVariant::Total;
}

PerturbConfig RunConfig::perturb() const {
  PerturbConfig p;
  p.kind = perturbation == "blur"     ? PerturbKind::Blur
           : perturbation == "tokens" ? PerturbKind::Tokens
                                      : PerturbKind::Inpaint;
  p.mu = mu;
  p.sigma_max = sigma_max;
  p.token_threshold = threshold;
  return p;
}

Modality RunConfig::modality_hint() const {
  return perturbation == "tokens" ? Modality::Text : Modality::Image;
}

AttributionConfig RunConfig::attribution() const {
  AttributionConfig config;
  config.grid_h = grid_h;
  config.grid_w = grid_w;
  config.n_designs = samples;
  config.variant = variant();
  config.perturb = perturb();
  return config;
}

std::string RunConfig::config_hash() const {
  const std::string canonical = to_json();
  return hex64(fnv1a(canonical.data(), canonical.size()));
}

}  // namespace sobolattr
