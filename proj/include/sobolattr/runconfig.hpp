#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "sobolattr/attribution.hpp"

namespace sobolattr {

/// Flat CLI/pipeline configuration. Serializes to a single JSON document;
/// (config -> file -> config) round-trips to the identical value and the
/// effective config is echoed into every output for provenance.
///
/// The seed governs only stochastic baselines (RISE masks, random
/// rankings); the QMC attribution path is seed-free and deterministic.
struct RunConfig {
  std::string model = "fn:ishigami";
  std::size_t grid_h = 11;
  std::size_t grid_w = 11;
  std::size_t samples = 32;  // designs per matrix (N)
  std::string perturbation = "inpaint";  // inpaint | blur | tokens
  double mu = 0.0;
  double sigma_max = 5.0;
  double threshold = 0.5;
  std::string estimator = "total";  // total | first | signed
  std::optional<int> target_class;
  int steps = 100;          // deletion/insertion curve steps
  double metric_baseline = 0.5;  // gray baseline for deletion/insertion
  int max_words = 20;       // word-deletion removals
  std::size_t rise_masks = 8000;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out_dir = "out";

  bool operator==(const RunConfig&) const = default;

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);

  /// Validates invariants (N >= 2, grid dims >= 1, known enums).
  void validate() const;

  EstimatorVariant variant() const;
  PerturbConfig perturb() const;
  /// Modality expected by transport backends, from the perturbation kind.
  Modality modality_hint() const;
  AttributionConfig attribution() const;
  std::string config_hash() const;
};

}  // namespace sobolattr
