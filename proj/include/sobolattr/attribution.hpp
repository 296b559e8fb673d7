#pragma once

#include <cstdint>
#include <optional>

#include "sobolattr/blackbox.hpp"
#include "sobolattr/estimator.hpp"
#include "sobolattr/perturbation.hpp"

namespace sobolattr {

enum class EstimatorVariant { Total, First, SignedTotal };

struct AttributionConfig {
  std::size_t grid_h = 11;
  std::size_t grid_w = 11;
  std::size_t n_designs = 32;  // N; the run costs N*(d+2) forwards
  EstimatorVariant variant = EstimatorVariant::Total;
  PerturbConfig perturb;
  // Randomized QMC (digital shift) for variance studies; the plain path is
  // deterministic and seed-free.
  std::optional<std::uint64_t> shift_seed;
};

struct Attribution {
  SobolResult result;
  AttributionMap map;  // built from the variant's indices
};

/// Full pipeline: paired QMC mask matrices, replicated design, batched
/// black-box evaluation, Jansen estimation, heatmap rendering. The signed
/// variant costs d+1 extra forwards (the unperturbed input and one
/// occlusion per region at mask resolution).
///
/// Vector-modality inputs take the backend function's own dimension; the
/// grid is ignored for masking and the heatmap is rendered d x 1. For the
/// signed variant the vector-modality reference is the all-ones mask
/// (mask = 1 is the identity for every other modality) and occlusion sets
/// coordinate i's mask to 0.
Attribution attribute(BlackBoxHandle& handle, const Input& x,
                      const AttributionConfig& config);

/// The indices the configured variant renders (total, first or signed).
const std::vector<double>& variant_indices(const SobolResult& result,
                                           EstimatorVariant variant);

}  // namespace sobolattr
