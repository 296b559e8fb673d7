#include "sobolattr/attribution.hpp"

#include "sobolattr/errors.hpp"
#include "sobolattr/qmc.hpp"

namespace sobolattr {

const std::vector<double>& variant_indices(const SobolResult& result,
                                           EstimatorVariant variant) {
  switch (variant) {
    case EstimatorVariant::First:
      return result.first_order;
    case EstimatorVariant::SignedTotal:
      if (!result.signed_total) throw Error("signed indices were not computed");
      return *result.signed_total;
    case EstimatorVariant::Total:
      break;
  }
  return result.total_order;
}

namespace {

// f(x) and the d per-region occlusions that sign the total indices.
std::pair<double, std::vector<double>> occlusion_scores(BlackBoxHandle& handle,
                                                        const Input& x,
                                                        const AttributionConfig& config,
                                                        std::size_t dims) {
  std::vector<Input> inputs;
  inputs.reserve(dims + 1);
  if (const auto* image = std::get_if<ImageTensor>(&x)) {
    inputs.push_back(*image);
    ImageTensor blurred;
    if (config.perturb.kind == PerturbKind::Blur) {
      blurred = gaussian_blur(*image, config.perturb.sigma_max);
    }
    for (std::size_t i = 0; i < dims; ++i) {
      MaskGrid grid(config.grid_h, config.grid_w, 1.0);
      grid.values[i] = 0.0;
      const ImageTensor mask = upsample_mask(grid, image->height, image->width);
      inputs.push_back(config.perturb.kind == PerturbKind::Blur
                           ? blend_with(*image, blurred, mask)
                           : inpaint(*image, mask, config.perturb.mu));
    }
  } else if (const auto* tokens = std::get_if<TokenSequence>(&x)) {
    inputs.push_back(*tokens);
    for (std::size_t i = 0; i < dims; ++i) {
      std::vector<double> mask(dims, 1.0);
      mask[i] = 0.0;
      inputs.push_back(drop_tokens(*tokens, mask, config.perturb.token_threshold));
    }
  } else {
    std::vector<double> ones(dims, 1.0);
    inputs.emplace_back(ones);
    for (std::size_t i = 0; i < dims; ++i) {
      std::vector<double> masked = ones;
      masked[i] = 0.0;
      inputs.emplace_back(std::move(masked));
    }
  }
  const auto scores = handle.evaluate_batch(inputs);
  return {scores[0], {scores.begin() + 1, scores.end()}};
}

}  // namespace

Attribution attribute(BlackBoxHandle& handle, const Input& x,
                      const AttributionConfig& config) {
  if (config.n_designs < 2) throw ConfigError("attribution needs N >= 2 designs");
  if (modality_of(x) != handle.modality()) {
    throw ConfigError("input modality does not match backend " + handle.describe());
  }

  std::size_t grid_h = config.grid_h;
  std::size_t grid_w = config.grid_w;
  std::size_t target_h = 1;
  std::size_t target_w = 1;
  switch (handle.modality()) {
    case Modality::Vector: {
      const auto& vec = std::get<std::vector<double>>(x);
      if (vec.empty()) throw ConfigError("vector input must carry the function dimension");
      grid_h = vec.size();
      grid_w = 1;
      target_h = grid_h;
      target_w = 1;
      break;
    }
    case Modality::Image: {
      const auto& image = std::get<ImageTensor>(x);
      target_h = image.height;
      target_w = image.width;
      break;
    }
    case Modality::Text: {
      grid_h = std::get<TokenSequence>(x).dims();
      grid_w = 1;
      target_h = grid_h;
      target_w = 1;
      break;
    }
  }
  const std::size_t dims = grid_h * grid_w;
  if (dims < 1) throw ConfigError("attribution needs at least one region");

  auto [a_masks, b_masks] = qmc::paired_mask_matrices(dims, config.n_designs,
                                                      config.shift_seed);
  const SampleDesign design = build_design(a_masks, b_masks);
  const auto scores = evaluate_design(handle, x, design, config.perturb, grid_h, grid_w);

  Attribution out;
  out.result = estimate_indices(scores, config.n_designs, dims);
  if (config.variant == EstimatorVariant::SignedTotal) {
    const auto [f_full, f_occluded] = occlusion_scores(handle, x, config, dims);
    out.result = sign_indices(std::move(out.result), f_full, f_occluded);
    out.result.forwards_used += dims + 1;
  }
  out.map = render_heatmap(variant_indices(out.result, config.variant), grid_h, grid_w,
                           target_h, target_w);
  return out;
}

}  // namespace sobolattr
