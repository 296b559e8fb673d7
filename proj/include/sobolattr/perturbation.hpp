#pragma once

#include <span>
#include <string>
#include <vector>

#include "sobolattr/image.hpp"

namespace sobolattr {

/// Low-resolution perturbation mask; d = grid_h * grid_w.
struct MaskGrid {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::vector<double> values;  // row-major, in [0,1]

  MaskGrid() = default;
  MaskGrid(std::size_t h, std::size_t w, double fill = 0.0)
      : grid_h(h), grid_w(w), values(h * w, fill) {}
  std::size_t dims() const { return grid_h * grid_w; }
};

struct TokenSequence {
  std::vector<std::string> tokens;
  std::size_t dims() const { return tokens.size(); }
};

/// Whitespace tokenization; finer tokenizers are the caller's business.
TokenSequence tokenize(const std::string& text);
std::string detokenize(const TokenSequence& tokens);

/// Importance scores on the mask grid plus the bilinear full-resolution map.
struct AttributionMap {
  MaskGrid grid;        // per-region scores
  ImageTensor heatmap;  // single channel, target resolution
};

enum class PerturbKind { Inpaint, Blur, Tokens };

struct PerturbConfig {
  PerturbKind kind = PerturbKind::Inpaint;
  double mu = 0.0;              // inpaint baseline intensity
  double sigma_max = 5.0;       // blur standard deviation, pixels
  double token_threshold = 0.5; // keep token iff mask > threshold
};

/// Nearest-neighbor enlargement; output pixel p reads input cell
/// floor(p * grid / target). Requires target dims >= grid dims.
ImageTensor upsample_mask(const MaskGrid& mask, std::size_t target_h, std::size_t target_w);

/// Inpainting perturbation: out = x .* M + (1 - M) * mu, mask broadcast
/// across channels.
ImageTensor inpaint(const ImageTensor& x, const ImageTensor& mask_full, double mu);

/// Gaussian low-pass, sigma in pixels, kernel truncated at 3*sigma and
/// renormalized, reflect padding.
ImageTensor gaussian_blur(const ImageTensor& x, double sigma);

/// Blur perturbation: out = x .* M + (1 - M) .* blur(x, sigma_max).
ImageTensor blur_perturb(const ImageTensor& x, const ImageTensor& mask_full, double sigma_max);

/// Convex blend out = x .* M + (1 - M) .* other. The shared core of the
/// image perturbations; exposed so pipelines can reuse one blurred copy.
ImageTensor blend_with(const ImageTensor& x, const ImageTensor& other,
                       const ImageTensor& mask_full);

/// Keeps token i iff mask[i] > threshold; survivor order preserved.
TokenSequence drop_tokens(const TokenSequence& x, std::span<const double> mask,
                          double threshold = 0.5);

/// Bilinear upsampling with half-pixel cell-center alignment: grid values
/// are interpolated between cell centers and clamped at the borders, so the
/// output range stays within [min(indices), max(indices)].
ImageTensor bilinear_upsample(std::span<const double> values, std::size_t grid_h,
                              std::size_t grid_w, std::size_t target_h,
                              std::size_t target_w);

AttributionMap render_heatmap(std::span<const double> indices, std::size_t grid_h,
                              std::size_t grid_w, std::size_t target_h,
                              std::size_t target_w);

/// Grid scores as CSV, one row per grid row.
void write_grid_csv(const MaskGrid& grid, const std::string& path);
MaskGrid read_grid_csv(const std::string& path);

/// Heatmap PNG normalized to [0,255] by min-max, with the scaling recorded
/// in a sidecar JSON (`<path>.json`: {min, max}).
void write_heatmap_png(const ImageTensor& heatmap, const std::string& path);

}  // namespace sobolattr
