#include "sobolattr/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sobolattr/errors.hpp"
#include "sobolattr/ioutil.hpp"

namespace sobolattr {

TokenSequence tokenize(const std::string& text) {
  TokenSequence seq;
  std::istringstream in(text);
  std::string token;
  while (in >> token) seq.tokens.push_back(token);
  return seq;
}

std::string detokenize(const TokenSequence& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens.tokens[i];
  }
  return out;
}

ImageTensor upsample_mask(const MaskGrid& mask, std::size_t target_h, std::size_t target_w) {
  if (mask.grid_h == 0 || mask.grid_w == 0) throw DesignShapeError("empty mask grid");
  if (target_h < mask.grid_h || target_w < mask.grid_w) {
    throw DesignShapeError("upsample_mask: target smaller than grid");
  }
  ImageTensor out(target_h, target_w, 1);
  for (std::size_t r = 0; r < target_h; ++r) {
    const std::size_t gr = r * mask.grid_h / target_h;
    for (std::size_t c = 0; c < target_w; ++c) {
      const std::size_t gc = c * mask.grid_w / target_w;
      out.at(r, c) = mask.values[gr * mask.grid_w + gc];
    }
  }
  return out;
}

namespace {

void require_mask_shape(const ImageTensor& x, const ImageTensor& mask) {
  if (mask.height != x.height || mask.width != x.width || mask.channels != 1) {
    std::ostringstream os;
    os << "mask shape " << mask.height << "x" << mask.width << "x" << mask.channels
       << " does not broadcast over image " << x.height << "x" << x.width << "x"
       << x.channels;
    throw DesignShapeError(os.str());
  }
}

}  // namespace

ImageTensor blend_with(const ImageTensor& x, const ImageTensor& other,
                       const ImageTensor& mask_full) {
  require_mask_shape(x, mask_full);
  if (!x.same_shape(other)) throw DesignShapeError("blend_with: image shapes differ");
  ImageTensor out(x.height, x.width, x.channels);
  for (std::size_t p = 0; p < x.pixel_count(); ++p) {
    const double m = mask_full.pixels[p];
    for (std::size_t ch = 0; ch < x.channels; ++ch) {
      const std::size_t i = p * x.channels + ch;
      out.pixels[i] = x.pixels[i] * m + (1.0 - m) * other.pixels[i];
    }
  }
  return out;
}

ImageTensor inpaint(const ImageTensor& x, const ImageTensor& mask_full, double mu) {
  require_mask_shape(x, mask_full);
  ImageTensor out(x.height, x.width, x.channels);
  for (std::size_t p = 0; p < x.pixel_count(); ++p) {
    const double m = mask_full.pixels[p];
    for (std::size_t ch = 0; ch < x.channels; ++ch) {
      const std::size_t i = p * x.channels + ch;
      out.pixels[i] = x.pixels[i] * m + (1.0 - m) * mu;
    }
  }
  return out;
}

ImageTensor gaussian_blur(const ImageTensor& x, double sigma) {
  if (sigma <= 0.0) throw Error("gaussian_blur: sigma must be > 0");
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    kernel[t + radius] = std::exp(-0.5 * (t / sigma) * (t / sigma));
    norm += kernel[t + radius];
  }
  for (double& k : kernel) k /= norm;

  // half-sample symmetric reflection: -1 -> 0, size -> size-1
  const auto reflect = [](long idx, long size) {
    while (idx < 0 || idx >= size) {
      if (idx < 0) idx = -idx - 1;
      if (idx >= size) idx = 2 * size - idx - 1;
    }
    return static_cast<std::size_t>(idx);
  };

  // separable pass: rows then columns
  ImageTensor mid(x.height, x.width, x.channels);
  for (std::size_t r = 0; r < x.height; ++r) {
    for (std::size_t c = 0; c < x.width; ++c) {
      for (std::size_t ch = 0; ch < x.channels; ++ch) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          const std::size_t cc = reflect(static_cast<long>(c) + t, static_cast<long>(x.width));
          acc += kernel[t + radius] * x.at(r, cc, ch);
        }
        mid.at(r, c, ch) = acc;
      }
    }
  }
  ImageTensor out(x.height, x.width, x.channels);
  for (std::size_t r = 0; r < x.height; ++r) {
    for (std::size_t c = 0; c < x.width; ++c) {
      for (std::size_t ch = 0; ch < x.channels; ++ch) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
          const std::size_t rr = reflect(static_cast<long>(r) + t, static_cast<long>(x.height));
          acc += kernel[t + radius] * mid.at(rr, c, ch);
        }
        out.at(r, c, ch) = acc;
      }
    }
  }
  return out;
}

ImageTensor blur_perturb(const ImageTensor& x, const ImageTensor& mask_full,
                         double sigma_max) {
  return blend_with(x, gaussian_blur(x, sigma_max), mask_full);
}

TokenSequence drop_tokens(const TokenSequence& x, std::span<const double> mask,
                          double threshold) {
  if (mask.size() != x.tokens.size()) {
    std::ostringstream os;
    os << "drop_tokens: mask length " << mask.size() << " vs " << x.tokens.size()
       << " tokens";
    throw DesignShapeError(os.str());
  }
  TokenSequence out;
  out.tokens.reserve(x.tokens.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] > threshold) out.tokens.push_back(x.tokens[i]);
  }
  return out;
}

ImageTensor bilinear_upsample(std::span<const double> values, std::size_t grid_h,
                              std::size_t grid_w, std::size_t target_h,
                              std::size_t target_w) {
  if (values.size() != grid_h * grid_w) {
    throw DesignShapeError("bilinear_upsample: values do not fill the grid");
  }
  ImageTensor out(target_h, target_w, 1);
  const double sy = static_cast<double>(grid_h) / static_cast<double>(target_h);
  const double sx = static_cast<double>(grid_w) / static_cast<double>(target_w);
  for (std::size_t r = 0; r < target_h; ++r) {
    // half-pixel alignment: output center maps into grid-cell-center space
    double gy = (static_cast<double>(r) + 0.5) * sy - 0.5;
    gy = std::clamp(gy, 0.0, static_cast<double>(grid_h - 1));
    const std::size_t y0 = static_cast<std::size_t>(gy);
    const std::size_t y1 = std::min(y0 + 1, grid_h - 1);
    const double fy = gy - static_cast<double>(y0);
    for (std::size_t c = 0; c < target_w; ++c) {
      double gx = (static_cast<double>(c) + 0.5) * sx - 0.5;
      gx = std::clamp(gx, 0.0, static_cast<double>(grid_w - 1));
      const std::size_t x0 = static_cast<std::size_t>(gx);
      const std::size_t x1 = std::min(x0 + 1, grid_w - 1);
      const double fx = gx - static_cast<double>(x0);
      const double top = values[y0 * grid_w + x0] * (1.0 - fx) + values[y0 * grid_w + x1] * fx;
      const double bottom = values[y1 * grid_w + x0] * (1.0 - fx) + values[y1 * grid_w + x1] * fx;
      out.at(r, c) = top * (1.0 - fy) + bottom * fy;
    }
  }
  return out;
}

AttributionMap render_heatmap(std::span<const double> indices, std::size_t grid_h,
                              std::size_t grid_w, std::size_t target_h,
                              std::size_t target_w) {
  AttributionMap map;
  map.grid.grid_h = grid_h;
  map.grid.grid_w = grid_w;
  map.grid.values.assign(indices.begin(), indices.end());
  map.heatmap = bilinear_upsample(indices, grid_h, grid_w, target_h, target_w);
  return map;
}

void write_grid_csv(const MaskGrid& grid, const std::string& path) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t r = 0; r < grid.grid_h; ++r) {
    for (std::size_t c = 0; c < grid.grid_w; ++c) {
      if (c) out << ',';
      out << grid.values[r * grid.grid_w + c];
    }
    out << '\n';
  }
  atomic_write_text(path, out.str());
}

MaskGrid read_grid_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  MaskGrid grid;
  std::string line;
  std::size_t cols = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(fields, cell, ',')) {
      grid.values.push_back(std::stod(cell));
      ++n;
    }
    if (cols == 0) {
      cols = n;
    } else if (n != cols) {
      throw IoError("ragged CSV grid: " + path);
    }
    ++grid.grid_h;
  }
  grid.grid_w = cols;
  if (grid.dims() == 0) throw IoError("empty CSV grid: " + path);
  return grid;
}

void write_heatmap_png(const ImageTensor& heatmap, const std::string& path) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : heatmap.pixels) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  ImageTensor scaled = heatmap;
  const double span = hi - lo;
  for (double& v : scaled.pixels) {
    v = span > 0.0 ? (v - lo) / span : 0.0;
  }
  save_png(scaled, path);
  nlohmann::ordered_json sidecar;
  sidecar["min"] = lo;
  sidecar["max"] = hi;
  atomic_write_text(path + ".json", sidecar.dump(2) + "\n");
}

}  // namespace sobolattr
