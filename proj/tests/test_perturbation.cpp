#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include <doctest.h>

#include "sobolattr/errors.hpp"
#include "sobolattr/perturbation.hpp"

using namespace sobolattr;

namespace {

ImageTensor random_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  ImageTensor image(h, w, c);
  std::mt19937_64 rng(seed);
  for (double& v : image.pixels) v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return image;
}

// Brute-force 2-D Gaussian convolution with the same kernel truncation and
// half-sample reflection; the reference for the separable implementation.
ImageTensor blur_reference(const ImageTensor& x, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double norm = 0.0;
  for (int t = -radius; t <= radius; ++t) {
    k[t + radius] = std::exp(-0.5 * (t / sigma) * (t / sigma));
    norm += k[t + radius];
  }
  for (double& v : k) v /= norm;
  const auto reflect = [](long idx, long size) {
    while (idx < 0 || idx >= size) {
      if (idx < 0) idx = -idx - 1;
      if (idx >= size) idx = 2 * size - idx - 1;
    }
    return static_cast<std::size_t>(idx);
  };
  ImageTensor out(x.height, x.width, x.channels);
  for (std::size_t r = 0; r < x.height; ++r) {
    for (std::size_t c = 0; c < x.width; ++c) {
      for (std::size_t ch = 0; ch < x.channels; ++ch) {
        double acc = 0.0;
        for (int dy = -radius; dy <= radius; ++dy) {
          for (int dx = -radius; dx <= radius; ++dx) {
            const std::size_t rr = reflect(static_cast<long>(r) + dy,
                                           static_cast<long>(x.height));
            const std::size_t cc = reflect(static_cast<long>(c) + dx,
                                           static_cast<long>(x.width));
            acc += k[dy + radius] * k[dx + radius] * x.at(rr, cc, ch);
          }
        }
        out.at(r, c, ch) = acc;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("nearest-neighbor mask upsampling") {
  SUBCASE("1x1 grid floods the target") {
    MaskGrid grid(1, 1, 0.7);
    const ImageTensor up = upsample_mask(grid, 5, 9);
    for (double v : up.pixels) CHECK(v == 0.7);
  }
  SUBCASE("2x2 grid tiles into constant blocks") {
    MaskGrid grid(2, 2);
    grid.values = {0.1, 0.2, 0.3, 0.4};
    const ImageTensor up = upsample_mask(grid, 4, 4);
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 4; ++c) {
        CHECK(up.at(r, c) == grid.values[(r / 2) * 2 + (c / 2)]);
      }
    }
  }
  SUBCASE("11x11 to 224x224 introduces no new values") {
    MaskGrid grid(11, 11);
    std::mt19937_64 rng(2);
    for (double& v : grid.values) v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const ImageTensor up = upsample_mask(grid, 224, 224);
    const std::set<double> source(grid.values.begin(), grid.values.end());
    std::set<double> seen(up.pixels.begin(), up.pixels.end());
    CHECK(seen.size() == source.size());
    for (double v : seen) CHECK(source.contains(v));
  }
  SUBCASE("target must not shrink") {
    CHECK_THROWS_AS(upsample_mask(MaskGrid(4, 4, 0.5), 3, 8), DesignShapeError);
  }
}

TEST_CASE("inpainting") {
  const ImageTensor x = random_image(6, 7, 3, 9);
  SUBCASE("mask of ones is the identity") {
    const ImageTensor mask(6, 7, 1, 1.0);
    CHECK(inpaint(x, mask, 0.37).pixels == x.pixels);
  }
  SUBCASE("mask of zeros hits the baseline") {
    const ImageTensor mask(6, 7, 1, 0.0);
    for (double v : inpaint(x, mask, 0.0).pixels) CHECK(v == 0.0);
    for (double v : inpaint(x, mask, 0.6).pixels) CHECK(v == doctest::Approx(0.6));
  }
  SUBCASE("single-pixel arithmetic") {
    ImageTensor one(1, 1, 1, 0.8);
    ImageTensor mask(1, 1, 1, 0.25);
    CHECK(inpaint(one, mask, 0.0).pixels[0] == doctest::Approx(0.2));
  }
  SUBCASE("complementary masks average to (x + mu) / 2") {
    ImageTensor mask(6, 7, 1);
    std::mt19937_64 rng(4);
    for (double& v : mask.pixels) v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    ImageTensor inverse = mask;
    for (double& v : inverse.pixels) v = 1.0 - v;
    const double mu = 0.35;
    const ImageTensor a = inpaint(x, mask, mu);
    const ImageTensor b = inpaint(x, inverse, mu);
    for (std::size_t i = 0; i < x.pixels.size(); ++i) {
      CHECK(0.5 * (a.pixels[i] + b.pixels[i]) ==
            doctest::Approx(0.5 * (x.pixels[i] + mu)).epsilon(1e-12));
    }
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(inpaint(x, ImageTensor(5, 7, 1, 1.0), 0.0), DesignShapeError);
  }
}

TEST_CASE("blur perturbation") {
  const ImageTensor x = random_image(16, 16, 1, 77);
  SUBCASE("mask of ones is the identity") {
    const ImageTensor mask(16, 16, 1, 1.0);
    CHECK(blur_perturb(x, mask, 3.0).pixels == x.pixels);
  }
  SUBCASE("constant images are blur-invariant") {
    const ImageTensor flat(10, 12, 1, 0.42);
    const ImageTensor mask(10, 12, 1, 0.0);
    for (double v : blur_perturb(flat, mask, 2.5).pixels) {
      CHECK(v == doctest::Approx(0.42).epsilon(1e-12));
    }
  }
  SUBCASE("impulse response matches the direct convolution") {
    ImageTensor impulse(15, 15, 1, 0.0);
    impulse.at(7, 7) = 1.0;
    const ImageTensor mask(15, 15, 1, 0.0);  // fully blurred
    const ImageTensor fast = blur_perturb(impulse, mask, 1.5);
    const ImageTensor slow = blur_reference(impulse, 1.5);
    for (std::size_t i = 0; i < fast.pixels.size(); ++i) {
      CHECK(std::abs(fast.pixels[i] - slow.pixels[i]) <= 1e-6);
    }
  }
  SUBCASE("general image matches the direct convolution") {
    const ImageTensor mask(16, 16, 1, 0.0);
    const ImageTensor fast = blur_perturb(x, mask, 2.0);
    const ImageTensor slow = blur_reference(x, 2.0);
    for (std::size_t i = 0; i < fast.pixels.size(); ++i) {
      CHECK(std::abs(fast.pixels[i] - slow.pixels[i]) <= 1e-6);
    }
  }
  SUBCASE("sigma must be positive") {
    CHECK_THROWS_AS(gaussian_blur(x, 0.0), Error);
  }
}

TEST_CASE("token dropping") {
  const TokenSequence tokens{{"the", "movie", "was", "great"}};
  SUBCASE("all-ones mask keeps everything") {
    const std::vector<double> mask(4, 1.0);
    CHECK(drop_tokens(tokens, mask).tokens == tokens.tokens);
  }
  SUBCASE("thresholding keeps survivors in order") {
    const std::vector<double> mask{0.9, 0.2, 0.6, 0.4};
    const TokenSequence out = drop_tokens(tokens, mask, 0.5);
    CHECK(out.tokens == std::vector<std::string>{"the", "was"});
  }
  SUBCASE("a 0.05 threshold keeps roughly 95 percent") {
    std::mt19937_64 rng(11);
    TokenSequence many;
    many.tokens.assign(4000, "w");
    std::vector<double> mask(4000);
    for (double& v : mask) v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const double kept =
        static_cast<double>(drop_tokens(many, mask, 0.05).tokens.size()) / 4000.0;
    CHECK(kept == doctest::Approx(0.95).epsilon(0.02));
  }
  SUBCASE("binary masks make dropping idempotent") {
    const std::vector<double> binary{1.0, 0.0, 1.0, 0.0};
    const TokenSequence once = drop_tokens(tokens, binary);
    const std::vector<double> survivors(once.tokens.size(), 1.0);
    CHECK(drop_tokens(once, survivors).tokens == once.tokens);
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(drop_tokens(tokens, std::vector<double>{1.0}), DesignShapeError);
  }
  SUBCASE("empty result is allowed") {
    CHECK(drop_tokens(tokens, std::vector<double>(4, 0.0)).tokens.empty());
  }
}

TEST_CASE("bilinear heatmap rendering") {
  SUBCASE("uniform scores give a uniform map") {
    const std::vector<double> flat(9, 0.4);
    const AttributionMap map = render_heatmap(flat, 3, 3, 30, 30);
    for (double v : map.heatmap.pixels) CHECK(v == doctest::Approx(0.4));
  }
  SUBCASE("2x1 ramp crosses one half at the midpoint") {
    const std::vector<double> ramp{0.0, 1.0};
    const AttributionMap map = render_heatmap(ramp, 1, 2, 1, 4);
    // the continuous midpoint value is the mean of the two center pixels
    CHECK(0.5 * (map.heatmap.at(0, 1) + map.heatmap.at(0, 2)) ==
          doctest::Approx(0.5).epsilon(1e-12));
    CHECK(map.heatmap.at(0, 0) == doctest::Approx(0.0));
    CHECK(map.heatmap.at(0, 3) == doctest::Approx(1.0));
  }
  SUBCASE("output range stays inside the score range") {
    std::mt19937_64 rng(5);
    std::vector<double> scores(24);
    for (double& v : scores) v = static_cast<double>(rng() >> 11) * 0x1.0p-53 * 10 - 5;
    const AttributionMap map = render_heatmap(scores, 4, 6, 37, 53);
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    for (double v : map.heatmap.pixels) {
      CHECK(v >= *lo - 1e-12);
      CHECK(v <= *hi + 1e-12);
    }
  }
  SUBCASE("affine rescaling commutes with rendering") {
    std::mt19937_64 rng(6);
    std::vector<double> scores(12);
    for (double& v : scores) v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    std::vector<double> scaled(12);
    const double a = 2.5;
    const double b = -0.75;
    for (std::size_t i = 0; i < 12; ++i) scaled[i] = a * scores[i] + b;
    const AttributionMap base = render_heatmap(scores, 3, 4, 17, 29);
    const AttributionMap moved = render_heatmap(scaled, 3, 4, 17, 29);
    for (std::size_t i = 0; i < base.heatmap.pixels.size(); ++i) {
      CHECK(moved.heatmap.pixels[i] ==
            doctest::Approx(a * base.heatmap.pixels[i] + b).epsilon(1e-12));
    }
  }
  SUBCASE("argmax lands in the winning cell") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t gh = 2 + rng() % 4;
      const std::size_t gw = 2 + rng() % 4;
      std::vector<double> scores(gh * gw);
      for (double& v : scores) v = 0.2 + 0.3 * static_cast<double>(rng() >> 11) * 0x1.0p-53;
      const std::size_t winner = rng() % scores.size();
      scores[winner] = 1.0;  // strict unique max
      const std::size_t th = gh * (4 + rng() % 5);
      const std::size_t tw = gw * (4 + rng() % 5);
      const AttributionMap map = render_heatmap(scores, gh, gw, th, tw);
      std::size_t best = 0;
      for (std::size_t p = 1; p < map.heatmap.pixels.size(); ++p) {
        if (map.heatmap.pixels[p] > map.heatmap.pixels[best]) best = p;
      }
      const std::size_t row = best / tw;
      const std::size_t col = best % tw;
      CHECK(row * gh / th == winner / gw);
      CHECK(col * gw / tw == winner % gw);
    }
  }
  SUBCASE("value count must match the grid") {
    CHECK_THROWS_AS(render_heatmap(std::vector<double>(5, 0.0), 2, 3, 6, 6),
                    DesignShapeError);
  }
}

TEST_CASE("grid CSV round-trip") {
  MaskGrid grid(2, 3);
  grid.values = {0.125, -1.5, 3.0, 0.0, 42.0, 1e-9};
  const std::string path =
      (std::filesystem::temp_directory_path() / "sobolattr-grid-test.csv").string();
  write_grid_csv(grid, path);
  const MaskGrid back = read_grid_csv(path);
  CHECK(back.grid_h == 2);
  CHECK(back.grid_w == 3);
  CHECK(back.values == grid.values);
}

TEST_CASE("tokenize splits on whitespace") {
  const TokenSequence seq = tokenize("  the movie\twas\n great ");
  CHECK(seq.tokens == std::vector<std::string>{"the", "movie", "was", "great"});
  CHECK(detokenize(seq) == "the movie was great");
}
