#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>

#include <unistd.h>

#include <doctest.h>

#include "sobolattr/errors.hpp"
#include "sobolattr/qmc.hpp"

using namespace sobolattr;

namespace {

// Independent oracle for the first coordinate: the sequence emits
// radical_inverse_2(gray(n)) at 1-based position n.
double radical_inverse_at_gray(std::uint64_t n) {
  const std::uint64_t g = n ^ (n >> 1);
  double value = 0.0;
  double scale = 0.5;
  for (std::uint64_t bits = g; bits; bits >>= 1, scale *= 0.5) {
    if (bits & 1) value += scale;
  }
  return value;
}

std::string write_temp_table(const std::string& content) {
  static int counter = 0;
  const std::string path = "/tmp/sobolattr-test-table-" + std::to_string(::getpid()) +
                           "-" + std::to_string(counter++) + ".txt";
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("first dimension matches the radical-inverse oracle") {
  qmc::SobolSequence seq(1);
  const Matrix pts = seq.next_points(4);
  CHECK(pts.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(pts.at(1, 0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(pts.at(2, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(pts.at(3, 0) == doctest::Approx(0.375).epsilon(1e-15));

  qmc::SobolSequence longer(1);
  const Matrix many = longer.next_points(64);
  for (std::size_t n = 0; n < 64; ++n) {
    CHECK(many.at(n, 0) == doctest::Approx(radical_inverse_at_gray(n + 1)).epsilon(1e-15));
  }
}

TEST_CASE("prefix consistency and determinism") {
  qmc::SobolSequence a(3);
  qmc::SobolSequence b(3);
  const Matrix two = a.next_points(2);
  Matrix one_a = b.next_points(1);
  Matrix one_b = b.next_points(1);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(two.at(0, j) == one_a.at(0, j));
    CHECK(two.at(1, j) == one_b.at(0, j));
  }

  // N then M more equals N+M in one call, across a few shapes
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t dim = 1 + rng() % 16;
    const std::size_t n1 = 1 + rng() % 40;
    const std::size_t n2 = 1 + rng() % 40;
    qmc::SobolSequence split(dim);
    qmc::SobolSequence whole(dim);
    const Matrix part1 = split.next_points(n1);
    const Matrix part2 = split.next_points(n2);
    const Matrix all = whole.next_points(n1 + n2);
    for (std::size_t r = 0; r < n1 + n2; ++r) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double expected = r < n1 ? part1.at(r, j) : part2.at(r - n1, j);
        CHECK(all.at(r, j) == expected);
      }
    }
  }
}

TEST_CASE("count must be positive") {
  qmc::SobolSequence seq(3);
  CHECK_THROWS_AS(seq.next_points(0), Error);
}

TEST_CASE("all coordinates stay in [0,1)") {
  qmc::SobolSequence seq(13);
  const Matrix pts = seq.next_points(500);
  for (std::size_t r = 0; r < pts.rows(); ++r) {
    for (double v : pts.row(r)) {
      CHECK(v >= 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("product integral over [0,1]^5 within 1e-3 of 2^-5") {
  qmc::SobolSequence seq(5);
  const Matrix pts = seq.next_points(1024);
  double acc = 0.0;
  for (std::size_t r = 0; r < pts.rows(); ++r) {
    double prod = 1.0;
    for (double v : pts.row(r)) prod *= v;
    acc += prod;
  }
  CHECK(std::abs(acc / 1024.0 - 1.0 / 32.0) < 1e-3);
}

TEST_CASE("marginal uniformity at power-of-two sizes") {
  for (const std::size_t dim : {2u, 8u, 32u}) {
    for (const std::size_t n : {256u, 1024u}) {
      qmc::SobolSequence seq(dim);
      const Matrix pts = seq.next_points(n);
      for (std::size_t j = 0; j < dim; ++j) {
        double mean = 0.0;
        for (std::size_t r = 0; r < n; ++r) mean += pts.at(r, j);
        mean /= static_cast<double>(n);
        CHECK(std::abs(mean - 0.5) <= 3.0 / std::sqrt(static_cast<double>(n)));
      }
    }
  }
}

TEST_CASE("paired mask matrices") {
  SUBCASE("default 11x11 mask shape") {
    const auto [a, b] = qmc::paired_mask_matrices(121, 32);
    CHECK(a.rows() == 32);
    CHECK(a.cols() == 121);
    CHECK(b.rows() == 32);
    CHECK(b.cols() == 121);
  }
  SUBCASE("d=1 splits the two coordinates of the joint sequence") {
    const auto [a, b] = qmc::paired_mask_matrices(1, 1);
    CHECK(a.rows() == 1);
    CHECK(a.cols() == 1);
    CHECK(b.rows() == 1);
    CHECK(b.cols() == 1);
    // every coordinate's first point is 0.5; the streams separate from the
    // second point on, which is where the split becomes observable
    const auto [a2, b2] = qmc::paired_mask_matrices(1, 2);
    CHECK(a2.at(1, 0) != b2.at(1, 0));
    qmc::SobolSequence joint(2);
    const Matrix pts = joint.next_points(2);
    CHECK(a2.at(1, 0) == pts.at(1, 0));
    CHECK(b2.at(1, 0) == pts.at(1, 1));
  }
  SUBCASE("column means near one half") {
    const auto [a, b] = qmc::paired_mask_matrices(3, 256);
    for (std::size_t j = 0; j < 3; ++j) {
      double mean = 0.0;
      for (std::size_t r = 0; r < 256; ++r) mean += a.at(r, j);
      CHECK(std::abs(mean / 256.0 - 0.5) < 0.01);
    }
  }
  SUBCASE("fresh state gives identical matrices") {
    const auto [a1, b1] = qmc::paired_mask_matrices(5, 64);
    const auto [a2, b2] = qmc::paired_mask_matrices(5, 64);
    CHECK(a1 == a2);
    CHECK(b1 == b2);
  }
  SUBCASE("digital shift changes points but stays deterministic per seed") {
    const auto [a0, b0] = qmc::paired_mask_matrices(4, 32);
    const auto [a1, b1] = qmc::paired_mask_matrices(4, 32, 9);
    const auto [a2, b2] = qmc::paired_mask_matrices(4, 32, 9);
    CHECK(a1 == a2);
    CHECK(b1 == b2);
    CHECK(a0 != a1);
  }
}

TEST_CASE("dimension limits") {
  const auto table = qmc::DirectionTable::builtin();
  CHECK(table->max_dimension() >= 2048);
  CHECK_THROWS_AS(qmc::SobolSequence(table->max_dimension() + 1),
                  UnsupportedDimensionError);
  CHECK_THROWS_AS(qmc::SobolSequence(0), UnsupportedDimensionError);
  // room for paired designs over an 11x11 grid and beyond
  CHECK_NOTHROW(qmc::paired_mask_matrices(1024, 2));
}

TEST_CASE("direction table validation identifies the file") {
  SUBCASE("even m value") {
    const auto path = write_temp_table("2 1 0 2\n");
    CHECK_THROWS_WITH_AS(qmc::DirectionTable::load(path),
                         doctest::Contains(path.c_str()), IoError);
  }
  SUBCASE("m out of range") {
    const auto path = write_temp_table("2 1 0 1\n3 2 1 1 9\n");
    CHECK_THROWS_WITH_AS(qmc::DirectionTable::load(path),
                         doctest::Contains(path.c_str()), IoError);
  }
  SUBCASE("non-contiguous dimensions") {
    const auto path = write_temp_table("2 1 0 1\n5 2 1 1 3\n");
    CHECK_THROWS_AS(qmc::DirectionTable::load(path), IoError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(qmc::DirectionTable::load("/nonexistent/table.txt"), IoError);
  }
  SUBCASE("header line is skipped") {
    const auto path = write_temp_table("d s a m_i\n2 1 0 1\n3 2 1 1 3\n");
    const auto table = qmc::DirectionTable::load(path);
    CHECK(table.max_dimension() == 3);
  }
}
