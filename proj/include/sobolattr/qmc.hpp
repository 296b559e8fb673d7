#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sobolattr/matrix.hpp"

namespace sobolattr::qmc {

/// Direction-number table in the published Joe & Kuo text format:
/// one line per dimension, `d s a m_1 ... m_s`, dimensions 2..max.
/// Dimension 1 (van der Corput) is built in and not part of the file.
class DirectionTable {
 public:
  /// Parses the table from `path`. Validates that dimensions are contiguous,
  /// every m_i is odd and m_i < 2^i; throws IoError naming the file otherwise.
  static DirectionTable load(const std::string& path);

  /// Shared table loaded once from default_directions_path().
  static std::shared_ptr<const DirectionTable> builtin();

  std::size_t max_dimension() const { return entries_.size() + 1; }
  const std::string& source_path() const { return source_path_; }

  struct Entry {
    std::uint32_t degree;             // s
    std::uint32_t poly;               // a (interior polynomial coefficients)
    std::vector<std::uint32_t> minit; // m_1 .. m_s
  };
  /// Entry for dimension j >= 2 (dimension 1 has no entry).
  const Entry& entry(std::size_t dimension) const { return entries_[dimension - 2]; }

 private:
  std::vector<Entry> entries_;
  std::string source_path_;
};

/// Resolution order: set_default_directions_path() override, then the
/// SOBOL_ATTRIB_DIRECTIONS environment variable, then the compiled-in
/// data directory.
std::string default_directions_path();
void set_default_directions_path(const std::string& path);

inline constexpr int kSobolBits = 32;

/// splitmix64 mix; used to derive deterministic digital-shift words.
std::uint64_t splitmix64(std::uint64_t z);

/// Per-dimension 32-bit XOR masks for randomized QMC, derived from `seed`.
std::vector<std::uint32_t> digital_shift_words(std::size_t dimension, std::uint64_t seed);

/// Sobol low-discrepancy sequence in [0,1)^dimension.
///
/// Points are emitted in Gray-code (Antonov–Saleev) order with the initial
/// all-zeros point skipped: index 0 of this generator is the sequence's
/// second point, so point(n) = radical_inverse(gray(n+1)) per coordinate.
/// Deterministic: equal dimension and index range yield identical points.
class SobolSequence {
 public:
  explicit SobolSequence(std::size_t dimension,
                         std::shared_ptr<const DirectionTable> table = nullptr);

  /// Randomized variant: every emitted coordinate is XORed with a fixed
  /// per-dimension shift word. Off the plain deterministic path.
  SobolSequence(std::size_t dimension, std::uint64_t shift_seed,
                std::shared_ptr<const DirectionTable> table = nullptr);

  std::size_t dimension() const { return dimension_; }
  std::uint64_t index() const { return index_; }

  /// Emits the next `count` points, advancing the state. count >= 1.
  Matrix next_points(std::size_t count);

 private:
  std::size_t dimension_;
  std::uint64_t index_ = 0;  // points emitted so far (zero point excluded)
  std::vector<std::uint32_t> state_;        // current integer point, per dim
  std::vector<std::uint32_t> directions_;   // dim * kSobolBits, row-major
  std::vector<std::uint32_t> shift_;        // empty when not randomized
  void advance_one();
};

/// Draws N points of a 2d-dimensional sequence and splits coordinates:
/// the first d become rows of A, the last d rows of B. Fresh internal state,
/// so repeated calls with equal arguments return identical matrices.
std::pair<Matrix, Matrix> paired_mask_matrices(
    std::size_t d, std::size_t n_designs,
    std::optional<std::uint64_t> shift_seed = std::nullopt,
    std::shared_ptr<const DirectionTable> table = nullptr);

}  // namespace sobolattr::qmc
