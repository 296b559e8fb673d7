#include "sobolattr/qmc.hpp"

#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>

#include "sobolattr/errors.hpp"

#ifndef SOBOLATTR_DATA_DIR
#define SOBOLATTR_DATA_DIR "data"
#endif

namespace sobolattr::qmc {

namespace {

std::string g_override_path;  // set once at startup when used
std::mutex g_override_mutex;

}  // namespace

std::string default_directions_path() {
  {
    std::lock_guard lock(g_override_mutex);
    if (!g_override_path.empty()) return g_override_path;
  }
  if (const char* env = std::getenv("SOBOL_ATTRIB_DIRECTIONS"); env && *env) {
    return env;
  }
  return std::string(SOBOLATTR_DATA_DIR) + "/new-joe-kuo-6.2080.txt";
}

void set_default_directions_path(const std::string& path) {
  std::lock_guard lock(g_override_mutex);
  g_override_path = path;
}

DirectionTable DirectionTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("direction-number table not readable: " + path);
  }
  DirectionTable table;
  table.source_path_ = path;
  std::string line;
  std::size_t line_no = 0;
  std::size_t expected_dim = 2;
  auto fail = [&](const std::string& what) {
    std::ostringstream os;
    os << "direction-number table " << path << ", line " << line_no << ": " << what;
    throw IoError(os.str());
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::uint64_t dim = 0;
    if (!(fields >> dim)) {
      if (line_no == 1) continue;  // header line ("d s a m_i")
      fail("expected numeric fields");
    }
    Entry entry;
    if (!(fields >> entry.degree >> entry.poly)) fail("missing s/a fields");
    if (dim != expected_dim) fail("dimensions must be contiguous from 2");
    if (entry.degree < 1 || entry.degree >= kSobolBits) fail("bad degree");
    entry.minit.resize(entry.degree);
    for (std::uint32_t k = 0; k < entry.degree; ++k) {
      if (!(fields >> entry.minit[k])) fail("missing m values");
      if (entry.minit[k] % 2 == 0 || entry.minit[k] >= (1u << (k + 1))) {
        fail("m_" + std::to_string(k + 1) + " must be odd and < 2^" +
             std::to_string(k + 1));
      }
    }
    table.entries_.push_back(std::move(entry));
    ++expected_dim;
  }
  if (table.entries_.empty()) {
    throw IoError("direction-number table " + path + " holds no entries");
  }
  return table;
}

std::shared_ptr<const DirectionTable> DirectionTable::builtin() {
  static std::shared_ptr<const DirectionTable> instance =
      std::make_shared<const DirectionTable>(load(default_directions_path()));
  return instance;
}

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::vector<std::uint32_t> digital_shift_words(std::size_t dimension,
                                               std::uint64_t seed) {
  std::vector<std::uint32_t> words(dimension);
  for (std::size_t j = 0; j < dimension; ++j) {
    words[j] = static_cast<std::uint32_t>(
        splitmix64((seed << 20) + static_cast<std::uint64_t>(j)) >> (64 - kSobolBits));
  }
  return words;
}

namespace {

// Expands the table's initial m values into the full 32-bit direction
// numbers v_k = m_k << (32-k) with the standard primitive-polynomial
// recurrence filling k > s.
std::vector<std::uint32_t> expand_directions(const DirectionTable& table,
                                             std::size_t dimension) {
  std::vector<std::uint32_t> v(dimension * kSobolBits);
  // dimension 1: van der Corput in base 2, m_k = 1 for all k.
  for (int k = 0; k < kSobolBits; ++k) {
    v[k] = 1u << (kSobolBits - 1 - k);
  }
  for (std::size_t j = 2; j <= dimension; ++j) {
    const auto& e = table.entry(j);
    std::uint32_t* vj = v.data() + (j - 1) * kSobolBits;
    const std::uint32_t s = e.degree;
    for (std::uint32_t k = 0; k < s; ++k) {
      vj[k] = e.minit[k] << (kSobolBits - 1 - k);
    }
    for (std::uint32_t k = s; k < kSobolBits; ++k) {
      std::uint32_t acc = vj[k - s] ^ (vj[k - s] >> s);
      for (std::uint32_t t = 1; t < s; ++t) {
        if ((e.poly >> (s - 1 - t)) & 1u) acc ^= vj[k - t];
      }
      vj[k] = acc;
    }
  }
  return v;
}

}  // namespace

SobolSequence::SobolSequence(std::size_t dimension,
                             std::shared_ptr<const DirectionTable> table)
    : dimension_(dimension) {
  if (dimension == 0) throw UnsupportedDimensionError("dimension must be >= 1");
  if (!table) table = DirectionTable::builtin();
  if (dimension > table->max_dimension()) {
    std::ostringstream os;
    os << "dimension " << dimension << " exceeds the " << table->max_dimension()
       << " supported by " << table->source_path();
    throw UnsupportedDimensionError(os.str());
  }
  directions_ = expand_directions(*table, dimension);
  state_.assign(dimension, 0u);
}

SobolSequence::SobolSequence(std::size_t dimension, std::uint64_t shift_seed,
                             std::shared_ptr<const DirectionTable> table)
    : SobolSequence(dimension, std::move(table)) {
  shift_ = digital_shift_words(dimension, shift_seed);
}

void SobolSequence::advance_one() {
  // Gray-code step: XOR with the direction number of the lowest zero bit
  // of the number of points consumed so far (zero point included).
  std::uint64_t n = index_;
  int c = 0;
  while (n & 1u) {
    n >>= 1;
    ++c;
  }
  for (std::size_t j = 0; j < dimension_; ++j) {
    state_[j] ^= directions_[j * kSobolBits + c];
  }
  ++index_;
}

Matrix SobolSequence::next_points(std::size_t count) {
  if (count < 1) throw Error("next_points: count must be >= 1");
  constexpr double scale = 1.0 / 4294967296.0;  // 2^-32
  Matrix out(count, dimension_);
  for (std::size_t r = 0; r < count; ++r) {
    advance_one();
    auto row = out.row(r);
    if (shift_.empty()) {
      for (std::size_t j = 0; j < dimension_; ++j) row[j] = state_[j] * scale;
    } else {
      for (std::size_t j = 0; j < dimension_; ++j) {
        row[j] = (state_[j] ^ shift_[j]) * scale;
      }
    }
  }
  return out;
}

std::pair<Matrix, Matrix> paired_mask_matrices(
    std::size_t d, std::size_t n_designs, std::optional<std::uint64_t> shift_seed,
    std::shared_ptr<const DirectionTable> table) {
  if (d < 1 || n_designs < 1) {
    throw Error("paired_mask_matrices: d and N must be >= 1");
  }
  SobolSequence seq = shift_seed
                          ? SobolSequence(2 * d, *shift_seed, std::move(table))
                          : SobolSequence(2 * d, std::move(table));
  Matrix joint = seq.next_points(n_designs);
  Matrix a(n_designs, d);
  Matrix b(n_designs, d);
  for (std::size_t r = 0; r < n_designs; ++r) {
    auto src = joint.row(r);
    auto ra = a.row(r);
    auto rb = b.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      ra[j] = src[j];
      rb[j] = src[d + j];
    }
  }
  return {std::move(a), std::move(b)};
}

}  // namespace sobolattr::qmc
