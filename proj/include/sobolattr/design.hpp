#pragma once

#include <cstddef>

#include "sobolattr/matrix.hpp"

namespace sobolattr {

/// Replicated sample design for the pick-and-freeze estimators.
/// Row layout: [A-block (N rows), B-block (N rows), C(1)-block (N), ..., C(d)-block (N)];
/// C(i) row j equals A row j except coordinate i, which is B's.
struct SampleDesign {
  std::size_t n_designs = 0;  // N
  std::size_t dims = 0;       // d
  Matrix rows;                // N*(d+2) x d

  std::size_t total_rows() const { return n_designs * (dims + 2); }
};

SampleDesign build_design(const Matrix& a_masks, const Matrix& b_masks);

}  // namespace sobolattr
