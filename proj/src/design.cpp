#include "sobolattr/design.hpp"

#include <sstream>

#include "sobolattr/errors.hpp"

namespace sobolattr {

SampleDesign build_design(const Matrix& a_masks, const Matrix& b_masks) {
  if (a_masks.rows() != b_masks.rows() || a_masks.cols() != b_masks.cols()) {
    std::ostringstream os;
    os << "build_design: A is " << a_masks.rows() << "x" << a_masks.cols()
       << " but B is " << b_masks.rows() << "x" << b_masks.cols();
    throw DesignShapeError(os.str());
  }
  if (a_masks.rows() == 0 || a_masks.cols() == 0) {
    throw DesignShapeError("build_design: empty mask matrices");
  }
  const std::size_t n = a_masks.rows();
  const std::size_t d = a_masks.cols();

  SampleDesign design;
  design.n_designs = n;
  design.dims = d;
  design.rows = Matrix(n * (d + 2), d);

  for (std::size_t j = 0; j < n; ++j) {
    auto ra = design.rows.row(j);
    auto rb = design.rows.row(n + j);
    for (std::size_t i = 0; i < d; ++i) {
      ra[i] = a_masks.at(j, i);
      rb[i] = b_masks.at(j, i);
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      auto rc = design.rows.row(n * (2 + i) + j);
      for (std::size_t k = 0; k < d; ++k) {
        rc[k] = (k == i) ? b_masks.at(j, k) : a_masks.at(j, k);
      }
    }
  }
  return design;
}

}  // namespace sobolattr
