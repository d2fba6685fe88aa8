#include "tad/box.hpp"

#include "tad/errors.hpp"

namespace tad {

void Box::validate() const {
  if (lower.size() == 0 || lower.size() != upper.size()) {
    throw DimensionError("box bounds must be non-empty and of equal length");
  }
  if (!lower.allFinite() || !upper.allFinite() || (upper.array() <= lower.array()).any()) {
    throw ContractViolation("box must be finite with lower < upper in every dimension");
  }
}

bool Box::contains(const Point& x) const {
  return x.size() == lower.size() && (x.array() >= lower.array()).all() &&
         (x.array() <= upper.array()).all();
}

Point Box::clip(const Point& x) const {
  if (x.size() != lower.size()) throw DimensionError("point dimension differs from box");
  return x.cwiseMax(lower).cwiseMin(upper);
}

PointSet Box::clip(const PointSet& points) const {
  if (points.rows() > 0 && points.cols() != lower.size()) {
    throw DimensionError("point dimension differs from box");
  }
  PointSet out = points;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = out.row(i).cwiseMax(lower.transpose()).cwiseMin(upper.transpose());
  }
  return out;
}

Box Box::uniform(int dims, double lo, double hi) {
  return {Vector::Constant(dims, lo), Vector::Constant(dims, hi)};
}

}  // namespace tad
