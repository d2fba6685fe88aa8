#include "tad/factor.hpp"

#include <cmath>
#include <sstream>

#include "tad/errors.hpp"

namespace tad {
namespace {

bool acceptable(const Eigen::LLT<Matrix>& llt, double floor) {
  if (llt.info() != Eigen::Success) return false;
  const auto diag = llt.matrixLLT().diagonal();
  if (!diag.allFinite()) return false;
  return diag.array().square().minCoeff() >= floor;
}

}  // namespace

SpdFactor::SpdFactor(const Matrix& m, const std::string& what, const JitterPolicy& policy) {
  if (m.rows() != m.cols()) throw DimensionError(what + ": matrix is not square");
  if (m.rows() == 0) return;
  if (!m.allFinite()) throw NumericalError("non-finite entries", what);

  const double max_diag = m.diagonal().maxCoeff();
  const double mean_diag = m.diagonal().mean();
  const double floor = policy.pivot_floor * std::max(max_diag, 0.0);

  llt_.compute(m);
  if (acceptable(llt_, floor)) {
    jitter_ = 0.0;
  } else {
    const double scale = mean_diag > 0.0 ? mean_diag : 1.0;
    bool ok = false;
    for (double rel = policy.initial; rel <= policy.maximum * (1.0 + 1e-12); rel *= policy.growth) {
      Matrix jittered = m;
      jittered.diagonal().array() += rel * scale;
      llt_.compute(jittered);
      if (acceptable(llt_, floor)) {
        jitter_ = rel * scale;
        ok = true;
        break;
      }
    }
    if (!ok) {
      std::ostringstream os;
      os << what << ", n=" << m.rows() << ", mean diag=" << mean_diag;
      throw NumericalError("matrix not positive definite after maximum jitter", os.str());
    }
  }
  log_det_ = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

Matrix SpdFactor::half_solve(const Matrix& rhs) const {
  return llt_.matrixL().solve(rhs);
}

Matrix SpdFactor::inverse() const {
  return llt_.solve(Matrix::Identity(size(), size()));
}

}  // namespace tad
