#pragma once

#include <vector>

#include "tad/types.hpp"

namespace tad {

// Squared-exponential scalar kernel with one lengthscale per control dimension.
struct ScalarKernelParams {
  double signal_variance = 1.0;
  Vector lengthscales;

  int dims() const { return static_cast<int>(lengthscales.size()); }
  void validate() const;
};

// Task covariance kappa = L L^T, stored through its lower Cholesky factor.
struct TaskMatrixParams {
  Matrix chol_factor;

  int tasks() const { return static_cast<int>(chol_factor.rows()); }
  Matrix task_cov() const { return chol_factor * chol_factor.transpose(); }
  void validate() const;

  static TaskMatrixParams scaled_identity(int tasks, double variance);
};

struct KernelComponent {
  ScalarKernelParams scalar;
  TaskMatrixParams task;
};

// Vector-valued GP prior: constant per-task mean plus a sum of P separable
// (scalar kernel x task matrix) components.
struct KernelModel {
  Vector task_means;
  std::vector<KernelComponent> components;

  int tasks() const { return static_cast<int>(task_means.size()); }
  int dims() const {
    return components.empty() ? 0 : components.front().scalar.dims();
  }
  int size() const { return static_cast<int>(components.size()); }

  // Throws DimensionError / ContractViolation on malformed models.
  void validate() const;

  // Sum over components of sigma_l^2 * kappa_l, i.e. C(x, x).
  Matrix prior_block() const;

  // Unconstrained parameterization used by the optimizers:
  //   [task means (E)] then per component
  //   [log signal variance, log lengthscales (D), Cholesky entries row-major
  //    over the lower triangle with the diagonal in log space].
  Vector pack() const;
  static KernelModel unpack(const Vector& params, int dims, int tasks, int components);
  static int parameter_count(int dims, int tasks, int components);
  static int component_parameter_count(int dims, int tasks);

  // Default prior for a fresh campaign.
  static KernelModel isotropic(int dims, int tasks, int components, double lengthscale,
                               double signal_variance, const Vector& task_means);
};

// sigma_f^2 * exp(-1/2 sum_d ((a_d - b_d) / l_d)^2).
double eval_scalar_kernel(const Point& a, const Point& b, const ScalarKernelParams& params);

// Returns a model with one more component appended. The new component uses
// half the mean lengthscale of the existing ones and a small task matrix so
// that the fitted model is perturbed only mildly.
KernelModel with_extra_component(const KernelModel& model);

}  // namespace tad
