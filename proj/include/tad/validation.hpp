#pragma once

#include <string>

#include "tad/gp.hpp"

namespace tad {

enum class ValidationKind { batch_q, training_s };

std::string to_string(ValidationKind kind);
ValidationKind validation_kind_from_string(const std::string& s);

struct ValidationReport {
  double statistic = 0.0;
  int dof = 1;
  double p_value = 1.0;
  ValidationKind kind = ValidationKind::batch_q;
};

// Regularized incomplete gamma functions P(a, x) and Q(a, x) = 1 - P(a, x).
double regularized_gamma_p(double a, double x);
double regularized_gamma_q(double a, double x);

// Right-tail probability of a chi-squared variable with `dof` degrees of freedom.
double chi2_right_tail(double q, int dof);

// Q = (g2 - p)^T C^{-1} (g2 - p) against the predictive g2|g1; dof = N2 * E.
ValidationReport batch_validation(const NormalDist& pred, const Vector& observed);

// S = (g1 - mu)^T (K11 + Sigma1)^{-1} (g1 - mu); dof = N1 * E - E.
ValidationReport training_fit(const KernelModel& model, const Dataset& data);
ValidationReport training_fit(const ConditionedGp& gp);

}  // namespace tad
