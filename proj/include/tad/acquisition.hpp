#pragma once

#include <memory>

#include "tad/box.hpp"
#include "tad/gp.hpp"

namespace tad {

struct AcquisitionInputs {
  KernelModel model;
  Dataset data;
  PointSet batch_points;   // x_2, N_2 x D (N_2 may be 0)
  Point target_point;      // x
  Vector target_design;    // f_T
  Vector batch_noise_var;  // diagonal of Sigma_2, N_2 * E
};

struct AcquisitionBreakdown {
  double log_det_term = 0.0;
  double data_fit_term = 0.0;
  double trace_term = 0.0;
  double total = 0.0;
  Matrix T;
  Matrix q_f1;
  Matrix q_f12;
  Vector p_f1;
  double eig_nats = 0.0;
};

// f(x)|1 plus the "2"-space pieces needed for the update form.
struct UpdateTerms {
  Vector p_f1;
  Matrix q_f1;
  Matrix k1x;  // K_1x, N_1 E x E
  Matrix v;    // (K_11 + Sigma_1)^{-1} K_1x
  Matrix k12;  // K_12
  Matrix u;    // (K_11 + Sigma_1)^{-1} K_12
  Matrix a;    // K_x2 - K_x1 (K_11 + Sigma_1)^{-1} K_12
  Vector p21;  // p^(2|1)
  Matrix q21;  // Q^(2|1)
  SpdFactor q21_factor;
  Matrix b;    // Q^(2|1)^{-1} A^T
  Matrix T;
};

UpdateTerms update_terms(const ConditionedGp& gp, const Point& x, const PointSet& batch,
                         const Vector& batch_noise_var);

Matrix correction_term(const AcquisitionInputs& in);

// Gaussian log-density of f_T without the -(E/2) log 2 pi constant.
double predictive_log_likelihood(const NormalDist& pred, const Vector& target_design);

double predictive_log_likelihood(const KernelModel& model, const Dataset& data,
                                 const PointSet& batch_points, const Vector& batch_obs,
                                 const Vector& batch_noise_var, const Point& x,
                                 const Vector& target_design);

AcquisitionBreakdown tad_acquisition(const AcquisitionInputs& in);

// -1/2 log det(1 - T Q^{-1}) and 1/2 log(det Q(f|1) / det Q(f|1+2)).
double expected_information_gain(const AcquisitionInputs& in);
double eig_compact(const Matrix& T, const Matrix& q_f1);
double eig_volume_ratio(const Matrix& q_f1, const Matrix& q_f12);

// Squared hinge: -strength * sum over points and dims of (distance outside)^2.
double domain_penalty(const Point& x, const PointSet& batch, const Box& domain, double strength);

enum class AcquisitionKind { tad, eig };

struct AcquisitionGradient {
  double value = 0.0;
  Vector grad_x;        // D
  Matrix grad_batch;    // N_2 x D
};

// Evaluates the acquisition for many (x, x_2) against one conditioned GP,
// so K_11 + Sigma_1 is factored once per optimization.
class TadEvaluator {
 public:
  TadEvaluator(std::shared_ptr<const ConditionedGp> gp, Vector target_design,
               Vector task_noise_var);

  const ConditionedGp& gp() const { return *gp_; }
  const Vector& target_design() const { return target_design_; }
  const Vector& task_noise_var() const { return task_noise_var_; }

  AcquisitionBreakdown evaluate(const Point& x, const PointSet& batch) const;
  AcquisitionGradient gradient(const Point& x, const PointSet& batch, AcquisitionKind kind) const;

 private:
  std::shared_ptr<const ConditionedGp> gp_;
  Vector target_design_;
  Vector task_noise_var_;
};

AcquisitionBreakdown evaluate_breakdown(const ConditionedGp& gp, const Point& x,
                                        const PointSet& batch, const Vector& batch_noise_var,
                                        const Vector& target_design);

AcquisitionGradient acquisition_gradient(const ConditionedGp& gp, const Point& x,
                                         const PointSet& batch, const Vector& batch_noise_var,
                                         const Vector& target_design, AcquisitionKind kind);

AcquisitionGradient domain_penalty_gradient(const Point& x, const PointSet& batch,
                                            const Box& domain, double strength);

}  // namespace tad
