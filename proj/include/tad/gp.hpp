#pragma once

#include <memory>

#include "tad/factor.hpp"
#include "tad/kernel.hpp"
#include "tad/types.hpp"

namespace tad {

// Acquired control points with their stacked observations g_1 and the
// diagonal of the noise covariance Sigma_1.
struct Dataset {
  PointSet points;     // N x D
  Vector observations; // N * E, point-major
  Vector noise_var;    // N * E, diagonal of Sigma_1

  static Dataset empty(int dims, int tasks);

  int size() const { return static_cast<int>(points.rows()); }
  int dims() const { return static_cast<int>(points.cols()); }
  int tasks() const;

  void validate() const;

  // Appends points with observations (N_new * E) and the per-task noise
  // variance repeated for every point.
  void append(const PointSet& new_points, const Vector& new_observations,
              const Vector& task_noise_var);
};

struct NormalDist {
  Vector mean;
  Matrix cov;
};

// Repeats per-task noise variances for `points` points (diagonal of Sigma).
Vector repeat_noise(const Vector& task_noise_var, int points);

// Stacked prior mean mu(x) for `points` points.
Vector stacked_mean(const Vector& task_means, int points);

// A GP conditioned on a dataset: holds the factorization of K_11 + Sigma_1
// and alpha = (K_11 + Sigma_1)^{-1}(g_1 - mu_1). Immutable once built.
class ConditionedGp {
 public:
  ConditionedGp(KernelModel model, Dataset data, const JitterPolicy& jitter = {});

  const KernelModel& model() const { return model_; }
  const Dataset& data() const { return data_; }
  const SpdFactor& factor() const { return factor_; }
  const Vector& alpha() const { return alpha_; }
  const Vector& residual() const { return residual_; }
  bool has_data() const { return data_.size() > 0; }
  int tasks() const { return model_.tasks(); }
  int dims() const { return model_.dims(); }

  // (g_1 - mu)^T (K_11 + Sigma_1)^{-1} (g_1 - mu).
  double quadratic_form() const { return residual_.dot(alpha_); }
  double log_likelihood() const;

  // f(x) | g_1 and g_2 | g_1 for arbitrary point sets. For a set of
  // prediction points the joint distribution over all of them is returned.
  NormalDist predict(const PointSet& points) const;
  NormalDist predict_data(const PointSet& points, const Vector& task_noise_var) const;

 private:
  KernelModel model_;
  Dataset data_;
  SpdFactor factor_;
  Vector residual_;
  Vector alpha_;
};

double marginal_log_likelihood(const KernelModel& model, const Dataset& data);

struct LikelihoodGradient {
  double value = 0.0;
  Vector gradient;  // in KernelModel::pack() coordinates
  double quadratic_form = 0.0;
};

LikelihoodGradient marginal_log_likelihood_gradient(const KernelModel& model, const Dataset& data);

NormalDist predictive_given_1(const KernelModel& model, const Dataset& data, const Point& x);

// g_2 | g_1 with Sigma_2 = diag(batch_noise_var); batch_noise_var has N_2 * E
// entries. An empty dataset yields the prior.
NormalDist data_predictive(const KernelModel& model, const Dataset& data,
                           const PointSet& batch_points, const Vector& batch_noise_var);

struct ObservedBatch {
  PointSet points;
  Vector observations;  // N_2 * E
  Vector noise_var;     // N_2 * E
};

// Updates f(x)|g_1 to f(x)|(g_1, g_2) without refactoring the joint system.
NormalDist prediction_update(const NormalDist& pred1, const Point& x, const Dataset& data,
                             const ObservedBatch& batch, const KernelModel& model);

PointSet single_point(const Point& x);

}  // namespace tad
