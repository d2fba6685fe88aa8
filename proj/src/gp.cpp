#include "tad/gp.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "tad/errors.hpp"
#include "tad/gram.hpp"

namespace tad {

Dataset Dataset::empty(int dims, int tasks) {
  Dataset d;
  d.points = PointSet(0, dims);
  d.observations = Vector(0);
  d.noise_var = Vector(0);
  // An empty dataset carries no task count; append() fixes it.
  (void)tasks;
  return d;
}

int Dataset::tasks() const {
  if (points.rows() == 0) return 0;
  return static_cast<int>(observations.size() / points.rows());
}

void Dataset::validate() const {
  const auto n = points.rows();
  if (n == 0) {
    if (observations.size() != 0 || noise_var.size() != 0) {
      throw DimensionError("dataset without points carries observations");
    }
    return;
  }
  if (observations.size() % n != 0 || observations.size() == 0) {
    throw DimensionError("observation count is not a multiple of the point count");
  }
  if (noise_var.size() != observations.size()) {
    throw DimensionError("noise variance length differs from observation length");
  }
  if ((noise_var.array() < 0.0).any()) throw ContractViolation("negative noise variance");
  if (!observations.allFinite() || !points.allFinite()) {
    throw ContractViolation("dataset contains non-finite values");
  }
}

void Dataset::append(const PointSet& new_points, const Vector& new_observations,
                     const Vector& task_noise_var) {
  const auto m = new_points.rows();
  if (m == 0) return;
  const auto e = task_noise_var.size();
  if (new_observations.size() != m * e) {
    throw DimensionError("appended observations do not match points x tasks");
  }
  if (points.rows() > 0 && new_points.cols() != points.cols()) {
    throw DimensionError("appended points have the wrong dimension");
  }
  if (points.rows() > 0 && tasks() != e) throw DimensionError("appended task count differs");
  PointSet p(points.rows() + m, new_points.cols());
  if (points.rows() > 0) p.topRows(points.rows()) = points;
  p.bottomRows(m) = new_points;
  Vector g(observations.size() + new_observations.size());
  g << observations, new_observations;
  Vector s(noise_var.size() + m * e);
  s << noise_var, repeat_noise(task_noise_var, static_cast<int>(m));
  points = std::move(p);
  observations = std::move(g);
  noise_var = std::move(s);
}

Vector repeat_noise(const Vector& task_noise_var, int points) {
  return task_noise_var.replicate(points, 1);
}

Vector stacked_mean(const Vector& task_means, int points) {
  return task_means.replicate(points, 1);
}

PointSet single_point(const Point& x) { return x.transpose(); }

ConditionedGp::ConditionedGp(KernelModel model, Dataset data, const JitterPolicy& jitter)
    : model_(std::move(model)), data_(std::move(data)) {
  model_.validate();
  data_.validate();
  if (data_.size() == 0) return;
  if (data_.dims() != model_.dims() || data_.tasks() != model_.tasks()) {
    throw DimensionError("dataset shape (" + std::to_string(data_.dims()) + "D, " +
                         std::to_string(data_.tasks()) + " tasks) does not match the model");
  }
  Matrix k11 = assemble_cross_cov(data_.points, data_.points, model_);
  k11.diagonal() += data_.noise_var;
  factor_ = SpdFactor(k11, "K11 + Sigma1", jitter);
  residual_ = data_.observations - stacked_mean(model_.task_means, data_.size());
  alpha_ = factor_.solve(residual_);
}

double ConditionedGp::log_likelihood() const {
  const double n = static_cast<double>(residual_.size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * factor_.log_det() -
         0.5 * quadratic_form();
}

NormalDist ConditionedGp::predict(const PointSet& points) const {
  if (points.cols() != model_.dims()) throw DimensionError("prediction point has wrong dimension");
  NormalDist out;
  out.mean = stacked_mean(model_.task_means, static_cast<int>(points.rows()));
  out.cov = assemble_cross_cov(points, points, model_);
  if (!has_data()) return out;
  const Matrix k1p = assemble_cross_cov(data_.points, points, model_);
  out.mean += k1p.transpose() * alpha_;
  const Matrix v = factor_.half_solve(k1p);
  out.cov -= v.transpose() * v;
  out.cov = symmetrized(out.cov);
  return out;
}

NormalDist ConditionedGp::predict_data(const PointSet& points, const Vector& task_noise_var) const {
  if (task_noise_var.size() != model_.tasks()) throw DimensionError("noise has wrong task count");
  NormalDist out = predict(points);
  out.cov.diagonal() += repeat_noise(task_noise_var, static_cast<int>(points.rows()));
  return out;
}

double marginal_log_likelihood(const KernelModel& model, const Dataset& data) {
  if (data.size() == 0) throw ContractViolation("marginal likelihood needs data");
  return ConditionedGp(model, data).log_likelihood();
}

LikelihoodGradient marginal_log_likelihood_gradient(const KernelModel& model, const Dataset& data) {
  if (data.size() == 0) throw ContractViolation("marginal likelihood needs data");
  const ConditionedGp gp(model, data);
  LikelihoodGradient out;
  out.value = gp.log_likelihood();
  out.quadratic_form = gp.quadratic_form();

  const Vector& alpha = gp.alpha();
  Matrix w = -gp.factor().inverse();
  w.noalias() += alpha * alpha.transpose();
  out.gradient = 0.5 * hyper_pullback(data.points, model, w);

  const int e = model.tasks();
  for (int i = 0; i < e; ++i) {
    double s = 0.0;
    for (int a = 0; a < data.size(); ++a) s += alpha[stacked_index(a, i, e)];
    out.gradient[i] = s;
  }
  return out;
}

NormalDist predictive_given_1(const KernelModel& model, const Dataset& data, const Point& x) {
  return ConditionedGp(model, data).predict(single_point(x));
}

NormalDist data_predictive(const KernelModel& model, const Dataset& data,
                           const PointSet& batch_points, const Vector& batch_noise_var) {
  if (batch_points.rows() == 0) throw ContractViolation("data predictive needs a non-empty batch");
  if (batch_noise_var.size() != batch_points.rows() * model.tasks()) {
    throw DimensionError("batch noise must have N2 * E entries");
  }
  NormalDist out = ConditionedGp(model, data).predict(batch_points);
  out.cov.diagonal() += batch_noise_var;
  return out;
}

NormalDist prediction_update(const NormalDist& pred1, const Point& x, const Dataset& data,
                             const ObservedBatch& batch, const KernelModel& model) {
  if (batch.points.rows() == 0) return pred1;
  const int e = model.tasks();
  const auto m = batch.points.rows() * e;
  if (batch.observations.size() != m || batch.noise_var.size() != m) {
    throw DimensionError("batch observations/noise must have N2 * E entries");
  }
  if (pred1.mean.size() != e || pred1.cov.rows() != e) throw DimensionError("pred1 is not E-dimensional");

  const ConditionedGp gp(model, data);
  const PointSet xs = single_point(x);
  Matrix a = assemble_cross_cov(xs, batch.points, model);   // K_x2
  Matrix q21 = assemble_cross_cov(batch.points, batch.points, model);
  q21.diagonal() += batch.noise_var;
  Vector p21 = stacked_mean(model.task_means, static_cast<int>(batch.points.rows()));
  if (gp.has_data()) {
    const Matrix k12 = assemble_cross_cov(data.points, batch.points, model);
    const Matrix k1x = assemble_cross_cov(data.points, xs, model);
    const Matrix u = gp.factor().solve(k12);
    a.noalias() -= k1x.transpose() * u;
    q21.noalias() -= k12.transpose() * u;
    p21.noalias() += k12.transpose() * gp.alpha();
  }
  const SpdFactor q21_factor(symmetrized(q21), "Q(2|1)");
  NormalDist out;
  out.mean = pred1.mean + a * q21_factor.solve(Vector(batch.observations - p21));
  const Matrix half = q21_factor.half_solve(a.transpose());
  out.cov = symmetrized(pred1.cov - half.transpose() * half);
  return out;
}

}  // namespace tad
