#include "tad/acquisition.hpp"

#include <cmath>

#include "tad/errors.hpp"
#include "tad/gram.hpp"

namespace tad {
namespace {

void check_batch_noise(const PointSet& batch, const Vector& noise, int tasks) {
  if (noise.size() != batch.rows() * tasks) {
    throw DimensionError("batch noise must have N2 * E entries");
  }
}

ConditionedGp conditioned(const AcquisitionInputs& in) {
  if (in.target_design.size() != in.model.tasks()) {
    throw DimensionError("target design length differs from task count");
  }
  return ConditionedGp(in.model, in.data);
}

std::string geometry(const PointSet& batch) {
  std::string s = "batch:";
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    s += " (";
    for (Eigen::Index d = 0; d < batch.cols(); ++d) {
      if (d) s += ",";
      s += std::to_string(batch(i, d));
    }
    s += ")";
  }
  return s;
}

}  // namespace

UpdateTerms update_terms(const ConditionedGp& gp, const Point& x, const PointSet& batch,
                         const Vector& batch_noise_var) {
  const KernelModel& model = gp.model();
  if (x.size() != model.dims()) throw DimensionError("target point has wrong dimension");
  if (batch.rows() > 0 && batch.cols() != model.dims()) {
    throw DimensionError("batch points have wrong dimension");
  }
  check_batch_noise(batch, batch_noise_var, model.tasks());

  const int e = model.tasks();
  const PointSet xs = single_point(x);
  UpdateTerms t;
  t.p_f1 = model.task_means;
  t.q_f1 = model.prior_block();
  if (gp.has_data()) {
    const PointSet& x1 = gp.data().points;
    t.k1x = assemble_cross_cov(x1, xs, model);
    t.v = gp.factor().solve(t.k1x);
    t.p_f1.noalias() += t.k1x.transpose() * gp.alpha();
    t.q_f1.noalias() -= t.k1x.transpose() * t.v;
    t.q_f1 = symmetrized(t.q_f1);
  }
  if (batch.rows() == 0) {
    t.T = Matrix::Zero(e, e);
    return t;
  }
  t.a = assemble_cross_cov(xs, batch, model);
  t.q21 = assemble_cross_cov(batch, batch, model);
  t.q21.diagonal() += batch_noise_var;
  t.p21 = stacked_mean(model.task_means, static_cast<int>(batch.rows()));
  if (gp.has_data()) {
    const PointSet& x1 = gp.data().points;
    t.k12 = assemble_cross_cov(x1, batch, model);
    t.u = gp.factor().solve(t.k12);
    t.a.noalias() -= t.k1x.transpose() * t.u;
    t.q21.noalias() -= t.k12.transpose() * t.u;
    t.p21.noalias() += t.k12.transpose() * gp.alpha();
  }
  t.q21 = symmetrized(t.q21);
  try {
    t.q21_factor = SpdFactor(t.q21, "Q(2|1)");
  } catch (const NumericalError&) {
    throw NumericalError("Q(2|1) is singular", geometry(batch));
  }
  t.b = t.q21_factor.solve(Matrix(t.a.transpose()));
  t.T = symmetrized(t.a * t.b);
  return t;
}

Matrix correction_term(const AcquisitionInputs& in) {
  const ConditionedGp gp = conditioned(in);
  return update_terms(gp, in.target_point, in.batch_points, in.batch_noise_var).T;
}

double predictive_log_likelihood(const NormalDist& pred, const Vector& target_design) {
  if (pred.mean.size() != target_design.size()) throw DimensionError("target design length");
  const SpdFactor f(pred.cov, "Q(f|1+2)");
  const Vector r = target_design - pred.mean;
  return -0.5 * f.log_det() - 0.5 * r.dot(f.solve(r));
}

double predictive_log_likelihood(const KernelModel& model, const Dataset& data,
                                 const PointSet& batch_points, const Vector& batch_obs,
                                 const Vector& batch_noise_var, const Point& x,
                                 const Vector& target_design) {
  const NormalDist pred1 = predictive_given_1(model, data, x);
  const NormalDist pred = prediction_update(pred1, x, data, {batch_points, batch_obs, batch_noise_var}, model);
  return predictive_log_likelihood(pred, target_design);
}

AcquisitionBreakdown evaluate_breakdown(const ConditionedGp& gp, const Point& x,
                                        const PointSet& batch, const Vector& batch_noise_var,
                                        const Vector& target_design) {
  if (target_design.size() != gp.tasks()) throw DimensionError("target design length");
  const UpdateTerms t = update_terms(gp, x, batch, batch_noise_var);
  AcquisitionBreakdown out;
  out.T = t.T;
  out.q_f1 = t.q_f1;
  out.p_f1 = t.p_f1;
  out.q_f12 = symmetrized(t.q_f1 - t.T);
  const SpdFactor f12(out.q_f12, "Q(f|1) - T");
  const SpdFactor f1(out.q_f1, "Q(f|1)");
  const Vector r = target_design - t.p_f1;
  out.log_det_term = -0.5 * f12.log_det();
  out.data_fit_term = -0.5 * r.dot(f12.solve(r));
  out.trace_term = -0.5 * (t.T * f12.inverse()).trace();
  out.total = out.log_det_term + out.data_fit_term + out.trace_term;
  out.eig_nats = 0.5 * (f1.log_det() - f12.log_det());
  return out;
}

AcquisitionBreakdown tad_acquisition(const AcquisitionInputs& in) {
  const ConditionedGp gp = conditioned(in);
  return evaluate_breakdown(gp, in.target_point, in.batch_points, in.batch_noise_var,
                            in.target_design);
}

double eig_compact(const Matrix& T, const Matrix& q_f1) {
  const SpdFactor f1(q_f1, "Q(f|1)");
  const Matrix m = Matrix::Identity(T.rows(), T.cols()) - T * f1.inverse();
  return -0.5 * std::log(m.determinant());
}

double eig_volume_ratio(const Matrix& q_f1, const Matrix& q_f12) {
  return 0.5 * (SpdFactor(q_f1, "Q(f|1)").log_det() - SpdFactor(q_f12, "Q(f|1+2)").log_det());
}

double expected_information_gain(const AcquisitionInputs& in) {
  const ConditionedGp gp = conditioned(in);
  const UpdateTerms t = update_terms(gp, in.target_point, in.batch_points, in.batch_noise_var);
  if (in.batch_points.rows() == 0) return 0.0;
  return eig_compact(t.T, t.q_f1);
}

double domain_penalty(const Point& x, const PointSet& batch, const Box& domain, double strength) {
  return domain_penalty_gradient(x, batch, domain, strength).value;
}

AcquisitionGradient domain_penalty_gradient(const Point& x, const PointSet& batch,
                                            const Box& domain, double strength) {
  if (x.size() != domain.dims() || (batch.rows() > 0 && batch.cols() != domain.dims())) {
    throw DimensionError("penalty arguments do not match the domain dimension");
  }
  AcquisitionGradient g;
  g.grad_x = Vector::Zero(x.size());
  g.grad_batch = Matrix::Zero(batch.rows(), domain.dims());
  auto add = [&](double c, int d, double& grad) {
    double out = 0.0;
    if (c < domain.lower[d]) out = c - domain.lower[d];
    if (c > domain.upper[d]) out = c - domain.upper[d];
    g.value -= strength * out * out;
    grad = -2.0 * strength * out;
  };
  for (int d = 0; d < domain.dims(); ++d) add(x[d], d, g.grad_x[d]);
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    for (int d = 0; d < domain.dims(); ++d) add(batch(i, d), d, g.grad_batch(i, d));
  }
  return g;
}

AcquisitionGradient acquisition_gradient(const ConditionedGp& gp, const Point& x,
                                         const PointSet& batch, const Vector& batch_noise_var,
                                         const Vector& target_design, AcquisitionKind kind) {
  if (target_design.size() != gp.tasks()) throw DimensionError("target design length");
  const KernelModel& model = gp.model();
  const int e = model.tasks();
  const UpdateTerms t = update_terms(gp, x, batch, batch_noise_var);
  const Matrix q12 = symmetrized(t.q_f1 - t.T);
  const SpdFactor f12(q12, "Q(f|1) - T");
  const Matrix s = f12.inverse();
  const Vector r = target_design - t.p_f1;
  const Vector sr = s * r;

  // dL = c^T dp1 + tr(G1 dQ1) + tr(G12 dQ12), with dQ12 = dQ1 - dT.
  AcquisitionGradient out;
  Vector c;
  Matrix g1;
  Matrix g12;
  if (kind == AcquisitionKind::tad) {
    out.value = -0.5 * f12.log_det() - 0.5 * r.dot(sr) - 0.5 * (t.T * s).trace();
    c = sr;
    g1 = -0.5 * s;
    g12 = -0.5 * s + 0.5 * sr * sr.transpose() + 0.5 * s * t.q_f1 * s;
  } else {
    const SpdFactor f1(t.q_f1, "Q(f|1)");
    out.value = 0.5 * (f1.log_det() - f12.log_det());
    c = Vector::Zero(e);
    g1 = 0.5 * f1.inverse();
    g12 = -0.5 * s;
  }
  g12 = symmetrized(g12);
  const Matrix gx = symmetrized(g1 + g12);

  out.grad_x = Vector::Zero(model.dims());
  out.grad_batch = Matrix::Zero(batch.rows(), model.dims());
  const PointSet xs = single_point(x);
  const bool has_batch = batch.rows() > 0;

  Matrix h;
  if (has_batch) {
    const Matrix adj_a = -2.0 * g12 * t.b.transpose();  // E x M
    h = symmetrized(t.b * g12 * t.b.transpose());        // M x M
    const PointGradients kx2 = cross_cov_pullback(xs, batch, model, adj_a, true, true);
    out.grad_x += kx2.wrt_a.row(0).transpose();
    out.grad_batch += kx2.wrt_b;
    const PointGradients k22 = cross_cov_pullback(batch, batch, model, h, true, true);
    out.grad_batch += k22.wrt_a + k22.wrt_b;
  }
  if (gp.has_data()) {
    const PointSet& x1 = gp.data().points;
    Matrix adj_k1x = gp.alpha() * c.transpose() - 2.0 * t.v * gx;
    if (has_batch) {
      adj_k1x.noalias() += 2.0 * t.u * t.b * g12;
      const Matrix adj_k12 = 2.0 * t.v * g12 * t.b.transpose() - 2.0 * t.u * h;
      out.grad_batch += cross_cov_pullback(x1, batch, model, adj_k12, false, true).wrt_b;
    }
    out.grad_x += cross_cov_pullback(x1, xs, model, adj_k1x, false, true).wrt_b.row(0).transpose();
  }
  return out;
}

TadEvaluator::TadEvaluator(std::shared_ptr<const ConditionedGp> gp, Vector target_design,
                           Vector task_noise_var)
    : gp_(std::move(gp)),
      target_design_(std::move(target_design)),
      task_noise_var_(std::move(task_noise_var)) {
  if (!gp_) throw ContractViolation("evaluator needs a conditioned GP");
  if (target_design_.size() != gp_->tasks() || task_noise_var_.size() != gp_->tasks()) {
    throw DimensionError("target design and noise must have E entries");
  }
}

AcquisitionBreakdown TadEvaluator::evaluate(const Point& x, const PointSet& batch) const {
  return evaluate_breakdown(*gp_, x, batch,
                            repeat_noise(task_noise_var_, static_cast<int>(batch.rows())),
                            target_design_);
}

AcquisitionGradient TadEvaluator::gradient(const Point& x, const PointSet& batch,
                                           AcquisitionKind kind) const {
  return acquisition_gradient(*gp_, x, batch,
                              repeat_noise(task_noise_var_, static_cast<int>(batch.rows())),
                              target_design_, kind);
}

}  // namespace tad
