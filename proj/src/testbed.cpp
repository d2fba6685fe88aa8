#include "tad/testbed.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

#include "tad/errors.hpp"
#include "tad/gram.hpp"
#include "tad/random.hpp"

namespace tad {
namespace {

struct Stacked {
  PointSet points;
  Vector observations;
  Vector noise_var;
};

Stacked stack(const Dataset& data, const ObservedBatch& batch) {
  Stacked s;
  const auto n1 = data.points.rows();
  const auto n2 = batch.points.rows();
  const auto d = n1 ? data.points.cols() : batch.points.cols();
  s.points.resize(n1 + n2, d);
  if (n1) s.points.topRows(n1) = data.points;
  if (n2) s.points.bottomRows(n2) = batch.points;
  s.observations.resize(data.observations.size() + batch.observations.size());
  s.observations << data.observations, batch.observations;
  s.noise_var.resize(data.noise_var.size() + batch.noise_var.size());
  s.noise_var << data.noise_var, batch.noise_var;
  return s;
}

double dense_log_density(const Vector& mean, const Matrix& cov, const Vector& at) {
  const Eigen::FullPivLU<Matrix> lu(cov);
  const Vector r = at - mean;
  return -0.5 * std::log(lu.determinant()) - 0.5 * r.dot(lu.solve(r));
}

}  // namespace

Vector eval_test_function(const Point& d) {
  if (d.size() != 2) throw DimensionError("test function takes a 2-D point");
  const double x = d[0];
  const double y = d[1];
  const double linear = 0.5 * (2.0 * x + y);
  const double v1 = 3.0 * (1.0 - x) * (1.0 - x) * std::exp(-x * x - (y + 1.0) * (y + 1.0)) -
                    10.0 * (x / 5.0 - x * x * x - std::pow(y, 5)) * std::exp(-x * x - y * y) -
                    3.0 * std::exp(-(x + 2.0) * (x + 2.0) - y * y) + linear;
  const double v2 = 3.0 * (1.0 + y) * (1.0 + y) * std::exp(-y * y - (x + 1.0) * (x + 1.0)) -
                    10.0 * (-y / 5.0 + y * y * y + std::pow(x, 5)) * std::exp(-x * x - y * y) -
                    3.0 * std::exp(-(2.0 - y) * (2.0 - y) - x * x) + linear;
  return Vector{{v1, v2}};
}

Box test_function_domain() { return Box::uniform(2, -3.0, 3.0); }

SimulatedOracle::SimulatedOracle(ResponseFn f, Vector noise_std, std::uint64_t seed)
    : f_(std::move(f)), noise_std_(std::move(noise_std)), seed_(seed) {
  if ((noise_std_.array() < 0.0).any()) throw ContractViolation("noise std must be >= 0");
}

Vector SimulatedOracle::observe(const PointSet& points, std::uint64_t request) {
  const auto e = noise_std_.size();
  auto rng = make_rng(seed_, kStreamOracle, request);
  Vector out(points.rows() * e);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const Vector v = f_(points.row(i).transpose());
    if (v.size() != e) throw DimensionError("response length differs from the noise vector");
    const Vector z = standard_normal(rng, e);
    out.segment(i * e, e) = v + noise_std_.cwiseProduct(z);
  }
  return out;
}

Vector simulated_oracle(const PointSet& points, const Vector& noise_std, std::uint64_t seed) {
  return SimulatedOracle(eval_test_function, noise_std, seed).observe(points, 0);
}

NormalDist joint_conditioning_oracle(const KernelModel& model, const Dataset& data,
                                     const PointSet& query, const ObservedBatch& batch) {
  const Stacked s = stack(data, batch);
  NormalDist out;
  out.mean = stacked_mean(model.task_means, static_cast<int>(query.rows()));
  out.cov = assemble_cross_cov(query, query, model);
  if (s.points.rows() == 0) return out;
  Matrix k = assemble_cross_cov(s.points, s.points, model);
  k.diagonal() += s.noise_var;
  const Matrix kqa = assemble_cross_cov(query, s.points, model);
  const Eigen::FullPivLU<Matrix> lu(k);
  const Vector resid = s.observations - stacked_mean(model.task_means, static_cast<int>(s.points.rows()));
  out.mean += kqa * lu.solve(resid);
  out.cov -= kqa * lu.solve(Matrix(kqa.transpose()));
  return out;
}

NormalDist joint_data_predictive(const KernelModel& model, const Dataset& data,
                                 const PointSet& batch_points, const Vector& batch_noise_var) {
  NormalDist out = joint_conditioning_oracle(model, data, batch_points, {});
  out.cov.diagonal() += batch_noise_var;
  return out;
}

McEstimate mc_expectation_oracle(const AcquisitionInputs& in, long n_samples, std::uint64_t seed) {
  const PointSet xs = single_point(in.target_point);
  McEstimate est;
  est.samples = n_samples;
  if (in.batch_points.rows() == 0) {
    const NormalDist pred = joint_conditioning_oracle(in.model, in.data, xs, {});
    est.mean = dense_log_density(pred.mean, pred.cov, in.target_design);
    return est;
  }
  if (n_samples < 2) throw ContractViolation("Monte-Carlo oracle needs at least two samples");

  // g2 | g1, and the fixed gain of f(x) | (g1, g2) from the joint system.
  const NormalDist pred21 = joint_data_predictive(in.model, in.data, in.batch_points, in.batch_noise_var);
  const Eigen::LLT<Matrix> sampler(pred21.cov);
  if (sampler.info() != Eigen::Success) throw NumericalError("g2|g1 covariance not positive definite");
  const Matrix l21 = sampler.matrixL();

  const ObservedBatch shape{in.batch_points, Vector::Zero(in.batch_noise_var.size()), in.batch_noise_var};
  const Stacked s = stack(in.data, shape);
  Matrix k = assemble_cross_cov(s.points, s.points, in.model);
  k.diagonal() += s.noise_var;
  const Matrix kxa = assemble_cross_cov(xs, s.points, in.model);
  const Eigen::FullPivLU<Matrix> lu(k);
  const Matrix gain = lu.solve(Matrix(kxa.transpose())).transpose();  // E x (N1 + N2) E
  const Matrix cov = assemble_cross_cov(xs, xs, in.model) - gain * kxa.transpose();
  const Eigen::FullPivLU<Matrix> cov_lu(cov);
  const Matrix cov_inv = cov_lu.inverse();
  const double half_log_det = 0.5 * std::log(cov_lu.determinant());

  const auto n1e = in.data.observations.size();
  const Vector mean_all = stacked_mean(in.model.task_means, static_cast<int>(s.points.rows()));
  Vector base = in.model.task_means;
  if (n1e) base += gain.leftCols(n1e) * (in.data.observations - mean_all.head(n1e));
  const Matrix gain2 = gain.rightCols(pred21.mean.size());
  const Vector offset = base + gain2 * (pred21.mean - mean_all.tail(pred21.mean.size()));
  const Matrix noise_map = gain2 * l21;

  auto rng = make_rng(seed, kStreamOracle, 0);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (long i = 0; i < n_samples; ++i) {
    const Vector z = standard_normal(rng, l21.cols());
    const Vector r = in.target_design - (offset + noise_map * z);
    const double v = -half_log_det - 0.5 * r.dot(cov_inv * r);
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(n_samples);
  est.mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * est.mean * est.mean) / (n - 1.0));
  est.std_error = std::sqrt(var / n);
  return est;
}

std::vector<RedundancyRow> redundancy_limit_oracle(const KernelModel& model, const Dataset& data,
                                                   const Point& x, const PointSet& fresh,
                                                   const std::vector<int>& duplicates,
                                                   const std::vector<double>& eps_ladder) {
  if ((data.noise_var.array() != 0.0).any()) throw ContractViolation("data must be noise-free");
  const int e = model.tasks();
  const PointSet xs = single_point(x);
  const auto nf = fresh.rows();
  PointSet batch(nf + static_cast<Eigen::Index>(duplicates.size()), model.dims());
  if (nf) batch.topRows(nf) = fresh;
  for (size_t k = 0; k < duplicates.size(); ++k) {
    const int idx = duplicates[k];
    if (idx < 0 || idx >= data.size()) throw ContractViolation("duplicate index out of range");
    batch.row(nf + static_cast<Eigen::Index>(k)) = data.points.row(idx);
  }

  ObservedBatch reference_batch{fresh, Vector::Zero(nf * e), Vector::Zero(nf * e)};
  const Matrix reference = joint_conditioning_oracle(model, data, xs, reference_batch).cov;
  const ConditionedGp gp(model, data);

  std::vector<RedundancyRow> rows;
  for (const double eps : eps_ladder) {
    const UpdateTerms t = update_terms(gp, x, batch, Vector::Constant(batch.rows() * e, eps));
    RedundancyRow row;
    row.eps = eps;
    row.discrepancy = (t.q_f1 - t.T - reference).norm();
    row.reference_norm = reference.norm();
    rows.push_back(row);
  }
  return rows;
}

KsResult ks_uniform_test(std::vector<double> samples) {
  if (samples.empty()) throw ContractViolation("KS test needs samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const double u = std::clamp(samples[i], 0.0, 1.0);
    d = std::max({d, (i + 1) / n - u, u - i / n});
  }
  KsResult r;
  r.statistic = d;
  const double sn = std::sqrt(n);
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    p += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  r.p_value = std::clamp(p, 0.0, 1.0);
  if (lambda < 0.3) r.p_value = 1.0;  // the alternating series is useless this close to 0
  return r;
}

GridMax grid_search(const std::function<double(const Point&)>& f, const Box& box, int per_dim) {
  box.validate();
  if (per_dim < 2) throw ContractViolation("grid needs at least two nodes per dimension");
  const int dims = box.dims();
  std::vector<int> idx(dims, 0);
  GridMax best;
  bool have = false;
  while (true) {
    Point p(dims);
    for (int d = 0; d < dims; ++d) {
      p[d] = box.lower[d] + (box.upper[d] - box.lower[d]) * idx[d] / (per_dim - 1);
    }
    const double v = f(p);
    if (!have || v > best.value) {
      best = {p, v};
      have = true;
    }
    int d = 0;
    while (d < dims && ++idx[d] == per_dim) idx[d++] = 0;
    if (d == dims) break;
  }
  return best;
}

}  // namespace tad
