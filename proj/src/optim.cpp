#include "tad/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tad/errors.hpp"
#include "tad/random.hpp"
#include "tad/validation.hpp"

namespace tad {
namespace {

double inf_norm(const Vector& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

bool gradient_small(const Evaluation& e, double tol) {
  return inf_norm(e.grad) <= tol * std::max(1.0, std::fabs(e.value));
}

// Evaluates f; false when the point is infeasible or non-finite.
bool try_eval(const ObjectiveFn& f, const Vector& p, Evaluation& out) {
  try {
    out = f(p);
  } catch (const NumericalError&) {
    return false;
  }
  return std::isfinite(out.value) && out.grad.allFinite();
}

// Parameter ranges outside of which the likelihood is treated as infeasible.
void check_hyper_range(const Vector& p, int dims, int tasks, int components) {
  int k = tasks;
  auto bad = [](double v, double lim) { return !(std::fabs(v) <= lim); };
  for (int i = 0; i < tasks; ++i) {
    if (bad(p[i], 1e6)) throw NumericalError("task mean out of range");
  }
  for (int l = 0; l < components; ++l) {
    if (bad(p[k++], 20.0)) throw NumericalError("log signal variance out of range");
    for (int d = 0; d < dims; ++d) {
      if (bad(p[k++], 10.0)) throw NumericalError("log lengthscale out of range");
    }
    for (int i = 0; i < tasks; ++i) {
      for (int j = 0; j <= i; ++j) {
        if (bad(p[k++], i == j ? 15.0 : 1e4)) throw NumericalError("task factor out of range");
      }
    }
  }
}

}  // namespace

void OptimizerConfig::validate() const {
  if (max_iters < 0) throw ContractViolation("max_iters must be >= 0");
  if (!(grad_tol > 0.0) || !(step_tol > 0.0) || !(max_step > 0.0)) {
    throw ContractViolation("optimizer tolerances must be positive");
  }
  if (restarts < 0) throw ContractViolation("restarts must be >= 0");
  if (!(early_stop_p_low >= 0.0 && early_stop_p_low <= early_stop_p_high &&
        early_stop_p_high <= 1.0)) {
    throw ContractViolation("early-stop band must lie within [0, 1]");
  }
}

OptResult bfgs_maximize(const ObjectiveFn& f, const Vector& start, const OptimizerConfig& cfg,
                        const StopHook& stop) {
  const auto n = start.size();
  OptResult res;
  Evaluation cur;
  if (!try_eval(f, start, cur)) throw NumericalError("objective infeasible at the start point");
  res.evaluations = 1;
  Vector x = start;
  res.argmax = x;
  res.value = cur.value;
  if (gradient_small(cur, cfg.grad_tol) || (stop && stop(x, cur))) {
    res.converged = true;
    return res;
  }

  Matrix h = Matrix::Identity(n, n);
  bool fresh = true;
  int iter = 0;
  while (iter < cfg.max_iters) {
    Vector d = h * cur.grad;
    if (!(cur.grad.dot(d) > 0.0)) {
      h.setIdentity();
      fresh = true;
      d = cur.grad;
    }
    const double slope = cur.grad.dot(d);
    double t = std::min(1.0, cfg.max_step / inf_norm(d));
    const double step_floor = cfg.step_tol * (1.0 + inf_norm(x));
    Evaluation next;
    Vector xn;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      xn = x + t * d;
      const bool ok = try_eval(f, xn, next);
      ++res.evaluations;
      if (ok && next.value >= cur.value + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
      if (t * inf_norm(d) < step_floor) break;
    }
    if (!accepted) {
      if (!fresh) {
        h.setIdentity();
        fresh = true;
        continue;
      }
      break;
    }
    ++iter;
    const Vector s = xn - x;
    const Vector y = cur.grad - next.grad;  // gradient change of -f
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) h = Matrix::Identity(n, n) * (sy / y.squaredNorm());
      const double rho = 1.0 / sy;
      const Vector hy = h * y;
      h += rho * rho * (y.dot(hy) + sy) * s * s.transpose() -
           rho * (hy * s.transpose() + s * hy.transpose());
      fresh = false;
    }
    x = xn;
    cur = next;
    res.argmax = x;
    res.value = cur.value;
    if (gradient_small(cur, cfg.grad_tol) || (stop && stop(x, cur)) ||
        inf_norm(s) < step_floor) {
      res.converged = true;
      break;
    }
  }
  res.iters = iter;
  return res;
}

OptResult maximize_multistart(const ObjectiveFn& f, const std::vector<Vector>& starts,
                              const OptimizerConfig& cfg, const StopHook& stop) {
  cfg.validate();
  OptResult best;
  bool have = false;
  int evaluations = 0;
  std::string last_error = "no start points";
  for (const auto& s : starts) {
    OptResult r;
    try {
      r = bfgs_maximize(f, s, cfg, stop);
    } catch (const NumericalError& e) {
      ++evaluations;
      last_error = e.what();
      continue;
    }
    evaluations += r.evaluations;
    if (!have || r.value > best.value) {
      best = r;
      have = true;
    }
  }
  if (!have) {
    throw OptimizationFailure("all " + std::to_string(starts.size()) +
                              " starts infeasible; last: " + last_error);
  }
  best.restarts_used = static_cast<int>(starts.size());
  best.evaluations = evaluations;
  return best;
}

GpFit maximize_gp_hyperparams(const Dataset& data, const KernelModel& init,
                              const OptimizerConfig& cfg, std::uint64_t seed) {
  if (data.size() == 0) throw ContractViolation("hyperparameter fit needs data");
  init.validate();
  const int dims = init.dims();
  const int tasks = init.tasks();
  const int comps = init.size();
  const int dof = data.size() * tasks - tasks;

  const ObjectiveFn f = [&](const Vector& p) {
    check_hyper_range(p, dims, tasks, comps);
    const auto lg = marginal_log_likelihood_gradient(KernelModel::unpack(p, dims, tasks, comps), data);
    return Evaluation{lg.value, lg.gradient, lg.quadratic_form};
  };
  StopHook stop;
  if (dof >= 1) {
    stop = [&](const Vector&, const Evaluation& e) {
      const double p = chi2_right_tail(std::max(e.aux, 0.0), dof);
      return p >= cfg.early_stop_p_low && p <= cfg.early_stop_p_high &&
             gradient_small(e, 10.0 * cfg.grad_tol);
    };
  }

  std::vector<Vector> starts{init.pack()};
  for (int k = 1; k <= cfg.restarts; ++k) {
    auto rng = make_rng(seed, kStreamGpRestart, static_cast<std::uint64_t>(k));
    Vector p = starts.front();
    p.tail(p.size() - tasks) += 0.5 * standard_normal(rng, p.size() - tasks);
    starts.push_back(std::move(p));
  }
  GpFit fit;
  fit.result = maximize_multistart(f, starts, cfg, stop);
  fit.model = KernelModel::unpack(fit.result.argmax, dims, tasks, comps);
  return fit;
}

Vector pack_design(const Point& x, const PointSet& batch) {
  Vector p(x.size() * (1 + batch.rows()));
  p.head(x.size()) = x;
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    p.segment(x.size() * (1 + i), x.size()) = batch.row(i).transpose();
  }
  return p;
}

void unpack_design(const Vector& p, int dims, Point& x, PointSet& batch) {
  if (dims <= 0 || p.size() % dims != 0) throw DimensionError("design vector length");
  const auto m = p.size() / dims - 1;
  x = p.head(dims);
  batch.resize(m, dims);
  for (Eigen::Index i = 0; i < m; ++i) batch.row(i) = p.segment(dims * (1 + i), dims).transpose();
}

TadSolution maximize_tad(const TadProblem& problem, const Point& x_init,
                         const PointSet& batch_init, const OptimizerConfig& cfg,
                         std::uint64_t seed) {
  if (!problem.evaluator) throw ContractViolation("TAD problem has no evaluator");
  const TadEvaluator& ev = *problem.evaluator;
  const int dims = ev.gp().dims();
  const Box& box = problem.domain;
  box.validate();
  if (x_init.size() != dims || box.dims() != dims || (batch_init.rows() && batch_init.cols() != dims)) {
    throw DimensionError("TAD initializer does not match the control dimension");
  }

  const ObjectiveFn f = [&](const Vector& p) {
    Point x;
    PointSet batch;
    unpack_design(p, dims, x, batch);
    const auto a = ev.gradient(x, batch, AcquisitionKind::tad);
    const auto pen = domain_penalty_gradient(x, batch, box, problem.penalty_strength);
    Evaluation e;
    e.value = a.value + pen.value;
    Point gx = a.grad_x + pen.grad_x;
    PointSet gb = a.grad_batch + pen.grad_batch;
    e.grad = pack_design(gx, gb);
    return e;
  };

  std::vector<Vector> starts{pack_design(x_init, batch_init)};
  const Vector width = box.width();
  for (int k = 1; k <= cfg.restarts; ++k) {
    auto rng = make_rng(seed, kStreamTadRestart, static_cast<std::uint64_t>(k));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Point x(dims);
    for (int d = 0; d < dims; ++d) x[d] = box.lower[d] + unit(rng) * width[d];
    PointSet batch = batch_init;
    for (Eigen::Index i = 0; i < batch.rows(); ++i) {
      batch.row(i) += (x - x_init).transpose();
    }
    starts.push_back(pack_design(x, box.clip(batch)));
  }

  TadSolution sol;
  sol.result = maximize_multistart(f, starts, cfg);
  unpack_design(sol.result.argmax, dims, sol.x, sol.batch);
  sol.breakdown = ev.evaluate(sol.x, sol.batch);
  sol.penalty = domain_penalty(sol.x, sol.batch, box, problem.penalty_strength);
  return sol;
}

double gradient_check(const ObjectiveFn& f, const Vector& point) {
  const Evaluation base = f(point);
  if (!std::isfinite(base.value) || !base.grad.allFinite()) {
    throw ContractViolation("objective is not finite at the check point");
  }
  if (base.grad.size() != point.size()) throw DimensionError("gradient length differs from point");
  Vector numeric(point.size());
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double h = 1e-5 * (1.0 + std::fabs(point[i]));
    Vector lo = point;
    Vector hi = point;
    lo[i] -= h;
    hi[i] += h;
    const double fl = f(lo).value;
    const double fh = f(hi).value;
    if (!std::isfinite(fl) || !std::isfinite(fh)) {
      throw ContractViolation("objective is not finite near the check point");
    }
    numeric[i] = (fh - fl) / (2.0 * h);
  }
  const double floor = 1e-6 * std::max(1.0, inf_norm(numeric));
  double worst = 0.0;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double err = std::fabs(base.grad[i] - numeric[i]) / std::max(std::fabs(numeric[i]), floor);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace tad
