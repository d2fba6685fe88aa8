#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tad/acquisition.hpp"
#include "tad/gp.hpp"

namespace tad {

struct OptimizerConfig {
  int max_iters = 500;
  double grad_tol = 1e-6;   // on |grad|_inf / max(1, |f|)
  double step_tol = 1e-9;
  int restarts = 4;
  double early_stop_p_low = 0.01;
  double early_stop_p_high = 0.99;
  double max_step = 1.0;    // cap on |step|_inf per line search

  void validate() const;
};

struct OptResult {
  Vector argmax;
  double value = 0.0;
  bool converged = false;
  int iters = 0;
  int restarts_used = 0;
  int evaluations = 0;
};

struct Evaluation {
  double value = 0.0;
  Vector grad;
  double aux = 0.0;  // free slot for the caller (e.g. a fit statistic)
};

// Objective plus gradient. Throwing NumericalError marks the point infeasible.
using ObjectiveFn = std::function<Evaluation(const Vector&)>;
// Returning true after an accepted iterate stops the run as converged.
using StopHook = std::function<bool(const Vector&, const Evaluation&)>;

// Quasi-Newton (BFGS) ascent with backtracking line search.
OptResult bfgs_maximize(const ObjectiveFn& f, const Vector& start, const OptimizerConfig& cfg,
                        const StopHook& stop = {});

// Runs bfgs_maximize from each start; the best value wins, ties go to the
// earliest start. Throws OptimizationFailure if every start is infeasible.
OptResult maximize_multistart(const ObjectiveFn& f, const std::vector<Vector>& starts,
                              const OptimizerConfig& cfg, const StopHook& stop = {});

struct GpFit {
  KernelModel model;
  OptResult result;
};

GpFit maximize_gp_hyperparams(const Dataset& data, const KernelModel& init,
                              const OptimizerConfig& cfg, std::uint64_t seed = 0);

struct TadProblem {
  const TadEvaluator* evaluator = nullptr;
  Box domain;
  double penalty_strength = 0.0;
};

struct TadSolution {
  Point x;
  PointSet batch;
  AcquisitionBreakdown breakdown;
  double penalty = 0.0;
  OptResult result;
};

Vector pack_design(const Point& x, const PointSet& batch);
void unpack_design(const Vector& p, int dims, Point& x, PointSet& batch);

// Maximizes L_TAD + L_X jointly over x and the batch. Start 0 is the given
// initializer; the remaining cfg.restarts starts draw x uniformly in the
// domain and carry the batch offsets along.
TadSolution maximize_tad(const TadProblem& problem, const Point& x_init,
                         const PointSet& batch_init, const OptimizerConfig& cfg,
                         std::uint64_t seed = 0);

// Max over coordinates of |analytic - numeric| / |numeric| using central
// differences with step 1e-5 (1 + |p_i|).
double gradient_check(const ObjectiveFn& f, const Vector& point);

}  // namespace tad
