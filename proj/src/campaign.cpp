#include "tad/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <Eigen/Cholesky>

#include "tad/errors.hpp"
#include "tad/random.hpp"

namespace tad {
namespace {

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return make_rng(seed, stream, index)();
}

Vector sample_normal(std::mt19937_64& rng, const Point& mean, const Matrix& chol) {
  return mean + chol * standard_normal(rng, mean.size());
}

KernelModel default_model(const CampaignSettings& s, const Dataset& data) {
  const int e = s.spec.tasks();
  Vector means = Vector::Zero(e);
  double var = 0.0;
  const int n = data.size();
  for (int i = 0; i < n; ++i) means += data.observations.segment(i * e, e);
  means /= std::max(n, 1);
  for (int i = 0; i < n; ++i) var += (data.observations.segment(i * e, e) - means).squaredNorm();
  var = std::max(var / std::max(n * e, 1), 1e-2);
  const double ls = 0.25 * s.spec.domain.width().mean();
  return KernelModel::isotropic(s.spec.dims(), e, s.initial_components, ls, var, means);
}

// Moves any point that (nearly) coincides with data or with an earlier
// proposed point by an epsilon-sized jitter.
void separate_duplicates(PointSet& pts, const Dataset& data, const CampaignSettings& s,
                         std::uint64_t key) {
  const double tol = s.policy.duplicate_tol * s.spec.domain.width().maxCoeff();
  auto rng = make_rng(s.seed, kStreamDuplicate, key);
  auto clashes = [&](Eigen::Index i) {
    for (int k = 0; k < data.size(); ++k) {
      if ((pts.row(i) - data.points.row(k)).norm() <= tol) return true;
    }
    for (Eigen::Index k = 0; k < i; ++k) {
      if ((pts.row(i) - pts.row(k)).norm() <= tol) return true;
    }
    return false;
  };
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    for (int attempt = 0; attempt < 20 && clashes(i); ++attempt) {
      const Point moved = pts.row(i).transpose() + s.policy.perturb_scale * standard_normal(rng, pts.cols());
      pts.row(i) = s.spec.domain.clip(moved).transpose();
    }
  }
}

PointSet with_target(const PointSet& batch, const Point& x) {
  PointSet out(batch.rows() + 1, x.size());
  if (batch.rows()) out.topRows(batch.rows()) = batch;
  out.row(batch.rows()) = x.transpose();
  return out;
}

void open_request(CampaignState& st, PendingKind kind, PointSet points) {
  st.pending.kind = kind;
  st.pending.points = std::move(points);
  st.pending.request = st.next_request++;
}

void close_pass(CampaignState& st, PassKind kind, bool checked, int added) {
  IterationRecord r;
  r.iter = st.iter;
  r.pass = st.pass;
  r.kind = kind;
  r.components = st.model.size();
  r.x = st.x;
  r.batch = st.batch;
  const auto& b = st.current.breakdown;
  r.log_det_term = b.log_det_term;
  r.data_fit_term = b.data_fit_term;
  r.trace_term = b.trace_term;
  r.total = b.total;
  r.eig = b.eig_nats;
  r.convergence_checked = checked;
  r.validation = st.current.validation;
  r.training = st.current.training;
  r.gp_log_likelihood = st.current.gp_log_likelihood;
  r.ub = st.current.ub;
  r.eig_counter = st.eig_counter;
  r.samples_added = added;
  r.total_samples = st.total_samples();
  r.outcome = st.outcome;
  st.history.push_back(std::move(r));
  st.pending = PendingRequest{};
}

void begin_pass(CampaignState& st) {
  const CampaignSettings& s = st.settings;
  ++st.pass;
  if (!st.check_model) {
    ++st.iter;
    KernelModel init = st.model_fitted ? st.model : default_model(s, st.data);
    while (init.size() < st.components) init = with_extra_component(init);
    const GpFit fit = maximize_gp_hyperparams(st.data, init, s.gp_opt,
                                              derived_seed(s.seed, kStreamGpRestart, st.pass));
    st.model = fit.model;
    st.model_fitted = true;
  }
  auto gp = std::make_shared<const ConditionedGp>(st.model, st.data);
  st.current = PassState{};
  st.current.gp_log_likelihood = gp->log_likelihood();
  if (st.data.size() * s.spec.tasks() > s.spec.tasks()) st.current.training = training_fit(*gp);

  st.current.x_prev = st.x;
  st.current.batch_prev = st.batch;
  auto rng = make_rng(s.seed, kStreamPerturb, static_cast<std::uint64_t>(st.pass));
  const Initializer init = perturbed_init(st.x, st.batch, st.perturb, s.policy, rng);
  Initializer start{s.spec.domain.clip(init.x), s.spec.domain.clip(init.batch)};

  const TadEvaluator ev(gp, s.spec.target_design, s.noise_var);
  const TadProblem problem{&ev, s.spec.domain, s.effective_penalty()};
  const TadSolution sol = maximize_tad(problem, start.x, start.batch, s.tad_opt,
                                      derived_seed(s.seed, kStreamTadRestart, st.pass));

  st.x = s.spec.domain.clip(sol.x);
  PointSet proposal = with_target(s.spec.domain.clip(sol.batch), st.x);
  separate_duplicates(proposal, st.data, s, static_cast<std::uint64_t>(st.pass));
  st.batch = proposal.topRows(proposal.rows() - 1);
  st.x = proposal.row(proposal.rows() - 1).transpose();

  const Vector batch_noise = repeat_noise(s.noise_var, static_cast<int>(st.batch.rows()));
  st.current.breakdown = ev.evaluate(st.x, st.batch);
  st.current.ub = compute_ub(*gp, st.x, st.batch, batch_noise);
  st.current.batch_predictive = gp->predict_data(st.batch, s.noise_var);
  open_request(st, PendingKind::batch, st.batch);
}

void finish_initial(CampaignState& st, const Vector& obs) {
  // The initial batch is merged into the "1" data along with the design.
  st.data.append(st.pending.points, obs, st.settings.noise_var);
  st.pending = PendingRequest{};
}

void ingest_batch(CampaignState& st, const Vector& g2) {
  const CampaignSettings& s = st.settings;
  st.current.validation = batch_validation(st.current.batch_predictive, g2);
  st.current.batch_observations = g2;
  if (st.current.validation.p_value > s.validation_threshold) {
    st.check_model = false;
    st.n_check = 0;
    st.outcome = check_convergence(st.current.ub, st.current.breakdown.eig_nats, s.spec, s.conv,
                                   st.eig_counter);
    if (st.outcome != Outcome::running) {
      // Converged: the pass ends here and the target sample is not requested.
      st.data.append(st.batch, g2, s.noise_var);
      close_pass(st, PassKind::accepted, true, static_cast<int>(st.batch.rows()));
      return;
    }
    open_request(st, PendingKind::target, single_point(st.x));
    return;
  }
  ++st.n_check;
  if (st.n_check == 2) {
    st.components += 1;
    st.data.append(st.batch, g2, s.noise_var);
    const auto added = static_cast<int>(st.batch.rows());
    close_pass(st, PassKind::confirmed, false, added);
    st.x = st.current.x_prev;
    st.batch = st.current.batch_prev;
    st.perturb = false;
    st.n_check = 0;
    st.check_model = false;
    return;
  }
  st.check_model = true;
  open_request(st, PendingKind::target, single_point(st.x));
}

void ingest_target(CampaignState& st, const Vector& g) {
  const CampaignSettings& s = st.settings;
  const bool alert = st.check_model;
  Vector obs(st.current.batch_observations.size() + g.size());
  obs << st.current.batch_observations, g;
  st.data.append(with_target(st.batch, st.x), obs, s.noise_var);
  st.perturb = true;
  close_pass(st, alert ? PassKind::alert : PassKind::accepted, !alert,
             static_cast<int>(st.batch.rows()) + 1);
}

}  // namespace

void ProblemSpec::validate() const {
  domain.validate();
  if (target_design.size() < 1) throw DimensionError("target design is empty");
  if (tolerance.size() != target_design.size()) throw DimensionError("tolerance length differs from target");
  if (!(tolerance.array() > 0.0).all()) throw ContractViolation("tolerances must be positive");
  if (!target_design.allFinite()) throw ContractViolation("target design must be finite");
}

void ConvergenceConfig::validate() const {
  if (!(eig_threshold > 0.0)) throw ContractViolation("eig_threshold must be positive");
  if (eig_patience < 1) throw ContractViolation("eig_patience must be >= 1");
}

bool UncertaintyBox::inside(const ProblemSpec& spec) const {
  const Vector lo = spec.ttr_lower();
  const Vector hi = spec.ttr_upper();
  for (Eigen::Index i = 0; i < center.size(); ++i) {
    if (!(center[i] - half_widths[i] >= lo[i] && center[i] + half_widths[i] <= hi[i])) return false;
  }
  return true;
}

void InitializationPolicy::validate() const {
  if (!(cluster_scale > 0.0) || !(perturb_scale > 0.0)) {
    throw ContractViolation("cluster_scale and perturb_scale must be positive");
  }
  if (!(ridge >= 0.0) || !(duplicate_tol >= 0.0)) throw ContractViolation("ridge and duplicate_tol must be >= 0");
}

CampaignSettings CampaignSettings::defaults(const ProblemSpec& spec, const Vector& noise_var) {
  CampaignSettings s;
  s.spec = spec;
  s.noise_var = noise_var;
  s.gp_opt.restarts = 2;
  s.gp_opt.max_iters = 200;
  s.tad_opt.restarts = 4;
  s.tad_opt.max_iters = 300;
  return s;
}

double CampaignSettings::effective_penalty() const {
  return penalty_strength < 0.0 ? 10.0 * spec.tasks() : penalty_strength;
}

void CampaignSettings::validate() const {
  spec.validate();
  conv.validate();
  policy.validate();
  gp_opt.validate();
  tad_opt.validate();
  if (noise_var.size() != spec.tasks()) throw DimensionError("noise_var length differs from the task count");
  if (!(noise_var.array() > 0.0).all()) throw ContractViolation("noise variances must be positive");
  if (batch_size < 1) throw ContractViolation("batch_size must be >= 1");
  if (initial_components < 1) throw ContractViolation("initial_components must be >= 1");
  if (!(validation_threshold > 0.0 && validation_threshold < 1.0)) {
    throw ContractViolation("validation_threshold must lie in (0, 1)");
  }
}

std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::running: return "running";
    case Outcome::success: return "success";
    case Outcome::failure: return "failure";
  }
  return "?";
}

std::string to_string(PendingKind k) {
  switch (k) {
    case PendingKind::none: return "none";
    case PendingKind::initial: return "initial";
    case PendingKind::batch: return "batch";
    case PendingKind::target: return "target";
  }
  return "?";
}

std::string to_string(PassKind k) {
  switch (k) {
    case PassKind::accepted: return "accepted";
    case PassKind::alert: return "alert";
    case PassKind::confirmed: return "confirmed";
  }
  return "?";
}

Outcome outcome_from_string(const std::string& s) {
  for (auto o : {Outcome::running, Outcome::success, Outcome::failure}) {
    if (to_string(o) == s) return o;
  }
  throw ContractViolation("unknown outcome '" + s + "'");
}

PendingKind pending_kind_from_string(const std::string& s) {
  for (auto k : {PendingKind::none, PendingKind::initial, PendingKind::batch, PendingKind::target}) {
    if (to_string(k) == s) return k;
  }
  throw ContractViolation("unknown pending kind '" + s + "'");
}

PassKind pass_kind_from_string(const std::string& s) {
  for (auto k : {PassKind::accepted, PassKind::alert, PassKind::confirmed}) {
    if (to_string(k) == s) return k;
  }
  throw ContractViolation("unknown pass kind '" + s + "'");
}

PointSet initial_design_near(const Point& center, int n, double spread, const Box& domain,
                             std::uint64_t seed) {
  if (n < 1) throw ContractViolation("initial design needs at least one point");
  auto rng = make_rng(seed, kStreamInitialDesign, 0);
  PointSet pts(n, center.size());
  for (int i = 0; i < n; ++i) pts.row(i) = (center + spread * standard_normal(rng, center.size())).transpose();
  return domain.clip(pts);
}

CampaignState initialize_campaign(const CampaignSettings& settings, const PointSet& init_points,
                                  const Vector& init_observations, const Point& x0) {
  settings.validate();
  const int d = settings.spec.dims();
  const int e = settings.spec.tasks();
  if (init_points.rows() < 1) throw ContractViolation("initial design is empty");
  if (init_points.cols() != d || x0.size() != d) throw DimensionError("initial design dimension");
  if (!settings.spec.domain.contains(x0)) throw ContractViolation("x0 lies outside the domain");
  const bool observed = init_observations.size() > 0;
  if (observed && init_observations.size() != init_points.rows() * e) {
    throw DimensionError("initial observations must have N1 * E entries");
  }

  CampaignState st;
  st.settings = settings;
  st.components = settings.initial_components;
  st.data = Dataset::empty(d, e);
  if (observed) st.data.append(init_points, init_observations, settings.noise_var);
  st.x = x0;

  auto rng = make_rng(settings.seed, kStreamInitialBatch, 0);
  PointSet batch(settings.batch_size, d);
  for (int l = 0; l < settings.batch_size; ++l) {
    batch.row(l) = (x0 + settings.policy.cluster_scale * standard_normal(rng, d)).transpose();
  }
  batch = settings.spec.domain.clip(batch);
  Dataset known = st.data;
  if (!observed) known.append(init_points, Vector::Zero(init_points.rows() * e), settings.noise_var);
  separate_duplicates(batch, known, settings, 0);
  st.batch = batch;

  PointSet request = observed ? batch : PointSet(init_points.rows() + batch.rows(), d);
  if (!observed) request << init_points, batch;
  st.initial_design_size = observed ? 0 : static_cast<int>(init_points.rows());
  open_request(st, PendingKind::initial, request);
  return st;
}

Initializer perturbed_init(const Point& x_prev, const PointSet& batch_prev, bool perturb,
                           const InitializationPolicy& policy, std::mt19937_64& rng) {
  if (!perturb) return {x_prev, batch_prev};
  if (batch_prev.rows() < 1) throw ContractViolation("perturbed initialization needs a batch");
  const auto d = x_prev.size();
  const Matrix eps_chol = policy.perturb_scale * Matrix::Identity(d, d);
  Matrix scatter = Matrix::Zero(d, d);
  for (Eigen::Index l = 0; l < batch_prev.rows(); ++l) {
    const Vector r = batch_prev.row(l).transpose() - x_prev;
    scatter += r * r.transpose();
  }
  scatter /= static_cast<double>(batch_prev.rows());
  scatter.diagonal().array() += policy.ridge;
  const Eigen::LLT<Matrix> llt(scatter);
  if (llt.info() != Eigen::Success) throw NumericalError("batch scatter not positive definite");
  const Matrix s_chol = llt.matrixL();

  Initializer out;
  out.x = sample_normal(rng, x_prev, eps_chol);
  out.batch.resize(batch_prev.rows(), d);
  out.batch.row(0) = sample_normal(rng, x_prev, eps_chol).transpose();
  for (Eigen::Index l = 1; l < batch_prev.rows(); ++l) {
    out.batch.row(l) = sample_normal(rng, x_prev, s_chol).transpose();
  }
  return out;
}

UncertaintyBox compute_ub(const ConditionedGp& gp, const Point& x, const PointSet& batch,
                          const Vector& batch_noise_var) {
  UncertaintyBox ub;
  if (batch.rows() == 0) {
    const NormalDist p = gp.predict(single_point(x));
    ub.center = p.mean;
    ub.half_widths = p.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    return ub;
  }
  const UpdateTerms t = update_terms(gp, x, batch, batch_noise_var);
  ub.center = t.p_f1;
  ub.half_widths = (t.q_f1 - t.T).diagonal().cwiseMax(0.0).cwiseSqrt();
  return ub;
}

Outcome check_convergence(const UncertaintyBox& ub, double eig, const ProblemSpec& spec,
                          const ConvergenceConfig& conv, int& eig_counter) {
  if (ub.inside(spec)) return Outcome::success;
  if (eig < conv.eig_threshold) {
    ++eig_counter;
  } else {
    eig_counter = 0;
  }
  return eig_counter > conv.eig_patience ? Outcome::failure : Outcome::running;
}

const PendingRequest& propose(CampaignState& state) {
  if (state.converged()) throw ContractViolation("campaign has already converged");
  if (state.pending.kind == PendingKind::none) begin_pass(state);
  return state.pending;
}

void ingest(CampaignState& state, const Vector& observations) {
  if (state.pending.kind == PendingKind::none) throw ContractViolation("no pending request");
  const auto expected = state.pending.points.rows() * state.settings.spec.tasks();
  if (observations.size() != expected) {
    throw DimensionError("expected " + std::to_string(expected) + " observations, got " +
                         std::to_string(observations.size()));
  }
  if (!observations.allFinite()) throw ContractViolation("observations must be finite");
  switch (state.pending.kind) {
    case PendingKind::initial: finish_initial(state, observations); break;
    case PendingKind::batch: ingest_batch(state, observations); break;
    case PendingKind::target: ingest_target(state, observations); break;
    case PendingKind::none: break;
  }
}

void step(CampaignState& state, Oracle* oracle) {
  if (state.converged()) throw ContractViolation("campaign has already converged");
  const auto passes = state.history.size();
  while (!state.converged() && state.history.size() == passes) {
    const PendingRequest& req = propose(state);
    if (!oracle) throw AwaitingObservations("pending " + to_string(req.kind) + " request needs observations");
    ingest(state, oracle->observe(req.points, req.request));
  }
}

RunStatus run(CampaignState& state, Oracle& oracle, int max_iters) {
  while (!state.converged()) {
    // A pass that would start a new iteration past the budget is not begun.
    const bool new_iter = state.pending.kind == PendingKind::none && !state.check_model;
    if (new_iter && state.iter >= max_iters) break;
    if (state.pending.kind == PendingKind::initial) {
      ingest(state, oracle.observe(state.pending.points, state.pending.request));
      continue;
    }
    step(state, &oracle);
  }
  return {state.outcome, !state.converged()};
}

}  // namespace tad
