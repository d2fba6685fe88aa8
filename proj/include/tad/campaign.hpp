#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tad/acquisition.hpp"
#include "tad/box.hpp"
#include "tad/gp.hpp"
#include "tad/optim.hpp"
#include "tad/oracle.hpp"
#include "tad/validation.hpp"

namespace tad {

struct ProblemSpec {
  Box domain;
  Vector target_design;  // f_T
  Vector tolerance;      // tau, > 0

  int dims() const { return domain.dims(); }
  int tasks() const { return static_cast<int>(target_design.size()); }
  Vector ttr_lower() const { return target_design - tolerance; }
  Vector ttr_upper() const { return target_design + tolerance; }
  void validate() const;
};

struct ConvergenceConfig {
  double eig_threshold = 1e-3;  // I_0, nats
  int eig_patience = 50;        // N_I
  void validate() const;
};

struct UncertaintyBox {
  Vector center;
  Vector half_widths;

  // Every [c_i - h_i, c_i + h_i] lies inside [f_Ti - tau_i, f_Ti + tau_i].
  bool inside(const ProblemSpec& spec) const;
};

struct InitializationPolicy {
  double cluster_scale = 0.3;   // sigma of the initial batch around x0
  double perturb_scale = 0.05;  // epsilon (std) of the perturbed initializer
  double ridge = 1e-4;          // added to the batch scatter before sampling
  double duplicate_tol = 1e-6;  // relative to the largest domain width
  void validate() const;
};

struct CampaignSettings {
  ProblemSpec spec;
  ConvergenceConfig conv;
  InitializationPolicy policy;
  OptimizerConfig gp_opt;
  OptimizerConfig tad_opt;
  Vector noise_var;                  // per task, the Sigma entries of every observation
  int batch_size = 3;                // N_2
  int initial_components = 2;        // P at the start
  double validation_threshold = 0.01;
  double penalty_strength = -1.0;    // < 0: 10 * E
  std::uint64_t seed = 0;

  static CampaignSettings defaults(const ProblemSpec& spec, const Vector& noise_var);
  double effective_penalty() const;
  void validate() const;
};

enum class Outcome { running, success, failure };
enum class PendingKind { none, initial, batch, target };
// accepted: validation passed; alert: first failure, restart; confirmed:
// second consecutive failure, one more Kronecker component.
enum class PassKind { accepted, alert, confirmed };

std::string to_string(Outcome o);
std::string to_string(PendingKind k);
std::string to_string(PassKind k);
Outcome outcome_from_string(const std::string& s);
PendingKind pending_kind_from_string(const std::string& s);
PassKind pass_kind_from_string(const std::string& s);

struct IterationRecord {
  int iter = 0;
  int pass = 0;
  PassKind kind = PassKind::accepted;
  int components = 2;  // P used for this pass
  Point x;
  PointSet batch;
  double log_det_term = 0.0;
  double data_fit_term = 0.0;
  double trace_term = 0.0;
  double total = 0.0;
  double eig = 0.0;
  bool convergence_checked = false;
  ValidationReport validation;
  std::optional<ValidationReport> training;
  double gp_log_likelihood = 0.0;
  UncertaintyBox ub;
  int eig_counter = 0;
  int samples_added = 0;
  int total_samples = 0;
  Outcome outcome = Outcome::running;
};

struct PendingRequest {
  PendingKind kind = PendingKind::none;
  PointSet points;
  std::uint64_t request = 0;  // oracle request number
};

// Quantities of the pass in progress, kept between propose and ingest.
struct PassState {
  Point x_prev;
  PointSet batch_prev;
  AcquisitionBreakdown breakdown;
  UncertaintyBox ub;
  NormalDist batch_predictive;  // g2 | g1 at the proposed batch
  std::optional<ValidationReport> training;
  double gp_log_likelihood = 0.0;
  ValidationReport validation;
  Vector batch_observations;
};

struct CampaignState {
  CampaignSettings settings;
  Dataset data;
  KernelModel model;
  bool model_fitted = false;
  int components = 2;  // P
  Point x;
  PointSet batch;
  int iter = 0;
  int pass = 0;
  int n_check = 0;
  int eig_counter = 0;  // n_I
  bool check_model = false;
  bool perturb = true;
  Outcome outcome = Outcome::running;
  PendingRequest pending;
  std::uint64_t next_request = 0;
  int initial_design_size = 0;  // points of the initial request that form the design
  PassState current;
  std::vector<IterationRecord> history;

  bool converged() const { return outcome != Outcome::running; }
  int total_samples() const { return data.size(); }
};

// N points from N(center, spread^2 I), clipped into the domain.
PointSet initial_design_near(const Point& center, int n, double spread, const Box& domain,
                             std::uint64_t seed);

// Builds the starting state. When `init_observations` is empty the
// design points are requested from the oracle together with the initial
// batch; otherwise only the batch is requested.
CampaignState initialize_campaign(const CampaignSettings& settings, const PointSet& init_points,
                                  const Vector& init_observations, const Point& x0);

struct Initializer {
  Point x;
  PointSet batch;
};

Initializer perturbed_init(const Point& x_prev, const PointSet& batch_prev, bool perturb,
                           const InitializationPolicy& policy, std::mt19937_64& rng);

UncertaintyBox compute_ub(const ConditionedGp& gp, const Point& x, const PointSet& batch,
                          const Vector& batch_noise_var);

// Convergence test. Updates the consecutive low-information counter in place.
Outcome check_convergence(const UncertaintyBox& ub, double eig, const ProblemSpec& spec,
                          const ConvergenceConfig& conv, int& eig_counter);

// Starts the next pass if nothing is pending and returns the open request.
const PendingRequest& propose(CampaignState& state);

// Supplies observations for the open request (points x tasks, point-major).
void ingest(CampaignState& state, const Vector& observations);

// Advances until one pass of the main loop completes or the campaign ends.
// Without an oracle an open request raises AwaitingObservations.
void step(CampaignState& state, Oracle* oracle);

struct RunStatus {
  Outcome outcome = Outcome::running;
  bool hit_max_iters = false;
};

// Steps until the campaign converges or `max_iters` iterations have run.
RunStatus run(CampaignState& state, Oracle& oracle, int max_iters);

}  // namespace tad
