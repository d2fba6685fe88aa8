#include <cmath>
#include <vector>

#include "doctest.h"
#include "support.hpp"
#include "tad/campaign.hpp"
#include "tad/errors.hpp"
#include "tad/random.hpp"
#include "tad/testbed.hpp"

using namespace tad;
using tadtest::Gen;

namespace {

ProblemSpec test_spec() {
  return {test_function_domain(), Vector{{0.3380, 0.3502}}, Vector{{0.01, 0.01}}};
}

// Small optimizer budgets so a pass takes well under a second.
CampaignSettings cheap_settings(std::uint64_t seed) {
  CampaignSettings s = CampaignSettings::defaults(test_spec(), Vector::Constant(2, 1e-4));
  s.gp_opt.restarts = 0;
  s.gp_opt.max_iters = 40;
  s.tad_opt.restarts = 1;
  s.tad_opt.max_iters = 60;
  s.seed = seed;
  return s;
}

CampaignState fresh_campaign(const CampaignSettings& s) {
  const PointSet init = initial_design_near(Vector{{1.5, -1.5}}, 4, 0.25, s.spec.domain, s.seed);
  return initialize_campaign(s, init, Vector(), Vector{{-2.0, 2.0}});
}

// Adds a large offset to the next `bad` batch requests so their p-values
// collapse.
class WildOracle : public Oracle {
 public:
  WildOracle(const CampaignState& st, int bad)
      : st_(st), inner_(eval_test_function, Vector::Constant(2, 0.01), 3), bad_(bad) {}
  int tasks() const override { return 2; }
  Vector noise_var() const override { return inner_.noise_var(); }
  Vector observe(const PointSet& points, std::uint64_t request) override {
    Vector g = inner_.observe(points, request);
    if (st_.pending.kind == PendingKind::batch && bad_ > 0) {
      --bad_;
      g.array() += 50.0;
    }
    return g;
  }

 private:
  const CampaignState& st_;
  SimulatedOracle inner_;
  int bad_;
};

UncertaintyBox box(Vector c, Vector h) { return {std::move(c), std::move(h)}; }

}  // namespace

TEST_SUITE("campaign") {
  TEST_CASE("problem spec geometry and validation") {
    const ProblemSpec spec = test_spec();
    CHECK(spec.dims() == 2);
    CHECK(spec.tasks() == 2);
    CHECK(spec.ttr_lower()[0] == doctest::Approx(0.3280));
    CHECK(spec.ttr_upper()[1] == doctest::Approx(0.3602));
    spec.validate();
    ProblemSpec bad = spec;
    bad.tolerance[1] = 0.0;
    CHECK_THROWS_AS(bad.validate(), ContractViolation);
    bad = spec;
    bad.tolerance = Vector{{0.01}};
    CHECK_THROWS_AS(bad.validate(), DimensionError);

    CHECK(box(spec.target_design, spec.tolerance).inside(spec));
    CHECK_FALSE(box(spec.target_design, spec.tolerance * 1.0001).inside(spec));
    CHECK_FALSE(box(spec.target_design + Vector{{0.0, 0.02}}, Vector{{0.001, 0.001}}).inside(spec));
  }

  TEST_CASE("check_convergence examples") {
    const ProblemSpec spec = test_spec();
    const ConvergenceConfig conv;
    int counter = 7;
    CHECK(check_convergence(box(spec.target_design, spec.tolerance / 2), 1.0, spec, conv, counter) ==
          Outcome::success);

    counter = 0;
    const UncertaintyBox wide = box(spec.target_design, Vector{{1.0, 1.0}});
    for (int k = 1; k <= 50; ++k) {
      CHECK(check_convergence(wide, conv.eig_threshold / 10, spec, conv, counter) == Outcome::running);
      CHECK(counter == k);
    }
    CHECK(check_convergence(wide, conv.eig_threshold / 10, spec, conv, counter) == Outcome::failure);
    CHECK(counter == 51);

    counter = 3;
    const UncertaintyBox one_out = box(spec.target_design, Vector{{0.005, 0.02}});
    CHECK(check_convergence(one_out, 1.0, spec, conv, counter) == Outcome::running);
    CHECK(counter == 0);  // consecutive semantics: a high EIG resets the run

    counter = 3;
    CHECK(check_convergence(one_out, conv.eig_threshold, spec, conv, counter) == Outcome::running);
    CHECK(counter == 0);
  }

  TEST_CASE("perturbed_init passes through when not perturbing") {
    InitializationPolicy pol;
    auto rng = make_rng(1, 0, 0);
    const Point x{{0.3, -0.2}};
    PointSet b(3, 2);
    b << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
    const Initializer out = perturbed_init(x, b, false, pol, rng);
    CHECK(out.x == x);
    CHECK(out.batch == b);
    CHECK_THROWS_AS(perturbed_init(x, PointSet(0, 2), true, pol, rng), ContractViolation);
  }

  TEST_CASE("perturbed_init with a degenerate scatter stays close") {
    InitializationPolicy pol;
    const Point x{{0.5, 0.5}};
    const PointSet b = x.transpose().replicate(3, 1);
    const double radius = 5.0 * (pol.perturb_scale + std::sqrt(pol.ridge));
    for (std::uint64_t t = 0; t < 50; ++t) {
      auto rng = make_rng(9, 0, t);
      const Initializer out = perturbed_init(x, b, true, pol, rng);
      CHECK((out.x - x).norm() <= radius);
      for (Eigen::Index l = 0; l < b.rows(); ++l) CHECK((out.batch.row(l).transpose() - x).norm() <= radius);
    }
  }

  TEST_CASE("perturbed_init follows an elongated batch") {
    InitializationPolicy pol;
    const Point x{{0.0, 0.0}};
    PointSet b(4, 2);
    b << 0.5, 0.0, 1.0, 0.0, -0.5, 0.0, -1.0, 0.0;
    int along = 0;
    for (std::uint64_t t = 0; t < 100; ++t) {
      auto rng = make_rng(17, 0, t);
      // Pool the non-leading points of 25 draws to estimate the covariance.
      Matrix acc = Matrix::Zero(2, 2);
      for (int k = 0; k < 25; ++k) {
        const Initializer out = perturbed_init(x, b, true, pol, rng);
        for (Eigen::Index l = 1; l < out.batch.rows(); ++l) {
          const Vector r = out.batch.row(l).transpose() - x;
          acc += r * r.transpose();
        }
      }
      const Eigen::SelfAdjointEigenSolver<Matrix> es(acc);
      if (std::fabs(es.eigenvectors().col(1)[0]) > std::cos(M_PI / 8)) ++along;
    }
    CHECK(along >= 90);
  }

  TEST_CASE("compute_ub examples") {
    Gen g(31);
    const KernelModel m = g.model(2, 2, 2);
    const Dataset data = g.dataset(m, 5);
    const ConditionedGp gp(m, data);
    const Point x{{0.2, -0.4}};

    const UncertaintyBox ub0 = compute_ub(gp, x, PointSet(0, 2), Vector());
    const NormalDist p = gp.predict(single_point(x));
    for (int i = 0; i < 2; ++i) {
      CHECK(ub0.center[i] == doctest::Approx(p.mean[i]).epsilon(1e-12));
      CHECK(ub0.half_widths[i] == doctest::Approx(std::sqrt(p.cov(i, i))).epsilon(1e-12));
    }

    for (int t = 0; t < 10; ++t) {
      const KernelModel mt = g.model(2, 2, g.integer(1, 2));
      const Dataset dt = g.dataset(mt, g.integer(2, 6));
      const ConditionedGp gpt(mt, dt);
      const Point xt = g.points(1, 2).row(0).transpose();
      const PointSet batch = g.points(g.integer(1, 4), 2);
      const Vector noise = Vector::Constant(batch.rows() * 2, 0.05);
      const UncertaintyBox ub = compute_ub(gpt, xt, batch, noise);
      // The covariance of f(x) | (g1, g2) does not depend on g2.
      const auto joint = tadtest::condition_on(mt, single_point(xt), tadtest::vstack(dt.points, batch),
                                               Vector::Zero((dt.size() + batch.rows()) * 2),
                                               tadtest::vcat(dt.noise_var, noise));
      const auto given1 = tadtest::condition_on(mt, single_point(xt), dt.points, dt.observations, dt.noise_var);
      for (int i = 0; i < 2; ++i) {
        CHECK(std::fabs(ub.half_widths[i] * ub.half_widths[i] - joint.cov(i, i)) <= 1e-9);
        CHECK(std::fabs(ub.center[i] - given1.mean[i]) <= 1e-9);
      }
    }

    // Noise-free observation at x itself.
    Dataset exact = Dataset::empty(2, 2);
    exact.append(g.points(3, 2), g.normal_vector(6), Vector::Zero(2));
    const ConditionedGp gpe(m, exact);
    const Point at = exact.points.row(1).transpose();
    const UncertaintyBox ube = compute_ub(gpe, at, g.points(2, 2), Vector::Constant(4, 0.01));
    CHECK(ube.half_widths.maxCoeff() <= 1e-4);
  }

  TEST_CASE("initialize_campaign matches the success configuration") {
    const CampaignSettings s = cheap_settings(4);
    const CampaignState st = fresh_campaign(s);
    CHECK(st.components == 2);
    CHECK(st.iter == 0);
    CHECK(st.n_check == 0);
    CHECK(st.eig_counter == 0);
    CHECK_FALSE(st.check_model);
    CHECK(st.perturb);
    CHECK(st.outcome == Outcome::running);
    CHECK(st.data.size() == 0);
    CHECK(st.pending.kind == PendingKind::initial);
    CHECK(st.pending.points.rows() == 7);
    CHECK(st.initial_design_size == 4);
    CHECK(st.batch.rows() == 3);
    for (Eigen::Index l = 0; l < 3; ++l) CHECK(s.spec.domain.contains(st.batch.row(l).transpose()));

    const CampaignState again = fresh_campaign(s);
    CHECK(again.batch == st.batch);
    CHECK(again.pending.points == st.pending.points);
    const CampaignState other = fresh_campaign(cheap_settings(5));
    CHECK(other.batch != st.batch);

    CHECK_THROWS_AS(initialize_campaign(s, PointSet(0, 2), Vector(), Vector{{0.0, 0.0}}), ContractViolation);
    CHECK_THROWS_AS(initialize_campaign(s, st.pending.points, Vector(), Vector{{4.0, 0.0}}), ContractViolation);
    CHECK_THROWS_AS(initialize_campaign(s, st.pending.points, Vector::Zero(3), Vector{{0.0, 0.0}}),
                    DimensionError);

    // With observations supplied, only the batch is requested.
    const PointSet init = st.pending.points.topRows(4);
    const CampaignState obs = initialize_campaign(s, init, simulated_oracle(init, Vector::Constant(2, 0.01), 1),
                                                  Vector{{-2.0, 2.0}});
    CHECK(obs.data.size() == 4);
    CHECK(obs.pending.points.rows() == 3);
  }

  TEST_CASE("tiny cluster scale collapses onto x0 and is separated") {
    CampaignSettings s = cheap_settings(2);
    s.policy.cluster_scale = 1e-12;
    const Point x0{{-2.0, 2.0}};
    const PointSet init = initial_design_near(Vector{{1.5, -1.5}}, 4, 0.25, s.spec.domain, 2);
    const CampaignState st = initialize_campaign(s, init, Vector(), x0);
    const double tol = s.policy.duplicate_tol * 6.0;
    for (Eigen::Index l = 0; l < st.batch.rows(); ++l) {
      CHECK((st.batch.row(l).transpose() - x0).norm() <= 6.0 * s.policy.perturb_scale);
      for (Eigen::Index k = 0; k < l; ++k) CHECK((st.batch.row(l) - st.batch.row(k)).norm() > tol);
    }
  }

  TEST_CASE("accepted pass appends the batch and the target") {
    CampaignState st = fresh_campaign(cheap_settings(1));
    SimulatedOracle oracle(eval_test_function, Vector::Constant(2, 0.01), 1);
    ingest(st, oracle.observe(st.pending.points, st.pending.request));
    CHECK(st.data.size() == 7);
    CHECK(st.pending.kind == PendingKind::none);

    const PendingRequest& req = propose(st);
    CHECK(req.kind == PendingKind::batch);
    CHECK(req.points.rows() == 3);
    CHECK(st.iter == 1);
    CHECK(st.model_fitted);
    const PointSet proposed = req.points;
    ingest(st, oracle.observe(req.points, req.request));
    REQUIRE(st.current.validation.p_value > 0.01);
    CHECK(st.pending.kind == PendingKind::target);
    CHECK(st.pending.points.rows() == 1);
    CHECK(st.data.size() == 7);
    ingest(st, oracle.observe(st.pending.points, st.pending.request));

    REQUIRE(st.history.size() == 1);
    const IterationRecord& r = st.history.back();
    CHECK(r.kind == PassKind::accepted);
    CHECK(r.convergence_checked);
    CHECK(r.samples_added == 4);
    CHECK(r.total_samples == 11);
    CHECK(st.data.size() == 11);
    CHECK(st.data.points.middleRows(7, 3) == proposed);
    CHECK(st.data.points.row(10).transpose() == st.x);
    CHECK(st.perturb);
    CHECK(st.pending.kind == PendingKind::none);
  }

  TEST_CASE("two validation failures add a Kronecker component") {
    CampaignState st = fresh_campaign(cheap_settings(1));
    WildOracle oracle(st, 2);
    ingest(st, oracle.observe(st.pending.points, st.pending.request));

    step(st, &oracle);
    REQUIRE(st.history.size() == 1);
    CHECK(st.history[0].kind == PassKind::alert);
    CHECK(st.history[0].validation.p_value < 0.01);
    CHECK_FALSE(st.history[0].convergence_checked);
    CHECK(st.history[0].samples_added == 4);
    CHECK(st.check_model);
    CHECK(st.n_check == 1);
    CHECK(st.components == 2);
    const KernelModel fitted = st.model;

    const Point x_before = st.x;
    const PointSet batch_before = st.batch;
    const int n_before = st.data.size();
    step(st, &oracle);
    REQUIRE(st.history.size() == 2);
    const IterationRecord& r = st.history[1];
    CHECK(r.kind == PassKind::confirmed);
    CHECK(r.validation.p_value < 0.01);
    CHECK(r.iter == 1);  // the restart reuses the model and the iteration
    CHECK(r.components == 2);
    CHECK(r.samples_added == 3);
    CHECK(st.data.size() == n_before + 3);
    CHECK(st.components == 3);
    CHECK(st.x == x_before);
    CHECK(st.batch == batch_before);
    CHECK_FALSE(st.perturb);
    CHECK_FALSE(st.check_model);
    CHECK(st.n_check == 0);
    CHECK(st.model.size() == fitted.size());

    step(st, &oracle);
    CHECK(st.model.size() == 3);
    CHECK(st.history.back().components == 3);
    CHECK(st.history.back().iter == 2);
  }

  TEST_CASE("interactive misuse leaves the state alone") {
    CampaignState st = fresh_campaign(cheap_settings(1));
    CHECK_THROWS_AS(step(st, nullptr), AwaitingObservations);
    CHECK(st.pending.kind == PendingKind::initial);
    CHECK_THROWS_AS(ingest(st, Vector::Zero(5)), DimensionError);
    Vector bad = Vector::Zero(14);
    bad[3] = std::nan("");
    CHECK_THROWS_AS(ingest(st, bad), ContractViolation);
    CHECK(st.data.size() == 0);
    CHECK(st.pending.kind == PendingKind::initial);
  }

  TEST_CASE("run with a zero budget and converged campaigns") {
    CampaignState st = fresh_campaign(cheap_settings(1));
    SimulatedOracle oracle(eval_test_function, Vector::Constant(2, 0.01), 1);
    const RunStatus rs = run(st, oracle, 0);
    CHECK(rs.outcome == Outcome::running);
    CHECK(rs.hit_max_iters);
    CHECK(st.history.empty());
    CHECK(st.iter == 0);

    st.outcome = Outcome::success;
    CHECK_THROWS_AS(step(st, &oracle), ContractViolation);
    CHECK_THROWS_AS(propose(st), ContractViolation);
  }

  TEST_CASE("short run invariants") {
    CampaignState st = fresh_campaign(cheap_settings(6));
    SimulatedOracle oracle(eval_test_function, Vector::Constant(2, 0.01), 6);
    ingest(st, oracle.observe(st.pending.points, st.pending.request));
    Dataset before = st.data;
    int last_p = st.components;
    for (int k = 0; k < 5 && !st.converged(); ++k) {
      step(st, &oracle);
      const IterationRecord& r = st.history.back();
      CHECK(st.data.points.topRows(before.size()) == before.points);
      CHECK(st.data.observations.head(before.observations.size()) == before.observations);
      CHECK(st.data.size() == before.size() + r.samples_added);
      CHECK(r.total_samples == st.data.size());
      CHECK(r.total == doctest::Approx(r.log_det_term + r.data_fit_term + r.trace_term).epsilon(1e-12));
      CHECK(r.eig >= -1e-9);
      CHECK(r.validation.p_value >= 0.0);
      CHECK(r.validation.p_value <= 1.0);
      CHECK((r.ub.half_widths.array() >= 0.0).all());
      CHECK(st.components >= last_p);
      CHECK(st.components - last_p == (r.kind == PassKind::confirmed ? 1 : 0));
      last_p = st.components;
      before = st.data;
    }
  }

  TEST_CASE("settings validation") {
    CampaignSettings s = cheap_settings(1);
    CHECK(s.effective_penalty() == doctest::Approx(20.0));
    s.penalty_strength = 3.0;
    CHECK(s.effective_penalty() == 3.0);
    s.batch_size = 0;
    CHECK_THROWS(s.validate());
    s = cheap_settings(1);
    s.noise_var = Vector::Constant(3, 1e-4);
    CHECK_THROWS(s.validate());
    s = cheap_settings(1);
    s.conv.eig_patience = 0;
    CHECK_THROWS(s.validate());
    s = cheap_settings(1);
    s.policy.perturb_scale = 0.0;
    CHECK_THROWS(s.validate());
    for (auto o : {Outcome::running, Outcome::success, Outcome::failure}) CHECK(outcome_from_string(to_string(o)) == o);
    for (auto k : {PassKind::accepted, PassKind::alert, PassKind::confirmed}) {
      CHECK(pass_kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS(outcome_from_string("maybe"));
  }
}
