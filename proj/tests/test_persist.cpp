#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "doctest.h"
#include "tad/errors.hpp"
#include "tad/persist.hpp"
#include "tad/testbed.hpp"

using namespace tad;
using nlohmann::json;

namespace {

CampaignConfig cheap_config(std::uint64_t seed) {
  CampaignConfig cfg = default_config();
  cfg.settings.seed = seed;
  cfg.settings.gp_opt.restarts = 0;
  cfg.settings.gp_opt.max_iters = 40;
  cfg.settings.tad_opt.restarts = 1;
  cfg.settings.tad_opt.max_iters = 60;
  return cfg;
}

PersistedState fresh(const CampaignConfig& cfg) {
  PersistedState ps;
  ps.config = cfg;
  ps.state = create_campaign(cfg);
  return ps;
}

// Advances until `iters` iterations have completed.
void run_to(PersistedState& ps, Oracle& oracle, int iters) {
  while (!ps.state.converged() && (ps.state.iter < iters || ps.state.check_model ||
                                   ps.state.pending.kind != PendingKind::none)) {
    advance(ps.state, &oracle);
  }
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("tad_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_char(const std::string& s, char c) { return static_cast<int>(std::count(s.begin(), s.end(), c)); }

void check_same_state(const CampaignState& a, const CampaignState& b) {
  CHECK(a.data.points == b.data.points);
  CHECK(a.data.observations == b.data.observations);
  CHECK(a.data.noise_var == b.data.noise_var);
  CHECK(a.model.pack() == b.model.pack());
  CHECK(a.model.task_means == b.model.task_means);
  CHECK(a.x == b.x);
  CHECK(a.batch == b.batch);
  CHECK(a.iter == b.iter);
  CHECK(a.pass == b.pass);
  CHECK(a.components == b.components);
  CHECK(a.n_check == b.n_check);
  CHECK(a.eig_counter == b.eig_counter);
  CHECK(a.check_model == b.check_model);
  CHECK(a.perturb == b.perturb);
  CHECK(a.outcome == b.outcome);
  CHECK(a.pending.kind == b.pending.kind);
  CHECK(a.pending.points == b.pending.points);
  CHECK(a.next_request == b.next_request);
  CHECK(a.current.batch_predictive.cov == b.current.batch_predictive.cov);
  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].total == b.history[i].total);
    CHECK(a.history[i].eig == b.history[i].eig);
    CHECK(a.history[i].validation.p_value == b.history[i].validation.p_value);
    CHECK(a.history[i].ub.half_widths == b.history[i].ub.half_widths);
  }
}

}  // namespace

TEST_SUITE("persist") {
  TEST_CASE("config round trip and defaults") {
    const CampaignConfig cfg = default_config();
    cfg.validate();
    CHECK(cfg.settings.batch_size == 3);
    CHECK(cfg.settings.conv.eig_patience == 50);
    CHECK(cfg.x0 == Vector{{-2.0, 2.0}});
    const json j = config_to_json(cfg);
    const CampaignConfig back = config_from_json(j);
    CHECK(config_to_json(back) == j);

    const json minimal = {{"problem",
                           {{"domain", {{"lower", {-1.0, -1.0}}, {"upper", {1.0, 1.0}}}},
                            {"target_design", {0.5, 0.5}},
                            {"tolerance", {0.1, 0.1}}}}};
    const CampaignConfig m = config_from_json(minimal);
    CHECK(m.settings.validation_threshold == 0.01);
    CHECK(m.x0 == Vector::Zero(2));
    CHECK(m.noise_std == Vector::Constant(2, 0.01));

    json missing = minimal;
    missing["problem"].erase("tolerance");
    CHECK_THROWS_AS(config_from_json(missing), ParseError);
    json newer = minimal;
    newer["format_version"] = 999;
    CHECK_THROWS_AS(config_from_json(newer), UnsupportedVersion);
    json bad = minimal;
    bad["problem"]["tolerance"] = {0.1, -0.1};
    CHECK_THROWS_AS(config_from_json(bad), ContractViolation);
    json wrong_mode = minimal;
    wrong_mode["mode"] = "telepathic";
    CHECK_THROWS_AS(config_from_json(wrong_mode), ContractViolation);

    const auto dir = temp_dir("config");
    save_config(cfg, (dir / "c.json").string());
    CHECK(config_to_json(load_config((dir / "c.json").string())) == j);
  }

  TEST_CASE("fresh state round trips field by field") {
    const PersistedState ps = fresh(cheap_config(3));
    const std::string text = dump_state(ps);
    const PersistedState back = parse_state(text);
    check_same_state(ps.state, back.state);
    CHECK(dump_state(back) == text);
  }

  TEST_CASE("mid-campaign state round trips bitwise") {
    PersistedState ps = fresh(cheap_config(3));
    auto oracle = make_oracle(ps.config);
    run_to(ps, *oracle, 2);
    advance(ps.state, nullptr);  // opens the next batch request
    REQUIRE(ps.state.pending.kind == PendingKind::batch);
    const std::string text = dump_state(ps);
    const PersistedState back = parse_state(text);
    check_same_state(ps.state, back.state);
    CHECK(dump_state(back) == text);

    const auto dir = temp_dir("state");
    const auto path = (dir / "s.json").string();
    save_state(ps, path);
    CHECK(dump_state(load_state(path)) == text);
    CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  }

  TEST_CASE("unsupported version and corrupt files") {
    const PersistedState ps = fresh(cheap_config(1));
    json j = state_to_json(ps);
    j["format_version"] = 999;
    try {
      parse_state(j.dump());
      FAIL("expected UnsupportedVersion");
    } catch (const UnsupportedVersion& e) {
      CHECK(e.version() == 999);
    }

    const std::string text = dump_state(ps);
    const std::string truncated = text.substr(0, text.size() / 2);
    try {
      parse_state(truncated);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.byte_offset() > 0);
      CHECK(e.byte_offset() <= truncated.size() + 1);
    }

    std::string garbled = text;
    garbled[100] = '}';
    CHECK_THROWS_AS(parse_state(garbled), ParseError);

    json wrong = state_to_json(ps);
    wrong["state"]["x"] = {"0x1p+0", "not-a-number"};
    CHECK_THROWS_AS(state_from_json(wrong), ParseError);
    json dropped = state_to_json(ps);
    dropped["state"].erase("data");
    CHECK_THROWS_AS(state_from_json(dropped), ParseError);

    CHECK_THROWS_AS(load_state("/nonexistent/dir/s.json"), Error);
  }

  TEST_CASE("reload and continue reproduces the trajectory") {
    CampaignConfig cfg = cheap_config(11);
    // A tolerance this tight keeps the campaign running past the horizon.
    cfg.settings.spec.tolerance = Vector::Constant(2, 1e-6);
    const int horizon = 12;
    PersistedState ref = fresh(cfg);
    auto oracle = make_oracle(cfg);
    std::map<int, std::string> saved;
    while (!ref.state.converged() && ref.state.iter < horizon) {
      if (ref.state.pending.kind == PendingKind::none && !ref.state.check_model &&
          (ref.state.iter == 1 || ref.state.iter == 5 || ref.state.iter == 10)) {
        saved.emplace(ref.state.iter, dump_state(ref));
      }
      advance(ref.state, oracle.get());
    }
    run_to(ref, *oracle, horizon);
    CHECK(ref.state.outcome == Outcome::running);
    const std::string expected = dump_state(ref);
    for (const auto& [k, text] : saved) {
      CAPTURE(k);
      PersistedState replay = parse_state(text);
      auto fresh_oracle = make_oracle(replay.config);
      run_to(replay, *fresh_oracle, horizon);
      CHECK(dump_state(replay) == expected);
    }
    CHECK(saved.size() == 3);
  }

  TEST_CASE("export writes one row per iteration with a stable header") {
    PersistedState ps = fresh(cheap_config(1));
    CHECK_THROWS_AS(export_history(ps.state, temp_dir("empty").string()), ContractViolation);
    auto oracle = make_oracle(ps.config);
    advance(ps.state, oracle.get());
    REQUIRE(ps.state.history.size() == 1);

    const auto dir = temp_dir("export");
    export_history(ps.state, dir.string());
    const std::string it = slurp(dir / "iterations.csv");
    const std::string golden =
        "iter,pass,kind,components,x_1,x_2,log_det_term,data_fit_term,trace_term,total,eig,"
        "convergence_checked,p_value,statistic,dof,training_p_value,ub_center_1,ub_center_2,"
        "ub_half_width_1,ub_half_width_2,eig_counter,samples_added,total_samples,outcome\n";
    CHECK(it.substr(0, golden.size()) == golden);
    CHECK(count_char(it, '\n') == 2);
    std::istringstream lines(it);
    std::string header, row;
    std::getline(lines, header);
    std::getline(lines, row);
    CHECK(count_char(row, ',') == count_char(header, ','));
    CHECK(row.rfind("1,1,", 0) == 0);

    const std::string samples = slurp(dir / "samples.csv");
    CHECK(samples.rfind("index,d_1,d_2,g_1,g_2,noise_var_1,noise_var_2\n", 0) == 0);
    CHECK(count_char(samples, '\n') == ps.state.data.size() + 1);
    CHECK(iterations_csv(ps.state) == it);
  }

  TEST_CASE("observations csv parsing") {
    const Vector v = parse_observations_csv("g_1,g_2\n1.5,2\n\n-3,4e-1\r\n", 2, 2);
    CHECK(v == Vector{{1.5, 2.0, -3.0, 0.4}});
    CHECK(parse_observations_csv("# measured\n1,2,3\n", 1, 3) == Vector{{1.0, 2.0, 3.0}});
    CHECK_THROWS_AS(parse_observations_csv("1,2\n3\n", 2, 2), DimensionError);
    CHECK_THROWS_AS(parse_observations_csv("1,2\n", 2, 2), DimensionError);
    try {
      parse_observations_csv("1,2\n3,x\n", 2, 2);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.byte_offset() == 4);
    }
  }

  TEST_CASE("snapshot and history views") {
    PersistedState ps = fresh(cheap_config(1));
    json snap = snapshot_json(ps);
    CHECK(snap["iter"] == 0);
    CHECK(snap["outcome"] == "running");
    CHECK(snap["pending"]["kind"] == "initial");
    CHECK(snap["pending"]["points"].size() == 7);
    CHECK(snap["ub"].is_null());
    CHECK(snap["ttr"]["lower"][0].get<double>() == doctest::Approx(0.328));
    CHECK(snap["eig_patience"] == 50);

    auto oracle = make_oracle(ps.config);
    advance(ps.state, oracle.get());
    snap = snapshot_json(ps);
    CHECK(snap["iter"] == 1);
    CHECK(snap["eig_history"].size() == 1);
    CHECK(snap["p_value_history"].size() == 1);
    CHECK(snap["ub"]["half_widths"].size() == 2);
    CHECK(snap["total_samples"] == ps.state.data.size());
    const json h = history_json(ps.state);
    REQUIRE(h.size() == 1);
    CHECK(h[0]["acquisition"]["total"].get<double>() == ps.state.history[0].total);
  }

  TEST_CASE("interactive advance proposes and then waits") {
    CampaignConfig cfg = cheap_config(2);
    cfg.mode = OracleMode::interactive;
    PersistedState ps = fresh(cfg);
    CHECK(make_oracle(cfg) == nullptr);
    CHECK_THROWS_AS(advance(ps.state, nullptr), AwaitingObservations);
    SimulatedOracle lab(eval_test_function, cfg.noise_std, 2);
    ingest(ps.state, lab.observe(ps.state.pending.points, ps.state.pending.request));
    advance(ps.state, nullptr);
    CHECK(ps.state.pending.kind == PendingKind::batch);
    CHECK_THROWS_AS(advance(ps.state, nullptr), AwaitingObservations);
  }
}
