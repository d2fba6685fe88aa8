// tad: command-line driver for targeted adaptive design campaigns.
//
// Exit codes: 0 success (or a clean intermediate step), 10 failure outcome,
// 11 iteration budget exhausted, 64 usage, 65 bad config/state/data,
// 66 unreadable input, 69 observations required, 70 numerical trouble.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "tad/errors.hpp"
#include "tad/persist.hpp"
#include "tad/service.hpp"

using namespace tad;

namespace {

enum Exit {
  kOk = 0,
  kFailure = 10,
  kMaxIters = 11,
  kUsage = 64,
  kData = 65,
  kNoInput = 66,
  kAwaiting = 69,
  kSoftware = 70,
};

struct Options {
  std::string config;
  std::string state;
  std::string out;
  std::string observations;
  std::string host = "127.0.0.1";
  std::string state_dir;
  long long seed = -1;
  int max_iters = -1;
  int port = 8080;
  bool interactive = false;
  bool quiet = false;
};

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_record(const IterationRecord& r) {
  std::printf("iter %3d  pass %3d  %-9s P=%d  x=(", r.iter, r.pass, to_string(r.kind).c_str(), r.components);
  for (Eigen::Index k = 0; k < r.x.size(); ++k) std::printf(k ? ", %.4f" : "%.4f", r.x[k]);
  std::printf(")  L=%.4g  eig=%.3e  p=%.3f  n_I=%d  N=%d\n", r.total, r.eig, r.validation.p_value, r.eig_counter,
              r.total_samples);
  std::fflush(stdout);
}

int outcome_code(const CampaignState& st) {
  if (st.outcome == Outcome::failure) return kFailure;
  return kOk;
}

// Resumes --state when it exists, otherwise builds a campaign from --config
// (or the built-in default).
PersistedState open_campaign(const Options& o) {
  if (!o.state.empty() && std::filesystem::exists(o.state)) {
    PersistedState ps = load_state(o.state);
    if (o.max_iters >= 0) ps.config.max_iters = o.max_iters;
    return ps;
  }
  if (!o.state.empty() && o.config.empty()) {
    throw InputError("state file '" + o.state + "' does not exist and no --config was given");
  }
  PersistedState ps;
  ps.config = o.config.empty() ? default_config() : load_config(o.config);
  if (o.seed >= 0) ps.config.settings.seed = static_cast<std::uint64_t>(o.seed);
  if (o.max_iters >= 0) ps.config.max_iters = o.max_iters;
  ps.config.validate();
  ps.state = create_campaign(ps.config);
  return ps;
}

void save_if(const Options& o, const PersistedState& ps) {
  if (!o.state.empty()) save_state(ps, o.state);
}

void print_pending(const CampaignState& st, std::ostream& os) {
  const PendingRequest& p = st.pending;
  os << "# " << to_string(p.kind) << " request " << p.request << ": measure these points\n";
  for (Eigen::Index k = 0; k < p.points.cols(); ++k) os << (k ? "," : "") << "d_" << k + 1;
  os << '\n';
  char buf[40];
  for (Eigen::Index i = 0; i < p.points.rows(); ++i) {
    for (Eigen::Index k = 0; k < p.points.cols(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", p.points(i, k));
      os << (k ? "," : "") << buf;
    }
    os << '\n';
  }
}

int cmd_init(const Options& o) {
  CampaignConfig cfg = default_config();
  if (o.seed >= 0) cfg.settings.seed = static_cast<std::uint64_t>(o.seed);
  if (o.max_iters >= 0) cfg.max_iters = o.max_iters;
  if (o.interactive) cfg.mode = OracleMode::interactive;
  const std::string path = o.config.empty() ? "tad_config.json" : o.config;
  save_config(cfg, path);
  std::printf("wrote %s\n", path.c_str());
  return kOk;
}

int cmd_run(const Options& o) {
  PersistedState ps = open_campaign(o);
  auto oracle = make_oracle(ps.config);
  if (!oracle) {
    std::fprintf(stderr, "tad: run needs a simulated campaign; use propose/ingest for interactive ones\n");
    return kData;
  }
  CampaignState& st = ps.state;
  if (st.converged()) {
    std::printf("campaign already ended: %s\n", to_string(st.outcome).c_str());
    return outcome_code(st);
  }
  while (!st.converged()) {
    const bool new_iter = st.pending.kind == PendingKind::none && !st.check_model;
    if (new_iter && st.iter >= ps.config.max_iters) break;
    const size_t before = st.history.size();
    advance(st, oracle.get());
    if (!o.quiet) {
      for (size_t i = before; i < st.history.size(); ++i) print_record(st.history[i]);
    }
    save_if(o, ps);
  }
  save_if(o, ps);
  if (!o.out.empty() && !st.history.empty()) export_history(st, o.out);
  std::printf("outcome %s after %d iterations, %d samples\n", to_string(st.outcome).c_str(), st.iter,
              st.total_samples());
  if (!st.converged()) return kMaxIters;
  return outcome_code(st);
}

int cmd_step(const Options& o) {
  PersistedState ps = open_campaign(o);
  CampaignState& st = ps.state;
  if (st.converged()) {
    std::printf("campaign already ended: %s\n", to_string(st.outcome).c_str());
    return outcome_code(st);
  }
  auto oracle = make_oracle(ps.config);
  const size_t before = st.history.size();
  advance(st, oracle.get());
  save_if(o, ps);
  for (size_t i = before; i < st.history.size(); ++i) print_record(st.history[i]);
  if (!oracle) print_pending(st, std::cout);
  if (st.converged()) std::printf("outcome %s\n", to_string(st.outcome).c_str());
  return outcome_code(st);
}

int cmd_propose(const Options& o) {
  PersistedState ps = open_campaign(o);
  CampaignState& st = ps.state;
  if (st.converged()) {
    std::printf("campaign already ended: %s\n", to_string(st.outcome).c_str());
    return outcome_code(st);
  }
  if (st.pending.kind == PendingKind::none) propose(st);
  save_if(o, ps);
  if (o.out.empty()) {
    print_pending(st, std::cout);
  } else {
    std::ofstream f(o.out);
    print_pending(st, f);
    if (!f) throw InputError("cannot write '" + o.out + "'");
  }
  return kOk;
}

int cmd_ingest(const Options& o) {
  if (o.state.empty()) throw CLI::ValidationError("ingest", "--state is required");
  PersistedState ps = load_state(o.state);
  CampaignState& st = ps.state;
  if (st.pending.kind == PendingKind::none) {
    std::fprintf(stderr, "tad: nothing is pending; run propose first\n");
    return kData;
  }
  const std::string text = read_text(o.observations);
  const Vector g = parse_observations_csv(text, static_cast<int>(st.pending.points.rows()),
                                          st.settings.spec.tasks());
  const size_t before = st.history.size();
  ingest(st, g);
  save_state(ps, o.state);
  for (size_t i = before; i < st.history.size(); ++i) print_record(st.history[i]);
  if (st.pending.kind != PendingKind::none) print_pending(st, std::cout);
  if (st.converged()) std::printf("outcome %s\n", to_string(st.outcome).c_str());
  return outcome_code(st);
}

int cmd_status(const Options& o) {
  if (o.state.empty()) throw CLI::ValidationError("status", "--state is required");
  const PersistedState ps = load_state(o.state);
  std::cout << snapshot_json(ps).dump(2) << '\n';
  return kOk;
}

int cmd_export(const Options& o) {
  if (o.state.empty()) throw CLI::ValidationError("export", "--state is required");
  const PersistedState ps = load_state(o.state);
  const std::string dir = o.out.empty() ? "." : o.out;
  export_history(ps.state, dir);
  std::printf("wrote %s/iterations.csv and %s/samples.csv\n", dir.c_str(), dir.c_str());
  return kOk;
}

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const Options& o) {
  CampaignService service(o.state_dir);
  if (!o.state_dir.empty()) {
    for (const auto& entry : std::filesystem::directory_iterator(o.state_dir)) {
      if (entry.path().extension() != ".json") continue;
      try {
        const std::string id = service.adopt(load_state(entry.path().string()));
        std::printf("loaded %s as %s\n", entry.path().filename().c_str(), id.c_str());
      } catch (const Error& e) {
        std::fprintf(stderr, "tad: skipping %s: %s\n", entry.path().c_str(), e.what());
      }
    }
  }
  HttpServer server(service);
  const int port = server.bind(o.host, o.port);
  std::printf("listening on http://%s:%d/api/v1/campaigns\n", o.host.c_str(), port);
  std::fflush(stdout);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.listen();
  g_server = nullptr;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Targeted adaptive design campaigns"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--config", o.config, "campaign config (JSON)");
    c->add_option("--state", o.state, "campaign state file (JSON)");
  };

  auto* init = app.add_subcommand("init", "write a default config");
  init->add_option("--config", o.config, "output path (default tad_config.json)");
  init->add_option("--seed", o.seed, "campaign seed")->check(CLI::NonNegativeNumber);
  init->add_option("--max-iters", o.max_iters, "iteration budget")->check(CLI::NonNegativeNumber);
  init->add_flag("--interactive", o.interactive, "observations come from outside");

  auto* run = app.add_subcommand("run", "run a simulated campaign to the end");
  add_common(run);
  run->add_option("--seed", o.seed, "override the config seed")->check(CLI::NonNegativeNumber);
  run->add_option("--max-iters", o.max_iters, "iteration budget")->check(CLI::NonNegativeNumber);
  run->add_option("--out", o.out, "export CSVs to this directory");
  run->add_flag("-q,--quiet", o.quiet, "only print the outcome");

  auto* step = app.add_subcommand("step", "advance one pass (interactive: open the next request)");
  add_common(step);
  step->add_option("--seed", o.seed, "override the config seed")->check(CLI::NonNegativeNumber);

  auto* prop = app.add_subcommand("propose", "print the points awaiting measurement");
  add_common(prop);
  prop->add_option("--seed", o.seed, "override the config seed")->check(CLI::NonNegativeNumber);
  prop->add_option("--out", o.out, "write the points here instead of stdout");

  auto* ing = app.add_subcommand("ingest", "supply measurements for the pending points");
  ing->add_option("--state", o.state, "campaign state file (JSON)")->required();
  ing->add_option("observations", o.observations, "CSV, one row per pending point")->required();

  auto* status = app.add_subcommand("status", "print a state summary as JSON");
  status->add_option("--state", o.state, "campaign state file (JSON)")->required();

  auto* exp = app.add_subcommand("export", "write iterations.csv and samples.csv");
  exp->add_option("--state", o.state, "campaign state file (JSON)")->required();
  exp->add_option("--out", o.out, "output directory");

  auto* serve = app.add_subcommand("serve", "serve the HTTP API");
  serve->add_option("--port", o.port, "port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--host", o.host, "bind address");
  serve->add_option("--state-dir", o.state_dir, "persist campaigns here and reload them at start");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    if (*init) return cmd_init(o);
    if (*run) return cmd_run(o);
    if (*step) return cmd_step(o);
    if (*prop) return cmd_propose(o);
    if (*ing) return cmd_ingest(o);
    if (*status) return cmd_status(o);
    if (*exp) return cmd_export(o);
    if (*serve) return cmd_serve(o);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "tad: %s\n", e.what());
    return kUsage;
  } catch (const AwaitingObservations& e) {
    std::fprintf(stderr, "tad: %s\n", e.what());
    return kAwaiting;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "tad: numerical failure: %s\n", e.what());
    return kSoftware;
  } catch (const OptimizationFailure& e) {
    std::fprintf(stderr, "tad: optimization failure: %s\n", e.what());
    return kSoftware;
  } catch (const Error& e) {
    std::fprintf(stderr, "tad: %s\n", e.what());
    return kData;
  } catch (const InputError& e) {
    std::fprintf(stderr, "tad: %s\n", e.what());
    return kNoInput;
  }
  return kUsage;
}
