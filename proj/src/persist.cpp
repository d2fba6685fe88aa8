#include "tad/persist.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tad/errors.hpp"
#include "tad/testbed.hpp"

namespace tad {

using nlohmann::json;

namespace {

// ---- lossless numerics ----

std::string hexd(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double unhex(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_string()) throw ParseError("expected a hex-float string", 0);
  const std::string s = j.get<std::string>();
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw ParseError("bad number '" + s + "'", 0);
  return v;
}

json hex_vec(const Vector& v) {
  json a = json::array();
  for (const double x : v) a.push_back(hexd(x));
  return a;
}

Vector unhex_vec(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = unhex(j[i]);
  return v;
}

json hex_mat(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) data.push_back(hexd(m(i, k)));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix unhex_mat(const json& j) {
  const auto r = j.at("rows").get<Eigen::Index>();
  const auto c = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != r * c) throw ParseError("matrix size mismatch", 0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index k = 0; k < c; ++k) m(i, k) = unhex(data[static_cast<size_t>(i * c + k)]);
  }
  return m;
}

// ---- plain numerics for configs and snapshots ----

json plain_vec(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector plain_vec_in(const json& j) {
  const auto xs = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

json plain_rows(const PointSet& p) {
  json a = json::array();
  for (Eigen::Index i = 0; i < p.rows(); ++i) a.push_back(plain_vec(p.row(i).transpose()));
  return a;
}

PointSet plain_rows_in(const json& j, int cols) {
  PointSet p(static_cast<Eigen::Index>(j.size()), cols);
  for (size_t i = 0; i < j.size(); ++i) {
    const Vector r = plain_vec_in(j[i]);
    if (r.size() != cols) throw DimensionError("row " + std::to_string(i) + " has the wrong length");
    p.row(static_cast<Eigen::Index>(i)) = r.transpose();
  }
  return p;
}

json opt_to_json(const OptimizerConfig& c) {
  return {{"max_iters", c.max_iters},
          {"grad_tol", c.grad_tol},
          {"step_tol", c.step_tol},
          {"restarts", c.restarts},
          {"early_stop_p_band", {c.early_stop_p_low, c.early_stop_p_high}},
          {"max_step", c.max_step}};
}

OptimizerConfig opt_from_json(const json& j, OptimizerConfig c) {
  c.max_iters = j.value("max_iters", c.max_iters);
  c.grad_tol = j.value("grad_tol", c.grad_tol);
  c.step_tol = j.value("step_tol", c.step_tol);
  c.restarts = j.value("restarts", c.restarts);
  if (j.contains("early_stop_p_band")) {
    c.early_stop_p_low = j["early_stop_p_band"].at(0).get<double>();
    c.early_stop_p_high = j["early_stop_p_band"].at(1).get<double>();
  }
  c.max_step = j.value("max_step", c.max_step);
  return c;
}

// ---- state pieces ----

json model_to_json(const KernelModel& m) {
  json comps = json::array();
  for (const auto& c : m.components) {
    comps.push_back({{"signal_variance", hexd(c.scalar.signal_variance)},
                     {"lengthscales", hex_vec(c.scalar.lengthscales)},
                     {"chol_factor", hex_mat(c.task.chol_factor)}});
  }
  return {{"task_means", hex_vec(m.task_means)}, {"components", comps}};
}

KernelModel model_from_json(const json& j) {
  KernelModel m;
  m.task_means = unhex_vec(j.at("task_means"));
  for (const auto& c : j.at("components")) {
    KernelComponent k;
    k.scalar.signal_variance = unhex(c.at("signal_variance"));
    k.scalar.lengthscales = unhex_vec(c.at("lengthscales"));
    k.task.chol_factor = unhex_mat(c.at("chol_factor"));
    m.components.push_back(std::move(k));
  }
  return m;
}

json data_to_json(const Dataset& d) {
  return {{"points", hex_mat(d.points)},
          {"observations", hex_vec(d.observations)},
          {"noise_var", hex_vec(d.noise_var)}};
}

Dataset data_from_json(const json& j) {
  Dataset d;
  d.points = unhex_mat(j.at("points"));
  d.observations = unhex_vec(j.at("observations"));
  d.noise_var = unhex_vec(j.at("noise_var"));
  return d;
}

json report_to_json(const ValidationReport& r) {
  return {{"statistic", hexd(r.statistic)},
          {"dof", r.dof},
          {"p_value", hexd(r.p_value)},
          {"kind", to_string(r.kind)}};
}

ValidationReport report_from_json(const json& j) {
  ValidationReport r;
  r.statistic = unhex(j.at("statistic"));
  r.dof = j.at("dof").get<int>();
  r.p_value = unhex(j.at("p_value"));
  r.kind = validation_kind_from_string(j.at("kind").get<std::string>());
  return r;
}

json opt_report(const std::optional<ValidationReport>& r) {
  return r ? report_to_json(*r) : json(nullptr);
}

std::optional<ValidationReport> opt_report_in(const json& j) {
  if (j.is_null()) return std::nullopt;
  return report_from_json(j);
}

json ub_to_json(const UncertaintyBox& u) {
  return {{"center", hex_vec(u.center)}, {"half_widths", hex_vec(u.half_widths)}};
}

UncertaintyBox ub_from_json(const json& j) {
  return {unhex_vec(j.at("center")), unhex_vec(j.at("half_widths"))};
}

json breakdown_to_json(const AcquisitionBreakdown& b) {
  return {{"log_det_term", hexd(b.log_det_term)}, {"data_fit_term", hexd(b.data_fit_term)},
          {"trace_term", hexd(b.trace_term)},     {"total", hexd(b.total)},
          {"T", hex_mat(b.T)},                    {"q_f1", hex_mat(b.q_f1)},
          {"q_f12", hex_mat(b.q_f12)},            {"p_f1", hex_vec(b.p_f1)},
          {"eig_nats", hexd(b.eig_nats)}};
}

AcquisitionBreakdown breakdown_from_json(const json& j) {
  AcquisitionBreakdown b;
  b.log_det_term = unhex(j.at("log_det_term"));
  b.data_fit_term = unhex(j.at("data_fit_term"));
  b.trace_term = unhex(j.at("trace_term"));
  b.total = unhex(j.at("total"));
  b.T = unhex_mat(j.at("T"));
  b.q_f1 = unhex_mat(j.at("q_f1"));
  b.q_f12 = unhex_mat(j.at("q_f12"));
  b.p_f1 = unhex_vec(j.at("p_f1"));
  b.eig_nats = unhex(j.at("eig_nats"));
  return b;
}

json record_to_json(const IterationRecord& r) {
  return {{"iter", r.iter},
          {"pass", r.pass},
          {"kind", to_string(r.kind)},
          {"components", r.components},
          {"x", hex_vec(r.x)},
          {"batch", hex_mat(r.batch)},
          {"log_det_term", hexd(r.log_det_term)},
          {"data_fit_term", hexd(r.data_fit_term)},
          {"trace_term", hexd(r.trace_term)},
          {"total", hexd(r.total)},
          {"eig", hexd(r.eig)},
          {"convergence_checked", r.convergence_checked},
          {"validation", report_to_json(r.validation)},
          {"training", opt_report(r.training)},
          {"gp_log_likelihood", hexd(r.gp_log_likelihood)},
          {"ub", ub_to_json(r.ub)},
          {"eig_counter", r.eig_counter},
          {"samples_added", r.samples_added},
          {"total_samples", r.total_samples},
          {"outcome", to_string(r.outcome)}};
}

IterationRecord record_from_json(const json& j) {
  IterationRecord r;
  r.iter = j.at("iter").get<int>();
  r.pass = j.at("pass").get<int>();
  r.kind = pass_kind_from_string(j.at("kind").get<std::string>());
  r.components = j.at("components").get<int>();
  r.x = unhex_vec(j.at("x"));
  r.batch = unhex_mat(j.at("batch"));
  r.log_det_term = unhex(j.at("log_det_term"));
  r.data_fit_term = unhex(j.at("data_fit_term"));
  r.trace_term = unhex(j.at("trace_term"));
  r.total = unhex(j.at("total"));
  r.eig = unhex(j.at("eig"));
  r.convergence_checked = j.at("convergence_checked").get<bool>();
  r.validation = report_from_json(j.at("validation"));
  r.training = opt_report_in(j.at("training"));
  r.gp_log_likelihood = unhex(j.at("gp_log_likelihood"));
  r.ub = ub_from_json(j.at("ub"));
  r.eig_counter = j.at("eig_counter").get<int>();
  r.samples_added = j.at("samples_added").get<int>();
  r.total_samples = j.at("total_samples").get<int>();
  r.outcome = outcome_from_string(j.at("outcome").get<std::string>());
  return r;
}

json pass_to_json(const PassState& p) {
  return {{"x_prev", hex_vec(p.x_prev)},
          {"batch_prev", hex_mat(p.batch_prev)},
          {"breakdown", breakdown_to_json(p.breakdown)},
          {"ub", ub_to_json(p.ub)},
          {"batch_predictive", {{"mean", hex_vec(p.batch_predictive.mean)},
                                {"cov", hex_mat(p.batch_predictive.cov)}}},
          {"training", opt_report(p.training)},
          {"gp_log_likelihood", hexd(p.gp_log_likelihood)},
          {"validation", report_to_json(p.validation)},
          {"batch_observations", hex_vec(p.batch_observations)}};
}

PassState pass_from_json(const json& j) {
  PassState p;
  p.x_prev = unhex_vec(j.at("x_prev"));
  p.batch_prev = unhex_mat(j.at("batch_prev"));
  p.breakdown = breakdown_from_json(j.at("breakdown"));
  p.ub = ub_from_json(j.at("ub"));
  p.batch_predictive.mean = unhex_vec(j.at("batch_predictive").at("mean"));
  p.batch_predictive.cov = unhex_mat(j.at("batch_predictive").at("cov"));
  p.training = opt_report_in(j.at("training"));
  p.gp_log_likelihood = unhex(j.at("gp_log_likelihood"));
  p.validation = report_from_json(j.at("validation"));
  p.batch_observations = unhex_vec(j.at("batch_observations"));
  return p;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  // Write then rename so a crash never leaves a half-written state file.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp + "'");
    out << text;
    if (!out) throw Error("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
}

template <class F>
auto schema(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ParseError(std::string("schema: ") + e.what(), 0);
  }
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(OracleMode m) { return m == OracleMode::simulated ? "simulated" : "interactive"; }

OracleMode oracle_mode_from_string(const std::string& s) {
  if (s == "simulated") return OracleMode::simulated;
  if (s == "interactive") return OracleMode::interactive;
  throw ContractViolation("unknown oracle mode '" + s + "'");
}

void CampaignConfig::validate() const {
  settings.validate();
  const int d = settings.spec.dims();
  const int e = settings.spec.tasks();
  if (noise_std.size() != e) throw DimensionError("noise_std length differs from the task count");
  if (x0.size() != d) throw DimensionError("x0 dimension");
  if (max_iters < 0) throw ContractViolation("max_iters must be >= 0");
  if (mode == OracleMode::simulated && response != "peaks2d") {
    throw ContractViolation("unknown response '" + response + "'");
  }
  if (mode == OracleMode::simulated && (d != 2 || e != 2)) {
    throw DimensionError("the peaks2d response has D = E = 2");
  }
  const auto& init = initial_design;
  if (init.points.rows() > 0) {
    if (init.points.cols() != d) throw DimensionError("initial design dimension");
    if (init.observations.size() && init.observations.size() != init.points.rows() * e) {
      throw DimensionError("initial observations must have N1 * E entries");
    }
  } else {
    if (init.center.size() != d) throw DimensionError("initial design center dimension");
    if (init.count < 1) throw ContractViolation("initial design count must be >= 1");
    if (!(init.spread >= 0.0)) throw ContractViolation("initial design spread must be >= 0");
  }
}

CampaignConfig default_config() {
  ProblemSpec spec{test_function_domain(), Vector{{0.3380, 0.3502}}, Vector{{0.01, 0.01}}};
  CampaignConfig cfg;
  cfg.noise_std = Vector::Constant(2, 0.01);
  cfg.settings = CampaignSettings::defaults(spec, cfg.noise_std.array().square());
  cfg.settings.seed = 1;
  cfg.x0 = Vector{{-2.0, 2.0}};
  cfg.initial_design.center = Vector{{1.5, -1.5}};
  cfg.initial_design.count = 4;
  cfg.initial_design.spread = 0.25;
  cfg.max_iters = 60;
  return cfg;
}

json config_to_json(const CampaignConfig& cfg) {
  const auto& s = cfg.settings;
  json init;
  if (cfg.initial_design.points.rows() > 0) {
    init["points"] = plain_rows(cfg.initial_design.points);
    if (cfg.initial_design.observations.size()) {
      const int e = s.spec.tasks();
      PointSet obs = Eigen::Map<const Matrix>(cfg.initial_design.observations.data(), e,
                                              cfg.initial_design.points.rows()).transpose();
      init["observations"] = plain_rows(obs);
    }
  } else {
    init = {{"center", plain_vec(cfg.initial_design.center)},
            {"count", cfg.initial_design.count},
            {"spread", cfg.initial_design.spread}};
  }
  return {{"format_version", kFormatVersion},
          {"problem", {{"domain", {{"lower", plain_vec(s.spec.domain.lower)},
                                   {"upper", plain_vec(s.spec.domain.upper)}}},
                       {"target_design", plain_vec(s.spec.target_design)},
                       {"tolerance", plain_vec(s.spec.tolerance)}}},
          {"convergence", {{"eig_threshold", s.conv.eig_threshold}, {"eig_patience", s.conv.eig_patience}}},
          {"initialization", {{"cluster_scale", s.policy.cluster_scale},
                              {"perturb_scale", s.policy.perturb_scale},
                              {"ridge", s.policy.ridge},
                              {"duplicate_tol", s.policy.duplicate_tol}}},
          {"gp_optimizer", opt_to_json(s.gp_opt)},
          {"tad_optimizer", opt_to_json(s.tad_opt)},
          {"noise_std", plain_vec(cfg.noise_std)},
          {"batch_size", s.batch_size},
          {"initial_components", s.initial_components},
          {"validation_threshold", s.validation_threshold},
          {"penalty_strength", s.penalty_strength},
          {"seed", s.seed},
          {"mode", to_string(cfg.mode)},
          {"response", cfg.response},
          {"x0", plain_vec(cfg.x0)},
          {"initial_design", init},
          {"max_iters", cfg.max_iters}};
}

CampaignConfig config_from_json(const json& j) {
  return schema([&] {
    if (j.contains("format_version") && j["format_version"].get<int>() != kFormatVersion) {
      throw UnsupportedVersion(j["format_version"].get<int>());
    }
    const json& p = j.at("problem");
    ProblemSpec spec;
    spec.domain.lower = plain_vec_in(p.at("domain").at("lower"));
    spec.domain.upper = plain_vec_in(p.at("domain").at("upper"));
    spec.target_design = plain_vec_in(p.at("target_design"));
    spec.tolerance = plain_vec_in(p.at("tolerance"));
    const int d = spec.dims();
    const int e = spec.tasks();

    CampaignConfig cfg;
    cfg.noise_std = j.contains("noise_std") ? plain_vec_in(j["noise_std"]) : Vector::Constant(e, 0.01);
    cfg.settings = CampaignSettings::defaults(spec, cfg.noise_std.array().square());
    auto& s = cfg.settings;
    if (j.contains("convergence")) {
      s.conv.eig_threshold = j["convergence"].value("eig_threshold", s.conv.eig_threshold);
      s.conv.eig_patience = j["convergence"].value("eig_patience", s.conv.eig_patience);
    }
    if (j.contains("initialization")) {
      const json& i = j["initialization"];
      s.policy.cluster_scale = i.value("cluster_scale", s.policy.cluster_scale);
      s.policy.perturb_scale = i.value("perturb_scale", s.policy.perturb_scale);
      s.policy.ridge = i.value("ridge", s.policy.ridge);
      s.policy.duplicate_tol = i.value("duplicate_tol", s.policy.duplicate_tol);
    }
    if (j.contains("gp_optimizer")) s.gp_opt = opt_from_json(j["gp_optimizer"], s.gp_opt);
    if (j.contains("tad_optimizer")) s.tad_opt = opt_from_json(j["tad_optimizer"], s.tad_opt);
    s.batch_size = j.value("batch_size", s.batch_size);
    s.initial_components = j.value("initial_components", s.initial_components);
    s.validation_threshold = j.value("validation_threshold", s.validation_threshold);
    s.penalty_strength = j.value("penalty_strength", s.penalty_strength);
    s.seed = j.value("seed", s.seed);
    cfg.mode = oracle_mode_from_string(j.value("mode", std::string("simulated")));
    cfg.response = j.value("response", cfg.response);
    cfg.x0 = j.contains("x0") ? plain_vec_in(j["x0"]) : Vector((spec.domain.lower + spec.domain.upper) / 2.0);
    cfg.max_iters = j.value("max_iters", cfg.max_iters);
    if (j.contains("initial_design")) {
      const json& i = j["initial_design"];
      if (i.contains("points")) {
        cfg.initial_design.points = plain_rows_in(i["points"], d);
        if (i.contains("observations")) {
          const PointSet obs = plain_rows_in(i["observations"], e);
          if (obs.rows() != cfg.initial_design.points.rows()) {
            throw DimensionError("initial observations must have one row per design point");
          }
          cfg.initial_design.observations = Eigen::Map<const Vector>(Matrix(obs.transpose()).data(), obs.size());
        }
      } else {
        cfg.initial_design.center = i.contains("center") ? plain_vec_in(i["center"]) : cfg.x0;
        cfg.initial_design.count = i.value("count", cfg.initial_design.count);
        cfg.initial_design.spread = i.value("spread", cfg.initial_design.spread);
      }
    } else {
      cfg.initial_design.center = cfg.x0;
    }
    cfg.validate();
    return cfg;
  });
}

CampaignConfig load_config(const std::string& path) { return config_from_json(parse_json(read_file(path))); }

void save_config(const CampaignConfig& cfg, const std::string& path) {
  write_file(path, config_to_json(cfg).dump(2) + "\n");
}

CampaignState create_campaign(const CampaignConfig& cfg) {
  cfg.validate();
  const auto& init = cfg.initial_design;
  PointSet points = init.points;
  if (points.rows() == 0) {
    points = initial_design_near(init.center, init.count, init.spread, cfg.settings.spec.domain,
                                 cfg.settings.seed);
  }
  return initialize_campaign(cfg.settings, points, init.observations, cfg.x0);
}

std::unique_ptr<Oracle> make_oracle(const CampaignConfig& cfg) {
  if (cfg.mode == OracleMode::interactive) return nullptr;
  return std::make_unique<SimulatedOracle>(eval_test_function, cfg.noise_std, cfg.settings.seed);
}

void advance(CampaignState& st, Oracle* oracle) {
  if (st.converged()) throw ContractViolation("campaign has already converged");
  if (!oracle) {
    if (st.pending.kind != PendingKind::none) {
      throw AwaitingObservations("pending " + to_string(st.pending.kind) + " request needs observations");
    }
    propose(st);
    return;
  }
  if (st.pending.kind == PendingKind::initial) {
    ingest(st, oracle->observe(st.pending.points, st.pending.request));
  }
  step(st, oracle);
}

json state_to_json(const PersistedState& ps) {
  const CampaignState& st = ps.state;
  json hist = json::array();
  for (const auto& r : st.history) hist.push_back(record_to_json(r));
  json state = {{"data", data_to_json(st.data)},
                {"model", model_to_json(st.model)},
                {"model_fitted", st.model_fitted},
                {"components", st.components},
                {"x", hex_vec(st.x)},
                {"batch", hex_mat(st.batch)},
                {"iter", st.iter},
                {"pass", st.pass},
                {"n_check", st.n_check},
                {"eig_counter", st.eig_counter},
                {"check_model", st.check_model},
                {"perturb", st.perturb},
                {"outcome", to_string(st.outcome)},
                {"pending", {{"kind", to_string(st.pending.kind)},
                             {"points", hex_mat(st.pending.points)},
                             {"request", st.pending.request}}},
                {"next_request", st.next_request},
                {"initial_design_size", st.initial_design_size},
                {"current", pass_to_json(st.current)}};
  return {{"format_version", ps.format_version},
          {"config", config_to_json(ps.config)},
          {"state", state},
          {"history", hist}};
}

PersistedState state_from_json(const json& j) {
  const int version = schema([&] { return j.at("format_version").get<int>(); });
  if (version != kFormatVersion) throw UnsupportedVersion(version);
  return schema([&] {
    PersistedState ps;
    ps.format_version = version;
    ps.config = config_from_json(j.at("config"));
    const json& s = j.at("state");
    CampaignState& st = ps.state;
    st.settings = ps.config.settings;
    st.data = data_from_json(s.at("data"));
    st.model = model_from_json(s.at("model"));
    st.model_fitted = s.at("model_fitted").get<bool>();
    st.components = s.at("components").get<int>();
    st.x = unhex_vec(s.at("x"));
    st.batch = unhex_mat(s.at("batch"));
    st.iter = s.at("iter").get<int>();
    st.pass = s.at("pass").get<int>();
    st.n_check = s.at("n_check").get<int>();
    st.eig_counter = s.at("eig_counter").get<int>();
    st.check_model = s.at("check_model").get<bool>();
    st.perturb = s.at("perturb").get<bool>();
    st.outcome = outcome_from_string(s.at("outcome").get<std::string>());
    st.pending.kind = pending_kind_from_string(s.at("pending").at("kind").get<std::string>());
    st.pending.points = unhex_mat(s.at("pending").at("points"));
    st.pending.request = s.at("pending").at("request").get<std::uint64_t>();
    st.next_request = s.at("next_request").get<std::uint64_t>();
    st.initial_design_size = s.at("initial_design_size").get<int>();
    st.current = pass_from_json(s.at("current"));
    for (const auto& r : j.at("history")) st.history.push_back(record_from_json(r));
    return ps;
  });
}

std::string dump_state(const PersistedState& ps) { return state_to_json(ps).dump(1) + "\n"; }

PersistedState parse_state(const std::string& text) { return state_from_json(parse_json(text)); }

void save_state(const PersistedState& ps, const std::string& path) { write_file(path, dump_state(ps)); }

PersistedState load_state(const std::string& path) { return parse_state(read_file(path)); }

json history_json(const CampaignState& st) {
  json a = json::array();
  for (const auto& r : st.history) {
    a.push_back({{"iter", r.iter},
                 {"pass", r.pass},
                 {"kind", to_string(r.kind)},
                 {"components", r.components},
                 {"x", plain_vec(r.x)},
                 {"batch", plain_rows(r.batch)},
                 {"acquisition", {{"log_det_term", r.log_det_term},
                                  {"data_fit_term", r.data_fit_term},
                                  {"trace_term", r.trace_term},
                                  {"total", r.total}}},
                 {"eig", r.eig},
                 {"convergence_checked", r.convergence_checked},
                 {"validation", {{"statistic", r.validation.statistic},
                                 {"dof", r.validation.dof},
                                 {"p_value", r.validation.p_value},
                                 {"kind", to_string(r.validation.kind)}}},
                 {"training_p_value", r.training ? json(r.training->p_value) : json(nullptr)},
                 {"ub", {{"center", plain_vec(r.ub.center)}, {"half_widths", plain_vec(r.ub.half_widths)}}},
                 {"eig_counter", r.eig_counter},
                 {"samples_added", r.samples_added},
                 {"total_samples", r.total_samples},
                 {"outcome", to_string(r.outcome)}});
  }
  return a;
}

json snapshot_json(const PersistedState& ps) {
  const CampaignState& st = ps.state;
  const ProblemSpec& spec = st.settings.spec;
  json eig = json::array();
  json pvals = json::array();
  for (const auto& r : st.history) {
    eig.push_back(r.eig);
    pvals.push_back(r.validation.p_value);
  }
  json ub = nullptr;
  if (!st.history.empty()) {
    ub = {{"center", plain_vec(st.history.back().ub.center)},
          {"half_widths", plain_vec(st.history.back().ub.half_widths)}};
  }
  json pending = nullptr;
  if (st.pending.kind != PendingKind::none) {
    pending = {{"kind", to_string(st.pending.kind)},
               {"request", st.pending.request},
               {"points", plain_rows(st.pending.points)}};
  }
  return {{"spec", {{"domain", {{"lower", plain_vec(spec.domain.lower)}, {"upper", plain_vec(spec.domain.upper)}}},
                    {"target_design", plain_vec(spec.target_design)},
                    {"tolerance", plain_vec(spec.tolerance)}}},
          {"mode", to_string(ps.config.mode)},
          {"iter", st.iter},
          {"pass", st.pass},
          {"components", st.components},
          {"outcome", to_string(st.outcome)},
          {"x", plain_vec(st.x)},
          {"ub", ub},
          {"ttr", {{"lower", plain_vec(spec.ttr_lower())}, {"upper", plain_vec(spec.ttr_upper())}}},
          {"eig_history", eig},
          {"p_value_history", pvals},
          {"eig_threshold", st.settings.conv.eig_threshold},
          {"eig_patience", st.settings.conv.eig_patience},
          {"eig_counter", st.eig_counter},
          {"validation_threshold", st.settings.validation_threshold},
          {"pending", pending},
          {"total_samples", st.total_samples()}};
}

std::string iterations_csv(const CampaignState& st) {
  const int d = st.settings.spec.dims();
  const int e = st.settings.spec.tasks();
  std::ostringstream out;
  out << "iter,pass,kind,components";
  for (int k = 0; k < d; ++k) out << ",x_" << k + 1;
  out << ",log_det_term,data_fit_term,trace_term,total,eig,convergence_checked,p_value,statistic,dof,"
         "training_p_value";
  for (int k = 0; k < e; ++k) out << ",ub_center_" << k + 1;
  for (int k = 0; k < e; ++k) out << ",ub_half_width_" << k + 1;
  out << ",eig_counter,samples_added,total_samples,outcome\n";
  for (const auto& r : st.history) {
    out << r.iter << ',' << r.pass << ',' << to_string(r.kind) << ',' << r.components;
    for (int k = 0; k < d; ++k) out << ',' << num(r.x[k]);
    out << ',' << num(r.log_det_term) << ',' << num(r.data_fit_term) << ',' << num(r.trace_term) << ','
        << num(r.total) << ',' << num(r.eig) << ',' << (r.convergence_checked ? 1 : 0) << ','
        << num(r.validation.p_value) << ',' << num(r.validation.statistic) << ',' << r.validation.dof << ','
        << (r.training ? num(r.training->p_value) : std::string());
    for (int k = 0; k < e; ++k) out << ',' << num(r.ub.center[k]);
    for (int k = 0; k < e; ++k) out << ',' << num(r.ub.half_widths[k]);
    out << ',' << r.eig_counter << ',' << r.samples_added << ',' << r.total_samples << ','
        << to_string(r.outcome) << '\n';
  }
  return out.str();
}

std::string samples_csv(const CampaignState& st) {
  const int d = st.settings.spec.dims();
  const int e = st.settings.spec.tasks();
  std::ostringstream out;
  out << "index";
  for (int k = 0; k < d; ++k) out << ",d_" << k + 1;
  for (int k = 0; k < e; ++k) out << ",g_" << k + 1;
  for (int k = 0; k < e; ++k) out << ",noise_var_" << k + 1;
  out << '\n';
  for (int i = 0; i < st.data.size(); ++i) {
    out << i;
    for (int k = 0; k < d; ++k) out << ',' << num(st.data.points(i, k));
    for (int k = 0; k < e; ++k) out << ',' << num(st.data.observations[i * e + k]);
    for (int k = 0; k < e; ++k) out << ',' << num(st.data.noise_var[i * e + k]);
    out << '\n';
  }
  return out.str();
}

void export_history(const CampaignState& st, const std::string& dir) {
  if (st.history.empty()) throw ContractViolation("nothing to export: no completed iterations");
  std::filesystem::create_directories(dir);
  write_file((std::filesystem::path(dir) / "iterations.csv").string(), iterations_csv(st));
  write_file((std::filesystem::path(dir) / "samples.csv").string(), samples_csv(st));
}

Vector parse_observations_csv(const std::string& text, int rows, int tasks) {
  std::istringstream in(text);
  std::string line;
  std::vector<double> vals;
  int seen = 0;
  size_t offset = 0;
  while (std::getline(in, line)) {
    const size_t line_start = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    std::istringstream cells(line);
    std::string cell;
    int cols = 0;
    while (std::getline(cells, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) {
        // A non-numeric first row is a header.
        if (seen == 0 && vals.empty() && cols == 0) break;
        throw ParseError("non-numeric cell '" + cell + "'", line_start);
      }
      vals.push_back(v);
      ++cols;
    }
    if (cols == 0) continue;
    if (cols != tasks) {
      throw DimensionError("row " + std::to_string(seen + 1) + " has " + std::to_string(cols) +
                           " columns, expected " + std::to_string(tasks));
    }
    ++seen;
  }
  if (seen != rows) {
    throw DimensionError("expected " + std::to_string(rows) + " rows, got " + std::to_string(seen));
  }
  return Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace tad
