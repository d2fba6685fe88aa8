#include "tad/service.hpp"

#include <filesystem>

#include <httplib.h>

#include "tad/errors.hpp"

namespace tad {

using nlohmann::json;

namespace {

CampaignService::Response error(int status, const std::string& msg) { return {status, {{"error", msg}}}; }

}  // namespace

CampaignService::CampaignService(std::string state_dir) : state_dir_(std::move(state_dir)) {
  if (!state_dir_.empty()) std::filesystem::create_directories(state_dir_);
}

CampaignService::~CampaignService() {
  std::lock_guard<std::mutex> reg(registry_);
  for (auto& [id, e] : campaigns_) {
    {
      std::lock_guard<std::mutex> lk(e->meta);
      e->stop = true;
    }
    e->cv.notify_all();
    if (e->worker.joinable()) e->worker.join();
  }
}

std::string CampaignService::create(const CampaignConfig& cfg) {
  PersistedState ps;
  ps.config = cfg;
  ps.state = create_campaign(cfg);
  return adopt(std::move(ps));
}

std::string CampaignService::adopt(PersistedState ps) {
  auto e = std::make_unique<Entry>();
  e->oracle = make_oracle(ps.config);
  e->ps = std::move(ps);
  Entry* raw = e.get();
  std::string id;
  {
    std::lock_guard<std::mutex> reg(registry_);
    id = "c" + std::to_string(next_id_++);
    campaigns_.emplace(id, std::move(e));
  }
  {
    std::lock_guard<std::mutex> lk(raw->state_mutex);
    publish(id, *raw);
  }
  raw->worker = std::thread([this, id, raw] { work(id, raw); });
  return id;
}

CampaignService::Entry* CampaignService::find(const std::string& id) const {
  std::lock_guard<std::mutex> reg(registry_);
  const auto it = campaigns_.find(id);
  return it == campaigns_.end() ? nullptr : it->second.get();
}

// Caller holds state_mutex.
void CampaignService::publish(const std::string& id, Entry& e) {
  auto snap = std::make_shared<const json>(snapshot_json(e.ps));
  auto hist = std::make_shared<const json>(history_json(e.ps.state));
  if (!state_dir_.empty()) save_state(e.ps, (std::filesystem::path(state_dir_) / (id + ".json")).string());
  std::lock_guard<std::mutex> lk(e.meta);
  e.snapshot = std::move(snap);
  e.history = std::move(hist);
}

void CampaignService::run_step(Entry& e) { advance(e.ps.state, e.oracle.get()); }

void CampaignService::work(const std::string& id, Entry* e) {
  while (true) {
    std::string job_id;
    {
      std::unique_lock<std::mutex> lk(e->meta);
      e->cv.wait(lk, [&] { return e->stop || !e->queue.empty(); });
      if (e->stop) return;
      job_id = e->queue.front();
      e->queue.pop_front();
      e->running = true;
      e->jobs[job_id].status = "running";
    }
    std::string status = "done";
    std::string err;
    {
      std::lock_guard<std::mutex> sl(e->state_mutex);
      try {
        run_step(*e);
      } catch (const std::exception& ex) {
        status = "failed";
        err = ex.what();
      }
      publish(id, *e);
    }
    {
      std::lock_guard<std::mutex> lk(e->meta);
      e->jobs[job_id].status = status;
      e->jobs[job_id].error = err;
      e->running = false;
    }
    e->cv.notify_all();
  }
}

CampaignService::Response CampaignService::create_json(const json& body) {
  try {
    const std::string id = create(config_from_json(body));
    return {201, {{"id", id}}};
  } catch (const std::exception& ex) {
    return error(422, ex.what());
  }
}

CampaignService::Response CampaignService::state(const std::string& id) const {
  Entry* e = find(id);
  if (!e) return error(404, "no campaign '" + id + "'");
  std::lock_guard<std::mutex> lk(e->meta);
  json body = *e->snapshot;
  body["id"] = id;
  body["busy"] = e->running || !e->queue.empty();
  return {200, body};
}

CampaignService::Response CampaignService::history(const std::string& id) const {
  Entry* e = find(id);
  if (!e) return error(404, "no campaign '" + id + "'");
  std::lock_guard<std::mutex> lk(e->meta);
  return {200, *e->history};
}

CampaignService::Response CampaignService::observations(const std::string& id, const json& body) {
  Entry* e = find(id);
  if (!e) return error(404, "no campaign '" + id + "'");
  {
    std::lock_guard<std::mutex> lk(e->meta);
    if (e->running || !e->queue.empty()) return error(409, "a step is in progress");
  }
  std::lock_guard<std::mutex> sl(e->state_mutex);
  CampaignState& st = e->ps.state;
  if (st.pending.kind == PendingKind::none) return error(409, "no pending batch");
  if (!body.is_object() || !body.contains("observations") || !body["observations"].is_array()) {
    return error(400, "body must be {\"observations\": [[...], ...]}");
  }
  const json& rows = body["observations"];
  const int e_tasks = st.settings.spec.tasks();
  const auto n = st.pending.points.rows();
  if (static_cast<Eigen::Index>(rows.size()) != n) {
    return error(422, "expected " + std::to_string(n) + " rows, got " + std::to_string(rows.size()));
  }
  Vector obs(n * e_tasks);
  for (size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].is_array() || static_cast<int>(rows[i].size()) != e_tasks) {
      return error(422, "row " + std::to_string(i) + " must hold " + std::to_string(e_tasks) + " numbers");
    }
    for (int k = 0; k < e_tasks; ++k) {
      if (!rows[i][k].is_number()) return error(422, "row " + std::to_string(i) + " has a non-number");
      obs[static_cast<Eigen::Index>(i) * e_tasks + k] = rows[i][k].get<double>();
    }
  }
  try {
    ingest(st, obs);
  } catch (const Error& ex) {
    return error(422, ex.what());
  }
  publish(id, *e);
  return {202, {{"accepted", true}, {"pending", to_string(st.pending.kind)}}};
}

CampaignService::Response CampaignService::step(const std::string& id) {
  Entry* e = find(id);
  if (!e) return error(404, "no campaign '" + id + "'");
  std::string job_id;
  {
    std::lock_guard<std::mutex> lk(e->meta);
    job_id = "j" + std::to_string(e->next_job++);
    e->jobs[job_id] = Job{job_id, "queued", {}};
    e->queue.push_back(job_id);
  }
  e->cv.notify_all();
  return {202, {{"job", job_id}, {"status", "queued"}}};
}

CampaignService::Response CampaignService::job(const std::string& id, const std::string& job_id) const {
  Entry* e = find(id);
  if (!e) return error(404, "no campaign '" + id + "'");
  std::lock_guard<std::mutex> lk(e->meta);
  const auto it = e->jobs.find(job_id);
  if (it == e->jobs.end()) return error(404, "no job '" + job_id + "'");
  json body = {{"job", it->second.id}, {"status", it->second.status}};
  if (!it->second.error.empty()) body["error"] = it->second.error;
  return {200, body};
}

void CampaignService::wait_idle(const std::string& id) {
  Entry* e = find(id);
  if (!e) throw ContractViolation("no campaign '" + id + "'");
  std::unique_lock<std::mutex> lk(e->meta);
  e->cv.wait(lk, [&] { return !e->running && e->queue.empty(); });
}

PersistedState CampaignService::copy_state(const std::string& id) {
  Entry* e = find(id);
  if (!e) throw ContractViolation("no campaign '" + id + "'");
  std::lock_guard<std::mutex> sl(e->state_mutex);
  return e->ps;
}

struct HttpServer::Impl {
  CampaignService& service;
  httplib::Server server;
  explicit Impl(CampaignService& s) : service(s) {}
};

namespace {

void reply(httplib::Response& res, const CampaignService::Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

}  // namespace

HttpServer::HttpServer(CampaignService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;
  srv.Post("/api/v1/campaigns", [&svc](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error& e) {
      reply(res, error(400, e.what()));
      return;
    }
    reply(res, svc.create_json(body));
  });
  srv.Get(R"(/api/v1/campaigns/([^/]+)/state)", [&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.state(req.matches[1]));
  });
  srv.Get(R"(/api/v1/campaigns/([^/]+)/history)", [&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.history(req.matches[1]));
  });
  srv.Post(R"(/api/v1/campaigns/([^/]+)/observations)",
           [&svc](const httplib::Request& req, httplib::Response& res) {
             json body;
             try {
               body = json::parse(req.body);
             } catch (const json::parse_error& e) {
               reply(res, error(400, e.what()));
               return;
             }
             reply(res, svc.observations(req.matches[1], body));
           });
  srv.Post(R"(/api/v1/campaigns/([^/]+)/step)", [&svc](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc.step(req.matches[1]));
  });
  srv.Get(R"(/api/v1/campaigns/([^/]+)/jobs/([^/]+))",
          [&svc](const httplib::Request& req, httplib::Response& res) {
            reply(res, svc.job(req.matches[1], req.matches[2]));
          });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace tad
