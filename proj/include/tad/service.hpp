#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "tad/persist.hpp"

namespace tad {

// Campaigns keyed by id. Mutations of one campaign run one at a time on that
// campaign's worker; reads return the last published snapshot and never wait
// for an optimization to finish.
class CampaignService {
 public:
  struct Response {
    int status = 200;
    nlohmann::json body;
  };

  // state_dir: when non-empty every mutation is persisted to <dir>/<id>.json.
  explicit CampaignService(std::string state_dir = {});
  ~CampaignService();
  CampaignService(const CampaignService&) = delete;
  CampaignService& operator=(const CampaignService&) = delete;

  std::string create(const CampaignConfig& cfg);
  std::string adopt(PersistedState ps);

  Response create_json(const nlohmann::json& body);
  Response state(const std::string& id) const;
  Response history(const std::string& id) const;
  Response observations(const std::string& id, const nlohmann::json& body);
  Response step(const std::string& id);
  Response job(const std::string& id, const std::string& job_id) const;

  // Blocks until the campaign's queue is empty (tests and shutdown).
  void wait_idle(const std::string& id);
  PersistedState copy_state(const std::string& id);

 private:
  struct Job {
    std::string id;
    std::string status = "queued";  // queued, running, done, failed
    std::string error;
  };
  struct Entry {
    PersistedState ps;
    std::unique_ptr<Oracle> oracle;
    std::mutex state_mutex;          // held while the state is mutated
    mutable std::mutex meta;         // queue, jobs, snapshot
    std::condition_variable cv;
    std::deque<std::string> queue;
    bool running = false;
    bool stop = false;
    std::map<std::string, Job> jobs;
    std::uint64_t next_job = 1;
    std::shared_ptr<const nlohmann::json> snapshot;
    std::shared_ptr<const nlohmann::json> history;
    std::thread worker;
  };

  Entry* find(const std::string& id) const;
  void publish(const std::string& id, Entry& e);
  void work(const std::string& id, Entry* e);
  void run_step(Entry& e);

  std::string state_dir_;
  mutable std::mutex registry_;
  std::map<std::string, std::unique_ptr<Entry>> campaigns_;
  std::uint64_t next_id_ = 1;
};

// HTTP front end of a CampaignService (routes under /api/v1/campaigns).
class HttpServer {
 public:
  explicit HttpServer(CampaignService& service);
  ~HttpServer();

  // Returns the bound port; port 0 picks a free one.
  int bind(const std::string& host, int port);
  // Serves until stop() is called.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tad
