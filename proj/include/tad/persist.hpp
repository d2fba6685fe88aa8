#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "tad/campaign.hpp"
#include "tad/oracle.hpp"

namespace tad {

inline constexpr int kFormatVersion = 1;

enum class OracleMode { simulated, interactive };

std::string to_string(OracleMode m);
OracleMode oracle_mode_from_string(const std::string& s);

// Initial "1" design: explicit points (optionally with observations), or
// `count` points scattered around `center`.
struct InitialDesignConfig {
  Point center;
  int count = 4;
  double spread = 0.25;
  PointSet points;
  Vector observations;  // empty: request them from the oracle
};

struct CampaignConfig {
  CampaignSettings settings;  // settings.noise_var = noise_std^2
  OracleMode mode = OracleMode::simulated;
  Vector noise_std;
  std::string response = "peaks2d";  // simulated response surface
  Point x0;
  InitialDesignConfig initial_design;
  int max_iters = 60;

  void validate() const;
};

// The success configuration of the 2-D test problem.
CampaignConfig default_config();

nlohmann::json config_to_json(const CampaignConfig& cfg);
// Missing optional fields take defaults; domain, target_design and tolerance
// are required.
CampaignConfig config_from_json(const nlohmann::json& j);
CampaignConfig load_config(const std::string& path);
void save_config(const CampaignConfig& cfg, const std::string& path);

CampaignState create_campaign(const CampaignConfig& cfg);
// nullptr for interactive campaigns.
std::unique_ptr<Oracle> make_oracle(const CampaignConfig& cfg);

// One unit of progress shared by the CLI and the HTTP service. Simulated:
// supplies any open initial request, then completes one pass. Interactive:
// opens the next request (AwaitingObservations if one is already open).
void advance(CampaignState& st, Oracle* oracle);

struct PersistedState {
  int format_version = kFormatVersion;
  CampaignConfig config;
  CampaignState state;
};

// Lossless: every double is written as a hex-float string.
nlohmann::json state_to_json(const PersistedState& ps);
PersistedState state_from_json(const nlohmann::json& j);
std::string dump_state(const PersistedState& ps);
PersistedState parse_state(const std::string& text);
void save_state(const PersistedState& ps, const std::string& path);
PersistedState load_state(const std::string& path);

// Snapshot for the HTTP API and `status`: plain numbers, summary only.
nlohmann::json snapshot_json(const PersistedState& ps);
nlohmann::json history_json(const CampaignState& st);

// Writes <dir>/iterations.csv and <dir>/samples.csv.
void export_history(const CampaignState& st, const std::string& dir);
std::string iterations_csv(const CampaignState& st);
std::string samples_csv(const CampaignState& st);

// Parses an observations CSV: one row per pending point, E columns.
Vector parse_observations_csv(const std::string& text, int rows, int tasks);

}  // namespace tad
