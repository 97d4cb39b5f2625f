#pragma once

#include <cstdint>
#include <functional>
#include <json.hpp>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kondo_eof/scaling.hpp"

namespace kondo_eof {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Everything a run depends on. Grids are given as text: comma separated
// numbers and log:a:b:n runs (n points from 10^a to 10^b). T = 0 is the
// ground state; L = inf leaves the bath whole.
struct RunConfig {
  std::string model = "1CK";
  double Lambda = 4.0;
  double J = 0.3;
  int keep_max = 300;
  std::vector<double> z{0.0, 0.5};
  int N = 0;  // 0: deep enough for the lowest scale in the grids
  std::string T_grid = "0";
  std::string L_grid = "inf";
  std::vector<int> unit_sizes{1};
  std::vector<double> y_grid{-1.0, -0.5, 0.0, 0.5, 1.0};
  bool y_search = false;
  std::pair<double, double> fit_T{1e-2, 0.31622776601683794};
  std::pair<double, double> fit_L{3.1622776601683795, 100.0};
  std::pair<double, double> additivity_T{0.017782794100389229, 0.17782794100389229};
  std::pair<double, double> additivity_L{10.0, 100.0};
  double cloud_drop = 0.1;
  std::uint64_t seed = 12345;
  std::string output = "kondo_eof_run";  // prefix of the .csv / .json / .partial.jsonl files
  std::string checkpoint_dir;            // empty: NRG runs are not stored

  int channels() const { return model == "2CK" ? 2 : 1; }
  std::vector<double> T_values() const;
  std::vector<double> L_values() const;

  void set(const std::string& key, const std::string& value);  // throws ConfigError
  std::vector<std::pair<std::string, std::string>> entries() const;
  void validate() const;
  // FNV-1a of the physics entries (output locations excluded)
  std::string hash() const;
};

std::vector<std::string> config_keys();
std::vector<std::string> preset_names();
RunConfig preset(const std::string& name);
// Reads "key = value" lines ('#' starts a comment) on top of cfg.
void apply_config_file(RunConfig& cfg, const std::string& path);
std::vector<double> parse_grid(const std::string& text, bool allow_inf);

struct PointResult {
  double z = 0.0;
  double T_over_TK = 0.0;
  double L_over_xi = std::numeric_limits<double>::infinity();
  double lower = 0.0, upper = 0.0;
  int unit_size = 1;
  double trace_loss = 0.0, projection_loss = 0.0;
  double leakage = 0.0;
  double seconds = 0.0;
};

struct SeriesRow {
  double T_over_TK = 0.0, L_over_xi = 0.0;
  double lower = 0.0, upper = 0.0;
};

struct Analysis {
  nlohmann::json fits = nlohmann::json::array();
  nlohmann::json cloud = nlohmann::json::array();
  nlohmann::json additivity = nlohmann::json::object();
  std::vector<std::string> notes;
};

struct ExperimentResult {
  RunConfig config;
  double T_K = 0.0, xi = 0.0;
  int N = 0;
  std::string scale_note;
  std::vector<PointResult> points;  // sorted by (z, T, L)
  std::vector<SeriesRow> averaged;  // z-averaged, sorted by (T, L)
  Analysis analysis;
};

using Logger = std::function<void(const std::string&)>;

// Fans the (z, T, L) points out over `workers` threads; finished points go
// through one collector that appends them to <output>.partial.jsonl, so an
// interrupted run resumes where it stopped. Final files are written
// atomically and the partial file is removed.
ExperimentResult run_experiment(const RunConfig& cfg, int workers = 1, const Logger& log = {});

std::vector<SeriesRow> z_averaged(const std::vector<PointResult>& points);
Analysis analyze(const std::vector<SeriesRow>& rows, const RunConfig& cfg);

void write_csv(const std::string& path, const std::string& model, const std::vector<double>& z,
               const std::vector<SeriesRow>& rows);
std::vector<SeriesRow> read_csv(const std::string& path, std::string* model = nullptr);
nlohmann::json manifest(const ExperimentResult& r);
void write_atomically(const std::string& path, const std::string& content);
std::string version_string();

}  // namespace kondo_eof
