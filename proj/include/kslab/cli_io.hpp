// Experiment configs, on-disk formats and the command-line front end.
//
// Files of one run directory:
//   series.csv      "# config_hash=<hex>" then t,dt,mass_u,mass_v,sup_u,sup_v,F,D,f_l2,g_l2,gradv_lp
//   snap_<i>.txt    "# config_hash", "n R N grading t" header, then "r u v" rows
//   verdict.json    outcome, t_detect, optional extrapolation
//   checks.json     CheckReports (when a battery ran)
//   manifest.json   written last; its presence marks the directory complete
#ifndef KSLAB_CLI_IO_HPP
#define KSLAB_CLI_IO_HPP

#include "kslab/initial_data.hpp"
#include "kslab/solver.hpp"
#include "kslab/verifier.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace kslab {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Config or CLI usage problem; reported as a single line with a nonzero exit.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GridConfig {
  int n = 3;
  double R = 1;
  int N = 256;
  double grading = 1;
  /// Width of the innermost cell; when set it determines the grading.
  std::optional<double> first_width;

  GridPtr build() const;
  bool operator==(const GridConfig&) const = default;
};

struct InitialConfig {
  std::string kind = "constant";  // constant | bump | lemma14
  // constant: u = c_u, v = c_v + amplitude cos(mode pi r / R)
  double c_u = 1, c_v = 1;
  double amplitude = 0;
  int mode = 1;
  // bump: u = v with mass m
  double mass = 1;
  double width = 0.3;
  // lemma14: baseline u = v = baseline, radius rule scale * ratio^k
  double baseline = 1;
  double p = 1.1;
  std::optional<double> alpha;
  double radius_scale = 0.5;
  double radius_ratio = 0.5;
  int k = 1;
  std::optional<std::pair<int, int>> k_range;

  bool operator==(const InitialConfig&) const = default;
};

struct CheckConfig {
  std::string name;
  double kappa = 2;
  double p = 1.4;
  bool operator==(const CheckConfig&) const = default;
};

struct OutputConfig {
  std::string directory = "run";
  int snapshot_every = 100;
  std::vector<std::string> formats = {"csv", "json", "snapshot"};
  bool operator==(const OutputConfig&) const = default;
};

struct ExperimentConfig {
  GridConfig grid;
  InitialConfig initial;
  SolverConfig solver;
  std::vector<CheckConfig> checks;
  OutputConfig output;

  /// Validates every embedded parameter window; throws ConfigError.
  void validate() const;
  Lemma14Recipe recipe() const;
  /// k values this config covers: k_range when set, else the single k.
  std::vector<int> k_values() const;
};

bool operator==(const SolverConfig& a, const SolverConfig& b);
bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

json to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const json& j);
ExperimentConfig load_config(const fs::path& path);

/// FNV-1a 64-bit over the canonical JSON dump, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);
std::string config_hash(const ExperimentConfig& cfg);

/// Initial state for the configured kind; lemma14 uses the given k.
State initial_state(const ExperimentConfig& cfg, int k);

/// Directory under $KS_OUTPUT_ROOT when set and dir is relative.
fs::path resolve_output(const fs::path& dir);

// Series CSV
void write_series(std::ostream& os, const std::vector<SeriesRecord>& series, const std::string& hash);
std::vector<SeriesRecord> read_series(std::istream& is, std::string* hash = nullptr);

// Snapshot text; the reader rebuilds the grid from the header.
void write_snapshot(std::ostream& os, const State& s, const std::string& hash);
State read_snapshot(std::istream& is, std::string* hash = nullptr);

json to_json(const BlowupVerdict& v);
BlowupVerdict verdict_from_json(const json& j);
json to_json(const CheckReport& r);
CheckReport report_from_json(const json& j);

struct RunManifest {
  std::string config_hash;
  std::string version;
  std::string created;
  std::string status;
  std::vector<std::string> files;  // relative to the manifest directory
  json extra = json::object();
};

json to_json(const RunManifest& m);
RunManifest manifest_from_json(const json& j);
RunManifest load_manifest(const fs::path& path);

/// Writes text to path via a temporary file and rename.
void write_file_atomic(const fs::path& path, const std::string& text);

/// Persists a trajectory, its verdict and optional check reports into dir,
/// writing the manifest last.
RunManifest persist_run(const Trajectory& traj, const ExperimentConfig& cfg, const fs::path& dir,
                        const std::vector<CheckReport>& reports = {});

/// Loads every series and snapshot a manifest lists.
struct StoredRun {
  RunManifest manifest;
  std::vector<SeriesRecord> series;
  std::vector<State> snapshots;
  std::optional<BlowupVerdict> verdict;
};
StoredRun load_run(const fs::path& manifest_path);

/// Named battery over a stored run: "trajectory" (all), "conservation",
/// "energy", "bounds", "odi".
std::vector<CheckReport> run_battery(const StoredRun& run, const std::string& battery, double kappa = 2.0,
                                     double p = 1.4);

/// gnuplot script for F(t), D(t), sup_u(t) and v(r) r^kappa of a stored run.
std::string plot_script(const StoredRun& run, const fs::path& run_dir, double kappa = 2.0);

/// Entry point of the kslab tool; returns the process exit status.
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);

inline constexpr const char* kArtifactVersion = "1.0.0";

}  // namespace kslab

#endif  // KSLAB_CLI_IO_HPP
