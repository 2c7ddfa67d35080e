#include "kslab/cli_io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>

namespace kslab {

namespace {

const char* const kSeriesHeader = "t,dt,mass_u,mass_v,sup_u,sup_v,F,D,f_l2,g_l2,gradv_lp,at_floor";

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw std::runtime_error("malformed number '" + s + "'");
  return x;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) out.push_back(cell);
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string hash_comment(const std::string& hash) { return "# config_hash=" + hash + "\n"; }

// Consumes a leading "# config_hash=" line when present.
void read_hash_line(std::istream& is, std::string* hash) {
  if (is.peek() != '#') return;
  std::string line;
  std::getline(is, line);
  const std::string key = "# config_hash=";
  if (line.rfind(key, 0) == 0 && hash) *hash = line.substr(key.size());
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

template <typename T>
void get_opt(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

json solver_json(const SolverConfig& s) {
  return {{"dt_init", s.dt_init},     {"dt_min", s.dt_min},   {"dt_max", s.dt_max},
          {"safety", s.safety},       {"blowup_factor", s.blowup_factor},
          {"t_end", s.t_end},         {"max_steps", s.max_steps},
          {"gradv_p", s.gradv_p},     {"scheme", s.scheme}};
}

double default_kappa(const ExperimentConfig& cfg) {
  for (const auto& c : cfg.checks)
    if (c.name == "pointwise_bound" || c.name == "odi_blowup") return c.kappa;
  return cfg.grid.n - 1.0;
}

}  // namespace

GridPtr GridConfig::build() const {
  const double g = first_width ? grading_for_first_width(R, N, *first_width) : grading;
  return build_grid(n, R, N, g);
}

bool operator==(const SolverConfig& a, const SolverConfig& b) {
  return a.dt_init == b.dt_init && a.dt_min == b.dt_min && a.dt_max == b.dt_max && a.safety == b.safety &&
         a.blowup_factor == b.blowup_factor && a.t_end == b.t_end && a.snapshot_every == b.snapshot_every &&
         a.max_steps == b.max_steps && a.gradv_p == b.gradv_p && a.scheme == b.scheme;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.grid == b.grid && a.initial == b.initial && a.solver == b.solver && a.checks == b.checks &&
         a.output == b.output;
}

Lemma14Recipe ExperimentConfig::recipe() const {
  const auto base = constant_profile(initial.baseline);
  const double m = initial.baseline * ball_volume(grid.n, grid.R);
  return make_recipe(grid.n, grid.R, base, base, m, initial.p, initial.alpha,
                     RadiusRule{initial.radius_scale, initial.radius_ratio});
}

std::vector<int> ExperimentConfig::k_values() const {
  if (!initial.k_range) return {initial.k};
  std::vector<int> ks;
  for (int k = initial.k_range->first; k <= initial.k_range->second; ++k) ks.push_back(k);
  return ks;
}

void ExperimentConfig::validate() const {
  try {
    if (grid.n < 3) throw ConfigError("grid.n must be >= 3");
    if (!(grid.R > 0)) throw ConfigError("grid.R must be positive");
    if (grid.N < 16) throw ConfigError("grid.N must be >= 16");
    if (!(grid.grading >= 1)) throw ConfigError("grid.grading must be >= 1");
    if (grid.first_width && !(*grid.first_width > 0 && *grid.first_width <= grid.R / grid.N))
      throw ConfigError("grid.first_width must lie in (0, R/N]");
    solver.validate();
    if (output.snapshot_every < 1) throw ConfigError("output.snapshot_every must be >= 1");
    if (initial.kind == "constant") {
      if (!(initial.c_u > 0) || !(initial.c_v > 0)) throw ConfigError("initial: constants must be positive");
      if (!(std::abs(initial.amplitude) < initial.c_v)) throw ConfigError("initial: |amplitude| must be < c_v");
    } else if (initial.kind == "bump") {
      if (!(initial.mass > 0) || !(initial.width > 0)) throw ConfigError("initial: bump mass and width must be positive");
    } else if (initial.kind == "lemma14") {
      if (!(initial.baseline > 0)) throw ConfigError("initial: baseline must be positive");
      if (!(initial.radius_scale > 0 && initial.radius_scale <= grid.R))
        throw ConfigError("initial: radius_scale must lie in (0, R]");
      if (!(initial.radius_ratio > 0 && initial.radius_ratio < 1))
        throw ConfigError("initial: radius_ratio must lie in (0, 1)");
      if (initial.k < 1) throw ConfigError("initial: k must be >= 1");
      if (initial.k_range && (initial.k_range->first < 1 || initial.k_range->second < initial.k_range->first))
        throw ConfigError("initial: k_range must be ascending and start at >= 1");
      param_window(grid.n, initial.p, default_kappa(*this), initial.alpha);
    } else {
      throw ConfigError("initial.kind must be constant, bump or lemma14");
    }
    for (const auto& c : checks) {
      if (c.name == "pointwise_bound" || c.name == "odi_blowup") {
        theta_exponent(grid.n, c.kappa);
      } else if (c.name == "gradv_lp") {
        if (!(c.p > 1 && c.p < grid.n / (grid.n - 1.0))) throw ConfigError("checks.gradv_lp: p must lie in (1, n/(n-1))");
      } else if (c.name != "conservation" && c.name != "energy_inequality") {
        throw ConfigError("checks: unknown check '" + c.name + "'");
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["grid"] = {{"n", cfg.grid.n}, {"R", cfg.grid.R}, {"N", cfg.grid.N}, {"grading", cfg.grid.grading}};
  j["grid"]["first_width"] = cfg.grid.first_width ? json(*cfg.grid.first_width) : json(nullptr);
  const auto& in = cfg.initial;
  j["initial"] = {{"kind", in.kind},
                  {"c_u", in.c_u},
                  {"c_v", in.c_v},
                  {"amplitude", in.amplitude},
                  {"mode", in.mode},
                  {"mass", in.mass},
                  {"width", in.width},
                  {"baseline", in.baseline},
                  {"p", in.p},
                  {"radius_scale", in.radius_scale},
                  {"radius_ratio", in.radius_ratio},
                  {"k", in.k}};
  j["initial"]["alpha"] = in.alpha ? json(*in.alpha) : json(nullptr);
  j["initial"]["k_range"] = in.k_range ? json::array({in.k_range->first, in.k_range->second}) : json(nullptr);
  j["solver"] = solver_json(cfg.solver);
  j["checks"] = json::array();
  for (const auto& c : cfg.checks) j["checks"].push_back({{"name", c.name}, {"kappa", c.kappa}, {"p", c.p}});
  j["output"] = {{"directory", cfg.output.directory},
                 {"snapshot_every", cfg.output.snapshot_every},
                 {"formats", cfg.output.formats}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  try {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      get_opt(g, "n", cfg.grid.n);
      get_opt(g, "R", cfg.grid.R);
      get_opt(g, "N", cfg.grid.N);
      get_opt(g, "grading", cfg.grid.grading);
      if (g.contains("first_width") && !g.at("first_width").is_null()) cfg.grid.first_width = g.at("first_width").get<double>();
    }
    if (j.contains("initial")) {
      const auto& i = j.at("initial");
      auto& in = cfg.initial;
      get_opt(i, "kind", in.kind);
      get_opt(i, "c_u", in.c_u);
      get_opt(i, "c_v", in.c_v);
      get_opt(i, "amplitude", in.amplitude);
      get_opt(i, "mode", in.mode);
      get_opt(i, "mass", in.mass);
      get_opt(i, "width", in.width);
      get_opt(i, "baseline", in.baseline);
      get_opt(i, "p", in.p);
      get_opt(i, "radius_scale", in.radius_scale);
      get_opt(i, "radius_ratio", in.radius_ratio);
      get_opt(i, "k", in.k);
      if (i.contains("alpha") && !i.at("alpha").is_null()) in.alpha = i.at("alpha").get<double>();
      if (i.contains("k_range") && !i.at("k_range").is_null()) {
        const auto& r = i.at("k_range");
        if (!r.is_array() || r.size() != 2) throw ConfigError("initial.k_range must be [first, last]");
        in.k_range = std::pair{r[0].get<int>(), r[1].get<int>()};
      }
    }
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      auto& sc = cfg.solver;
      get_opt(s, "dt_init", sc.dt_init);
      get_opt(s, "dt_min", sc.dt_min);
      get_opt(s, "dt_max", sc.dt_max);
      get_opt(s, "safety", sc.safety);
      get_opt(s, "blowup_factor", sc.blowup_factor);
      get_opt(s, "t_end", sc.t_end);
      get_opt(s, "max_steps", sc.max_steps);
      get_opt(s, "gradv_p", sc.gradv_p);
      get_opt(s, "scheme", sc.scheme);
    }
    if (j.contains("checks")) {
      for (const auto& c : j.at("checks")) {
        CheckConfig cc;
        if (c.is_string()) {
          cc.name = c.get<std::string>();
        } else {
          get_opt(c, "name", cc.name);
          get_opt(c, "kappa", cc.kappa);
          get_opt(c, "p", cc.p);
        }
        cfg.checks.push_back(cc);
      }
    }
    if (j.contains("output")) {
      const auto& o = j.at("output");
      get_opt(o, "directory", cfg.output.directory);
      get_opt(o, "snapshot_every", cfg.output.snapshot_every);
      get_opt(o, "formats", cfg.output.formats);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  cfg.solver.snapshot_every = cfg.output.snapshot_every;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j);
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string config_hash(const ExperimentConfig& cfg) { return fnv1a_hex(to_json(cfg).dump()); }

namespace {

// Stored config carries its own hash; config_from_json ignores the extra key.
std::string config_file_text(const ExperimentConfig& cfg) {
  json j = to_json(cfg);
  j["config_hash"] = config_hash(cfg);
  return j.dump(2) + "\n";
}

}  // namespace

State initial_state(const ExperimentConfig& cfg, int k) {
  const auto grid = cfg.grid.build();
  const auto& in = cfg.initial;
  if (in.kind == "constant") {
    State s;
    s.grid = grid;
    s.u = Eigen::VectorXd::Constant(grid->size(), in.c_u);
    s.v.resize(grid->size());
    for (Eigen::Index i = 0; i < s.v.size(); ++i)
      s.v[i] = in.c_v + in.amplitude * std::cos(in.mode * std::numbers::pi * grid->centers()[i] / cfg.grid.R);
    return s;
  }
  if (in.kind == "bump") return baseline_profiles(BaselineKind::bump(in.mass, in.width), grid);
  if (in.kind == "lemma14") return *lemma14_pair(cfg.recipe(), k, grid).state;
  throw ConfigError("initial.kind must be constant, bump or lemma14");
}

fs::path resolve_output(const fs::path& dir) {
  const char* root = std::getenv("KS_OUTPUT_ROOT");
  if (root && *root && dir.is_relative()) return fs::path(root) / dir;
  return dir;
}

void write_series(std::ostream& os, const std::vector<SeriesRecord>& series, const std::string& hash) {
  os << hash_comment(hash) << kSeriesHeader << '\n';
  for (const auto& r : series) {
    for (double x : {r.t, r.dt, r.mass_u, r.mass_v, r.sup_u, r.sup_v, r.F, r.D, r.f_l2, r.g_l2, r.gradv_lp})
      os << fmt17(x) << ',';
    os << (r.at_floor ? 1 : 0) << '\n';
  }
}

std::vector<SeriesRecord> read_series(std::istream& is, std::string* hash) {
  read_hash_line(is, hash);
  std::string line;
  std::getline(is, line);
  if (line != kSeriesHeader) throw std::runtime_error("series: unexpected header '" + line + "'");
  std::vector<SeriesRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split(line, ',');
    if (c.size() != 12) throw std::runtime_error("series: expected 12 columns, got " + std::to_string(c.size()));
    SeriesRecord r;
    double* fields[] = {&r.t, &r.dt, &r.mass_u, &r.mass_v, &r.sup_u, &r.sup_v, &r.F, &r.D, &r.f_l2, &r.g_l2, &r.gradv_lp};
    for (int i = 0; i < 11; ++i) *fields[i] = parse_double(c[i]);
    r.at_floor = c[11] == "1";
    out.push_back(r);
  }
  return out;
}

void write_snapshot(std::ostream& os, const State& s, const std::string& hash) {
  s.validate();
  const auto& g = s.g();
  os << hash_comment(hash) << "# n R N grading t\n";
  os << g.dimension() << ' ' << fmt17(g.radius()) << ' ' << g.size() << ' ' << fmt17(g.grading()) << ' '
     << fmt17(s.t) << '\n';
  os << "# r u v\n";
  for (Eigen::Index i = 0; i < g.size(); ++i)
    os << fmt17(g.centers()[i]) << ' ' << fmt17(s.u[i]) << ' ' << fmt17(s.v[i]) << '\n';
}

State read_snapshot(std::istream& is, std::string* hash) {
  read_hash_line(is, hash);
  std::string line;
  auto next = [&]() {
    do {
      if (!std::getline(is, line)) throw std::runtime_error("snapshot: truncated file");
    } while (line.empty() || line[0] == '#');
    return split(line, ' ');
  };
  const auto h = next();
  if (h.size() != 5) throw std::runtime_error("snapshot: header needs n R N grading t");
  State s;
  s.grid = build_grid(std::stoi(h[0]), parse_double(h[1]), std::stoi(h[2]), parse_double(h[3]));
  s.t = parse_double(h[4]);
  const auto N = s.grid->size();
  s.u.resize(N);
  s.v.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto row = next();
    if (row.size() != 3) throw std::runtime_error("snapshot: row needs r u v");
    s.u[i] = parse_double(row[1]);
    s.v[i] = parse_double(row[2]);
  }
  return s;
}

json to_json(const BlowupVerdict& v) {
  json j = {{"outcome", to_string(v.outcome)}, {"t_detect", v.t_detect}, {"trigger", v.trigger}};
  j["t_extrapolated"] = v.t_extrapolated ? json(*v.t_extrapolated) : json(nullptr);
  j["growth_exponent"] = v.growth_exponent ? json(*v.growth_exponent) : json(nullptr);
  j["note"] = "numerical blow-up evidence; t_extrapolated is a power-law extrapolation, not a bound";
  return j;
}

BlowupVerdict verdict_from_json(const json& j) {
  BlowupVerdict v;
  v.outcome = outcome_from_string(j.at("outcome").get<std::string>());
  v.t_detect = j.at("t_detect").get<double>();
  get_opt(j, "trigger", v.trigger);
  if (j.contains("t_extrapolated") && !j.at("t_extrapolated").is_null()) v.t_extrapolated = j.at("t_extrapolated").get<double>();
  if (j.contains("growth_exponent") && !j.at("growth_exponent").is_null())
    v.growth_exponent = j.at("growth_exponent").get<double>();
  return v;
}

json to_json(const CheckReport& r) {
  // JSON has no infinities; non-finite numbers go out as strings.
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(fmt17(x)); };
  json details = json::object();
  for (const auto& [k, v] : r.details) details[k] = num(v);
  return {{"name", r.name},         {"passed", r.passed}, {"applicable", r.applicable},
          {"worst_ratio", num(r.worst_ratio)}, {"location", r.location}, {"details", details},
          {"note", r.note}};
}

CheckReport report_from_json(const json& j) {
  auto num = [](const json& x) { return x.is_string() ? parse_double(x.get<std::string>()) : x.get<double>(); };
  CheckReport r;
  r.name = j.at("name").get<std::string>();
  r.passed = j.at("passed").get<bool>();
  get_opt(j, "applicable", r.applicable);
  r.worst_ratio = num(j.at("worst_ratio"));
  get_opt(j, "location", r.location);
  get_opt(j, "note", r.note);
  if (j.contains("details"))
    for (const auto& [k, v] : j.at("details").items()) r.details[k] = num(v);
  return r;
}

json to_json(const RunManifest& m) {
  return {{"config_hash", m.config_hash}, {"version", m.version}, {"created", m.created},
          {"status", m.status},           {"files", m.files},     {"extra", m.extra}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.config_hash = j.at("config_hash").get<std::string>();
  m.version = j.at("version").get<std::string>();
  get_opt(j, "created", m.created);
  m.status = j.at("status").get<std::string>();
  m.files = j.at("files").get<std::vector<std::string>>();
  if (j.contains("extra")) m.extra = j.at("extra");
  return m;
}

RunManifest load_manifest(const fs::path& path) {
  try {
    return manifest_from_json(json::parse(read_text(path)));
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed manifest " + path.string() + ": " + e.what());
  }
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

RunManifest persist_run(const Trajectory& traj, const ExperimentConfig& cfg, const fs::path& dir,
                        const std::vector<CheckReport>& reports) {
  fs::create_directories(dir);
  // A stale manifest would vouch for files about to be replaced.
  fs::remove(dir / "manifest.json");
  const std::string hash = config_hash(cfg);
  RunManifest m;
  m.config_hash = hash;
  m.version = kArtifactVersion;
  m.created = utc_now();
  m.status = to_string(traj.verdict.outcome);

  write_file_atomic(dir / "config.json", config_file_text(cfg));
  m.files.push_back("config.json");
  {
    std::ostringstream os;
    write_series(os, traj.series, hash);
    write_file_atomic(dir / "series.csv", os.str());
    m.files.push_back("series.csv");
  }
  for (std::size_t i = 0; i < traj.snapshots.size(); ++i) {
    std::ostringstream os;
    write_snapshot(os, traj.snapshots[i], hash);
    char name[32];
    std::snprintf(name, sizeof name, "snap_%05zu.txt", i);
    write_file_atomic(dir / name, os.str());
    m.files.push_back(name);
  }
  json verdict = to_json(traj.verdict);
  verdict["config_hash"] = hash;
  verdict["stop_reason"] = traj.stop_reason;
  verdict["rejected_steps"] = traj.rejected_steps;
  write_file_atomic(dir / "verdict.json", verdict.dump(2) + "\n");
  m.files.push_back("verdict.json");
  if (!reports.empty()) {
    json j = {{"config_hash", hash}, {"reports", json::array()}};
    for (const auto& r : reports) j["reports"].push_back(to_json(r));
    write_file_atomic(dir / "checks.json", j.dump(2) + "\n");
    m.files.push_back("checks.json");
  }
  m.extra["steps"] = traj.series.empty() ? 0 : traj.series.size() - 1;
  m.extra["t_final"] = traj.series.empty() ? 0.0 : traj.series.back().t;
  write_file_atomic(dir / "manifest.json", to_json(m).dump(2) + "\n");
  return m;
}

StoredRun load_run(const fs::path& manifest_path) {
  StoredRun run;
  run.manifest = load_manifest(manifest_path);
  const fs::path dir = manifest_path.parent_path();
  for (const auto& f : run.manifest.files) {
    const fs::path p = dir / f;
    if (!fs::exists(p)) throw std::runtime_error("manifest lists missing file " + f);
    if (p.extension() == ".csv" && f.rfind("series", 0) == 0) {
      std::ifstream in(p);
      std::string hash;
      run.series = read_series(in, &hash);
      if (hash != run.manifest.config_hash) throw std::runtime_error(f + ": config hash mismatch");
    } else if (f.rfind("snap_", 0) == 0) {
      std::ifstream in(p);
      std::string hash;
      run.snapshots.push_back(read_snapshot(in, &hash));
      if (hash != run.manifest.config_hash) throw std::runtime_error(f + ": config hash mismatch");
    } else if (f == "verdict.json") {
      run.verdict = verdict_from_json(json::parse(read_text(p)));
    }
  }
  return run;
}

std::vector<CheckReport> run_battery(const StoredRun& run, const std::string& battery, double kappa, double p) {
  const bool all = battery == "trajectory";
  if (!all && battery != "conservation" && battery != "energy" && battery != "bounds" && battery != "odi")
    throw ConfigError("unknown battery '" + battery + "' (trajectory|conservation|energy|bounds|odi)");
  if (run.series.empty()) throw std::runtime_error("stored run has no series");
  std::vector<CheckReport> out;
  if (all || battery == "conservation") out.push_back(check_conservation(run.series));
  if (all || battery == "energy") out.push_back(check_energy_inequality(run.series));
  if (all || battery == "bounds") {
    out.push_back(check_pointwise_bound(run.snapshots, kappa));
    out.push_back(check_gradv_lp(run.snapshots, p));
  }
  if (all || battery == "odi") {
    if (run.snapshots.empty()) throw std::runtime_error("stored run has no snapshots");
    const double theta = theta_exponent(run.snapshots.front().g().dimension(), kappa);
    std::vector<double> t, F;
    for (const auto& r : run.series) {
      t.push_back(r.t);
      F.push_back(r.F);
    }
    std::optional<double> detect;
    if (run.verdict && run.verdict->outcome == BlowupVerdict::Outcome::blew_up) detect = run.verdict->t_detect;
    out.push_back(check_odi_blowup(t, F, theta, detect));
  }
  return out;
}

std::string plot_script(const StoredRun& run, const fs::path& run_dir, double kappa) {
  std::ostringstream os;
  const std::string series = (run_dir / "series.csv").string();
  os << "# gnuplot script\n"
     << "set datafile separator ','\n"
     << "set datafile commentschars '#'\n"
     << "set key autotitle columnhead\n"
     << "set terminal pngcairo size 900,600\n"
     << "set xlabel 't'\n";
  os << "set output '" << (run_dir / "energy.png").string() << "'\n"
     << "plot '" << series << "' using 1:7 with lines title 'F(t)'\n";
  os << "set output '" << (run_dir / "dissipation.png").string() << "'\n"
     << "set logscale y\n"
     << "plot '" << series << "' using 1:8 with lines title 'D(t)'\n";
  os << "set output '" << (run_dir / "sup_u.png").string() << "'\n"
     << "plot '" << series << "' using 1:5 with lines title 'sup u(t)'\n"
     << "unset logscale y\n";
  os << "set datafile separator whitespace\n"
     << "set xlabel 'r'\nset logscale x\n"
     << "set output '" << (run_dir / "v_weighted.png").string() << "'\n"
     << "plot";
  const auto& files = run.manifest.files;
  bool first = true;
  for (const auto& f : files) {
    if (f.rfind("snap_", 0) != 0) continue;
    os << (first ? " " : ", \\\n     ") << "'" << (run_dir / f).string() << "' every ::1 using 1:($3*$1**"
       << fmt17(kappa) << ") with lines title '" << f << "'";
    first = false;
  }
  if (first) os << " 0 notitle";
  os << "\n";
  return os.str();
}

namespace {

std::vector<CheckReport> configured_checks(const Trajectory& traj, const ExperimentConfig& cfg) {
  std::vector<CheckReport> out;
  for (const auto& c : cfg.checks) {
    if (c.name == "conservation") out.push_back(check_conservation(traj));
    else if (c.name == "energy_inequality") out.push_back(check_energy_inequality(traj));
    else if (c.name == "pointwise_bound") out.push_back(check_pointwise_bound(traj, c.kappa));
    else if (c.name == "gradv_lp") out.push_back(check_gradv_lp(traj, c.p));
    else if (c.name == "odi_blowup") out.push_back(check_odi_blowup(traj, theta_exponent(cfg.grid.n, c.kappa)));
  }
  return out;
}

struct SweepItem {
  int k = 0;
  int N = 0;
  std::string subdir;
  RunManifest manifest;
  BlowupVerdict verdict;
  double F0 = 0;
};

SweepItem simulate_one(ExperimentConfig cfg, int k, const fs::path& dir) {
  const State s0 = initial_state(cfg, k);
  const Trajectory traj = run(s0, cfg.solver);
  SweepItem item;
  item.k = k;
  item.N = cfg.grid.N;
  item.subdir = dir.filename().string();
  item.manifest = persist_run(traj, cfg, dir, configured_checks(traj, cfg));
  item.verdict = traj.verdict;
  item.F0 = traj.series.front().F;
  return item;
}

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

class ChecksFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Radial Keller-Segel experiments"};
  app.require_subcommand(1);

  std::string config_path, manifest_path, out_dir, battery = "trajectory", n_list;
  double kappa = 2.0, p = 1.4, R = 1.0;
  int n_dim = 3;
  double c_kappa = 2, c_p = 1.1;
  bool as_json = false;

  auto* sim = app.add_subcommand("simulate", "run one config and persist the trajectory");
  sim->add_option("config", config_path, "experiment config (JSON)")->required();
  sim->add_option("--out", out_dir, "output directory (default: config output.directory)");

  auto* con = app.add_subcommand("construct", "emit a low-energy initial data sequence with tables");
  con->add_option("config", config_path, "experiment config (JSON)")->required();
  con->add_option("--out", out_dir, "output directory");

  auto* ver = app.add_subcommand("verify", "run a check battery against a stored run");
  ver->add_option("manifest", manifest_path, "manifest.json of a run")->required();
  ver->add_option("--battery", battery, "trajectory|conservation|energy|bounds|odi");
  ver->add_option("--kappa", kappa, "weight exponent for the pointwise bound");
  ver->add_option("--p", p, "Lebesgue exponent for the gradient bound");

  auto* swp = app.add_subcommand("sweep", "concurrent runs over a k range or grid sizes");
  swp->add_option("config", config_path, "experiment config (JSON)")->required();
  swp->add_option("--out", out_dir, "output directory");
  swp->add_option("--N", n_list, "comma-separated grid sizes (resolution sweep)");

  auto* cst = app.add_subcommand("constants", "exponents and windows for (n, kappa, p)");
  cst->add_option("n", n_dim)->required();
  cst->add_option("kappa", c_kappa)->required();
  cst->add_option("p", c_p)->required();
  cst->add_option("--R", R, "ball radius");
  cst->add_flag("--json", as_json, "print JSON");

  auto* plt = app.add_subcommand("plot", "emit a gnuplot script for a stored run");
  plt->add_option("manifest", manifest_path, "manifest.json of a run")->required();
  plt->add_option("--kappa", kappa, "weight exponent for v r^kappa");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
      throw ConfigError(e.what());
    }

    if (*cst) {
      ParamWindow w;
      try {
        w = param_window(n_dim, c_p, c_kappa);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      const double omega = sphere_measure(n_dim);
      const double vol = ball_volume(n_dim, R);
      if (as_json) {
        out << json{{"n", n_dim},          {"kappa", c_kappa},        {"p", c_p},
                    {"theta", w.theta},    {"alpha_lo", w.alpha_lo},  {"alpha_hi", w.alpha_hi},
                    {"alpha_mid", w.alpha}, {"omega_n", omega},        {"ball_volume", vol},
                    {"R", R}}
                   .dump(2)
            << "\n";
      } else {
        out << std::setprecision(12);
        out << "theta = " << w.theta << "\n"
            << "alpha_window = (" << w.alpha_lo << ", " << w.alpha_hi << ")\n"
            << "alpha_mid = " << w.alpha << "\n"
            << "omega_n = " << omega << "\n"
            << "ball_volume = " << vol << "\n";
      }
      return 0;
    }

    if (*sim) {
      const auto cfg = load_config(config_path);
      const fs::path dir = resolve_output(out_dir.empty() ? cfg.output.directory : out_dir);
      if (cfg.initial.k_range) throw ConfigError("simulate takes a single k; use sweep for k_range");
      const auto item = simulate_one(cfg, cfg.initial.k, dir);
      out << "status=" << item.manifest.status << " t_detect=" << std::setprecision(17) << item.verdict.t_detect
          << " manifest=" << (dir / "manifest.json").string() << "\n";
      return 0;
    }

    if (*con) {
      const auto cfg = load_config(config_path);
      if (cfg.initial.kind != "lemma14") throw ConfigError("construct needs initial.kind = lemma14");
      const fs::path dir = resolve_output(out_dir.empty() ? cfg.output.directory : out_dir);
      fs::create_directories(dir);
      fs::remove(dir / "manifest.json");
      const auto recipe = cfg.recipe();
      const auto grid = cfg.grid.build();
      const std::string hash = config_hash(cfg);
      RunManifest m;
      m.config_hash = hash;
      m.version = kArtifactVersion;
      m.created = utc_now();
      std::ostringstream table;
      table << hash_comment(hash)
            << "k,r_k,eta,margin,mass,renorm,F0,u_lp_distance,v_w12_distance,uv_over_k,F0_grid,mass_grid\n";
      std::vector<BlowupDatum> data;
      json skipped = json::array();
      for (int k : cfg.k_values()) {
        BlowupDatum d;
        try {
          d = lemma14_pair(recipe, k, grid);
        } catch (const DomainError&) {
          d = lemma14_pair(recipe, k);
          skipped.push_back(k);
        }
        const auto& c = d.continuum;
        table << k;
        for (double x : {c.r_k, c.eta.eta, c.eta.margin, c.mass, c.renorm, c.F0, c.u_lp_distance, c.v_w12_distance,
                         c.uv_over_k})
          table << ',' << fmt17(x);
        table << ',' << (d.state ? fmt17(d.F0_grid) : "nan") << ',' << (d.state ? fmt17(d.mass_grid) : "nan") << '\n';
        if (d.state) {
          std::ostringstream os;
          write_snapshot(os, *d.state, hash);
          const std::string name = "initial_k" + std::to_string(k) + ".txt";
          write_file_atomic(dir / name, os.str());
          m.files.push_back(name);
        }
        data.push_back(std::move(d));
      }
      write_file_atomic(dir / "construct.csv", table.str());
      m.files.push_back("construct.csv");
      write_file_atomic(dir / "config.json", config_file_text(cfg));
      m.files.push_back("config.json");
      CheckReport seq;
      if (data.size() >= 2) {
        SequenceCheckOptions opt;
        opt.tail_start = std::min(opt.tail_start, data[data.size() / 2].k);
        seq = check_lemma14_sequence(data, recipe, opt);
        json j = {{"config_hash", hash}, {"reports", json::array({to_json(seq)})}};
        write_file_atomic(dir / "checks.json", j.dump(2) + "\n");
        m.files.push_back("checks.json");
      }
      m.status = "constructed";
      m.extra["unresolved_on_grid"] = skipped;
      write_file_atomic(dir / "manifest.json", to_json(m).dump(2) + "\n");
      out << "constructed=" << data.size() << " manifest=" << (dir / "manifest.json").string() << "\n";
      return 0;
    }

    if (*swp) {
      const auto base = load_config(config_path);
      const fs::path dir = resolve_output(out_dir.empty() ? base.output.directory : out_dir);
      fs::create_directories(dir);
      fs::remove(dir / "manifest.json");
      std::vector<std::future<SweepItem>> jobs;
      if (!n_list.empty()) {
        for (const auto& tok : split(n_list, ',')) {
          ExperimentConfig cfg = base;
          cfg.grid.N = std::stoi(tok);
          cfg.validate();
          jobs.push_back(std::async(std::launch::async, simulate_one, cfg, cfg.initial.k, dir / ("N_" + tok)));
        }
      } else {
        for (int k : base.k_values()) {
          ExperimentConfig cfg = base;
          cfg.initial.k = k;
          cfg.initial.k_range.reset();
          jobs.push_back(std::async(std::launch::async, simulate_one, cfg, k, dir / ("k_" + std::to_string(k))));
        }
      }
      RunManifest m;
      m.config_hash = config_hash(base);
      m.version = kArtifactVersion;
      m.created = utc_now();
      m.status = "sweep";
      m.extra["runs"] = json::array();
      std::ostringstream table;
      table << hash_comment(m.config_hash) << "k,N,outcome,t_detect,F0\n";
      for (auto& job : jobs) {
        const auto item = job.get();
        m.files.push_back(item.subdir + "/manifest.json");
        m.extra["runs"].push_back({{"k", item.k}, {"N", item.N}, {"outcome", item.manifest.status},
                                   {"t_detect", item.verdict.t_detect}, {"F0", item.F0}});
        table << item.k << ',' << item.N << ',' << item.manifest.status << ',' << fmt17(item.verdict.t_detect) << ','
              << fmt17(item.F0) << '\n';
      }
      write_file_atomic(dir / "sweep.csv", table.str());
      m.files.push_back("sweep.csv");
      write_file_atomic(dir / "manifest.json", to_json(m).dump(2) + "\n");
      out << "runs=" << jobs.size() << " manifest=" << (dir / "manifest.json").string() << "\n";
      return 0;
    }

    if (*ver) {
      const auto run = load_run(manifest_path);
      const auto reports = run_battery(run, battery, kappa, p);
      json j = json::array();
      std::string failed;
      for (const auto& r : reports) {
        j.push_back(to_json(r));
        if (r.applicable && !r.passed) failed += (failed.empty() ? "" : ",") + r.name;
      }
      out << j.dump(2) << "\n";
      if (!failed.empty()) throw ChecksFailed("failing checks: " + failed);
      return 0;
    }

    if (*plt) {
      const auto run = load_run(manifest_path);
      const fs::path dir = fs::path(manifest_path).parent_path();
      const fs::path script = dir / "plot.gp";
      write_file_atomic(script, plot_script(run, dir, kappa));
      out << "script=" << script.string() << "\n";
      return 0;
    }
  } catch (const ChecksFailed& e) {
    err << "error: check_failed: " << one_line(e.what()) << "\n";
    return 1;
  } catch (const ConfigError& e) {
    err << "error: config: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const DomainError& e) {
    err << "error: domain: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: runtime: " << one_line(e.what()) << "\n";
    return 3;
  }
  return 0;
}

}  // namespace kslab
