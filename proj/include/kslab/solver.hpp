// IMEX time stepping for the radial system with adaptive dt and blow-up detection.
//
// One step of size dt:
//   1. ((1 + dt) I - dt L) v' = v + dt u
//   2. u* = u - dt div_h(u_upwind v'_r)   (explicit, conservative, upwinded)
//   3. (I - dt L) u' = u*
// Step 2 keeps u* >= 0 whenever dt <= dt_pos, the exact per-cell outflow bound.
#ifndef KSLAB_SOLVER_HPP
#define KSLAB_SOLVER_HPP

#include "kslab/functionals.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace kslab {

/// Scheme tolerance in the discrete energy inequality:
/// F_{j+1} - F_j <= -D_j dt_j + tol_j,
/// tol_j = kEnergySchemeConstant dt_j^2 (1 + |F_j|) + kEnergyRoundoff (1 + |F_j|).
inline constexpr double kEnergySchemeConstant = 100.0;
inline constexpr double kEnergyRoundoff = 1e-12;

/// Neighbouring v values closer than this many ulps give zero edge velocity.
inline constexpr double kVelocityNoiseUlps = 8.0;

inline double energy_tolerance(double dt, double F, double scheme_constant = kEnergySchemeConstant) {
  return (scheme_constant * dt * dt + kEnergyRoundoff) * (1.0 + std::abs(F));
}

struct SolverConfig {
  double dt_init = 1e-5;
  /// Collapse threshold: accepted steps below it are flagged as at_floor.
  double dt_min = 1e-12;
  double dt_max = 1e-2;
  double safety = 0.5;
  double blowup_factor = 1e4;
  double t_end = 1.0;
  /// Snapshot cadence in accepted steps; the initial and final states are always kept.
  int snapshot_every = 100;
  long max_steps = 1'000'000;
  /// Exponent of the recorded |grad v|_{L^p}.
  double gradv_p = 1.4;
  std::string scheme = "imex";

  void validate() const;
};

struct SeriesRecord {
  double t = 0;
  double dt = 0;  // step that produced this record; 0 for the initial state
  double mass_u = 0;
  double mass_v = 0;
  double sup_u = 0;
  double sup_v = 0;
  double F = 0;
  double D = 0;
  double f_l2 = 0;
  double g_l2 = 0;
  double gradv_lp = 0;
  bool at_floor = false;  // accepted step was below dt_min
};

SeriesRecord make_record(const State& s, double dt, double gradv_p);

struct BlowupVerdict {
  enum class Outcome { blew_up, reached_t_end, diverged_numerically, inconclusive };
  Outcome outcome = Outcome::inconclusive;
  double t_detect = 0;
  /// Power-law extrapolation of the blow-up time; an estimate, not a bound.
  std::optional<double> t_extrapolated;
  std::optional<double> growth_exponent;
  std::string trigger;
};

std::string to_string(BlowupVerdict::Outcome o);
BlowupVerdict::Outcome outcome_from_string(const std::string& s);

struct Trajectory {
  std::vector<State> snapshots;
  std::vector<SeriesRecord> series;
  BlowupVerdict verdict;
  long rejected_steps = 0;
  std::string stop_reason;

  const State& final_state() const { return snapshots.back(); }
};

class DivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Largest dt for which the explicit flux keeps every cell of u non-negative
/// given the chemotactic field v (infinity when v is flat).
double positivity_bound(const Grid& grid, const Eigen::VectorXd& u, const Eigen::VectorXd& v);

/// Solves ((1 + a) W + dt K) x = W b for the weighted Laplacian K; a = dt for v, 0 for u.
Eigen::VectorXd implicit_diffusion(const Grid& grid, const Eigen::VectorXd& rhs, double dt, double reaction);

struct StepResult {
  State state;
  bool ok = false;
  std::string failure;
  double dt_pos = 0;  // positivity bound computed from the fresh v
};

/// One IMEX step without any dt control.
StepResult try_step(const State& s, double dt);

/// One IMEX step; throws DivergedError for NaN/Inf or non-positive u.
State step(const State& s, double dt);

/// Verdict from a series alone. blew_up requires sup_u growth >= blowup_factor
/// together with a dt-floor event at or before that record.
BlowupVerdict detect_blowup(const std::vector<SeriesRecord>& series, double blowup_factor, double t_end);

struct PowerLawFit {
  double T = 0;
  double gamma = 0;
  double log_A = 0;
  double rms = 0;
  bool ok = false;
};

/// Fits sup_u ~ A (T - t)^{-gamma} over the given records (T > last t).
PowerLawFit fit_power_law(const std::vector<double>& t, const std::vector<double>& sup_u);

using StepObserver = std::function<void(const SeriesRecord&)>;

Trajectory run(const State& s0, const SolverConfig& cfg, const StepObserver& observer = {});

}  // namespace kslab

#endif  // KSLAB_SOLVER_HPP
