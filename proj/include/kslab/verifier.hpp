// Executable checks: trajectory diagnostics, the corpus inequality suite,
// the ODI fit for -F, and the low-energy sequence checks.
//
// Constants of the inequalities are never fixed in advance. Each check
// reports the worst observed ratio LHS / RHS-without-constant, which is the
// empirical constant for the corpus it ran on.
#ifndef KSLAB_VERIFIER_HPP
#define KSLAB_VERIFIER_HPP

#include "kslab/functionals.hpp"
#include "kslab/initial_data.hpp"
#include "kslab/solver.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kslab {

struct CheckReport {
  std::string name;
  bool passed = false;
  bool applicable = true;
  double worst_ratio = 0;
  std::string location;
  std::map<std::string, double> details;
  std::string note;
};

/// "No growth trend": sup over the last quarter <= factor * sup over the first quarter.
bool no_growth_trend(const std::vector<double>& values, double factor = 1.5);

CheckReport check_conservation(const std::vector<SeriesRecord>& series, double mass_tol = 1e-10,
                               double mass_v_tol = 1e-8);
CheckReport check_conservation(const Trajectory& traj, double mass_tol = 1e-10, double mass_v_tol = 1e-8);

CheckReport check_energy_inequality(const std::vector<SeriesRecord>& series,
                                    double scheme_constant = kEnergySchemeConstant);
CheckReport check_energy_inequality(const Trajectory& traj, double scheme_constant = kEnergySchemeConstant);

/// sup over snapshots and cells of v r^kappa / (|u0|_1 + |v0|_1 + |grad v0|_2).
CheckReport check_pointwise_bound(const Trajectory& traj, double kappa);
CheckReport check_pointwise_bound(const std::vector<State>& snapshots, double kappa);

/// |grad v(t)|_p / (|u0|_1 + |grad v0|_2) per snapshot, 1 < p < n/(n-1).
CheckReport check_gradv_lp(const Trajectory& traj, double p);
CheckReport check_gradv_lp(const std::vector<State>& snapshots, double p);

struct StateCorpus {
  std::vector<State> states;
  std::vector<std::string> labels;
  ParamWindow params;  // uses n, kappa, theta and m, M, B

  void add(State s, std::string label);
  std::size_t size() const { return states.size(); }
};

/// Membership in the admissible class: mass m (1e-8 relative), integral of v <= M,
/// v <= B r^{-kappa} at every cell. Returns the first violation, if any.
std::optional<std::string> admissibility_violation(const State& s, const ParamWindow& params);

/// Throws DomainError naming the first inadmissible member.
void assert_admissible(const StateCorpus& corpus);

/// Smallest (M, B) making every member admissible, for the given kappa.
std::pair<double, double> corpus_bounds(const std::vector<State>& states, double kappa);

/// Per-state quantities entering the inequality suite.
struct InequalityTerms {
  double f_l2 = 0, g_l2 = 0, D = 0, F = 0;
  double uv = 0, grad_v_sq = 0, v_l1 = 0, v_l2 = 0;
  double r0 = 0, grad_v_sq_inner = 0, grad_v_sq_outer = 0;
};

InequalityTerms inequality_terms(const State& s, double kappa);

/// Ratios of every inequality in the suite for one state, keyed by check name.
std::map<std::string, double> inequality_ratios(const State& s, const ParamWindow& params);

/// Runs the suite over an admissible corpus (asserted first).
std::vector<CheckReport> inequality_suite(const StateCorpus& corpus);

/// Fits y(t) = -F(t) against y(0)(1 - C t)^{-theta/(1-theta)}.
CheckReport check_odi_blowup(const std::vector<double>& t, const std::vector<double>& F, double theta,
                             std::optional<double> t_detect = std::nullopt);
CheckReport check_odi_blowup(const Trajectory& traj, double theta);

struct SequenceCheckOptions {
  int tail_start = 10;
  double reduction = 1e-2;                // final norm <= reduction * first norm
  std::optional<double> energy_threshold;  // F0 at the largest k must lie below
  double epsilon = 0.2;                   // uv_over_k >= (1 - epsilon) omega_n u(0) v(0)
};

CheckReport check_lemma14_sequence(const std::vector<BlowupDatum>& data, const Lemma14Recipe& recipe,
                                   const SequenceCheckOptions& options = {});

}  // namespace kslab

#endif  // KSLAB_VERIFIER_HPP
