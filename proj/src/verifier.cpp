#include "kslab/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace kslab {

namespace {

std::string at_time(double t) {
  std::ostringstream os;
  os.precision(17);
  os << "t=" << t;
  return os.str();
}

double quartile_sup(const std::vector<double>& v, bool last) {
  const std::size_t q = std::max<std::size_t>(1, (v.size() + 3) / 4);
  double s = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < q; ++i) s = std::max(s, last ? v[v.size() - 1 - i] : v[i]);
  return s;
}

const std::vector<State>& require_snapshots(const Trajectory& traj) {
  if (traj.snapshots.empty()) throw std::invalid_argument("trajectory has no snapshots");
  return traj.snapshots;
}

// Bounded-ratio check shared by the pointwise and gradient diagnostics.
CheckReport ratio_series_report(std::string name, const std::vector<State>& snaps, const std::vector<double>& ratio,
                                double denom) {
  CheckReport rep;
  rep.name = std::move(name);
  std::size_t worst = 0;
  bool finite = std::isfinite(denom) && denom > 0;
  for (std::size_t i = 0; i < ratio.size(); ++i) {
    if (!std::isfinite(ratio[i])) finite = false;
    if (ratio[i] > ratio[worst]) worst = i;
  }
  rep.worst_ratio = ratio.empty() ? 0 : ratio[worst];
  rep.location = ratio.empty() ? "" : at_time(snaps[worst].t);
  const bool flat = no_growth_trend(ratio);
  rep.passed = finite && flat;
  rep.details["records"] = static_cast<double>(ratio.size());
  rep.details["denominator"] = denom;
  rep.details["first_quartile_sup"] = ratio.empty() ? 0 : quartile_sup(ratio, false);
  rep.details["last_quartile_sup"] = ratio.empty() ? 0 : quartile_sup(ratio, true);
  if (!finite) rep.note = "non-finite ratio";
  else if (!flat) rep.note = "growth trend: last-quartile sup exceeds 1.5 x first-quartile sup";
  return rep;
}

}  // namespace

bool no_growth_trend(const std::vector<double>& values, double factor) {
  if (values.empty()) return true;
  return quartile_sup(values, true) <= factor * quartile_sup(values, false);
}

CheckReport check_conservation(const std::vector<SeriesRecord>& series, double mass_tol, double mass_v_tol) {
  if (series.empty()) throw std::invalid_argument("check_conservation: empty series");
  CheckReport rep;
  rep.name = "conservation";
  const double m0 = series.front().mass_u;
  const double cap = std::max(series.front().mass_u, series.front().mass_v);
  double worst_drift = 0, worst_excess = -std::numeric_limits<double>::infinity();
  std::size_t drift_at = 0, excess_at = 0;
  bool ok = std::isfinite(m0) && m0 > 0;
  std::optional<std::size_t> first_bad;
  for (std::size_t j = 0; j < series.size(); ++j) {
    const double drift = std::abs(series[j].mass_u - m0) / m0;
    const double excess = series[j].mass_v / cap - 1.0;
    if (!(drift <= mass_tol) || !(excess <= mass_v_tol)) {
      ok = false;
      if (!first_bad) first_bad = j;
    }
    if (!(drift <= worst_drift)) {
      worst_drift = drift;
      drift_at = j;
    }
    if (!(excess <= worst_excess)) {
      worst_excess = excess;
      excess_at = j;
    }
  }
  rep.passed = ok;
  rep.worst_ratio = worst_drift;
  rep.location = at_time(series[first_bad.value_or(drift_at)].t);
  rep.details["mass_u_drift"] = worst_drift;
  rep.details["mass_v_excess"] = worst_excess;
  rep.details["mass_v_excess_t"] = series[excess_at].t;
  rep.details["mass_tol"] = mass_tol;
  rep.details["mass_v_tol"] = mass_v_tol;
  if (first_bad) rep.note = "first violation at record " + std::to_string(*first_bad);
  return rep;
}

CheckReport check_conservation(const Trajectory& traj, double mass_tol, double mass_v_tol) {
  return check_conservation(traj.series, mass_tol, mass_v_tol);
}

CheckReport check_energy_inequality(const std::vector<SeriesRecord>& series, double scheme_constant) {
  if (series.empty()) throw std::invalid_argument("check_energy_inequality: empty series");
  CheckReport rep;
  rep.name = "energy_inequality";
  rep.passed = true;
  // Ratio (F_{j+1} - F_j + D_j dt_j) / tol_j; the inequality holds when <= 1.
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t worst_j = 0;
  std::size_t strict_decreases = 0;
  for (std::size_t j = 0; j + 1 < series.size(); ++j) {
    const auto& a = series[j];
    const auto& b = series[j + 1];
    const double dt = b.t - a.t;
    if (!(dt > 0)) {
      rep.passed = false;
      rep.note = "times not strictly increasing at record " + std::to_string(j + 1);
      rep.location = at_time(b.t);
      rep.worst_ratio = std::numeric_limits<double>::infinity();
      return rep;
    }
    const double excess = (b.F - a.F) + a.D * dt;
    const double ratio = excess / energy_tolerance(dt, a.F, scheme_constant);
    if (!(ratio <= worst)) {
      worst = ratio;
      worst_j = j;
    }
    if (b.F < a.F) ++strict_decreases;
  }
  rep.worst_ratio = series.size() > 1 ? worst : 0;
  rep.passed = series.size() == 1 || (std::isfinite(worst) && worst <= 1.0);
  rep.location = at_time(series[worst_j].t);
  rep.details["scheme_constant"] = scheme_constant;
  rep.details["steps"] = static_cast<double>(series.size() - 1);
  rep.details["strict_decreases"] = static_cast<double>(strict_decreases);
  rep.details["F_first"] = series.front().F;
  rep.details["F_last"] = series.back().F;
  if (!rep.passed && rep.note.empty()) rep.note = "F increased beyond -D dt + tol";
  return rep;
}

CheckReport check_energy_inequality(const Trajectory& traj, double scheme_constant) {
  return check_energy_inequality(traj.series, scheme_constant);
}

CheckReport check_pointwise_bound(const std::vector<State>& snaps, double kappa) {
  if (snaps.empty()) throw std::invalid_argument("check_pointwise_bound: no snapshots");
  const auto& s0 = snaps.front();
  const int n = s0.g().dimension();
  if (!(kappa > n - 2)) throw DomainError("check_pointwise_bound: kappa must exceed n - 2");
  const auto& grid = s0.g();
  const double denom = norm(grid, s0.u, NormKind::Lp(1)) + norm(grid, s0.v, NormKind::Lp(1)) +
                       norm(grid, radial_derivative(grid, s0.v, Boundary::neumann), NormKind::Lp(2));
  std::vector<double> ratio;
  ratio.reserve(snaps.size());
  for (const auto& s : snaps) {
    const auto& r = s.g().centers();
    double sup = 0;
    for (Eigen::Index i = 0; i < r.size(); ++i) sup = std::max(sup, s.v[i] * std::pow(r[i], kappa));
    ratio.push_back(sup / denom);
  }
  auto rep = ratio_series_report("pointwise_bound", snaps, ratio, denom);
  rep.details["kappa"] = kappa;
  return rep;
}

CheckReport check_pointwise_bound(const Trajectory& traj, double kappa) {
  return check_pointwise_bound(require_snapshots(traj), kappa);
}

CheckReport check_gradv_lp(const std::vector<State>& snaps, double p) {
  if (snaps.empty()) throw std::invalid_argument("check_gradv_lp: no snapshots");
  const auto& s0 = snaps.front();
  const int n = s0.g().dimension();
  if (!(p > 1 && p < n / (n - 1.0))) throw DomainError("check_gradv_lp: p must lie in (1, n/(n-1))");
  const auto& grid = s0.g();
  const double denom =
      norm(grid, s0.u, NormKind::Lp(1)) + norm(grid, radial_derivative(grid, s0.v, Boundary::neumann), NormKind::Lp(2));
  std::vector<double> ratio;
  ratio.reserve(snaps.size());
  for (const auto& s : snaps)
    ratio.push_back(norm(s.g(), radial_derivative(s.g(), s.v, Boundary::neumann), NormKind::Lp(p)) / denom);
  auto rep = ratio_series_report("gradv_lp", snaps, ratio, denom);
  rep.details["p"] = p;
  return rep;
}

CheckReport check_gradv_lp(const Trajectory& traj, double p) { return check_gradv_lp(require_snapshots(traj), p); }

void StateCorpus::add(State s, std::string label) {
  states.push_back(std::move(s));
  labels.push_back(std::move(label));
}

std::optional<std::string> admissibility_violation(const State& s, const ParamWindow& params) {
  s.validate();
  if (!s.positive()) return "state is not positive";
  if (!params.m || !params.M || !params.B) return "corpus parameters m, M, B must be set";
  const auto& grid = s.g();
  const double mass = integrate(grid, s.u);
  if (std::abs(mass - *params.m) > 1e-8 * *params.m)
    return "mass " + std::to_string(mass) + " differs from m = " + std::to_string(*params.m);
  const double mass_v = integrate(grid, s.v);
  if (mass_v > *params.M) return "integral of v " + std::to_string(mass_v) + " exceeds M";
  const auto& r = grid.centers();
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (s.v[i] > *params.B * std::pow(r[i], -params.kappa))
      return "v exceeds B r^-kappa at r = " + std::to_string(r[i]);
  }
  return std::nullopt;
}

void assert_admissible(const StateCorpus& corpus) {
  if (corpus.states.empty()) throw DomainError("inequality_suite: empty corpus");
  corpus.params.validate();
  for (std::size_t i = 0; i < corpus.states.size(); ++i) {
    if (auto why = admissibility_violation(corpus.states[i], corpus.params)) {
      const std::string label = i < corpus.labels.size() ? corpus.labels[i] : std::to_string(i);
      throw DomainError("corpus member '" + label + "' is not admissible: " + *why);
    }
  }
}

std::pair<double, double> corpus_bounds(const std::vector<State>& states, double kappa) {
  double M = 0, B = 0;
  for (const auto& s : states) {
    M = std::max(M, integrate(s.g(), s.v));
    const auto& r = s.g().centers();
    for (Eigen::Index i = 0; i < r.size(); ++i) B = std::max(B, s.v[i] * std::pow(r[i], kappa));
  }
  return {M, B};
}

InequalityTerms inequality_terms(const State& s, double kappa) {
  const auto& grid = s.g();
  const int n = grid.dimension();
  const auto rep = energy_report(s);
  InequalityTerms t;
  t.f_l2 = std::sqrt(rep.f_norm_sq);
  t.g_l2 = std::sqrt(rep.g_norm_sq);
  t.D = rep.D;
  t.F = rep.F;
  t.uv = rep.uv;
  t.grad_v_sq = rep.grad_v_sq;
  t.v_l1 = norm(grid, s.v, NormKind::Lp(1));
  t.v_l2 = std::sqrt(rep.v_sq);
  const double beta = (2.0 * n + 4.0) * kappa / n;
  const double R = grid.radius();
  t.r0 = t.f_l2 > 0 ? std::min(R / 2, std::pow(t.f_l2, -2.0 / (beta + 1.0))) : R / 2;
  const Eigen::VectorXd vr = radial_derivative(grid, s.v, Boundary::neumann);
  t.grad_v_sq_inner = integrate_ball(grid, vr.cwiseAbs2(), t.r0);
  t.grad_v_sq_outer = t.grad_v_sq - t.grad_v_sq_inner;
  return t;
}

std::map<std::string, double> inequality_ratios(const State& s, const ParamWindow& params) {
  const int n = params.n;
  const double kappa = params.kappa;
  const double theta = params.theta;
  const auto t = inequality_terms(s, kappa);
  const double beta = (2.0 * n + 4.0) * kappa / n;
  const double q = (2.0 * n + 4.0) / (n + 4.0);
  const double eps4 = 0.25;
  const double grad = std::sqrt(t.grad_v_sq);

  std::map<std::string, double> r;
  r["gagliardo_nirenberg_l2"] =
      t.v_l2 / (std::pow(grad, n / (n + 2.0)) * std::pow(t.v_l1, 2.0 / (n + 2.0)) + t.v_l1);
  // Additive form with epsilon = 1/2: (|v|_2^2 - |grad v|_2^2 / 2)_+ / |v|_1^2.
  r["l2_interpolation"] = std::max(0.0, t.v_l2 * t.v_l2 - 0.5 * t.grad_v_sq) / (t.v_l1 * t.v_l1);
  r["uv_by_gradient"] = std::max(0.0, t.uv - 2.0 * t.grad_v_sq) / (std::pow(t.f_l2, q) + 1.0);
  r["outer_gradient"] = std::max(0.0, t.grad_v_sq_outer - eps4 * t.uv - eps4 * t.grad_v_sq) /
                        (std::pow(t.r0, -beta) + std::pow(t.f_l2, q));
  r["inner_gradient"] = t.grad_v_sq_inner / (t.r0 * t.f_l2 * t.f_l2 + t.g_l2 + t.v_l2 * t.v_l2 + 1.0);
  r["gradient_by_dissipation"] =
      std::max(0.0, t.grad_v_sq - eps4 * t.uv) / (std::pow(t.f_l2, 2.0 * theta) + t.g_l2 + 1.0);
  r["uv_by_dissipation"] = t.uv / (std::pow(t.f_l2, 2.0 * theta) + t.g_l2 + 1.0);
  r["energy_by_dissipation"] = -t.F / (std::pow(t.D, theta) + 1.0);
  return r;
}

std::vector<CheckReport> inequality_suite(const StateCorpus& corpus) {
  assert_admissible(corpus);
  std::map<std::string, CheckReport> reports;
  for (std::size_t i = 0; i < corpus.states.size(); ++i) {
    const auto ratios = inequality_ratios(corpus.states[i], corpus.params);
    const std::string label = i < corpus.labels.size() ? corpus.labels[i] : std::to_string(i);
    for (const auto& [name, value] : ratios) {
      auto [it, fresh] = reports.try_emplace(name);
      auto& rep = it->second;
      if (fresh) {
        rep.name = name;
        rep.passed = true;
        rep.worst_ratio = -std::numeric_limits<double>::infinity();
      }
      if (!std::isfinite(value)) {
        rep.passed = false;
        rep.note = "non-finite ratio at '" + label + "'";
      }
      if (value > rep.worst_ratio || !std::isfinite(value)) {
        rep.worst_ratio = value;
        rep.location = label;
      }
    }
  }
  std::vector<CheckReport> out;
  for (auto& [name, rep] : reports) {
    rep.details["corpus_size"] = static_cast<double>(corpus.size());
    rep.details["theta"] = corpus.params.theta;
    rep.details["kappa"] = corpus.params.kappa;
    out.push_back(std::move(rep));
  }
  return out;
}

CheckReport check_odi_blowup(const std::vector<double>& t, const std::vector<double>& F, double theta,
                             std::optional<double> t_detect) {
  if (t.size() != F.size() || t.empty()) throw std::invalid_argument("check_odi_blowup: series mismatch");
  if (!(theta > 0 && theta < 1)) throw std::invalid_argument("check_odi_blowup: theta must lie in (0, 1)");
  CheckReport rep;
  rep.name = "odi_blowup";
  for (double x : F) {
    if (!(x < 0)) {
      rep.applicable = false;
      rep.passed = true;
      rep.note = "inapplicable: F is not negative throughout";
      return rep;
    }
  }
  const double y0 = -F.front();
  const double expo = (1.0 - theta) / theta;
  // z = (y / y0)^{-(1-theta)/theta} should follow 1 - C (t - t0).
  bool monotone = true;
  std::size_t first_drop = 0;
  double stt = 0, stz = 0, c_valid = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < t.size(); ++j) {
    const double y = -F[j];
    if (j > 0 && y < -F[j - 1] - energy_tolerance(t[j] - t[j - 1], F[j - 1])) {
      if (monotone) first_drop = j;
      monotone = false;
    }
    const double s = t[j] - t.front();
    const double z = std::pow(y / y0, -expo);
    stt += s * s;
    stz += s * (1.0 - z);
    if (s > 0) c_valid = std::min(c_valid, (1.0 - z) / s);
  }
  const double C = stt > 0 ? stz / stt : 0.0;
  double ss = 0;
  for (std::size_t j = 0; j < t.size(); ++j) {
    const double s = t[j] - t.front();
    const double z = std::pow(-F[j] / y0, -expo);
    ss += (z - (1.0 - C * s)) * (z - (1.0 - C * s));
  }
  const double rms = std::sqrt(ss / t.size());
  rep.worst_ratio = rms;
  rep.passed = monotone && std::isfinite(rms) && rms <= 1.0;
  rep.details["C_fit"] = C;
  rep.details["C_valid"] = std::isfinite(c_valid) ? c_valid : 0.0;
  rep.details["residual_rms"] = rms;
  rep.details["theta"] = theta;
  if (C > 1e-12) rep.details["implied_T"] = t.front() + 1.0 / C;
  if (t_detect) rep.details["t_detect"] = *t_detect;
  if (!monotone) {
    rep.note = "-F decreased beyond tolerance";
    rep.location = at_time(t[first_drop]);
  } else if (!(C > 1e-12)) {
    rep.note = "no blow-up implied";
  } else if (t_detect) {
    rep.note = t.front() + 1.0 / C >= *t_detect ? "fitted 1/C bounds the detection time"
                                                 : "fitted 1/C is below the detection time";
  }
  return rep;
}

CheckReport check_odi_blowup(const Trajectory& traj, double theta) {
  std::vector<double> t, F;
  for (const auto& r : traj.series) {
    t.push_back(r.t);
    F.push_back(r.F);
  }
  std::optional<double> detect;
  if (traj.verdict.outcome == BlowupVerdict::Outcome::blew_up) detect = traj.verdict.t_detect;
  return check_odi_blowup(t, F, theta, detect);
}

CheckReport check_lemma14_sequence(const std::vector<BlowupDatum>& data, const Lemma14Recipe& recipe,
                                   const SequenceCheckOptions& options) {
  CheckReport rep;
  rep.name = "lemma14_sequence";
  if (data.size() < 2) {
    rep.note = "precondition violated: need at least two data";
    return rep;
  }
  for (std::size_t i = 1; i < data.size(); ++i) {
    if (data[i].k <= data[i - 1].k) {
      rep.note = "precondition violated: k not strictly ascending at position " + std::to_string(i);
      return rep;
    }
  }
  std::vector<const BlowupDatum*> tail;
  for (const auto& d : data)
    if (d.k >= options.tail_start) tail.push_back(&d);
  if (tail.size() < 2) {
    rep.note = "precondition violated: tail has fewer than two data";
    return rep;
  }
  const auto& first = data.front().continuum;
  const auto& last = tail.back()->continuum;

  bool norms_decrease = true, energy_decreases = true, uv_ok = true;
  double worst_uv = std::numeric_limits<double>::infinity();
  int worst_uv_k = 0;
  const double bound = (1.0 - options.epsilon) * sphere_measure(recipe.n) * recipe.base_u.value(0.0) *
                       recipe.base_v.value(0.0);
  for (std::size_t i = 0; i < tail.size(); ++i) {
    const auto& c = tail[i]->continuum;
    if (i > 0) {
      const auto& p = tail[i - 1]->continuum;
      if (!(c.u_lp_distance < p.u_lp_distance) || !(c.v_w12_distance < p.v_w12_distance)) norms_decrease = false;
      if (!(c.F0 < p.F0)) energy_decreases = false;
    }
    if (c.uv_over_k < worst_uv) {
      worst_uv = c.uv_over_k;
      worst_uv_k = c.k;
    }
    if (!(c.uv_over_k >= bound)) uv_ok = false;
  }
  const double u_red = last.u_lp_distance / first.u_lp_distance;
  const double v_red = last.v_w12_distance / first.v_w12_distance;
  const bool reduced = u_red < options.reduction && v_red < options.reduction;
  const bool below = !options.energy_threshold || last.F0 <= *options.energy_threshold;

  rep.passed = norms_decrease && reduced && energy_decreases && below && uv_ok;
  rep.worst_ratio = worst_uv / (sphere_measure(recipe.n) * recipe.base_u.value(0.0) * recipe.base_v.value(0.0));
  rep.location = "k=" + std::to_string(worst_uv_k);
  rep.details["u_lp_reduction"] = u_red;
  rep.details["v_w12_reduction"] = v_red;
  rep.details["F0_last"] = last.F0;
  rep.details["uv_over_k_min"] = worst_uv;
  rep.details["uv_over_k_bound"] = bound;
  rep.details["norms_decrease"] = norms_decrease;
  rep.details["energy_decreases"] = energy_decreases;
  std::string why;
  if (!norms_decrease) why += "norms not decreasing on tail; ";
  if (!reduced) why += "norm reduction above target; ";
  if (!energy_decreases) why += "F0 not decreasing on tail; ";
  if (!below) why += "F0 above threshold; ";
  if (!uv_ok) why += "uv_over_k below bound; ";
  rep.note = why;
  return rep;
}

}  // namespace kslab
