#include "kslab/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace kslab {

void SolverConfig::validate() const {
  if (!(dt_min > 0 && dt_min <= dt_init && dt_init <= dt_max))
    throw std::invalid_argument("solver: need 0 < dt_min <= dt_init <= dt_max");
  if (!(safety > 0 && safety < 1)) throw std::invalid_argument("solver: safety must lie in (0, 1)");
  if (!(blowup_factor > 1)) throw std::invalid_argument("solver: blowup_factor must exceed 1");
  if (!(t_end > 0)) throw std::invalid_argument("solver: t_end must be positive");
  if (snapshot_every < 1) throw std::invalid_argument("solver: snapshot_every must be >= 1");
  if (max_steps < 1) throw std::invalid_argument("solver: max_steps must be >= 1");
  if (!(gradv_p >= 1)) throw std::invalid_argument("solver: gradv_p must be >= 1");
  if (scheme != "imex") throw std::invalid_argument("solver: unknown scheme '" + scheme + "'");
}

SeriesRecord make_record(const State& s, double dt, double gradv_p) {
  const auto& grid = s.g();
  const auto rep = energy_report(s);
  SeriesRecord r;
  r.t = s.t;
  r.dt = dt;
  r.mass_u = integrate(grid, s.u);
  r.mass_v = integrate(grid, s.v);
  r.sup_u = s.u.maxCoeff();
  r.sup_v = s.v.maxCoeff();
  r.F = rep.F;
  r.D = rep.D;
  r.f_l2 = std::sqrt(rep.f_norm_sq);
  r.g_l2 = std::sqrt(rep.g_norm_sq);
  r.gradv_lp = norm(grid, radial_derivative(grid, s.v, Boundary::neumann), NormKind::Lp(gradv_p));
  return r;
}

std::string to_string(BlowupVerdict::Outcome o) {
  switch (o) {
    case BlowupVerdict::Outcome::blew_up:
      return "blew_up";
    case BlowupVerdict::Outcome::reached_t_end:
      return "reached_t_end";
    case BlowupVerdict::Outcome::diverged_numerically:
      return "diverged_numerically";
    case BlowupVerdict::Outcome::inconclusive:
      return "inconclusive";
  }
  return "inconclusive";
}

BlowupVerdict::Outcome outcome_from_string(const std::string& s) {
  if (s == "blew_up") return BlowupVerdict::Outcome::blew_up;
  if (s == "reached_t_end") return BlowupVerdict::Outcome::reached_t_end;
  if (s == "diverged_numerically") return BlowupVerdict::Outcome::diverged_numerically;
  if (s == "inconclusive") return BlowupVerdict::Outcome::inconclusive;
  throw std::invalid_argument("unknown outcome '" + s + "'");
}

namespace {

// Edge velocities v_r at interior edges 1..N-1 (entries 0 and N are zero).
Eigen::VectorXd edge_velocity(const Grid& grid, const Eigen::VectorXd& v) {
  const auto& r = grid.centers();
  const Eigen::Index N = grid.size();
  Eigen::VectorXd vel = Eigen::VectorXd::Zero(N + 1);
  for (Eigen::Index j = 1; j < N; ++j) {
    const double dv = v[j] - v[j - 1];
    // Differences within a few ulps of |v| are rounding noise, not a gradient.
    if (std::abs(dv) <= kVelocityNoiseUlps * std::numeric_limits<double>::epsilon() *
                             std::max(std::abs(v[j]), std::abs(v[j - 1])))
      continue;
    vel[j] = dv / (r[j] - r[j - 1]);
  }
  return vel;
}

double positivity_bound_from_velocity(const Grid& grid, const Eigen::VectorXd& vel) {
  const auto& a = grid.edge_areas();
  const auto& w = grid.weights();
  double bound = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const double out = a[i + 1] * std::max(vel[i + 1], 0.0) + a[i] * std::max(-vel[i], 0.0);
    if (out > 0) bound = std::min(bound, w[i] / out);
  }
  return bound;
}

}  // namespace

double positivity_bound(const Grid& grid, const Eigen::VectorXd& /*u*/, const Eigen::VectorXd& v) {
  return positivity_bound_from_velocity(grid, edge_velocity(grid, v));
}

Eigen::VectorXd implicit_diffusion(const Grid& grid, const Eigen::VectorXd& rhs, double dt, double reaction) {
  using Real = long double;
  const auto& c = grid.conductances();
  const auto& w = grid.weights();
  const Eigen::Index N = grid.size();
  // Thomas algorithm on the symmetric, diagonally dominant system. Extended
  // precision keeps the solve's own rounding below one ulp of the result, so
  // neighbouring differences of v are not polluted on very fine cells.
  std::vector<Real> cp(N), dp(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const Real lower = -Real(dt) * c[i];
    const Real upper = -Real(dt) * c[i + 1];
    const Real diag = (1 + Real(reaction)) * w[i] + Real(dt) * (Real(c[i]) + c[i + 1]);
    const Real b = Real(w[i]) * rhs[i];
    if (i == 0) {
      cp[i] = upper / diag;
      dp[i] = b / diag;
    } else {
      const Real denom = diag - lower * cp[i - 1];
      cp[i] = upper / denom;
      dp[i] = (b - lower * dp[i - 1]) / denom;
    }
  }
  Eigen::VectorXd x(N);
  Real next = dp[N - 1];
  x[N - 1] = static_cast<double>(next);
  for (Eigen::Index i = N - 2; i >= 0; --i) {
    next = dp[i] - cp[i] * next;
    x[i] = static_cast<double>(next);
  }
  return x;
}

StepResult try_step(const State& s, double dt) {
  const Grid& grid = s.g();
  const Eigen::Index N = grid.size();
  StepResult out;
  out.state.grid = s.grid;
  out.state.t = s.t + dt;

  Eigen::VectorXd v_new = implicit_diffusion(grid, s.v + dt * s.u, dt, dt);
  const Eigen::VectorXd vel = edge_velocity(grid, v_new);
  out.dt_pos = positivity_bound_from_velocity(grid, vel);

  const auto& a = grid.edge_areas();
  const auto& w = grid.weights();
  Eigen::VectorXd flux = Eigen::VectorXd::Zero(N + 1);
  for (Eigen::Index j = 1; j < N; ++j) flux[j] = a[j] * vel[j] * (vel[j] > 0 ? s.u[j - 1] : s.u[j]);
  Eigen::VectorXd u_star(N);
  for (Eigen::Index i = 0; i < N; ++i) u_star[i] = s.u[i] - dt * (flux[i + 1] - flux[i]) / w[i];
  Eigen::VectorXd u_new = implicit_diffusion(grid, u_star, dt, 0.0);

  out.state.u = std::move(u_new);
  out.state.v = std::move(v_new);
  const auto& u = out.state.u;
  if (!u.allFinite() || !out.state.v.allFinite()) {
    out.failure = "non-finite state";
    return out;
  }
  const double sup = u.maxCoeff();
  const double low = u.minCoeff();
  if (low < -1e-12 * sup) {
    out.failure = "negative u beyond tolerance";
    return out;
  }
  if (!(low > 0) || !(out.state.v.minCoeff() > 0)) {
    out.failure = "non-positive state";
    return out;
  }
  out.ok = true;
  return out;
}

State step(const State& s, double dt) {
  s.validate();
  if (!(dt > 0)) throw std::invalid_argument("step: dt must be positive");
  auto res = try_step(s, dt);
  if (!res.ok) throw DivergedError("step: " + res.failure);
  return std::move(res.state);
}

PowerLawFit fit_power_law(const std::vector<double>& t, const std::vector<double>& sup_u) {
  PowerLawFit best;
  const std::size_t n = t.size();
  if (n < 4 || sup_u.size() != n) return best;
  const double t_last = t.back();
  const double span = t_last - t.front();
  if (!(span > 0)) return best;

  auto evaluate = [&](double log_delta) {
    PowerLawFit f;
    f.T = t_last + span * std::exp(log_delta);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = std::log(f.T - t[i]);
      const double y = std::log(sup_u[i]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double denom = n * sxx - sx * sx;
    if (!(std::abs(denom) > 0)) return f;
    const double slope = (n * sxy - sx * sy) / denom;
    f.gamma = -slope;
    f.log_A = (sy - slope * sx) / n;
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = std::log(sup_u[i]) - (f.log_A + slope * std::log(f.T - t[i]));
      ss += e * e;
    }
    f.rms = std::sqrt(ss / n);
    f.ok = std::isfinite(f.rms);
    return f;
  };

  // Coarse scan in ln((T - t_last) / span), then golden-section refinement.
  const double lo = std::log(1e-12), hi = std::log(10.0);
  const int samples = 120;
  int best_i = 0;
  double best_rms = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= samples; ++i) {
    const auto f = evaluate(lo + (hi - lo) * i / samples);
    if (f.ok && f.rms < best_rms) {
      best_rms = f.rms;
      best_i = i;
    }
  }
  if (!std::isfinite(best_rms)) return best;
  double a = lo + (hi - lo) * std::max(0, best_i - 1) / samples;
  double b = lo + (hi - lo) * std::min(samples, best_i + 1) / samples;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = evaluate(x1).rms, f2 = evaluate(x2).rms;
  for (int it = 0; it < 100 && b - a > 1e-12; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = evaluate(x1).rms;
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = evaluate(x2).rms;
    }
  }
  best = evaluate(0.5 * (a + b));
  return best;
}

BlowupVerdict detect_blowup(const std::vector<SeriesRecord>& series, double blowup_factor, double t_end) {
  if (series.empty()) throw std::invalid_argument("detect_blowup: empty series");
  BlowupVerdict v;
  for (const auto& r : series) {
    if (!std::isfinite(r.mass_u) || !std::isfinite(r.mass_v) || !std::isfinite(r.sup_u) || !std::isfinite(r.F) ||
        !std::isfinite(r.D)) {
      v.outcome = BlowupVerdict::Outcome::diverged_numerically;
      v.t_detect = r.t;
      v.trigger = "non-finite diagnostics";
      return v;
    }
  }
  const double sup0 = series.front().sup_u;
  bool floor_seen = false;
  double max_growth = 0;
  for (std::size_t j = 0; j < series.size(); ++j) {
    floor_seen = floor_seen || series[j].at_floor;
    const double growth = series[j].sup_u / sup0;
    max_growth = std::max(max_growth, growth);
    if (floor_seen && growth >= blowup_factor) {
      v.outcome = BlowupVerdict::Outcome::blew_up;
      v.t_detect = series[j].t;
      v.trigger = "sup_u growth " + std::to_string(growth) + " with dt at floor";
      // Fit over the upper half of the logarithmic growth.
      const double cut = 0.5 * std::log(growth);
      std::vector<double> ts, ss;
      for (std::size_t i = 0; i <= j; ++i) {
        if (std::log(series[i].sup_u / sup0) >= cut) {
          ts.push_back(series[i].t);
          ss.push_back(series[i].sup_u);
        }
      }
      const auto fit = fit_power_law(ts, ss);
      if (fit.ok) {
        v.t_extrapolated = fit.T;
        v.growth_exponent = fit.gamma;
      }
      return v;
    }
  }
  const double t_last = series.back().t;
  if (t_last >= t_end - 1e-12 * std::max(1.0, std::abs(t_end))) {
    v.outcome = BlowupVerdict::Outcome::reached_t_end;
    v.t_detect = t_last;
    v.trigger = "t_end";
    return v;
  }
  v.outcome = BlowupVerdict::Outcome::diverged_numerically;
  v.t_detect = t_last;
  v.trigger = max_growth >= blowup_factor ? "sup_u growth without dt collapse"
              : floor_seen               ? "dt floor without sup_u growth"
                                         : "run stopped before t_end";
  return v;
}

Trajectory run(const State& s0, const SolverConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  s0.validate();
  if (!s0.positive()) throw DomainError("run: initial state must be positive");

  Trajectory tr;
  tr.snapshots.push_back(s0);
  tr.series.push_back(make_record(s0, 0.0, cfg.gradv_p));
  if (observer) observer(tr.series.back());

  State s = s0;
  double dt = cfg.dt_init;
  const double sup0 = s0.u.maxCoeff();
  bool floor_seen = false;
  long steps = 0;
  bool last_snapshotted = true;

  while (s.t < cfg.t_end) {
    if (steps >= cfg.max_steps) {
      tr.stop_reason = "max_steps";
      break;
    }
    const double remaining = cfg.t_end - s.t;
    double h = std::min({dt, cfg.dt_max, remaining});
    // Absorb a sliver of remaining time instead of leaving a tiny final step.
    if (remaining <= 1.01 * h) h = remaining;
    bool accepted = false;
    StepResult res;
    for (int attempt = 0; attempt < 200; ++attempt) {
      res = try_step(s, h);
      const double limit = cfg.safety * res.dt_pos;
      if (res.ok && h <= limit) {
        accepted = true;
        break;
      }
      ++tr.rejected_steps;
      const double next = res.ok ? limit : std::min(0.5 * h, limit);
      if (!(next > 0) || next < 1e-300) break;
      h = next;
    }
    if (!accepted) {
      tr.stop_reason = "step failure: " + res.failure;
      break;
    }
    const bool floor = h < cfg.dt_min && h < remaining;
    const double t_next = h == remaining ? cfg.t_end : s.t + h;
    s = std::move(res.state);
    s.t = t_next;
    ++steps;
    SeriesRecord rec = make_record(s, h, cfg.gradv_p);
    rec.at_floor = floor;
    tr.series.push_back(rec);
    if (observer) observer(rec);
    last_snapshotted = steps % cfg.snapshot_every == 0;
    if (last_snapshotted) tr.snapshots.push_back(s);

    floor_seen = floor_seen || floor;
    if (floor_seen && rec.sup_u >= cfg.blowup_factor * sup0) {
      tr.stop_reason = "blow-up criteria met";
      break;
    }
    // A small margin under the last positivity bound avoids systematic rejections.
    dt = std::min({1.2 * h, cfg.dt_max, 0.9 * cfg.safety * res.dt_pos});
  }
  if (!last_snapshotted) tr.snapshots.push_back(s);
  if (tr.stop_reason.empty()) tr.stop_reason = "t_end";

  tr.verdict = detect_blowup(tr.series, cfg.blowup_factor, cfg.t_end);
  if (tr.stop_reason == "max_steps" && tr.verdict.outcome != BlowupVerdict::Outcome::blew_up) {
    tr.verdict.outcome = BlowupVerdict::Outcome::inconclusive;
    tr.verdict.trigger = "step budget exhausted";
  } else if (tr.verdict.outcome == BlowupVerdict::Outcome::diverged_numerically && tr.stop_reason != "t_end") {
    tr.verdict.trigger += " (" + tr.stop_reason + ")";
  }
  return tr;
}

}  // namespace kslab
