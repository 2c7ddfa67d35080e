#include "kslab/initial_data.hpp"

#include "kslab/quadrature.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>

namespace kslab {

namespace {

constexpr double kQuadTol = 1e-13;
// Below this ln(xi) the closed-form asymptotics of phi are exact to rounding.
constexpr double kPhiAsymptoticLogXi = -18.420680743952367;  // ln(1e-8)
// Below this ln(xi) power integrals switch to the xi = 0 power tail.
constexpr double kDeepLogXi = -1400.0;

// Exponents of size |ln xi| carry absolute rounding ~ eps |ln xi|, which bounds
// the attainable relative accuracy of integrands built from them.
double window_tol(double log_xi) { return std::max(kQuadTol, 1e-15 * std::abs(log_xi)); }

double logaddexp(double x, double y) {
  if (x == -std::numeric_limits<double>::infinity()) return y;
  if (y == -std::numeric_limits<double>::infinity()) return x;
  const double hi = std::max(x, y);
  return hi + std::log1p(std::exp(-std::abs(x - y)));
}

// ln(1 + xi) from ln(xi).
double log1p_from_log(double log_xi) { return log_xi > 40 ? log_xi + std::log1p(std::exp(-log_xi)) : std::log1p(std::exp(log_xi)); }

std::vector<double> span_breakpoints(double a, double b, double step) {
  std::vector<double> pts{a};
  const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) / step)));
  for (int i = 1; i < pieces; ++i) pts.push_back(a + (b - a) * i / pieces);
  pts.push_back(b);
  return pts;
}

double checked(const QuadratureResult& q, const char* who) {
  if (!std::isfinite(q.value)) throw std::runtime_error(std::string(who) + ": non-finite quadrature result");
  return q.value;
}

// int_a^b exp(log_K + q s) ds without overflow or cancellation for small |q|.
double exp_integral(double log_K, double q, double a, double b) {
  if (!(b > a)) return 0.0;
  const double w = b - a;
  if (q == 0) return std::exp(log_K) * w;
  if (q > 0) return std::exp(log_K + q * b) * -std::expm1(-q * w) / q;
  return std::exp(log_K + q * a) * -std::expm1(q * w) / -q;
}

// int_A^0 s e^{q s} ds = (e^x - 1 - x e^x) / q^2 with x = q A, series near x = 0.
double s_exp_integral(double q, double A) {
  const double x = q * A;
  if (std::abs(x) < 0.5) {
    double term = x, sum = 0;
    for (int k = 2; k < 30; ++k) {
      term *= x / k;
      sum += (1.0 - k) * term;
    }
    return sum / (q * q);
  }
  return (std::expm1(x) - x * std::exp(x)) / (q * q);
}

// int_0^1 of an integrand given in the variable s = ln(rho) as h(s, L) with
// L = ln(rho^2 + xi) (the Jacobian e^s is folded into h by the caller).
// The integrand is |e^{x(s)} - y(s)|^p e^{n s}, and for xi -> 0 it tends to
// exp(log_K + q s) wherever e^{x} dominates y. Below s* - 35 (s* = ln(xi)/2) it
// is negligible. For deep log_xi the stretch from s* + 35 up to where y starts
// to matter is taken in closed form; the rest is integrated.
template <typename H>
double log_variable_integral(H&& h, double log_xi, double q, double log_K, int n, double p) {
  auto integrand = [&](double s) { return h(s, logaddexp(2 * s, log_xi)); };
  const double s_star = 0.5 * log_xi;
  const double s_lo = std::min(s_star, 0.0) - 35.0;
  if (log_xi > kDeepLogXi) {
    std::vector<double> pts = span_breakpoints(s_lo, std::min(s_star, 0.0), 10.0);
    if (s_star < 0) {
      auto rest = span_breakpoints(s_star, 0.0, 10.0);
      pts.insert(pts.end(), rest.begin() + 1, rest.end());
    }
    return checked(integrate_adaptive(integrand, pts, 0.0, window_tol(log_xi), 20000), "log_variable_integral");
  }
  const double s_hi = s_star + 35.0;
  // x(s) = (log_K + (q - n) s) / p exceeds 45 below s_pl.
  if (!(n - q > 0)) throw std::domain_error("log_variable_integral: singular part must grow toward the origin");
  const double s_pl = std::max(s_hi, std::min(0.0, (log_K - 45.0 * p) / (n - q)));
  const double window = checked(integrate_adaptive(integrand, span_breakpoints(s_lo, s_hi, 10.0), 0.0, window_tol(log_xi), 20000),
                                "log_variable_integral");
  const double body = checked(integrate_adaptive(integrand, span_breakpoints(s_pl, 0.0, 10.0), 0.0, window_tol(log_xi), 20000),
                              "log_variable_integral");
  return window + exp_integral(log_K, q, s_hi, s_pl) + body;
}

// |e^{lx} - y|^p e^{lw} without overflow when lx is large.
double pow_diff(double lx, double y, double p, double lw) {
  if (lx > 0) return std::exp(p * lx + lw) * std::pow(std::abs(1.0 - y * std::exp(-lx)), p);
  return std::pow(std::abs(std::exp(lx) - y), p) * std::exp(lw);
}

double outer_integral(const std::function<double(double)>& g, int n, double r_lo, double R) {
  if (r_lo >= R) return 0.0;
  auto integrand = [&](double s) {
    const double r = std::exp(s);
    return g(r) * std::exp(n * s);
  };
  const double a = std::log(r_lo), b = std::log(R);
  return checked(integrate_adaptive(integrand, span_breakpoints(a, b, 1.0), 0.0, kQuadTol, 20000), "outer_integral");
}

}  // namespace

double power_integral(double a, double b, double log_xi, double c0, double c1) {
  if (log_xi > -4.0) {
    const double xi = std::exp(log_xi);
    auto f = [&](double rho) {
      const double base = rho * rho + xi;
      return std::pow(rho, a) * std::pow(base, -b) * (c0 + c1 * std::log(base));
    };
    return checked(integrate_adaptive(f, std::vector<double>{0.0, 0.25, 0.5, 1.0}, 0.0, kQuadTol, 20000),
                   "power_integral");
  }
  const double q = a + 1.0 - 2.0 * b;
  auto h = [&](double s, double L) { return std::exp((a + 1.0) * s - b * L) * (c0 + c1 * L); };
  auto L_of = [&](double s) { return logaddexp(2 * s, log_xi); };
  const double s_star = 0.5 * log_xi;
  const double s_lo = std::min(s_star, 0.0) - 35.0;
  // Below s_lo the integrand is xi^{-b} rho^a (c0 + c1 ln xi) to O(e^-70).
  const double tail = std::exp((a + 1.0) * s_lo - b * log_xi) * (c0 + c1 * log_xi) / (a + 1.0);
  if (log_xi > kDeepLogXi) {
    std::vector<double> pts = span_breakpoints(s_lo, s_star, 10.0);
    auto rest = span_breakpoints(s_star, 0.0, 10.0);
    pts.insert(pts.end(), rest.begin() + 1, rest.end());
    return checked(integrate_adaptive([&](double s) { return h(s, L_of(s)); }, pts, 0.0, window_tol(log_xi), 20000),
                   "power_integral") +
           tail;
  }
  if (!(q > 0)) throw std::domain_error("power_integral: divergent at xi -> 0 (a + 1 - 2b <= 0)");
  // Above s_hi, L = 2s to O(e^-70): int_{s_hi}^0 e^{q s} (c0 + 2 c1 s) ds in closed form.
  const double s_hi = s_star + 35.0;
  const double window = checked(
      integrate_adaptive([&](double s) { return h(s, L_of(s)); }, span_breakpoints(s_lo, s_hi, 10.0), 0.0, window_tol(log_xi), 20000),
      "power_integral");
  const double upper = c0 * exp_integral(0.0, q, s_hi, 0.0) + 2.0 * c1 * s_exp_integral(q, s_hi);
  return tail + window + upper;
}

double phi_offset(int n) {
  if (n < 3) throw DomainError("phi: n must be >= 3");
  static std::mutex mutex;
  static std::array<double, 64> cache{};
  static std::array<bool, 64> ready{};
  std::lock_guard<std::mutex> lock(mutex);
  if (n < 64 && ready[n]) return cache[n];
  const double nn = n;
  auto near = [nn](double t) { return std::pow(t, nn - 1) * std::pow(1 + t * t, -nn / 2); };
  auto far = [nn](double s) {
    if (s == 0) return 0.0;
    return std::expm1(-nn / 2 * std::log1p(s * s)) / s;
  };
  const double c = checked(integrate_adaptive(near, 0.0, 1.0, 0.0, 1e-15), "phi_offset") +
                   checked(integrate_adaptive(far, 0.0, 1.0, 0.0, 1e-15), "phi_offset");
  if (n < 64) {
    cache[n] = c;
    ready[n] = true;
  }
  return c;
}

double phi_from_log(double log_xi, int n) {
  if (n < 3) throw DomainError("phi: n must be >= 3");
  if (std::isnan(log_xi)) throw DomainError("phi: xi must be positive");
  if (log_xi < kPhiAsymptoticLogXi) {
    const double xi = std::exp(log_xi);
    return -0.5 * log_xi + phi_offset(n) + 0.25 * n * xi - n * (n + 2.0) / 32.0 * xi * xi;
  }
  return power_integral(n - 1.0, 0.5 * n, log_xi);
}

double phi(double xi, int n) {
  if (!(xi > 0)) throw DomainError("phi: xi must be positive");
  return phi_from_log(std::log(xi), n);
}

EtaChoice choose_eta(double r_k, double k, int n, double R) {
  if (!(r_k > 0 && r_k < R)) throw DomainError("choose_eta: r_k must lie in (0, R)");
  if (!(k > 0)) throw DomainError("choose_eta: k must be positive");
  const double rn = std::pow(r_k, n);
  auto value = [&](double log_xi) { return rn * phi_from_log(log_xi, n); };

  EtaChoice out;
  // eta < R^2 strictly
  const double top = 2.0 * std::log(R / r_k);
  const double hi0 = top - 1e-12 * std::max(1.0, std::abs(top));
  double lo, hi;
  if (value(hi0) >= k) {
    lo = hi = hi0;
  } else {
    // phi(xi) > ln(1/xi)/2 + c_n, so this point satisfies the inequality with margin >= r_k^n.
    lo = std::min(-2.0 * (k / rn - phi_offset(n)) - 2.0, hi0 - 1.0);
    hi = hi0;
    while (value(lo) < k) lo = 2.0 * lo - 1.0;
    for (out.iterations = 0; out.iterations < 200; ++out.iterations) {
      if (hi - lo <= 1e-14 * std::max(1.0, std::abs(lo))) break;
      const double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      (value(mid) >= k ? lo : hi) = mid;
    }
  }
  out.log_xi = lo;
  out.log_eta = lo + 2.0 * std::log(r_k);
  out.eta = std::exp(out.log_eta);
  out.value = value(lo);
  out.margin = out.value - k;
  if (!(out.margin >= 0)) throw std::logic_error("choose_eta: margin negative");
  return out;
}

RadialProfile constant_profile(double c) {
  if (!(c > 0)) throw DomainError("constant profile must be positive");
  return {[c](double) { return c; }, [](double) { return 0.0; }, "constant(" + std::to_string(c) + ")"};
}

RadialProfile bump_profile(double amplitude, double width, double floor) {
  if (!(amplitude > 0) || !(width > 0) || !(floor > 0)) throw DomainError("bump profile parameters must be positive");
  return {[=](double r) { return amplitude * (floor + std::exp(-(r / width) * (r / width))); },
          [=](double r) { return -2.0 * amplitude * r / (width * width) * std::exp(-(r / width) * (r / width)); },
          "bump(" + std::to_string(width) + ")"};
}

double profile_mass(const RadialProfile& profile, int n, double R) {
  auto f = [&](double r) { return profile.value(r) * std::pow(r, n - 1); };
  return sphere_measure(n) * checked(integrate_adaptive(f, span_breakpoints(0.0, R, R / 8), 0.0, kQuadTol), "profile_mass");
}

RadialProfile normalized_bump_profile(int n, double R, double m, double width, double floor) {
  if (!(m > 0)) throw DomainError("bump mass must be positive");
  const double unit = profile_mass(bump_profile(1.0, width, floor), n, R);
  return bump_profile(m / unit, width, floor);
}

double RadiusRule::operator()(int k) const { return scale * std::pow(ratio, k); }

void Lemma14Recipe::validate() const {
  if (n < 3) throw DomainError("recipe: n must be >= 3");
  if (!(R > 0)) throw DomainError("recipe: R must be positive");
  if (!(m > 0)) throw DomainError("recipe: m must be positive");
  const double p_max = 2.0 * n / (n + 2.0);
  if (!(p > 1 && p < p_max)) throw WindowError("recipe: p must lie in (1, 2n/(n+2))");
  const double lo = n - n / p, hi = (n - 2) / 2.0;
  if (!(alpha > lo && alpha < hi)) throw WindowError("recipe: alpha outside (n - n/p, (n-2)/2)");
  if (!(radii.scale > 0 && radii.ratio > 0 && radii.ratio < 1 && radii(1) < R))
    throw DomainError("recipe: radius rule must give a decreasing sequence in (0, R)");
  if (!base_u.value || !base_v.value || !base_v.derivative) throw DomainError("recipe: baseline profiles missing");
  for (int i = 0; i <= 64; ++i) {
    const double r = R * i / 64.0;
    if (!(base_u.value(r) > 0) || !(base_v.value(r) > 0)) throw DomainError("recipe: baselines must be positive");
  }
  const double mass = profile_mass(base_u, n, R);
  if (std::abs(mass - m) > 1e-8 * m) throw DomainError("recipe: baseline u mass differs from m");
}

Lemma14Recipe make_recipe(int n, double R, RadialProfile base_u, RadialProfile base_v, double m, double p,
                          std::optional<double> alpha, std::optional<RadiusRule> radii) {
  Lemma14Recipe recipe;
  recipe.n = n;
  recipe.R = R;
  recipe.base_u = std::move(base_u);
  recipe.base_v = std::move(base_v);
  recipe.m = m;
  recipe.p = p;
  recipe.alpha = alpha.value_or(0.5 * ((n - n / p) + (n - 2) / 2.0));
  recipe.radii = radii.value_or(RadiusRule{R / 2, 0.5});
  recipe.validate();
  return recipe;
}

ContinuumDatum lemma14_continuum(const Lemma14Recipe& recipe, int k) {
  recipe.validate();
  if (k < 1) throw DomainError("lemma14: k must be >= 1");
  const int n = recipe.n;
  const double R = recipe.R, alpha = recipe.alpha, p = recipe.p;
  const double beta_u = 0.5 * (n - alpha);
  const double beta_v = 0.5 * alpha;
  const double omega = sphere_measure(n);

  ContinuumDatum d;
  d.k = k;
  d.r_k = recipe.radius(k);
  d.eta = choose_eta(d.r_k, k, n, R);
  const double r = d.r_k;
  const double lx = d.eta.log_xi;
  const double lp1 = log1p_from_log(lx);
  const double rn = std::pow(r, n);
  const double ur = recipe.base_u.value(r);
  const double vr = recipe.base_v.value(r);
  const auto& U = recipe.base_u.value;
  const auto& V = recipe.base_v.value;
  const auto& dV = recipe.base_v.derivative;

  const double tilde_inner = omega * ur * rn * std::exp(beta_u * lp1) * power_integral(n - 1.0, beta_u, lx);
  const double tilde_outer = omega * outer_integral(U, n, r, R);
  d.tilde_mass = tilde_inner + tilde_outer;
  const double s = recipe.m / d.tilde_mass;
  d.renorm = s;
  d.mass = s * tilde_inner + s * tilde_outer;

  d.uv = omega * s * ur * vr * rn * std::exp(0.5 * n * lp1) * phi_from_log(lx, n) +
         omega * s * outer_integral([&](double x) { return U(x) * V(x); }, n, r, R);
  d.v_sq = omega * vr * vr * rn * std::exp(alpha * lp1) * power_integral(n - 1.0, alpha, lx) +
           omega * outer_integral([&](double x) { return V(x) * V(x); }, n, r, R);
  d.grad_v_sq = omega * vr * vr * std::pow(r, n - 2) * alpha * alpha * std::exp(alpha * lp1) *
                    power_integral(n + 1.0, alpha + 2.0, lx) +
                omega * outer_integral([&](double x) { return dV(x) * dV(x); }, n, r, R);
  const double logC = std::log(s * ur) + beta_u * lp1;
  d.entropy = omega * rn * std::exp(logC) * power_integral(n - 1.0, beta_u, lx, logC, -beta_u) +
              omega * outer_integral([&](double x) { return s * U(x) * std::log(s * U(x)); }, n, r, R);
  d.F0 = 0.5 * d.grad_v_sq + 0.5 * d.v_sq - d.uv + d.entropy;
  d.uv_over_k = d.uv / k;

  // |u_k - u|_{L^p}: inner part in rho = r'/r_k, outer part is (s - 1) u.
  const double u_inner = omega * rn *
                         log_variable_integral(
                             [&](double sv, double L) {
                               return pow_diff(logC - beta_u * L, U(r * std::exp(sv)), p, n * sv);
                             },
                             lx, n - 2.0 * p * beta_u, p * logC, n, p);
  // s - 1 = (m - |u~_k|_1) / |u~_k|_1 where m - |u~_k|_1 = (int_{B_r} u - inner mass of u~_k) + (m - int u);
  // forming it this way keeps the O(r_k^n) difference free of O(1) rounding.
  const double base_inner =
      omega * rn *
      checked(integrate_adaptive([&](double rho) { return U(r * rho) * std::pow(rho, n - 1); }, 0.0, 1.0, 0.0, kQuadTol),
              "base_inner");
  double mass_defect = recipe.m - profile_mass(recipe.base_u, n, R);
  if (std::abs(mass_defect) <= 1e-12 * recipe.m) mass_defect = 0;
  const double s_minus_1 = (base_inner - tilde_inner + mass_defect) / d.tilde_mass;
  const double u_outer =
      std::pow(std::abs(s_minus_1), p) * omega * outer_integral([&](double x) { return std::pow(U(x), p); }, n, r, R);
  d.u_lp_distance = std::pow(u_inner + u_outer, 1.0 / p);

  const double logVk = std::log(vr) + beta_v * lp1;
  const double v_l2 = omega * rn *
                      log_variable_integral(
                          [&](double sv, double L) { return pow_diff(logVk - beta_v * L, V(r * std::exp(sv)), 2.0, n * sv); },
                          lx, n - 2.0 * alpha, 2.0 * logVk, n, 2.0);
  // d/drho v_k = -alpha Vk rho (rho^2 + xi)^{-alpha/2 - 1}; compare with r_k v'(r_k rho).
  const double log_aV = std::log(alpha) + logVk;
  const double v_grad = omega * std::pow(r, n - 2) *
                        log_variable_integral(
                            [&](double sv, double L) {
                              return pow_diff(log_aV + sv - (beta_v + 1.0) * L, -r * dV(r * std::exp(sv)), 2.0, n * sv);
                            },
                            lx, n - 2.0 - 2.0 * alpha, 2.0 * log_aV, n, 2.0);
  d.v_w12_distance = std::sqrt(v_l2 + v_grad);
  return d;
}

State sample_lemma14(const Lemma14Recipe& recipe, int k, const EtaChoice& eta, const GridPtr& grid) {
  if (!grid) throw DomainError("sample_lemma14: null grid");
  if (grid->dimension() != recipe.n || std::abs(grid->radius() - recipe.R) > 1e-14 * recipe.R)
    throw DomainError("sample_lemma14: grid does not match recipe geometry");
  const double r_k = recipe.radius(k);
  if (grid->cells_below(r_k) < 8)
    throw DomainError("sample_lemma14: grid resolves r_k = " + std::to_string(r_k) + " with fewer than 8 cells");
  const int n = recipe.n;
  const double beta_u = 0.5 * (n - recipe.alpha), beta_v = 0.5 * recipe.alpha;
  const double lp1 = log1p_from_log(eta.log_xi);
  const double ur = recipe.base_u.value(r_k), vr = recipe.base_v.value(r_k);

  const auto& centers = grid->centers();
  Eigen::VectorXd tilde(grid->size()), v(grid->size());
  for (Eigen::Index i = 0; i < centers.size(); ++i) {
    const double r = centers[i];
    if (r <= r_k) {
      const double L = logaddexp(2.0 * std::log(r / r_k), eta.log_xi);
      tilde[i] = ur * std::exp(beta_u * (lp1 - L));
      v[i] = vr * std::exp(beta_v * (lp1 - L));
    } else {
      tilde[i] = recipe.base_u.value(r);
      v[i] = recipe.base_v.value(r);
    }
  }
  State state;
  state.grid = grid;
  state.u = recipe.m * tilde / integrate(*grid, tilde);
  state.v = v;
  state.t = 0;
  return state;
}

BlowupDatum lemma14_pair(const Lemma14Recipe& recipe, int k, const GridPtr& grid) {
  BlowupDatum datum;
  datum.k = k;
  datum.continuum = lemma14_continuum(recipe, k);
  if (datum.continuum.eta.margin < 0) throw std::logic_error("lemma14: margin negative");
  if (grid) {
    datum.state = sample_lemma14(recipe, k, datum.continuum.eta, grid);
    datum.F0_grid = energy(*datum.state);
    datum.mass_grid = integrate(*grid, datum.state->u);
  }
  return datum;
}

std::vector<BlowupDatum> lemma14_sequence(const Lemma14Recipe& recipe, int k_first, int k_last, const GridPtr& grid) {
  std::vector<BlowupDatum> out;
  for (int k = k_first; k <= k_last; ++k) out.push_back(lemma14_pair(recipe, k, grid));
  return out;
}

State baseline_profiles(const BaselineKind& kind, const GridPtr& grid) {
  if (!grid) throw DomainError("baseline_profiles: null grid");
  State s;
  s.grid = grid;
  if (kind.type == BaselineKind::Type::constant) {
    if (!(kind.c > 0)) throw DomainError("baseline_profiles: constant must be positive");
    s.u = Eigen::VectorXd::Constant(grid->size(), kind.c);
    s.v = s.u;
    return s;
  }
  if (!(kind.m > 0) || !(kind.width > 0)) throw DomainError("baseline_profiles: bump mass and width must be positive");
  const auto shape = bump_profile(1.0, kind.width);
  Eigen::VectorXd values(grid->size());
  for (Eigen::Index i = 0; i < values.size(); ++i) values[i] = shape.value(grid->centers()[i]);
  s.u = kind.m * values / integrate(*grid, values);
  s.v = s.u;
  return s;
}

}  // namespace kslab
