// Test-only reference values. Nothing here calls into the library's own
// quadrature; integrals go through Boost's Gauss-Kronrod and tanh-sinh rules.
#ifndef KSLAB_TESTS_ORACLES_HPP
#define KSLAB_TESTS_ORACLES_HPP

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

inline double pi() { return std::numbers::pi; }

inline double ball_volume(int n, double R) {
  if (n == 3) return 4.0 / 3.0 * pi() * R * R * R;
  if (n == 4) return pi() * pi() / 2.0 * R * R * R * R;
  if (n == 5) return 8.0 / 15.0 * pi() * pi() * std::pow(R, 5);
  return std::nan("");
}

inline double sphere_area(int n) { return n * ball_volume(n, 1.0); }

/// phi(1) for n = 3 from the antiderivative ln(rho + sqrt(rho^2 + 1)) - rho / sqrt(rho^2 + 1).
inline double phi_one_n3() { return std::log(1.0 + std::sqrt(2.0)) - 1.0 / std::sqrt(2.0); }

/// phi(xi) = int_0^1 rho^{n-1} (rho^2 + xi)^{-n/2} by tanh-sinh.
inline double phi(double xi, int n) {
  boost::math::quadrature::tanh_sinh<double> ts;
  auto f = [=](double rho) { return std::pow(rho, n - 1) * std::pow(rho * rho + xi, -0.5 * n); };
  // Split where the integrand turns over so both halves are smooth.
  const double knee = std::min(0.5, std::sqrt(xi));
  return ts.integrate(f, 0.0, knee) + ts.integrate(f, knee, 1.0);
}

template <typename F>
double gk(F&& f, double a, double b, double tol = 1e-14) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, tol);
}

// ln|e^x - 1| without overflow for large x.
inline double log_abs_expm1(double x) { return x > 30 ? x + std::log1p(-std::exp(-x)) : std::log(std::abs(std::expm1(x))); }

inline double logaddexp(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

/// Closed-form low-energy pair over the constant baseline 1 on B_R in R^n, with the
/// singular profiles (1 + xi)^beta (rho^2 + xi)^{-beta} inside r_k, integrated in
/// sigma = ln(r / r_k) with Gauss-Kronrod.
struct SpikeOracle {
  double F0, mass, uv, v_sq, grad_v_sq, entropy, u_lp, v_w12, renorm;
};

inline SpikeOracle spike_pair(int n, double R, double alpha, double p, double r_k, double log_xi) {
  const double omega = sphere_area(n);
  const double bu = 0.5 * (n - alpha), bv = 0.5 * alpha;
  const double lp1 = std::log1p(std::exp(log_xi));
  auto Lam = [&](double s) { return lp1 - logaddexp(2 * s, log_xi); };
  const double lo = 0.5 * log_xi - 60.0, mid = 0.5 * log_xi;
  // Pieces [mid-60, mid], then geometric breakpoints from mid up to 0.
  std::vector<double> pts = {0.0};
  for (double b = -0.5; b > mid; b *= 2) pts.push_back(b);
  pts.push_back(mid);
  auto inner = [&](auto&& h) {
    double sum = gk(h, lo, mid);
    for (std::size_t i = pts.size() - 1; i > 0; --i) sum += gk(h, pts[i], pts[i - 1]);
    return sum;
  };
  const double rn = std::pow(r_k, n);
  const double outer_vol = omega * (std::pow(R, n) - rn) / n;

  const double tilde_inner = omega * rn * inner([&](double s) { return std::exp(n * s + bu * Lam(s)); });
  const double m = ball_volume(n, R);
  const double sc = m / (tilde_inner + outer_vol);
  // |sc u~ - 1|^p has a cusp where sc u~ = 1; make it a breakpoint.
  const double cusp = 0.5 * std::log(std::exp(lp1 + std::log(sc) / bu) - std::exp(log_xi));
  if (std::isfinite(cusp) && cusp < 0 && cusp > mid) {
    pts.push_back(cusp);
    std::sort(pts.begin(), pts.end(), std::greater<>());
  }

  SpikeOracle o{};
  o.renorm = sc;
  o.mass = sc * (tilde_inner + outer_vol);
  o.uv = sc * omega * rn * inner([&](double s) { return std::exp(n * s + (bu + bv) * Lam(s)); }) + sc * outer_vol;
  o.v_sq = omega * rn * inner([&](double s) { return std::exp(n * s + 2 * bv * Lam(s)); }) + outer_vol;
  o.grad_v_sq = omega * std::pow(r_k, n - 2) * inner([&](double s) {
                  return std::exp((n + 2) * s + 2 * bv * Lam(s) + 2 * std::log(2 * bv) - 2 * logaddexp(2 * s, log_xi));
                });
  const double ls = std::log(sc);
  o.entropy = omega * rn * inner([&](double s) { return std::exp(n * s + ls + bu * Lam(s)) * (ls + bu * Lam(s)); }) +
              sc * ls * outer_vol;
  o.F0 = 0.5 * o.grad_v_sq + 0.5 * o.v_sq - o.uv + o.entropy;
  const double u_inner =
      omega * rn * inner([&](double s) { return std::exp(n * s + p * log_abs_expm1(ls + bu * Lam(s))); });
  o.u_lp = std::pow(u_inner + std::pow(std::abs(sc - 1.0), p) * outer_vol, 1.0 / p);
  const double v_l2 = omega * rn * inner([&](double s) { return std::exp(n * s + 2 * log_abs_expm1(bv * Lam(s))); });
  o.v_w12 = std::sqrt(v_l2 + o.grad_v_sq);
  return o;
}

}  // namespace oracle

#endif  // KSLAB_TESTS_ORACLES_HPP
