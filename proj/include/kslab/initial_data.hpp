// Low-energy initial data: concentrated radial pairs (u_k, v_k) that stay
// L^p x W^{1,2}-close to a positive baseline (u, v) while F(u_k, v_k) -> -inf.
//
// On B_{r_k} the pair is replaced by
//
//     u~_k(r) = u(r_k) ((r_k^2 + eta_k) / (r^2 + eta_k))^{(n - alpha)/2}
//     v_k(r)  = v(r_k) ((r_k^2 + eta_k) / (r^2 + eta_k))^{alpha/2}
//
// and u_k = m u~_k / |u~_k|_1. eta_k is chosen so that r_k^n phi(eta_k/r_k^2) >= k
// with phi(xi) = int_0^1 rho^{n-1} (rho^2 + xi)^{-n/2} drho. Because phi only
// diverges like ln(1/xi)/2, eta_k underflows double precision already for
// moderate k; everything below is therefore parameterized by ln(xi).
#ifndef KSLAB_INITIAL_DATA_HPP
#define KSLAB_INITIAL_DATA_HPP

#include "kslab/functionals.hpp"
#include "kslab/radial_core.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace kslab {

/// phi(xi) for xi > 0, absolute accuracy 1e-10 or better.
double phi(double xi, int n);
/// phi(exp(log_xi)); valid for arbitrarily negative log_xi.
double phi_from_log(double log_xi, int n);
/// c_n in phi(xi) = ln(1/xi)/2 + c_n + O(xi) as xi -> 0.
double phi_offset(int n);

/// int_0^1 rho^a (rho^2 + xi)^{-b} (c0 + c1 ln(rho^2 + xi)) drho with xi = exp(log_xi).
/// Requires a + 1 - 2b > 0 whenever log_xi is below about -1400.
double power_integral(double a, double b, double log_xi, double c0 = 1.0, double c1 = 0.0);

struct EtaChoice {
  double log_xi = 0;   // ln(eta / r_k^2)
  double log_eta = 0;  // ln(eta)
  double eta = 0;      // exp(log_eta); 0 when it underflows
  double value = 0;    // r_k^n phi(eta / r_k^2)
  double margin = 0;   // value - k, always >= 0
  int iterations = 0;
};

/// Largest bisection iterate (in ln xi) with r_k^n phi(eta/r_k^2) >= k and eta < R^2.
EtaChoice choose_eta(double r_k, double k, int n, double R);

/// A closed-form radial profile with its derivative.
struct RadialProfile {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
  std::string description;
};

RadialProfile constant_profile(double c);
/// amplitude * (floor + exp(-(r/width)^2)).
RadialProfile bump_profile(double amplitude, double width, double floor = 0.1);
/// Bump scaled so that its integral over B_R is m.
RadialProfile normalized_bump_profile(int n, double R, double m, double width, double floor = 0.1);

/// Continuum integral of a profile over B_R (adaptive quadrature).
double profile_mass(const RadialProfile& profile, int n, double R);

/// r_k = scale * ratio^k.
struct RadiusRule {
  double scale = 0.5;
  double ratio = 0.5;
  double operator()(int k) const;
};

struct Lemma14Recipe {
  int n = 3;
  double R = 1;
  RadialProfile base_u;
  RadialProfile base_v;
  double m = 0;
  double p = 1.1;
  double alpha = 0;
  RadiusRule radii;

  /// Checks the exponent window, baseline positivity, and the baseline mass.
  void validate() const;
  double radius(int k) const { return radii(k); }
};

/// Recipe with the default radius rule r_k = 2^{-k} R/2 and alpha at the window midpoint.
Lemma14Recipe make_recipe(int n, double R, RadialProfile base_u, RadialProfile base_v, double m, double p,
                          std::optional<double> alpha = std::nullopt,
                          std::optional<RadiusRule> radii = std::nullopt);

/// Quantities of (u_k, v_k) computed by refined quadrature on the closed-form profiles.
struct ContinuumDatum {
  int k = 0;
  double r_k = 0;
  EtaChoice eta;
  double tilde_mass = 0;    // |u~_k|_{L^1}
  double renorm = 1;        // m / |u~_k|_{L^1}
  double mass = 0;          // |u_k|_{L^1}
  double grad_v_sq = 0;
  double v_sq = 0;
  double uv = 0;
  double entropy = 0;
  double F0 = 0;
  double u_lp_distance = 0;   // |u_k - u|_{L^p}
  double v_w12_distance = 0;  // |v_k - v|_{W^{1,2}}
  double uv_over_k = 0;
};

struct BlowupDatum {
  int k = 0;
  ContinuumDatum continuum;
  /// Present when sampled on a solver grid.
  std::optional<State> state;
  double F0_grid = 0;
  double mass_grid = 0;

  double F0() const { return continuum.F0; }
};

ContinuumDatum lemma14_continuum(const Lemma14Recipe& recipe, int k);

/// Samples (u_k, v_k) at cell centers; u_k is renormalized with the grid
/// quadrature so that integrate(u_k) = m. Requires >= 8 cells inside [0, r_k].
State sample_lemma14(const Lemma14Recipe& recipe, int k, const EtaChoice& eta, const GridPtr& grid);

BlowupDatum lemma14_pair(const Lemma14Recipe& recipe, int k, const GridPtr& grid = nullptr);

std::vector<BlowupDatum> lemma14_sequence(const Lemma14Recipe& recipe, int k_first, int k_last,
                                          const GridPtr& grid = nullptr);

struct BaselineKind {
  enum class Type { constant, bump } type = Type::constant;
  double c = 1;      // constant value
  double m = 1;      // bump mass
  double width = 0.3;

  static BaselineKind constant(double c) { return {Type::constant, c, 0, 0}; }
  static BaselineKind bump(double m, double width) { return {Type::bump, 0, m, width}; }
};

/// Positive radial pair on the grid; for bumps u has mass m (grid quadrature) and v = u.
State baseline_profiles(const BaselineKind& kind, const GridPtr& grid);

}  // namespace kslab

#endif  // KSLAB_INITIAL_DATA_HPP
