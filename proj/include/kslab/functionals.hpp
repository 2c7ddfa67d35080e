// Energy, dissipation and the auxiliary quantities of the radial
// Keller-Segel system
//
//     u_t = Lap u - div(u grad v),   v_t = Lap v - v + u.
//
// For a positive radial pair (u, v):
//
//     F(u,v) = 1/2 |grad v|^2 + 1/2 |v|^2 - (u, v) + (u, ln u)
//     D(u,v) = |f|^2 + |g|^2,  f = -Lap v + v - u,  g = u_r / sqrt(u) - sqrt(u) v_r
//
// with all norms in L^2 of the ball.
#ifndef KSLAB_FUNCTIONALS_HPP
#define KSLAB_FUNCTIONALS_HPP

#include "kslab/radial_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace kslab {

/// Floor applied inside logarithms only; positivity itself is never repaired.
inline constexpr double kEntropyFloor = 1e-300;

template <typename Scalar>
struct StatePair {
  using GridPtr = std::shared_ptr<const RadialGrid<Scalar>>;
  GridPtr grid;
  Vector<Scalar> u;
  Vector<Scalar> v;
  Scalar t = 0;

  const RadialGrid<Scalar>& g() const { return *grid; }

  void validate() const {
    if (!grid) throw std::invalid_argument("StatePair: null grid");
    if (u.size() != grid->size() || v.size() != grid->size())
      throw std::invalid_argument("StatePair: u and v must live on the same grid");
  }
  bool positive() const { return (u.array() > 0).all() && (v.array() > 0).all(); }
};

using State = StatePair<double>;

template <typename Scalar>
struct EnergyReport {
  Scalar F = 0;
  Scalar D = 0;
  Scalar grad_v_sq = 0;
  Scalar v_sq = 0;
  Scalar uv = 0;
  Scalar entropy = 0;
  Scalar f_norm_sq = 0;
  Scalar g_norm_sq = 0;
};

class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {
template <typename Scalar>
void require_positive_u(const StatePair<Scalar>& s, const char* who) {
  s.validate();
  for (Eigen::Index i = 0; i < s.u.size(); ++i) {
    if (!(s.u[i] > 0))
      throw DomainError(std::string(who) + ": u must be positive (cell " + std::to_string(i) + ")");
  }
}
}  // namespace detail

/// f = -Lap v + v - u.
template <typename Scalar>
Vector<Scalar> residual_f(const StatePair<Scalar>& s) {
  s.validate();
  return -laplacian_radial(s.g(), s.v) + s.v - s.u;
}

/// g = u_r / sqrt(u) - sqrt(u) v_r, both derivatives with Neumann ends.
template <typename Scalar>
Vector<Scalar> residual_g(const StatePair<Scalar>& s) {
  detail::require_positive_u(s, "residual_g");
  const Vector<Scalar> ur = radial_derivative(s.g(), s.u, Boundary::neumann);
  const Vector<Scalar> vr = radial_derivative(s.g(), s.v, Boundary::neumann);
  const auto sq = s.u.array().sqrt();
  return (ur.array() / sq - sq * vr.array()).matrix();
}

template <typename Scalar>
EnergyReport<Scalar> energy_report(const StatePair<Scalar>& s) {
  using std::log;
  detail::require_positive_u(s, "energy");
  const auto& grid = s.g();
  EnergyReport<Scalar> rep;
  const Vector<Scalar> vr = radial_derivative(grid, s.v, Boundary::neumann);
  rep.grad_v_sq = integrate(grid, vr.cwiseAbs2());
  rep.v_sq = integrate(grid, s.v.cwiseAbs2());
  rep.uv = integrate(grid, s.u.cwiseProduct(s.v));
  const Vector<Scalar> ulogu =
      s.u.unaryExpr([](Scalar x) { return x * log(std::max(x, Scalar(kEntropyFloor))); });
  rep.entropy = integrate(grid, ulogu);
  rep.F = Scalar(0.5) * rep.grad_v_sq + Scalar(0.5) * rep.v_sq - rep.uv + rep.entropy;
  rep.f_norm_sq = integrate(grid, residual_f(s).cwiseAbs2());
  rep.g_norm_sq = integrate(grid, residual_g(s).cwiseAbs2());
  rep.D = rep.f_norm_sq + rep.g_norm_sq;
  return rep;
}

template <typename Scalar>
Scalar energy(const StatePair<Scalar>& s) {
  return energy_report(s).F;
}

/// D = |f|^2 + |g|^2; v_t = -f is taken from the PDE, not a time difference.
template <typename Scalar>
Scalar dissipation(const StatePair<Scalar>& s) {
  detail::require_positive_u(s, "dissipation");
  return integrate(s.g(), residual_f(s).cwiseAbs2()) + integrate(s.g(), residual_g(s).cwiseAbs2());
}

struct NormKind {
  enum class Type { Lp, W12, sup } type = Type::Lp;
  double p = 2;

  static NormKind Lp(double p) { return {Type::Lp, p}; }
  static NormKind W12() { return {Type::W12, 2}; }
  static NormKind sup() { return {Type::sup, 0}; }
};

template <typename Scalar, typename Derived>
Scalar norm(const RadialGrid<Scalar>& grid, const Eigen::MatrixBase<Derived>& values, NormKind kind,
            Boundary bc = Boundary::neumann) {
  using std::pow;
  using std::sqrt;
  const auto& f = values.derived();
  switch (kind.type) {
    case NormKind::Type::sup:
      return f.cwiseAbs().maxCoeff();
    case NormKind::Type::W12: {
      const Vector<Scalar> d = radial_derivative(grid, f, bc);
      return sqrt(integrate(grid, f.cwiseAbs2()) + integrate(grid, d.cwiseAbs2()));
    }
    case NormKind::Type::Lp:
    default: {
      if (!(kind.p >= 1)) throw std::invalid_argument("norm: Lebesgue exponent must be >= 1");
      const Scalar p = Scalar(kind.p);
      const Vector<Scalar> a = f.cwiseAbs().unaryExpr([p](Scalar x) { return pow(x, p); });
      return pow(integrate(grid, a), Scalar(1) / p);
    }
  }
}

template <typename Scalar>
Scalar norm(const RadialField<Scalar>& f, NormKind kind, Boundary bc = Boundary::neumann) {
  return norm(f.grid(), f.values(), kind, bc);
}

/// theta(n, kappa) = 1 / (1 + n / ((2n + 4) kappa)), in (1/2, 1) for kappa > n - 2.
inline double theta_exponent(int n, double kappa) {
  if (n < 3) throw DomainError("theta_exponent: n must be >= 3");
  if (!(kappa > n - 2))
    throw DomainError("theta_exponent: kappa must exceed n - 2 = " + std::to_string(n - 2));
  const double theta = 1.0 / (1.0 + n / ((2.0 * n + 4.0) * kappa));
  if (!(theta > 0.5 && theta < 1.0)) throw std::logic_error("theta_exponent: theta left (1/2, 1)");
  if (!(2.0 * theta > (2.0 * n + 4.0) / (n + 4.0)))
    throw std::logic_error("theta_exponent: 2 theta <= (2n+4)/(n+4)");
  return theta;
}

struct ParamWindow {
  int n = 3;
  double kappa = 0;
  double theta = 0;
  double p = 0;
  double alpha = 0;
  double alpha_lo = 0;  // n - n/p
  double alpha_hi = 0;  // (n - 2)/2
  std::optional<double> m, M, B, A;

  /// Throws DomainError naming the first violated constraint.
  void validate() const;
};

class WindowError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Validates kappa > n-2, 1 < p < 2n/(n+2) and the alpha window
/// (n - n/p, (n-2)/2); alpha defaults to the window midpoint.
ParamWindow param_window(int n, double p, double kappa, std::optional<double> alpha = std::nullopt);

}  // namespace kslab

#endif  // KSLAB_FUNCTIONALS_HPP
