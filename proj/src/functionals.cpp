#include "kslab/functionals.hpp"

#include <sstream>

namespace kslab {

namespace {
std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}
}  // namespace

void ParamWindow::validate() const {
  if (n < 3) throw WindowError("window: n >= 3 required, got " + std::to_string(n));
  if (!(kappa > n - 2)) throw WindowError("window: kappa > n - 2 violated (kappa = " + fmt(kappa) + ")");
  const double p_max = 2.0 * n / (n + 2.0);
  if (!(p > 1)) throw WindowError("window: p > 1 violated (p = " + fmt(p) + ")");
  if (!(p < p_max))
    throw WindowError("window: p < 2n/(n+2) = " + fmt(p_max) + " violated (p = " + fmt(p) + "); alpha window empty");
  if (!(alpha > alpha_lo && alpha < alpha_hi))
    throw WindowError("window: alpha must lie in (" + fmt(alpha_lo) + ", " + fmt(alpha_hi) + "), got " + fmt(alpha));
  if (!(theta > 0.5 && theta < 1)) throw WindowError("window: theta in (1/2, 1) violated");
  for (auto [name, value] : {std::pair{"m", m}, std::pair{"M", M}, std::pair{"B", B}, std::pair{"A", A}}) {
    if (value && !(*value > 0)) throw WindowError(std::string("window: ") + name + " > 0 violated");
  }
}

ParamWindow param_window(int n, double p, double kappa, std::optional<double> alpha) {
  ParamWindow w;
  w.n = n;
  w.p = p;
  w.kappa = kappa;
  if (n < 3) throw WindowError("window: n >= 3 required, got " + std::to_string(n));
  if (!(kappa > n - 2)) throw WindowError("window: kappa > n - 2 violated (kappa = " + fmt(kappa) + ")");
  w.theta = theta_exponent(n, kappa);
  w.alpha_lo = n - n / p;
  w.alpha_hi = (n - 2) / 2.0;
  w.alpha = alpha.value_or(0.5 * (w.alpha_lo + w.alpha_hi));
  w.validate();
  return w;
}

}  // namespace kslab
