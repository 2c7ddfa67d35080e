// Globally adaptive Gauss-Kronrod (7/15) quadrature.
#ifndef KSLAB_QUADRATURE_HPP
#define KSLAB_QUADRATURE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <initializer_list>
#include <vector>

namespace kslab {

struct QuadratureResult {
  double value = 0;
  double error = 0;
  int intervals = 0;
  bool converged = false;
};

namespace detail {

inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851, 0.864864423359769072789712788640926,
    0.741531185599394439863864773280788, 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204, 0.104790010322250183839876322541518,
    0.140653259715525918745189590510238, 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780, 0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

struct Panel {
  double a, b, value, error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

template <typename F>
Panel gauss_kronrod_15(F& f, double a, double b) {
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(mid);
  double kronrod = fc * kKronrodWeights[7];
  double gauss = fc * kGaussWeights[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kKronrodNodes[j];
    const double s = f(mid - dx) + f(mid + dx);
    kronrod += kKronrodWeights[j] * s;
    if (j % 2 == 1) gauss += kGaussWeights[j / 2] * s;
  }
  kronrod *= half;
  gauss *= half;
  return {a, b, kronrod, std::abs(kronrod - gauss)};
}

}  // namespace detail

/// Integrates f over the union of consecutive intervals given by `breakpoints`
/// until the summed error estimate drops below max(abs_tol, rel_tol |I|).
template <typename F>
QuadratureResult integrate_adaptive(F&& f, const std::vector<double>& breakpoints, double abs_tol = 1e-12,
                                    double rel_tol = 1e-12, int max_intervals = 4000) {
  std::vector<detail::Panel> heap;
  QuadratureResult out;
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    if (breakpoints[i + 1] == breakpoints[i]) continue;
    heap.push_back(detail::gauss_kronrod_15(f, breakpoints[i], breakpoints[i + 1]));
  }
  std::make_heap(heap.begin(), heap.end());
  // Incremental updates drift once large panels are replaced by small ones, so
  // the totals are re-summed before any convergence decision and periodically.
  auto resum = [&] {
    out.value = out.error = 0;
    for (const auto& p : heap) {
      out.value += p.value;
      out.error += p.error;
    }
  };
  auto target = [&] { return std::max(abs_tol, rel_tol * std::abs(out.value)); };
  resum();
  out.intervals = static_cast<int>(heap.size());
  // Stop once the error estimate has stalled at the integrand's rounding level.
  int since_resum = 0, stalls = 0;
  double last_error = out.error;
  while (!heap.empty() && out.intervals < max_intervals) {
    if (out.error <= 2 * target() || ++since_resum >= 256) {
      resum();
      if (out.error <= target()) {
        out.converged = true;
        break;
      }
      if (since_resum >= 256) {
        stalls = out.error > 0.5 * last_error ? stalls + 1 : 0;
        last_error = out.error;
        if (stalls >= 8) break;
      }
      since_resum = 0;
    }
    std::pop_heap(heap.begin(), heap.end());
    const auto worst = heap.back();
    heap.pop_back();
    const double mid = 0.5 * (worst.a + worst.b);
    const auto left = detail::gauss_kronrod_15(f, worst.a, mid);
    const auto right = detail::gauss_kronrod_15(f, mid, worst.b);
    out.value += left.value + right.value - worst.value;
    out.error += left.error + right.error - worst.error;
    heap.push_back(left);
    std::push_heap(heap.begin(), heap.end());
    heap.push_back(right);
    std::push_heap(heap.begin(), heap.end());
    ++out.intervals;
  }
  resum();
  if (!out.converged) out.converged = out.error <= target();
  return out;
}

template <typename F>
QuadratureResult integrate_adaptive(F&& f, double a, double b, double abs_tol = 1e-12, double rel_tol = 1e-12,
                                    int max_intervals = 4000) {
  return integrate_adaptive(std::forward<F>(f), std::vector<double>{a, b}, abs_tol, rel_tol, max_intervals);
}

}  // namespace kslab

#endif  // KSLAB_QUADRATURE_HPP
