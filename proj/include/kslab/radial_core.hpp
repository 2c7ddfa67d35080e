// Radial finite-volume discretization of a ball B_R in R^n.
//
// Cells are indexed 0..N-1 and edges 0..N, with edge j separating cells j-1
// and j. Edge 0 sits at r = 0 and edge N at r = R; both carry zero flux.
// Quadrature weights are the exact cell integrals of r^{n-1}, so that
//
//     integrate(f) = omega_n * sum_i w_i f_i,   w_i = (e_{i+1}^n - e_i^n) / n
//
// integrates constants exactly and keeps the flux-form operators conservative.
#ifndef KSLAB_RADIAL_CORE_HPP
#define KSLAB_RADIAL_CORE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>

namespace kslab {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

enum class Boundary { none, neumann };

/// Surface measure of the unit sphere in R^n, 2 pi^{n/2} / Gamma(n/2).
template <typename Scalar = double>
Scalar sphere_measure(int n) {
  using std::pow;
  using std::tgamma;
  const Scalar pi = std::numbers::pi_v<Scalar>;
  return Scalar(2) * pow(pi, Scalar(n) / 2) / tgamma(Scalar(n) / 2);
}

/// Volume of B_R in R^n.
template <typename Scalar = double>
Scalar ball_volume(int n, Scalar R) {
  using std::pow;
  return sphere_measure<Scalar>(n) * pow(R, n) / Scalar(n);
}

// a^n - b^n for 0 <= b <= a without cancellation in the leading term.
template <typename Scalar>
Scalar power_difference(Scalar a, Scalar b, int n) {
  Scalar sum = 0;
  Scalar ap = 1;
  for (int j = 0; j < n; ++j) {
    Scalar bp = 1;
    for (int l = 0; l < n - 1 - j; ++l) bp *= b;
    sum += ap * bp;
    ap *= a;
  }
  return (a - b) * sum;
}

template <typename Scalar>
class RadialGrid {
 public:
  using VectorType = Vector<Scalar>;

  /// Geometric grid: cell widths h_i = h_0 g^i, summing to R. g = 1 is uniform.
  static std::shared_ptr<const RadialGrid> build(int n, Scalar R, int N, Scalar grading = 1) {
    if (n < 3) throw std::invalid_argument("build_grid: dimension n must be >= 3, got " + std::to_string(n));
    if (!(R > 0)) throw std::invalid_argument("build_grid: radius R must be positive");
    if (N < 16) throw std::invalid_argument("build_grid: cell count N must be >= 16, got " + std::to_string(N));
    if (!(grading >= 1)) throw std::invalid_argument("build_grid: grading must be >= 1");
    return std::shared_ptr<const RadialGrid>(new RadialGrid(n, R, N, grading));
  }

  int dimension() const { return n_; }
  Scalar radius() const { return R_; }
  Scalar grading() const { return grading_; }
  Eigen::Index size() const { return centers_.size(); }
  Scalar omega() const { return omega_; }
  Scalar volume() const { return omega_ * weights_.sum(); }

  const VectorType& edges() const { return edges_; }
  const VectorType& centers() const { return centers_; }
  /// Per-cell integrals of r^{n-1}; multiply by omega() for physical volume.
  const VectorType& weights() const { return weights_; }
  /// Edge conductances e_j^{n-1} / (r_j - r_{j-1}); zero at both boundary edges.
  const VectorType& conductances() const { return conductance_; }
  /// e_j^{n-1} per edge.
  const VectorType& edge_areas() const { return edge_area_; }

  Scalar min_width() const { return (edges_.tail(size()) - edges_.head(size())).minCoeff(); }

  /// Number of cells whose center lies strictly inside [0, r).
  Eigen::Index cells_below(Scalar r) const {
    Eigen::Index count = 0;
    while (count < size() && centers_[count] < r) ++count;
    return count;
  }

 private:
  RadialGrid(int n, Scalar R, int N, Scalar grading) : n_(n), R_(R), grading_(grading) {
    using std::pow;
    edges_.resize(N + 1);
    edges_[0] = 0;
    if (grading == 1) {
      for (int j = 1; j <= N; ++j) edges_[j] = R * Scalar(j) / Scalar(N);
    } else {
      // h_0 (g^N - 1) / (g - 1) = R
      const Scalar h0 = R * (grading - 1) / (pow(grading, N) - 1);
      Scalar h = h0;
      for (int j = 1; j <= N; ++j) {
        edges_[j] = edges_[j - 1] + h;
        h *= grading;
      }
    }
    edges_[N] = R;

    centers_ = Scalar(0.5) * (edges_.head(N) + edges_.tail(N));
    weights_.resize(N);
    for (int i = 0; i < N; ++i) weights_[i] = power_difference(edges_[i + 1], edges_[i], n) / Scalar(n);

    edge_area_.resize(N + 1);
    for (int j = 0; j <= N; ++j) edge_area_[j] = pow(edges_[j], n - 1);
    conductance_ = VectorType::Zero(N + 1);
    for (int j = 1; j < N; ++j) conductance_[j] = edge_area_[j] / (centers_[j] - centers_[j - 1]);

    omega_ = sphere_measure<Scalar>(n);
  }

  int n_;
  Scalar R_;
  Scalar grading_;
  Scalar omega_{};
  VectorType edges_, centers_, weights_, edge_area_, conductance_;
};

/// A scalar radial profile sampled at cell centers.
template <typename Scalar>
class RadialField {
 public:
  using GridPtr = std::shared_ptr<const RadialGrid<Scalar>>;
  using VectorType = Vector<Scalar>;

  RadialField(GridPtr grid, VectorType values) : grid_(std::move(grid)), values_(std::move(values)) {
    if (!grid_) throw std::invalid_argument("RadialField: null grid");
    if (values_.size() != grid_->size()) throw std::invalid_argument("RadialField: size does not match grid");
  }

  template <typename F>
  static RadialField sample(GridPtr grid, F&& profile) {
    VectorType values(grid->size());
    for (Eigen::Index i = 0; i < values.size(); ++i) values[i] = profile(grid->centers()[i]);
    return RadialField(std::move(grid), std::move(values));
  }

  static RadialField constant(GridPtr grid, Scalar c) {
    const auto N = grid->size();
    return RadialField(std::move(grid), VectorType::Constant(N, c));
  }

  const RadialGrid<Scalar>& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  const VectorType& values() const { return values_; }
  Scalar operator[](Eigen::Index i) const { return values_[i]; }
  Eigen::Index size() const { return values_.size(); }

  bool finite() const { return values_.allFinite(); }

 private:
  GridPtr grid_;
  VectorType values_;
};

using Grid = RadialGrid<double>;
using GridPtr = std::shared_ptr<const Grid>;
using Field = RadialField<double>;

inline GridPtr build_grid(int n, double R, int N, double grading = 1.0) { return Grid::build(n, R, N, grading); }

/// Grading g >= 1 whose innermost cell has width h0, i.e. h0 (g^N - 1) / (g - 1) = R.
inline double grading_for_first_width(double R, int N, double h0) {
  if (!(h0 > 0 && h0 <= R / N)) throw std::invalid_argument("grading_for_first_width: need 0 < h0 <= R/N");
  auto width = [&](double g) { return g == 1.0 ? R / N : R * (g - 1) / std::expm1(N * std::log(g)); };
  double lo = 1.0, hi = 2.0;
  while (width(hi) > h0) hi *= 2;
  for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (width(mid) > h0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// omega_n sum_i w_i f_i.
template <typename Scalar, typename Derived>
Scalar integrate(const RadialGrid<Scalar>& grid, const Eigen::MatrixBase<Derived>& values) {
  return grid.omega() * grid.weights().dot(values.derived());
}

template <typename Scalar>
Scalar integrate(const RadialField<Scalar>& f) {
  return integrate(f.grid(), f.values());
}

/// Integral over B_{r0}; the cell containing r0 contributes its clipped weight.
template <typename Scalar, typename Derived>
Scalar integrate_ball(const RadialGrid<Scalar>& grid, const Eigen::MatrixBase<Derived>& values, Scalar r0) {
  const auto& e = grid.edges();
  const int n = grid.dimension();
  Scalar sum = 0;
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    if (e[i + 1] <= r0) {
      sum += grid.weights()[i] * values.derived()[i];
    } else {
      if (e[i] < r0) sum += power_difference(r0, e[i], n) / Scalar(n) * values.derived()[i];
      break;
    }
  }
  return grid.omega() * sum;
}

/// Cell-centered derivative, exact for quadratics at interior cells. With
/// Boundary::neumann the end cells use the even extension about r = 0 and about
/// r = R (f'(0) = f'(R) = 0); with Boundary::none they use one-sided stencils.
template <typename Scalar, typename Derived>
Vector<Scalar> radial_derivative(const RadialGrid<Scalar>& grid, const Eigen::MatrixBase<Derived>& values,
                                 Boundary bc = Boundary::neumann) {
  const auto& f = values.derived();
  const auto& r = grid.centers();
  const Eigen::Index N = grid.size();
  Vector<Scalar> d(N);
  for (Eigen::Index i = 1; i + 1 < N; ++i) {
    const Scalar hm = r[i] - r[i - 1];
    const Scalar hp = r[i + 1] - r[i];
    d[i] = (hm * hm * (f[i + 1] - f[i]) + hp * hp * (f[i] - f[i - 1])) / (hm * hp * (hm + hp));
  }
  // Derivative at x0 of the parabola through (x0,f0), (x1,f1), (x2,f2).
  auto one_sided = [](Scalar x0, Scalar x1, Scalar x2, Scalar f0, Scalar f1, Scalar f2) {
    const Scalar a = x1 - x0;
    const Scalar b = x2 - x0;
    return (b * b * (f1 - f0) - a * a * (f2 - f0)) / (a * b * (b - a));
  };
  const Scalar R = grid.radius();
  if (bc == Boundary::neumann) {
    d[0] = 2 * r[0] * (f[1] - f[0]) / (r[1] * r[1] - r[0] * r[0]);
    const Scalar sN = r[N - 1] - R;
    const Scalar sM = r[N - 2] - R;
    d[N - 1] = 2 * sN * (f[N - 1] - f[N - 2]) / (sN * sN - sM * sM);
  } else {
    d[0] = one_sided(r[0], r[1], r[2], f[0], f[1], f[2]);
    d[N - 1] = one_sided(r[N - 1], r[N - 2], r[N - 3], f[N - 1], f[N - 2], f[N - 3]);
  }
  return d;
}

template <typename Scalar>
RadialField<Scalar> radial_derivative(const RadialField<Scalar>& f, Boundary bc = Boundary::neumann) {
  return RadialField<Scalar>(f.grid_ptr(), radial_derivative(f.grid(), f.values(), bc));
}

/// Conservative r^{1-n} (r^{n-1} f_r)_r with zero flux at r = 0 and r = R.
template <typename Scalar, typename Derived>
Vector<Scalar> laplacian_radial(const RadialGrid<Scalar>& grid, const Eigen::MatrixBase<Derived>& values) {
  const auto& f = values.derived();
  const auto& c = grid.conductances();
  const auto& w = grid.weights();
  const Eigen::Index N = grid.size();
  Vector<Scalar> lap(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const Scalar right = i + 1 < N ? c[i + 1] * (f[i + 1] - f[i]) : Scalar(0);
    const Scalar left = i > 0 ? c[i] * (f[i] - f[i - 1]) : Scalar(0);
    lap[i] = (right - left) / w[i];
  }
  return lap;
}

template <typename Scalar>
RadialField<Scalar> laplacian_radial(const RadialField<Scalar>& f) {
  return RadialField<Scalar>(f.grid_ptr(), laplacian_radial(f.grid(), f.values()));
}

}  // namespace kslab

#endif  // KSLAB_RADIAL_CORE_HPP
