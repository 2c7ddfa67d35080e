#include "kslab/functionals.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace kslab;

namespace {

State make_state(const GridPtr& g, auto&& u, auto&& v) {
  State s;
  s.grid = g;
  s.u.resize(g->size());
  s.v.resize(g->size());
  for (Eigen::Index i = 0; i < g->size(); ++i) {
    s.u[i] = u(g->centers()[i]);
    s.v[i] = v(g->centers()[i]);
  }
  return s;
}

double interior_max(const Grid& g, const Eigen::VectorXd& got, auto&& exact, int skip_lo, int skip_hi) {
  double e = 0;
  for (Eigen::Index i = skip_lo; i + skip_hi < g.size(); ++i)
    e = std::max(e, std::abs(got[i] - exact(g.centers()[i])));
  return e;
}

}  // namespace

TEST_CASE("energy of (1,1) on the unit ball in R^3") {
  const auto g = build_grid(3, 1.0, 64);
  const auto s = make_state(g, [](double) { return 1.0; }, [](double) { return 1.0; });
  CHECK(energy(s) == doctest::Approx(-2 * oracle::pi() / 3).epsilon(1e-13));
}

TEST_CASE("energy of constants matches |Omega|(c ln c - c^2/2)") {
  const auto g = build_grid(3, 1.0, 64, 1.02);
  for (double c : {0.25, 1.0, std::exp(1.0), 10.0}) {
    const auto s = make_state(g, [c](double) { return c; }, [c](double) { return c; });
    const double vol = oracle::ball_volume(3, 1.0);
    CHECK(energy(s) == doctest::Approx(vol * (c * std::log(c) - 0.5 * c * c)).epsilon(1e-10));
    CHECK(dissipation(s) == 0.0);
    CHECK(residual_f(s).cwiseAbs().maxCoeff() == 0.0);
    CHECK(residual_g(s).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("energy report bookkeeping is exact") {
  const auto g = build_grid(3, 1.0, 128, 1.01);
  const auto s = make_state(g, [](double r) { return 1.5 + std::cos(3 * r); }, [](double r) { return 2 + r * r; });
  const auto rep = energy_report(s);
  CHECK(rep.F == 0.5 * rep.grad_v_sq + 0.5 * rep.v_sq - rep.uv + rep.entropy);
  CHECK(rep.D == rep.f_norm_sq + rep.g_norm_sq);
  CHECK(rep.D >= 0);
  CHECK(rep.entropy >= -oracle::ball_volume(3, 1.0) / std::exp(1.0));
}

TEST_CASE("energy rejects non-positive u") {
  const auto g = build_grid(3, 1.0, 32);
  auto s = make_state(g, [](double) { return 1.0; }, [](double) { return 1.0; });
  s.u[5] = 0.0;
  CHECK_THROWS_AS(energy(s), DomainError);
  CHECK_THROWS_AS(residual_g(s), DomainError);
  CHECK_THROWS_AS(dissipation(s), DomainError);
}

TEST_CASE("state validation rejects mismatched sizes") {
  const auto g = build_grid(3, 1.0, 32);
  State s;
  s.grid = g;
  s.u = Eigen::VectorXd::Ones(32);
  s.v = Eigen::VectorXd::Ones(31);
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("residual f for v = r^2 and u = eps") {
  const auto g = build_grid(3, 1.0, 128);
  const double eps = 1e-3;
  const auto s = make_state(g, [eps](double) { return eps; }, [](double r) { return r * r; });
  const auto f = residual_f(s);
  CHECK(interior_max(*g, f, [eps](double r) { return -6 + r * r - eps; }, 0, 2) < 1e-10);
}

TEST_CASE("residual f converges at second order on a manufactured pair") {
  const double pi = oracle::pi();
  auto v = [pi](double r) { return 2 + std::cos(pi * r); };
  auto u = [](double r) { return 1 + r * r; };
  auto exact = [&](double r) {
    const double lap = -pi * pi * std::cos(pi * r) - 2 * pi * std::sin(pi * r) / r;
    return -lap + v(r) - u(r);
  };
  std::vector<double> err;
  for (int N : {64, 128, 256}) {
    const auto g = build_grid(3, 1.0, N);
    err.push_back(interior_max(*g, residual_f(make_state(g, u, v)), exact, 0, 0));
  }
  CHECK(std::log2(err[0] / err[1]) > 1.9);
  CHECK(std::log2(err[1] / err[2]) > 1.9);
}

TEST_CASE("residual g for constant u is -sqrt(c) v_r") {
  const auto g = build_grid(3, 1.0, 256);
  const double c = 2.5;
  const double pi = oracle::pi();
  const auto s = make_state(g, [c](double) { return c; }, [pi](double r) { return 2 + std::cos(pi * r); });
  const auto gr = residual_g(s);
  const auto vr = radial_derivative(*g, s.v, Boundary::neumann);
  for (Eigen::Index i = 0; i < g->size(); ++i) CHECK(gr[i] == doctest::Approx(-std::sqrt(c) * vr[i]).epsilon(1e-14));
  CHECK(interior_max(*g, gr, [&](double r) { return std::sqrt(c) * pi * std::sin(pi * r); }, 1, 1) < 1e-3);
}

TEST_CASE("residual g vanishes on u = e^v") {
  const double pi = oracle::pi();
  std::vector<double> err;
  for (int N : {64, 128, 256}) {
    const auto g = build_grid(3, 1.0, N);
    auto v = [pi](double r) { return 1 + 0.5 * std::cos(pi * r); };
    const auto s = make_state(g, [&](double r) { return std::exp(v(r)); }, v);
    err.push_back(residual_g(s).cwiseAbs().maxCoeff());
  }
  CHECK(err[2] < 1e-4);
  CHECK(std::log2(err[0] / err[1]) > 1.8);
  CHECK(std::log2(err[1] / err[2]) > 1.8);
}

TEST_CASE("dissipation on a perturbed constant matches a Gauss-Kronrod oracle") {
  // u = c, v = c + d cos(pi r): f = d (pi^2 cos + 2 pi sin / r) + d cos, g = -sqrt(c) v_r.
  const double pi = oracle::pi(), c = 1.0, d = 1e-2;
  auto fr = [&](double r) { return d * (pi * pi * std::cos(pi * r) + 2 * pi * std::sin(pi * r) / r + std::cos(pi * r)); };
  auto vr = [&](double r) { return -d * pi * std::sin(pi * r); };
  const double ref = 4 * pi * oracle::gk([&](double r) { return r * r * (fr(r) * fr(r) + c * vr(r) * vr(r)); }, 0.0, 1.0);
  std::vector<double> err;
  for (int N : {256, 512, 1024}) {
    const auto g = build_grid(3, 1.0, N);
    const auto s = make_state(g, [c](double) { return c; }, [&](double r) { return c + d * std::cos(pi * r); });
    err.push_back(std::abs(dissipation(s) - ref) / ref);
  }
  CHECK(err[2] < 1e-5);
  CHECK(std::log2(err[0] / err[1]) > 1.8);
  CHECK(std::log2(err[1] / err[2]) > 1.8);
  // Second-order Richardson extrapolation reaches the oracle to 1e-8.
  const double rich = (4 * err[2] - err[1]) / 3;
  CHECK(std::abs(rich) < 1e-8);
}

TEST_CASE("dissipation of u = e^v reduces to |f|^2") {
  const auto g = build_grid(3, 1.0, 512);
  const double pi = oracle::pi();
  auto v = [pi](double r) { return 1 + 0.5 * std::cos(pi * r); };
  const auto s = make_state(g, [&](double r) { return std::exp(v(r)); }, v);
  const auto rep = energy_report(s);
  CHECK(rep.g_norm_sq < 1e-6 * rep.f_norm_sq);
}

TEST_CASE("norms of simple fields") {
  const auto g = build_grid(3, 1.0, 1024);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(g->size());
  CHECK(norm(*g, one, NormKind::Lp(1)) == doctest::Approx(4 * oracle::pi() / 3).epsilon(1e-13));
  CHECK(norm(*g, one, NormKind::W12()) == doctest::Approx(std::sqrt(4 * oracle::pi() / 3)).epsilon(1e-13));
  CHECK(norm(*g, one, NormKind::sup()) == 1.0);
  CHECK(norm(*g, g->centers(), NormKind::Lp(2)) == doctest::Approx(std::sqrt(4 * oracle::pi() / 5)).epsilon(1e-6));
  CHECK_THROWS(norm(*g, one, NormKind::Lp(0.5)));
}

TEST_CASE("theta exponent values and properties") {
  CHECK(theta_exponent(3, 2.0) == doctest::Approx(20.0 / 23.0).epsilon(1e-15));
  CHECK(theta_exponent(4, 3.0) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(2 * theta_exponent(4, 3.0) > 1.5);
  CHECK_THROWS_AS(theta_exponent(3, 1.0), DomainError);
  CHECK_THROWS_AS(theta_exponent(2, 1.0), DomainError);
  std::mt19937 rng(3);
  for (int n = 3; n <= 8; ++n) {
    double prev = 0.5;
    for (double kappa = n - 2 + 1e-3; kappa < 50; kappa *= 1.3) {
      const double th = theta_exponent(n, kappa);
      CHECK(th > prev);
      CHECK(th < 1.0);
      CHECK(2 * th > (2.0 * n + 4) / (n + 4));
      prev = th;
    }
  }
}

TEST_CASE("parameter windows") {
  const auto w = param_window(3, 1.1, 2.0);
  CHECK(w.alpha_lo == doctest::Approx(3 - 3 / 1.1).epsilon(1e-15));
  CHECK(w.alpha_hi == 0.5);
  CHECK(w.alpha == doctest::Approx(0.386364).epsilon(1e-6));
  CHECK(w.theta == doctest::Approx(20.0 / 23.0));
  CHECK_THROWS_AS(param_window(3, 1.2, 2.0), WindowError);
  CHECK_THROWS_AS(param_window(3, 1.1, 1.0), DomainError);
  CHECK_THROWS_AS(param_window(3, 1.1, 2.0, 0.6), WindowError);
  const auto w5 = param_window(5, 1.3, 3.5);
  CHECK(w5.alpha_lo == doctest::Approx(5 - 5 / 1.3).epsilon(1e-14));
  CHECK(w5.alpha_hi == 1.5);
}
