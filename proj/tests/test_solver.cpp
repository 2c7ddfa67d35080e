#include "kslab/initial_data.hpp"
#include "kslab/solver.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace kslab;

namespace {

State constant_state(const GridPtr& g, double cu, double cv) {
  State s;
  s.grid = g;
  s.u = Eigen::VectorXd::Constant(g->size(), cu);
  s.v = Eigen::VectorXd::Constant(g->size(), cv);
  return s;
}

State perturbed_state(const GridPtr& g, double amp) {
  State s = constant_state(g, 1.0, 1.0);
  for (Eigen::Index i = 0; i < g->size(); ++i) s.v[i] += amp * std::cos(oracle::pi() * g->centers()[i]);
  return s;
}

// Stiffness matrix of the zero-flux radial Laplacian, assembled from edge conductances.
Eigen::MatrixXd stiffness(const Grid& g) {
  const auto N = g.size();
  const auto& c = g.conductances();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(N, N);
  for (Eigen::Index j = 1; j < N; ++j) {
    K(j - 1, j - 1) += c[j];
    K(j, j) += c[j];
    K(j - 1, j) -= c[j];
    K(j, j - 1) -= c[j];
  }
  return K;
}

std::vector<SeriesRecord> power_law_series(double T, int levels, double dt_floor) {
  std::vector<SeriesRecord> out;
  double prev = 0;
  for (int j = 0; j <= levels; ++j) {
    SeriesRecord r;
    r.t = T - T * std::pow(0.5, j);
    r.dt = j == 0 ? 0 : r.t - prev;
    r.sup_u = 1.0 / (T - r.t);
    r.mass_u = r.mass_v = 1;
    r.at_floor = j > 0 && r.dt < dt_floor;
    prev = r.t;
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("solver config validation") {
  SolverConfig c;
  CHECK_NOTHROW(c.validate());
  c.dt_min = 1.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.safety = 1.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.blowup_factor = 1.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.scheme = "rk4";
  CHECK_THROWS(c.validate());
}

TEST_CASE("constants are fixed points of a step") {
  const auto g = build_grid(3, 1.0, 64, 1.03);
  for (double c : {0.25, 1.0, std::exp(1.0), 10.0}) {
    const auto s = constant_state(g, c, c);
    const auto next = step(s, 1e-3);
    CHECK((next.u - s.u).cwiseAbs().maxCoeff() <= 1e-12 * c);
    CHECK((next.v - s.v).cwiseAbs().maxCoeff() <= 1e-12 * c);
    CHECK(next.t == doctest::Approx(1e-3));
  }
}

TEST_CASE("a step conserves mass to machine precision") {
  const auto g = build_grid(3, 1.0, 128, 1.02);
  State s = perturbed_state(g, 0.3);
  for (Eigen::Index i = 0; i < g->size(); ++i) s.u[i] = 1 + 0.5 * std::exp(-10 * g->centers()[i]);
  const double m0 = integrate(*g, s.u);
  for (int j = 0; j < 50; ++j) {
    const auto res = try_step(s, 1e-4);
    REQUIRE(res.ok);
    s = res.state;
    CHECK(std::abs(integrate(*g, s.u) - m0) <= 1e-12 * m0);
  }
}

TEST_CASE("implicit diffusion solves the weighted system") {
  const auto g = build_grid(3, 1.0, 64, 1.04);
  Eigen::VectorXd b(g->size());
  for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = std::sin(5 * g->centers()[i]) + 2;
  const double dt = 0.01, a = 0.01;
  const Eigen::VectorXd x = implicit_diffusion(*g, b, dt, a);
  const Eigen::MatrixXd A = Eigen::MatrixXd(g->weights().asDiagonal()) * (1 + a) + dt * stiffness(*g);
  const Eigen::VectorXd rhs = g->weights().cwiseProduct(b);
  CHECK((A * x - rhs).cwiseAbs().maxCoeff() <= 1e-13 * rhs.cwiseAbs().maxCoeff());
  const Eigen::VectorXd c = implicit_diffusion(*g, Eigen::VectorXd::Constant(g->size(), 3.0), dt, a);
  CHECK((c.array() - 3.0 / (1 + a)).abs().maxCoeff() < 1e-14);
}

TEST_CASE("v follows the discrete single-mode decay") {
  // u = eps, v = 1 + delta x1 with x1 the first non-constant eigenvector of K x = mu W x.
  // The constant part decays separately; x1 is W-orthogonal to it.
  const auto g = build_grid(3, 1.0, 64);
  const Eigen::MatrixXd K = stiffness(*g);
  const Eigen::MatrixXd W = g->weights().asDiagonal();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(K, W);
  const double mu = es.eigenvalues()[1];
  Eigen::VectorXd x1 = es.eigenvectors().col(1);
  x1 /= x1.cwiseAbs().maxCoeff();
  CHECK(mu == doctest::Approx(20.19).epsilon(1e-2));  // (4.4934)^2 for n = 3, R = 1

  const double eps = 1e-8, delta = 1e-3, dt = 1e-3;
  State s = constant_state(g, eps, 1.0);
  s.v += delta * x1;
  auto amplitude = [&](const State& st) { return st.v.dot(W * x1) / x1.dot(W * x1); };
  const double a0 = amplitude(s);
  for (int j = 0; j < 100; ++j) s = step(s, dt);
  const double a1 = amplitude(s);
  CHECK(a1 / a0 == doctest::Approx(std::pow(1 + dt * (1 + mu), -100)).epsilon(1e-6));
  // Backward Euler against the continuous rate: first-order agreement.
  CHECK(std::abs(std::log(a1 / a0) + (1 + mu) * 0.1) < 0.1 * dt * (1 + mu) * (1 + mu));
}

TEST_CASE("positivity bound governs the explicit flux") {
  const auto g = build_grid(3, 1.0, 128);
  State s = perturbed_state(g, 0.5);
  const double bound = positivity_bound(*g, s.u, s.v);
  CHECK(std::isfinite(bound));
  CHECK(bound > 0);
  const auto res = try_step(s, 0.9 * bound);
  CHECK(res.ok);
  CHECK(res.state.positive());
  CHECK(positivity_bound(*g, s.u, Eigen::VectorXd::Constant(g->size(), 2.0)) == std::numeric_limits<double>::infinity());
}

TEST_CASE("step reports divergence instead of clipping") {
  const auto g = build_grid(3, 1.0, 64);
  State s = perturbed_state(g, 0.5);
  s.u[3] = std::nan("");
  CHECK_THROWS_AS(step(s, 1e-3), DivergedError);
}

TEST_CASE("constant data reach t_end with constant F and zero D") {
  const auto g = build_grid(3, 1.0, 64);
  SolverConfig cfg;
  cfg.t_end = 1.0;
  cfg.dt_init = 1e-3;
  cfg.dt_max = 0.05;
  const auto tr = run(constant_state(g, 1.0, 1.0), cfg);
  CHECK(tr.verdict.outcome == BlowupVerdict::Outcome::reached_t_end);
  CHECK(tr.series.back().t == doctest::Approx(1.0).epsilon(1e-14));
  for (const auto& r : tr.series) {
    CHECK(r.F == doctest::Approx(tr.series.front().F).epsilon(1e-13));
    CHECK(r.D < 1e-20);
  }
  CHECK(tr.snapshots.size() >= 2);
}

TEST_CASE("perturbed constants decay with monotone energy") {
  const auto g = build_grid(3, 1.0, 256);
  SolverConfig cfg;
  cfg.t_end = 0.5;
  cfg.dt_init = 1e-4;
  cfg.dt_max = 1e-2;
  const auto s0 = perturbed_state(g, 0.1);
  const auto tr = run(s0, cfg);
  CHECK(tr.verdict.outcome == BlowupVerdict::Outcome::reached_t_end);
  const double m0 = tr.series.front().mass_u;
  const double cap = std::max(m0, tr.series.front().mass_v);
  for (std::size_t j = 1; j < tr.series.size(); ++j) {
    const auto& a = tr.series[j - 1];
    const auto& b = tr.series[j];
    CHECK(b.t > a.t);
    CHECK(std::abs(b.mass_u - m0) <= 1e-10 * m0);
    CHECK(b.mass_v <= cap * (1 + 1e-8));
    CHECK(b.F - a.F <= -a.D * (b.t - a.t) + energy_tolerance(b.t - a.t, a.F));
    CHECK(b.sup_u < 2.0);
  }
}

TEST_CASE("runs are bitwise deterministic") {
  const auto g = build_grid(3, 1.0, 128);
  SolverConfig cfg;
  cfg.t_end = 0.05;
  cfg.dt_init = 1e-4;
  const auto a = run(perturbed_state(g, 0.2), cfg);
  const auto b = run(perturbed_state(g, 0.2), cfg);
  REQUIRE(a.series.size() == b.series.size());
  for (std::size_t j = 0; j < a.series.size(); ++j) {
    CHECK(a.series[j].t == b.series[j].t);
    CHECK(a.series[j].F == b.series[j].F);
    CHECK(a.series[j].sup_u == b.series[j].sup_u);
  }
  CHECK(a.final_state().u == b.final_state().u);
}

TEST_CASE("max_steps yields an inconclusive verdict") {
  const auto g = build_grid(3, 1.0, 64);
  SolverConfig cfg;
  cfg.dt_init = 1e-5;
  cfg.max_steps = 10;
  const auto tr = run(perturbed_state(g, 0.1), cfg);
  CHECK(tr.verdict.outcome == BlowupVerdict::Outcome::inconclusive);
  CHECK(tr.series.size() == 11);
}

TEST_CASE("detect_blowup on manufactured power-law data") {
  const auto series = power_law_series(0.5, 24, 1e-5);
  const auto v = detect_blowup(series, 1e4, 1.0);
  CHECK(v.outcome == BlowupVerdict::Outcome::blew_up);
  CHECK(v.t_detect <= 0.5);
  REQUIRE(v.t_extrapolated);
  CHECK(*v.t_extrapolated == doctest::Approx(0.5).epsilon(0.05));
  REQUIRE(v.growth_exponent);
  CHECK(*v.growth_exponent == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("detect_blowup needs both growth and dt collapse") {
  auto series = power_law_series(0.5, 24, 0.0);  // no floor flags
  auto v = detect_blowup(series, 1e4, 1.0);
  CHECK(v.outcome == BlowupVerdict::Outcome::diverged_numerically);
  CHECK(v.trigger.find("without dt collapse") != std::string::npos);
  series = power_law_series(0.5, 24, 1e-5);
  v = detect_blowup(series, 1e9, 1.0);
  CHECK(v.outcome == BlowupVerdict::Outcome::diverged_numerically);
}

TEST_CASE("detect_blowup on constant and corrupted series") {
  std::vector<SeriesRecord> series(11);
  for (int j = 0; j <= 10; ++j) {
    series[j].t = 0.1 * j;
    series[j].dt = j ? 0.1 : 0;
    series[j].sup_u = series[j].mass_u = series[j].mass_v = 1;
  }
  CHECK(detect_blowup(series, 1e4, 1.0).outcome == BlowupVerdict::Outcome::reached_t_end);
  series[4].mass_u = std::nan("");
  CHECK(detect_blowup(series, 1e4, 1.0).outcome == BlowupVerdict::Outcome::diverged_numerically);
}

TEST_CASE("power-law fit recovers T and gamma") {
  std::vector<double> t, s;
  for (int j = 0; j < 30; ++j) {
    t.push_back(0.3 - 0.3 * std::pow(0.7, j));
    s.push_back(5.0 * std::pow(0.3 - t.back(), -1.5));
  }
  const auto fit = fit_power_law(t, s);
  REQUIRE(fit.ok);
  CHECK(fit.T == doctest::Approx(0.3).epsilon(1e-3));
  CHECK(fit.gamma == doctest::Approx(1.5).epsilon(1e-2));
}

TEST_CASE("outcome names round-trip") {
  using O = BlowupVerdict::Outcome;
  for (auto o : {O::blew_up, O::reached_t_end, O::diverged_numerically, O::inconclusive})
    CHECK(outcome_from_string(to_string(o)) == o);
  CHECK_THROWS(outcome_from_string("exploded"));
}

TEST_CASE("a concentrated low-energy datum blows up and a mild one does not") {
  const auto one = constant_profile(1.0);
  const auto recipe = make_recipe(3, 1.0, one, one, ball_volume(3, 1.0), 1.1, std::nullopt, RadiusRule{1.0, 0.9999});
  const int N = 1024;
  const auto grid = build_grid(3, 1.0, N, grading_for_first_width(1.0, N, 1e-12));
  SolverConfig cfg;
  cfg.dt_init = 1e-6;
  cfg.dt_min = 1e-12;
  cfg.dt_max = 1e-3;
  cfg.t_end = 1.0;
  const auto hot = run(*lemma14_pair(recipe, 12, grid).state, cfg);
  CHECK(hot.verdict.outcome == BlowupVerdict::Outcome::blew_up);
  CHECK(hot.verdict.t_detect < 1e-6);
  const auto mild = run(*lemma14_pair(recipe, 1, grid).state, cfg);
  CHECK(mild.verdict.outcome == BlowupVerdict::Outcome::reached_t_end);
}
