// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "neuropmd/baselines.hpp"
#include "neuropmd/error.hpp"
#include "oracles.hpp"

using namespace neuropmd;

namespace {

PointSet random_angles(int D, Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  PointSet p(D, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (int d = 0; d < D; ++d) p(d, j) = u(rng);
  return p;
}

PointSet von_mises_like(Eigen::Index n, double sd, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.5, sd);
  PointSet p(1, n);
  for (Eigen::Index j = 0; j < n; ++j) p(0, j) = wrap_angle(g(rng));
  return p;
}

}  // namespace

TEST_CASE("bessel I0 against the standard library") {
  for (double x : {0.0, 1e-3, 0.5, 1.0, 5.0, 12.0, 19.9, 20.0, 20.1, 35.0, 80.0, 300.0}) {
    const double ref = std::cyl_bessel_i(0.0, x);
    CHECK(std::abs(bessel_i0(x) - ref) <= 1e-12 * ref);
    CHECK(std::abs(bessel_i0_scaled(x) - ref * std::exp(-x)) <= 1e-12 * ref * std::exp(-x));
  }
  CHECK(std::isfinite(bessel_i0_scaled(1e5)));
  CHECK(bessel_i0_scaled(1e5) == doctest::Approx(1.0 / std::sqrt(kTwoPi * 1e5)).epsilon(1e-5));
}

TEST_CASE("kde at zero concentration is uniform") {
  const VonMisesKde kde(random_angles(2, 50, 1), 0.0);
  const PointSet q = random_angles(2, 20, 2);
  const Eigen::RowVectorXd v = kde.density(q);
  for (Eigen::Index j = 0; j < v.size(); ++j) CHECK(v(j) == doctest::Approx(1.0 / (kTwoPi * kTwoPi)).epsilon(1e-14));
}

TEST_CASE("kde with one point evaluated at that point") {
  PointSet x(1, 1);
  x(0, 0) = 0.7;
  for (double kappa : {0.5, 3.0, 25.0, 100.0}) {
    const VonMisesKde kde(x, kappa);
    const double ref = std::exp(kappa) / (kTwoPi * std::cyl_bessel_i(0.0, kappa));
    CHECK(kde.density(Eigen::VectorXd(Eigen::VectorXd::Constant(1, 0.7))) == doctest::Approx(ref).epsilon(1e-12));
  }
  // Frozen reference for kappa = 3.
  CHECK(VonMisesKde(x, 3.0).density(Eigen::VectorXd(Eigen::VectorXd::Constant(1, 0.7))) ==
        doctest::Approx(0.654957658974877672).epsilon(1e-13));
}

TEST_CASE("kde integrates to one") {
  const ProductManifold t1 = ProductManifold::torus(1);
  const Quadrature q = torus_grid(t1, {4096});
  for (double kappa : {0.0, 1.0, 10.0, 200.0}) {
    const VonMisesKde kde(random_angles(1, 100, 3), kappa);
    CHECK(std::abs(integrate(kde.handle(), q) - 1.0) < 1e-8);
    CHECK(kde.density(q.nodes).minCoeff() >= 0.0);
  }
  const Quadrature q2 = torus_grid(ProductManifold::torus(2), {256});
  const VonMisesKde kde2(random_angles(2, 100, 4), 20.0);
  CHECK(std::abs(integrate(kde2.handle(), q2) - 1.0) < 1e-6);
}

TEST_CASE("kde rejects bad inputs") {
  CHECK_THROWS_AS(VonMisesKde(random_angles(1, 5, 1), -1.0), ConfigError);
  CHECK_THROWS_AS(VonMisesKde(random_angles(1, 5, 1), std::nan("")), ConfigError);
  CHECK_THROWS_AS(VonMisesKde(PointSet(1, 0), 1.0), ConfigError);
}

TEST_CASE("kde kappa selection") {
  const Integrator integ = Integrator::parse("grid:512");
  const PointSet data = von_mises_like(400, 0.15, 9);

  SUBCASE("single-element grid") {
    CHECK(kde_select_kappa(data, {7.5}, 5, 1, integ).kappa == 7.5);
  }
  SUBCASE("deterministic") {
    const auto a = kde_select_kappa(data, {1, 10, 50, 200}, 5, 3, integ);
    const auto b = kde_select_kappa(data, {1, 10, 50, 200}, 5, 3, integ);
    CHECK(a.kappa == b.kappa);
    CHECK(a.scores == b.scores);
  }
  SUBCASE("selected kappa beats the worse endpoint") {
    const std::vector<double> grid{0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0};
    const PointSet pts = von_mises_like(400, 0.3, 10);
    const auto sel = kde_select_kappa(pts, grid, 5, 11, integ);
    REQUIRE(sel.scores.size() == grid.size());
    DensityHandle truth{ProductManifold::torus(1), [](const PointSet& p) {
                          Eigen::RowVectorXd out(p.cols());
                          const double s2 = 0.3 * 0.3;
                          for (Eigen::Index j = 0; j < p.cols(); ++j) {
                            double v = 0.0;
                            for (int k = -3; k <= 3; ++k) {
                              const double d = p(0, j) - 0.5 + kTwoPi * k;
                              v += std::exp(-d * d / (2 * s2));
                            }
                            out(j) = v / std::sqrt(kTwoPi * s2);
                          }
                          return out;
                        }};
    const Integrator fine = Integrator::parse("grid:8192");
    const double chosen = nise(truth, VonMisesKde(pts, sel.kappa).handle(), fine);
    const double lo = nise(truth, VonMisesKde(pts, grid.front()).handle(), fine);
    const double hi = nise(truth, VonMisesKde(pts, grid.back()).handle(), fine);
    CHECK(chosen <= std::max(lo, hi));
    CHECK(chosen <= std::min(lo, hi));
  }
  SUBCASE("bad folds") {
    CHECK_THROWS_AS(kde_select_kappa(data, {1.0}, 1, 0, integ), ConfigError);
    CHECK_THROWS_AS(kde_select_kappa(data, {}, 5, 0, integ), ConfigError);
  }
}

TEST_CASE("tpb penalty weights and sizes") {
  const ProductManifold t2 = ProductManifold::torus(2);
  const std::vector<int> mf{10, 10};
  const NeuralField f = tpb_field(t2, mf, 1);
  CHECK(f.encoding().size() == 441);
  CHECK(f.parameter_count() == 441);
  CHECK(f.config().depth() == 1);

  const Eigen::VectorXd F = tpb_penalty_weights(f.encoding(), 2);
  const Eigen::VectorXd F1 = tpb_penalty_weights(f.encoding(), 1);
  const Eigen::MatrixXd x = random_angles(2, 1, 5);
  const EncodingJets jets = f.encoding().encode_jets(x);
  for (Eigen::Index k = 0; k < F.size(); ++k) {
    // Eigenfunctions: the Laplacian of entry k is -F1(k) times the entry.
    const double lap = jets.d2[0](k, 0) + jets.d2[1](k, 0);
    CHECK(lap == doctest::Approx(-F1(k) * jets.value(k, 0)).epsilon(1e-10).scale(1.0));
    CHECK(F(k) == doctest::Approx(F1(k) * F1(k)));
  }
  CHECK(F.minCoeff() == 0.0);
  CHECK(F.maxCoeff() == doctest::Approx(200.0 * 200.0));
  CHECK_THROWS_AS(tpb_penalty_weights(f.encoding(), 3), ConfigError);
}

TEST_CASE("tpb density equals the depth-one field density") {
  const ProductManifold t2 = ProductManifold::torus(2);
  const std::vector<int> mf{3, 4};
  TpbModel m;
  m.field = tpb_field(t2, mf, 7);
  m.params = m.field.initial_params();
  const Eigen::VectorXd theta = m.params.flatten();
  const PointSet x = random_angles(2, 30, 8);
  const Eigen::MatrixXd feats = m.field.encoding().encode_batch(x);
  const Eigen::RowVectorXd direct = (theta.transpose() * feats).array().exp();
  const Eigen::RowVectorXd viaf = m.handle()(x);
  for (Eigen::Index j = 0; j < x.cols(); ++j) CHECK(std::abs(direct(j) - viaf(j)) <= 1e-12 * direct(j));
}

TEST_CASE("tpb quadratic penalty gradient") {
  const ProductManifold t1 = ProductManifold::torus(1);
  const NeuralField f = tpb_field(t1, {4}, 3);
  const Eigen::VectorXd F = tpb_penalty_weights(f.encoding(), 2);
  const Eigen::VectorXd theta = f.initial_params().flatten();
  const double tau = 0.3;
  const auto pen = [&](const Eigen::VectorXd& t) { return tau * t.dot(F.cwiseProduct(t)); };
  const Eigen::VectorXd analytic = quadratic_penalty_gradient(F, theta, tau);
  CHECK(oracle::rel_err(analytic, oracle::fd_gradient(pen, theta, 1e-4)) < 1e-6);
}

TEST_CASE("tpb fitting") {
  const ProductManifold t1 = ProductManifold::torus(1);
  const PointSet data = von_mises_like(500, 0.4, 21);
  TrainConfig cfg;
  cfg.batch_size = 0;
  cfg.q1 = 512;
  cfg.q2 = 512;
  cfg.schedule = LearningRateSchedule::fixed(0.1);
  cfg.seed = 4;

  SUBCASE("huge tau gives uniform") {
    cfg.tau = 1e6;
    cfg.epochs = 300;
    const TpbModel m = tpb_fit(data, t1, {3}, cfg, 5);
    const Eigen::VectorXd c = m.coefficients();
    const NeuralField& f = m.field;
    const Eigen::VectorXd F = tpb_penalty_weights(f.encoding(), 2);
    for (Eigen::Index k = 0; k < c.size(); ++k)
      if (F(k) > 0) CHECK(std::abs(c(k)) < 1e-3);
    CHECK(nise(uniform_density(t1), m.handle(), Integrator::parse("grid:4096")) <= 0.05);
  }
  SUBCASE("two initializations reach the same objective") {
    cfg.tau = 1e-3;
    cfg.epochs = 600;
    const TpbModel a = tpb_fit(data, t1, {3}, cfg, 100);
    const TpbModel b = tpb_fit(data, t1, {3}, cfg, 200);
    CHECK(a.coefficients() != b.coefficients());
    const Quadrature q = torus_grid(t1, {4096});
    auto objective = [&](const TpbModel& m) {
      const double data_term = m.log_density(data).mean();
      const double norm = integrate(m.handle(), q);
      const Eigen::VectorXd c = m.coefficients();
      return data_term - norm - cfg.tau * c.dot(m.penalty_weights.cwiseProduct(c));
    };
    const double oa = objective(a), ob = objective(b);
    CHECK(std::abs(oa - ob) <= 1e-2 * std::abs(oa));
  }
  SUBCASE("history and determinism") {
    cfg.tau = 1e-2;
    cfg.epochs = 20;
    std::vector<HistoryRow> h1, h2;
    const TpbModel a = tpb_fit(data, t1, {3}, cfg, 1, 2, &h1);
    const TpbModel b = tpb_fit(data, t1, {3}, cfg, 1, 2, &h2);
    CHECK(h1.size() == 20);
    CHECK(a.coefficients() == b.coefficients());
  }
  SUBCASE("size guard") {
    CHECK_THROWS_AS(tpb_field(ProductManifold::torus(4), {40, 40, 40, 40}, 1), ConfigError);
  }
}
