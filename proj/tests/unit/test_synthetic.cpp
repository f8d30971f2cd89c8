// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include "neuropmd/error.hpp"
#include "neuropmd/metrics.hpp"
#include "neuropmd/synthetic.hpp"

using namespace neuropmd;

namespace {

WrappedNormalMixture single(double mean, double var, int window = 3) {
  MixtureComponent c{Eigen::VectorXd::Constant(1, mean), Eigen::MatrixXd::Constant(1, 1, var), 1.0};
  return WrappedNormalMixture({c}, window);
}

}  // namespace

TEST_CASE("covariance construction") {
  Rng rng(3);
  SUBCASE("unit factor gives the identity") {
    for (int D : {1, 2, 4}) {
      const Eigen::MatrixXd C = make_covariance(D, 1.0, rng);
      CHECK((C - Eigen::MatrixXd::Identity(D, D)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("max entry and condition number") {
    for (double factor : {2.0, 20.0, 100.0, 1e4}) {
      for (int D : {2, 3, 4}) {
        const Eigen::MatrixXd C = make_covariance(D, factor, rng);
        CHECK(C.cwiseAbs().maxCoeff() == 1.0);
        CHECK((C - C.transpose()).cwiseAbs().maxCoeff() < 1e-14);
        const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(C).eigenvalues();
        CHECK(ev.minCoeff() > 0.0);
        CHECK(std::abs(ev.maxCoeff() / ev.minCoeff() - factor) <= 1e-9 * factor);
      }
    }
  }
  SUBCASE("log-spaced spectrum") {
    const Eigen::MatrixXd C = make_covariance(3, 100.0, rng);
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(C).eigenvalues();
    CHECK(ev(1) / ev(0) == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(ev(2) / ev(1) == doctest::Approx(10.0).epsilon(1e-9));
  }
  SUBCASE("factor below one") { CHECK_THROWS_AS(make_covariance(2, 0.5, rng), ConfigError); }
  SUBCASE("deterministic") {
    Rng a(11), b(11);
    CHECK(make_covariance(4, 50.0, a) == make_covariance(4, 50.0, b));
  }
}

TEST_CASE("wrapped normal density") {
  const WrappedNormalMixture m = single(0.0, 0.01);
  CHECK(m.density(Eigen::VectorXd(Eigen::VectorXd::Zero(1))) == doctest::Approx(1.0 / std::sqrt(2 * kPi * 0.01)).epsilon(1e-14));
  CHECK(m.density(Eigen::VectorXd(Eigen::VectorXd::Zero(1))) == doctest::Approx(3.98942280401433).epsilon(1e-12));

  const Quadrature q = torus_grid(ProductManifold::torus(1), {4096});
  for (double var : {0.01, 0.1, 1.0}) {
    const WrappedNormalMixture w = single(0.3, var);
    CHECK(std::abs(w.density(q.nodes).dot(q.weights) - 1.0) < 1e-8);
  }

  Rng rng(5);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  const WrappedNormalMixture sym = single(0.0, 0.4);
  for (int i = 0; i < 20; ++i) {
    const double x = u(rng);
    CHECK(sym.density(Eigen::VectorXd(Eigen::VectorXd::Constant(1, x))) ==
          doctest::Approx(sym.density(Eigen::VectorXd(Eigen::VectorXd::Constant(1, -x)))).epsilon(1e-14));
  }
}

TEST_CASE("wrap window three is enough") {
  Rng rng(8);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<MixtureComponent> comps;
    for (int c = 0; c < 2; ++c) {
      Eigen::VectorXd mu(2);
      mu << u(rng), u(rng);
      comps.push_back({mu, make_covariance(2, 1.0 + 50.0 * trial, rng), 0.5});
    }
    const WrappedNormalMixture w3(comps, 3), w5(comps, 5);
    for (int i = 0; i < 50; ++i) {
      Eigen::VectorXd x(2);
      x << u(rng), u(rng);
      CHECK(std::abs(w3.density(x) - w5.density(x)) < 1e-12);
    }
  }
}

TEST_CASE("mixture validation") {
  MixtureComponent c{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2), 0.5};
  CHECK_THROWS_AS(WrappedNormalMixture({c}, 3), ConfigError);
  c.weight = 1.0;
  CHECK_THROWS_AS(WrappedNormalMixture({c}, 0), ConfigError);
  MixtureComponent bad = c;
  bad.covariance(0, 0) = -1.0;
  CHECK_THROWS_AS(WrappedNormalMixture({bad}, 3), ConfigError);
  MixtureComponent wrapped = c;
  wrapped.mean(0) = 3 * kPi / 2;
  const WrappedNormalMixture m({wrapped}, 3);
  CHECK(m.components()[0].mean(0) == doctest::Approx(-kPi / 2));
}

TEST_CASE("sampling") {
  SUBCASE("range and determinism") {
    Rng r1(2), r2(2), pr(1);
    const WrappedNormalMixture mix = mixture_preset("t2_paper", pr);
    const PointSet a = mix.sample(5000, r1);
    const PointSet b = mix.sample(5000, r2);
    CHECK(a == b);
    CHECK(a.minCoeff() >= -kPi);
    CHECK(a.maxCoeff() < kPi);
  }
  SUBCASE("concentration") {
    const double eps = 1e-6;
    MixtureComponent c{Eigen::Vector2d(1.0, -2.0), eps * Eigen::MatrixXd::Identity(2, 2), 1.0};
    const WrappedNormalMixture m({c}, 3);
    Rng rng(4);
    const PointSet s = m.sample(1000, rng);
    for (Eigen::Index j = 0; j < s.cols(); ++j) CHECK((s.col(j) - c.mean).norm() < 5 * std::sqrt(eps) * 2);
  }
  SUBCASE("preset means") {
    Rng pr(7);
    const WrappedNormalMixture mix = mixture_preset("t2_paper", pr);
    REQUIRE(mix.components().size() == 3);
    Rng rng(9);
    const std::size_t n = 100000;
    const PointSet s = mix.sample(n, rng);
    // Circular means of the samples within a small ball around each mode.
    const int C = 3;
    std::vector<Eigen::Vector2d> sum_cos(C, Eigen::Vector2d::Zero()), sum_sin(C, Eigen::Vector2d::Zero());
    std::vector<double> count(C, 0.0);
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      int best = 0;
      double bd = 1e300;
      for (int c = 0; c < C; ++c) {
        double d = 0.0;
        for (int k = 0; k < 2; ++k) {
          const double diff = wrap_angle(s(k, j) - mix.components()[c].mean(k));
          d += diff * diff;
        }
        if (d < bd) bd = d, best = c;
      }
      if (bd > 0.25) continue;
      count[best] += 1.0;
      for (int k = 0; k < 2; ++k) {
        sum_cos[best](k) += std::cos(s(k, j));
        sum_sin[best](k) += std::sin(s(k, j));
      }
    }
    const std::vector<Eigen::Vector2d> expected{Eigen::Vector2d(kPi, kPi / 2), Eigen::Vector2d(kPi, 5 * kPi / 3),
                                                 Eigen::Vector2d(kPi / 4, kPi)};
    for (int c = 0; c < C; ++c) {
      CHECK(count[c] > 1000);
      for (int k = 0; k < 2; ++k) {
        const double circ = std::atan2(sum_sin[c](k), sum_cos[c](k));
        CHECK(std::abs(wrap_angle(circ - expected[c](k))) < 0.02);
      }
    }
  }
  SUBCASE("histogram matches the density") {
    Rng pr(1), rng(2);
    const WrappedNormalMixture mix = mixture_preset("t2_paper", pr);
    const int res = 64;
    const PointSet s = mix.sample(1000000, rng);
    Eigen::MatrixXd hist = Eigen::MatrixXd::Zero(res, res);
    const double cell = 2 * kPi / res;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      const int a = std::min(res - 1, static_cast<int>((s(0, j) + kPi) / cell));
      const int b = std::min(res - 1, static_cast<int>((s(1, j) + kPi) / cell));
      hist(a, b) += 1.0;
    }
    hist /= static_cast<double>(s.cols());
    // Cell probabilities by a 4x4 midpoint rule inside each cell.
    double tv = 0.0;
    for (int a = 0; a < res; ++a)
      for (int b = 0; b < res; ++b) {
        double p = 0.0;
        for (int u = 0; u < 4; ++u)
          for (int v = 0; v < 4; ++v) {
            const Eigen::Vector2d x(-kPi + (a + (u + 0.5) / 4) * cell, -kPi + (b + (v + 0.5) / 4) * cell);
            p += mix.density(Eigen::VectorXd(x));
          }
        p *= cell * cell / 16;
        tv += std::abs(p - hist(a, b));
      }
    CHECK(0.5 * tv < 0.02);
  }
  SUBCASE("presets") {
    Rng pr(1);
    CHECK(mixture_preset("t4_paper", pr).components().size() == 5);
    CHECK(mixture_preset("t4_paper", pr).dim() == 4);
    CHECK_THROWS_AS(mixture_preset("t3", pr), ConfigError);
  }
}
