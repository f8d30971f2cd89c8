// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <memory>
#include <numbers>

#include "neuropmd/error.hpp"
#include "neuropmd/objective.hpp"
#include "neuropmd/synthetic.hpp"
#include "oracles.hpp"

using namespace neuropmd;

namespace {

DensityHandle wrapped_normal_t1(double mean, double var) {
  MixtureComponent c{Eigen::VectorXd::Constant(1, mean), Eigen::MatrixXd::Constant(1, 1, var), 1.0};
  auto mix = std::make_shared<WrappedNormalMixture>(std::vector<MixtureComponent>{c}, 5);
  return {ProductManifold::torus(1), [mix](const PointSet& p) { return mix->density(p); }};
}

DensityHandle scaled(const DensityHandle& f, double s) {
  return {f.manifold, [f, s](const PointSet& p) { return Eigen::RowVectorXd(s * f(p)); }};
}

DensityHandle box(const ProductManifold& m, double lo, double hi) {
  return {m, [lo, hi](const PointSet& p) {
            Eigen::RowVectorXd out(p.cols());
            for (Eigen::Index j = 0; j < p.cols(); ++j) out(j) = p(0, j) >= lo && p(0, j) < hi ? 1.0 / (hi - lo) : 0.0;
            return out;
          }};
}

PointSet random_angles(int D, Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  PointSet p(D, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (int d = 0; d < D; ++d) p(d, j) = u(rng);
  return p;
}

NeuralField small_t2_field(std::uint64_t seed) {
  const ProductManifold t2 = ProductManifold::torus(2);
  const Encoding enc = sample_encoding(t2, {12, {4, 4}, EncodingVariant::separable, seed});
  return NeuralField(enc, make_field_config(12, {8}, Activation::sine, seed + 1));
}

}  // namespace

TEST_CASE("integrator parsing") {
  const Integrator g = Integrator::parse("grid:256x128");
  CHECK(g.mode == IntegratorMode::grid);
  CHECK(g.resolution == std::vector<int>{256, 128});
  CHECK(Integrator::parse("mc:4096", 3).points == 4096);
  CHECK(Integrator::parse("qmc:65536").mode == IntegratorMode::qmc);
  CHECK(Integrator::parse("grid:64").describe() == "grid:64");
  CHECK_THROWS_AS(Integrator::parse("grid:1"), ConfigError);
  CHECK_THROWS_AS(Integrator::parse("grid"), ConfigError);
  CHECK_THROWS_AS(Integrator::parse("simpson:10"), ConfigError);
  CHECK_THROWS_AS(Integrator::parse("mc:abc"), ConfigError);
  CHECK_THROWS_AS(Integrator::parse("grid:64").quadrature(ProductManifold({{ManifoldKind::sphere2}})), ConfigError);

  const Quadrature q = torus_grid(ProductManifold::torus(2), {4, 8});
  CHECK(q.nodes.cols() == 32);
  CHECK(q.weights.sum() == doctest::Approx(kTwoPi * kTwoPi));
  CHECK(q.nodes(0, 0) == -kPi);
}

TEST_CASE("identities") {
  const DensityHandle f = wrapped_normal_t1(0.4, 0.2);
  const Integrator grid = Integrator::parse("grid:4096");
  CHECK(nise(f, f, grid) < 1e-10);
  for (FrConvention c : {FrConvention::as_written, FrConvention::inner, FrConvention::geodesic})
    CHECK(fisher_rao(f, f, grid, c) < 1e-6);
  CHECK_THROWS_AS(nise(scaled(f, 0.0), f, grid), NumericalError);
  CHECK_THROWS_AS(nise(f, uniform_density(ProductManifold::torus(2)), grid), ConfigError);
}

TEST_CASE("wrapped normal against uniform, frozen quadrature oracle") {
  // Computed independently by adaptive high-precision quadrature.
  const DensityHandle f = wrapped_normal_t1(0.0, 0.1);
  const DensityHandle u = uniform_density(ProductManifold::torus(1));
  const Integrator grid = Integrator::parse("grid:4096");
  CHECK(nise(f, u, grid) == doctest::Approx(0.821587588384722889).epsilon(1e-10));
  CHECK(fisher_rao(f, u, grid, FrConvention::as_written) == doctest::Approx(1.31572621543792846).epsilon(1e-10));
  CHECK(fisher_rao(f, u, grid, FrConvention::inner) == doctest::Approx(1.04453053166638842).epsilon(1e-10));
  CHECK(fisher_rao(f, u, grid, FrConvention::geodesic) == doctest::Approx(2.08906106333277684).epsilon(1e-10));
}

TEST_CASE("disjoint supports") {
  const ProductManifold t1 = ProductManifold::torus(1);
  const DensityHandle a = box(t1, -2.0, -1.0), b = box(t1, 1.0, 2.0);
  const Integrator grid = Integrator::parse("grid:1024");
  CHECK(fisher_rao(a, b, grid, FrConvention::as_written) == doctest::Approx(kPi / 2));
  CHECK(fisher_rao(a, b, grid, FrConvention::inner) == doctest::Approx(kPi / 2));
  CHECK(fisher_rao(a, b, grid, FrConvention::geodesic) == doctest::Approx(kPi));
  CHECK(to_string(parse_fr_convention("geodesic")) == "geodesic");
  CHECK_THROWS_AS(parse_fr_convention("hellinger"), ConfigError);
}

TEST_CASE("nise does not renormalize") {
  const DensityHandle f = wrapped_normal_t1(0.0, 0.3);
  const DensityHandle g = wrapped_normal_t1(1.0, 0.5);
  const Quadrature q = torus_grid(ProductManifold::torus(1), {2048});
  const Eigen::RowVectorXd fv = f(q.nodes), gv = g(q.nodes);
  const double expected = ((fv - 2 * gv).array().square() * q.weights.array()).sum() /
                          (fv.array().square() * q.weights.array()).sum();
  CHECK(nise(f, scaled(g, 2.0), q) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ise criterion") {
  const ProductManifold t1 = ProductManifold::torus(1);
  const Integrator grid = Integrator::parse("grid:512");
  SUBCASE("uniform") {
    for (std::uint64_t s : {1u, 2u, 3u})
      CHECK(std::abs(ise_criterion(uniform_density(t1), random_angles(1, 10 + s, s), grid) + 1.0 / kTwoPi) < 1e-12);
    CHECK_THROWS_AS(ise_criterion(uniform_density(t1), PointSet(1, 0), grid), ConfigError);
  }
  SUBCASE("ranking matches true ise") {
    const DensityHandle truth = wrapped_normal_t1(0.5, 0.2);
    Rng pr(3);
    MixtureComponent c{Eigen::VectorXd::Constant(1, 0.5), Eigen::MatrixXd::Constant(1, 1, 0.2), 1.0};
    const PointSet val = WrappedNormalMixture({c}, 3).sample(20000, pr);
    const std::vector<DensityHandle> cands{wrapped_normal_t1(0.5, 0.25), wrapped_normal_t1(0.9, 0.2),
                                           uniform_density(t1)};
    const Quadrature q = torus_grid(t1, {4096});
    std::vector<double> crit, ise;
    for (const auto& h : cands) {
      crit.push_back(ise_criterion(h, val, q));
      const Eigen::RowVectorXd d = truth(q.nodes) - h(q.nodes);
      ise.push_back((d.array().square() * q.weights.array()).sum());
    }
    CHECK((crit[0] < crit[1]) == (ise[0] < ise[1]));
    CHECK((crit[1] < crit[2]) == (ise[1] < ise[2]));
    CHECK((crit[0] < crit[2]) == (ise[0] < ise[2]));
  }
  SUBCASE("expectation identity") {
    const DensityHandle truth = wrapped_normal_t1(0.0, 0.3);
    const DensityHandle cand = wrapped_normal_t1(0.4, 0.5);
    const Quadrature q = torus_grid(t1, {4096});
    const Eigen::RowVectorXd fv = truth(q.nodes), gv = cand(q.nodes);
    const double target = (gv.array().square() * q.weights.array()).sum() -
                          2.0 * (fv.array() * gv.array() * q.weights.array()).sum();
    MixtureComponent c{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 0.3), 1.0};
    const WrappedNormalMixture mix({c}, 3);
    Rng rng(12);
    const int reps = 400;
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < reps; ++r) {
      const double v = ise_criterion(cand, mix.sample(50, rng), q);
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / reps;
    const double se = std::sqrt((sum2 / reps - mean * mean) / (reps - 1));
    CHECK(std::abs(mean - target) < 3 * se);
  }
  SUBCASE("grid and qmc agree on T2") {
    const NeuralField f = small_t2_field(5);
    const DensityHandle raw = field_density(f, f.initial_params());
    const double z = integrate(raw, torus_grid(ProductManifold::torus(2), {512}));
    const DensityHandle h = scaled(raw, 1.0 / z);
    const PointSet val = random_angles(2, 200, 6);
    const double g = ise_criterion(h, val, Integrator::parse("grid:256"));
    const double s = ise_criterion(h, val, Integrator::parse("qmc:65536", 1));
    CHECK(std::abs(g - s) < 1e-3);
  }
}

TEST_CASE("fisher-rao along an interpolation path") {
  const DensityHandle f = wrapped_normal_t1(0.0, 0.2);
  const DensityHandle g = wrapped_normal_t1(2.0, 0.6);
  const Integrator grid = Integrator::parse("grid:2048");
  double prev = 1e9;
  for (int k = 0; k <= 4; ++k) {
    const double t = k / 4.0;
    const DensityHandle mix{f.manifold, [f, g, t](const PointSet& p) {
                              return Eigen::RowVectorXd((1 - t) * g(p) + t * f(p));
                            }};
    const double d = fisher_rao(f, mix, grid);
    CHECK(d <= prev + 1e-12);
    prev = d;
  }
  CHECK(prev < 1e-6);
}

TEST_CASE("spectral content") {
  const ProductManifold t2 = ProductManifold::torus(2);
  SUBCASE("matches a direct DFT") {
    const NeuralField f = small_t2_field(2);
    const DensityHandle h = field_density(f, f.initial_params());
    const Eigen::MatrixXd grid = torus_grid_values(h, 32);
    const Eigen::MatrixXd ours = spectral_content(grid);
    const Eigen::MatrixXd ref = oracle::direct_dft_magnitudes(grid);
    CHECK((ours - ref).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((spectral_content(h, 32) - ours).cwiseAbs().maxCoeff() == 0.0);
    // Parseval under the chosen scaling.
    CHECK(ours.squaredNorm() == doctest::Approx(grid.squaredNorm()).epsilon(1e-8));
    const Eigen::MatrixXd logs = spectral_content(h, 32, SpectrumQuantity::log_density);
    CHECK(logs.squaredNorm() == doctest::Approx(torus_grid_values(h, 32, SpectrumQuantity::log_density).squaredNorm())
                                    .epsilon(1e-8));
  }
  SUBCASE("grid layout") {
    const DensityHandle h{t2, [](const PointSet& p) { return Eigen::RowVectorXd(p.row(0).array() + 10.0 * p.row(1).array()); }};
    const Eigen::MatrixXd v = torus_grid_values(h, 8);
    CHECK(v(0, 0) == doctest::Approx(-kPi - 10 * kPi));
    CHECK(v(2, 3) == doctest::Approx(-kPi + 2 * kTwoPi / 8 + 10 * (-kPi + 3 * kTwoPi / 8)));
    CHECK(centred_frequency(0, 8) == -4);
    CHECK(centred_frequency(4, 8) == 0);
  }
  SUBCASE("pure tone") {
    const DensityHandle h{t2, [](const PointSet& p) {
                            return Eigen::RowVectorXd((2 * p.row(0).array()).cos() / std::sqrt(kPi) / std::sqrt(kTwoPi));
                          }};
    const int res = 64;
    const Eigen::MatrixXd s = spectral_content(h, res);
    const double dc = s(res / 2, res / 2);
    const double total = s.squaredNorm() - dc * dc;
    const double tone = std::pow(s(res / 2 + 2, res / 2), 2) + std::pow(s(res / 2 - 2, res / 2), 2);
    CHECK(tone / total > 0.99);
  }
  SUBCASE("uniform") {
    const int res = 32;
    const Eigen::MatrixXd s = spectral_content(uniform_density(t2), res);
    Eigen::MatrixXd off = s;
    off(res / 2, res / 2) = 0.0;
    CHECK(off.cwiseAbs().maxCoeff() < 1e-10);
    CHECK(s(res / 2, res / 2) == doctest::Approx(res / (kTwoPi * kTwoPi)));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(spectral_content(uniform_density(ProductManifold::torus(1)), 16), ConfigError);
    const DensityHandle zero{t2, [](const PointSet& p) { return Eigen::RowVectorXd::Zero(p.cols()).eval(); }};
    CHECK_THROWS_AS(torus_grid_values(zero, 8, SpectrumQuantity::log_density), NumericalError);
  }
}

TEST_CASE("marginal densities") {
  const ProductManifold t2 = ProductManifold::torus(2);
  const DensityHandle g1 = wrapped_normal_t1(0.3, 0.4);
  const DensityHandle g2 = wrapped_normal_t1(-1.0, 0.2);
  const DensityHandle prod{t2, [g1, g2](const PointSet& p) {
                             return Eigen::RowVectorXd(g1(p.row(0)).array() * g2(p.row(1)).array());
                           }};
  const PointSet x2 = random_angles(1, 16, 3);
  const Integrator grid = Integrator::parse("grid:512");

  SUBCASE("full region gives the second factor") {
    const Eigen::RowVectorXd m = marginal_density(prod, Region{}, grid, x2);
    CHECK((m - g2(x2)).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("full marginal integrates to one under mc") {
    const PointSet nodes = torus_grid(ProductManifold::torus(1), {256}).nodes;
    const Eigen::RowVectorXd m = marginal_density(prod, Region{}, Integrator::parse("mc:4096", 2), nodes);
    CHECK(std::abs(m.sum() * kTwoPi / 256 - 1.0) < 1e-2);
  }
  SUBCASE("region and complement add up") {
    Region arc;
    arc.kind = Region::Kind::arc;
    arc.lo = 2.5;
    arc.hi = -2.0;  // wraps through pi
    Region comp = arc;
    comp.complement = true;
    const Integrator mc = Integrator::parse("mc:8192", 4);
    const Eigen::RowVectorXd a = marginal_density(prod, arc, mc, x2);
    const Eigen::RowVectorXd b = marginal_density(prod, comp, mc, x2);
    const Eigen::RowVectorXd full = marginal_density(prod, Region{}, mc, x2);
    CHECK((a + b - full).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((a + b - g2(x2)).cwiseAbs().maxCoeff() < 0.05 * g2(x2).maxCoeff());
  }
  SUBCASE("sphere cap and errors") {
    const ProductManifold s2s1 = ProductManifold({{ManifoldKind::sphere2}, {ManifoldKind::circle}});
    const DensityHandle u = uniform_density(s2s1);
    Region cap;
    cap.kind = Region::Kind::cap;
    cap.angle = kPi / 2;
    const PointSet y = random_angles(1, 4, 1);
    const Eigen::RowVectorXd m = marginal_density(u, cap, Integrator::parse("mc:20000", 5), y);
    CHECK(m(0) == doctest::Approx(0.5 / kTwoPi).epsilon(0.05));
    Region empty;
    empty.kind = Region::Kind::cap;
    empty.angle = 0.0;
    CHECK_THROWS_AS(marginal_density(u, empty, Integrator::parse("mc:100", 1), y), ConfigError);
    CHECK_THROWS_AS(marginal_density(uniform_density(ProductManifold::torus(3)), Region{}, grid, y), ConfigError);
    CHECK_THROWS_AS(marginal_density(prod, cap, grid, x2), ConfigError);
  }
}
