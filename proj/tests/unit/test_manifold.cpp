// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "neuropmd/error.hpp"
#include "neuropmd/manifold.hpp"
#include "oracles.hpp"

using namespace neuropmd;

namespace {

std::vector<CircleIndex> circle_indices(int max_freq) {
  std::vector<CircleIndex> out{{0, 0}};
  for (int i = 1; i <= max_freq; ++i) {
    out.push_back({i, 0});
    out.push_back({i, 1});
  }
  return out;
}

ProductManifold mixed() { return ProductManifold({{ManifoldKind::circle}, {ManifoldKind::sphere2}}); }

}  // namespace

TEST_CASE("circle eigenfunction values") {
  CHECK(circle_eigenfunction({0, 0}, 1.234) == doctest::Approx(1.0 / std::sqrt(2.0 * kPi)).epsilon(1e-15));
  CHECK(circle_eigenfunction({1, 0}, 0.0) == doctest::Approx(1.0 / std::sqrt(kPi)).epsilon(1e-15));
  CHECK(circle_eigenfunction({3, 1}, kPi / 6) == doctest::Approx(1.0 / std::sqrt(kPi)).epsilon(1e-14));
  CHECK(circle_eigenvalue({4, 1}) == 16.0);
}

TEST_CASE("circle Gram matrix under the trapezoid rule") {
  const auto idx = circle_indices(10);
  const int N = 4096;
  Eigen::MatrixXd vals(static_cast<Eigen::Index>(idx.size()), N);
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (int j = 0; j < N; ++j) vals(static_cast<Eigen::Index>(a), j) = circle_eigenfunction(idx[a], -kPi + kTwoPi * j / N);
  const Eigen::MatrixXd gram = vals * vals.transpose() * (kTwoPi / N);
  CHECK((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("circle eigenvalue identity by central differences") {
  const double h = 1e-4;
  for (const auto& i : circle_indices(6)) {
    if (i.freq == 0) continue;
    for (double x : {-2.9, -1.0, 0.3, 1.7, 2.5}) {
      const double fd = (circle_eigenfunction(i, x + h) - 2.0 * circle_eigenfunction(i, x) + circle_eigenfunction(i, x - h)) / (h * h);
      const double want = -circle_eigenvalue(i) * circle_eigenfunction(i, x);
      if (std::abs(want) < 1e-3) continue;
      CHECK(std::abs(fd - want) / std::abs(want) < 1e-5);
      CHECK(circle_eigenfunction_d2(i, x) == doctest::Approx(want).epsilon(1e-14));
      const double d1 = (circle_eigenfunction(i, x + h) - circle_eigenfunction(i, x - h)) / (2.0 * h);
      CHECK(circle_eigenfunction_d1(i, x) == doctest::Approx(d1).epsilon(1e-6));
    }
  }
}

TEST_CASE("sphere harmonics match closed forms and std::sph_legendre") {
  CHECK(sphere_eigenfunction({0, 0}, Eigen::Vector3d(0.6, 0.0, 0.8)) == doctest::Approx(0.5 / std::sqrt(kPi)).epsilon(1e-15));
  CHECK(sphere_eigenfunction({1, 0}, Eigen::Vector3d::UnitZ()) == doctest::Approx(std::sqrt(3.0 / (4.0 * kPi))).epsilon(1e-15));
  CHECK(sphere_eigenvalue({3, -2}) == 12.0);
  // Real harmonics without the Condon-Shortley phase: sqrt(2) N P_l^m cos/sin(m phi).
  for (int l = 0; l <= 6; ++l)
    for (int m = 0; m <= l; ++m)
      for (double theta : {0.3, 1.1, 2.4})
        for (double phi : {-2.0, 0.4, 2.9}) {
          const Eigen::Vector3d x(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
          const double base = (m % 2 ? -1.0 : 1.0) * std::sph_legendre(l, m, theta);
          if (m == 0) {
            CHECK(sphere_eigenfunction({l, 0}, x) == doctest::Approx(base).epsilon(1e-12));
          } else {
            CHECK(sphere_eigenfunction({l, -m}, x) == doctest::Approx(std::sqrt(2.0) * base * std::cos(m * phi)).epsilon(1e-12).scale(1.0));
            CHECK(sphere_eigenfunction({l, m}, x) == doctest::Approx(std::sqrt(2.0) * base * std::sin(m * phi)).epsilon(1e-12).scale(1.0));
          }
        }
}

TEST_CASE("sphere Gram matrix under a Gauss-Legendre x trapezoid rule") {
  auto [nodes, w] = oracle::sphere_rule(64, 128);
  const int L = 5, count = (L + 1) * (L + 1);
  Eigen::MatrixXd vals(count, nodes.cols());
  std::vector<double> buf(static_cast<std::size_t>(count));
  for (Eigen::Index j = 0; j < nodes.cols(); ++j) {
    real_spherical_harmonics(L, nodes.col(j), buf);
    for (int a = 0; a < count; ++a) vals(a, j) = buf[static_cast<std::size_t>(a)];
  }
  const Eigen::MatrixXd gram = vals * w.asDiagonal() * vals.transpose();
  CHECK((gram - Eigen::MatrixXd::Identity(count, count)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("tangent projection") {
  const MarginalManifold s{ManifoldKind::sphere2};
  Eigen::Vector3d north(0, 0, 1);
  CHECK((tangent_projection(s, north) - Eigen::Vector3d(1, 1, 0).asDiagonal().toDenseMatrix()).norm() < 1e-15);
  CHECK((tangent_projection(s, Eigen::Vector3d::UnitX()) - Eigen::Vector3d(0, 1, 1).asDiagonal().toDenseMatrix()).norm() < 1e-15);
  Rng rng(4);
  const PointSet pts = uniform_sample(ProductManifold({s}), 20, rng);
  for (Eigen::Index j = 0; j < pts.cols(); ++j) {
    const Eigen::MatrixXd P = tangent_projection(s, pts.col(j));
    CHECK((P * pts.col(j)).norm() < 1e-12);
    CHECK((P * P - P).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((P - P.transpose()).norm() == 0.0);
    CHECK(P.trace() == doctest::Approx(2.0).epsilon(1e-12));
  }
  const MarginalManifold c{ManifoldKind::circle};
  const Eigen::Vector2d u(std::cos(0.7), std::sin(0.7));
  CHECK(tangent_projection(c, u).trace() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("product manifold layout and conversions") {
  const ProductManifold m = mixed();
  CHECK(m.storage_dim() == 4);
  CHECK(m.ambient_dim() == 5);
  CHECK(m.intrinsic_dim() == 3);
  CHECK(m.storage_offset(1) == 1);
  CHECK(m.ambient_offset(1) == 2);
  CHECK(m.volume() == doctest::Approx(kTwoPi * 4.0 * kPi).epsilon(1e-15));
  CHECK_FALSE(m.is_torus());
  CHECK(ProductManifold::torus(3).is_torus());

  Rng rng(9);
  const PointSet pts = uniform_sample(m, 50, rng);
  m.validate(pts);
  const PointSet back = m.from_ambient(m.to_ambient(pts));
  CHECK((back - pts).cwiseAbs().maxCoeff() < 1e-14);

  PointSet bad = pts;
  bad(2, 0) += 0.1;
  CHECK_THROWS_AS(m.validate(bad), ConfigError);
  PointSet out_of_range = pts;
  out_of_range(0, 3) = 4.0;
  CHECK_THROWS_AS(m.validate(out_of_range), ConfigError);
}

TEST_CASE("wrap_angle maps into [-pi, pi)") {
  CHECK(wrap_angle(kPi) == doctest::Approx(-kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(-kPi));
  CHECK(wrap_angle(7.0) == doctest::Approx(7.0 - kTwoPi));
  for (double a = -20.0; a < 20.0; a += 0.37) {
    const double w = wrap_angle(a);
    CHECK(w >= -kPi);
    CHECK(w < kPi);
    CHECK(std::remainder(w - a, kTwoPi) == doctest::Approx(0.0).scale(1.0));
  }
}

TEST_CASE("uniform sampling moments and determinism") {
  const int n = 4096;
  for (auto mode : {SamplingMode::pseudo, SamplingMode::qmc}) {
    Rng r1(17), r2(17);
    const PointSet t = uniform_sample(ProductManifold::torus(1), n, r1, mode);
    CHECK((t - uniform_sample(ProductManifold::torus(1), n, r2, mode)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(std::abs(t.array().cos().mean()) < 4.0 / std::sqrt(static_cast<double>(n)));

  }
  Rng r3(18);
  const PointSet s = uniform_sample(ProductManifold({{ManifoldKind::sphere2}}), n, r3);
  for (int d = 0; d < 3; ++d) CHECK(std::abs(s.row(d).mean()) < 4.0 / std::sqrt(3.0) / std::sqrt(static_cast<double>(n)));
  CHECK((s.colwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(uniform_sample(ProductManifold({{ManifoldKind::sphere2}}), n, r3, SamplingMode::qmc), ConfigError);
}

TEST_CASE("scrambled Sobol points are stratified") {
  Rng rng(2);
  const Eigen::MatrixXd u = scrambled_sobol(2, 1024, rng);
  CHECK(u.minCoeff() >= 0.0);
  CHECK(u.maxCoeff() < 1.0);
  // A (0, m, 2)-net in base 2: every 1/32 x 1/32 cell holds exactly one point.
  std::vector<int> counts(1024, 0);
  for (Eigen::Index j = 0; j < u.cols(); ++j)
    ++counts[static_cast<std::size_t>(static_cast<int>(u(0, j) * 32) * 32 + static_cast<int>(u(1, j) * 32))];
  CHECK(*std::min_element(counts.begin(), counts.end()) == 1);
  CHECK(*std::max_element(counts.begin(), counts.end()) == 1);
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
}

TEST_CASE("manifold kind names") {
  CHECK(parse_manifold_kind(to_string(ManifoldKind::sphere2)) == ManifoldKind::sphere2);
  CHECK(parse_manifold_kind("circle") == ManifoldKind::circle);
  CHECK_THROWS_AS(parse_manifold_kind("torus"), ConfigError);
}
