// SPDX-License-Identifier: Apache-2.0
//
// Marginal manifolds (S^1, S^2), their products, Laplace-Beltrami
// eigenfunctions, tangent projectors and uniform sampling.
//
// Storage convention for a point of a product manifold: circle blocks hold a
// single intrinsic angle in [-pi, pi), sphere blocks hold a unit 3-vector.
// A PointSet stores one point per column.
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace neuropmd {

using Rng = std::mt19937_64;
using PointSet = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Mixes (base, stream, index) into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                          std::uint64_t index = 0);

/// Maps any angle into [-pi, pi).
double wrap_angle(double angle);

enum class ManifoldKind { circle, sphere2 };

struct MarginalManifold {
  ManifoldKind kind = ManifoldKind::circle;

  int intrinsic_dim() const noexcept { return kind == ManifoldKind::circle ? 1 : 2; }
  int ambient_dim() const noexcept { return kind == ManifoldKind::circle ? 2 : 3; }
  int storage_dim() const noexcept { return kind == ManifoldKind::circle ? 1 : 3; }
  double volume() const noexcept { return kind == ManifoldKind::circle ? kTwoPi : 2.0 * kTwoPi; }

  friend bool operator==(const MarginalManifold&, const MarginalManifold&) = default;
};

std::string to_string(ManifoldKind kind);
ManifoldKind parse_manifold_kind(const std::string& name);

/// Ordered product of marginal manifolds.
class ProductManifold {
 public:
  ProductManifold() = default;
  explicit ProductManifold(std::vector<MarginalManifold> marginals);

  static ProductManifold torus(int dims);

  std::size_t size() const noexcept { return marginals_.size(); }
  const MarginalManifold& operator[](std::size_t d) const { return marginals_[d]; }
  const std::vector<MarginalManifold>& marginals() const noexcept { return marginals_; }

  int intrinsic_dim() const noexcept { return intrinsic_dim_; }
  int ambient_dim() const noexcept { return ambient_dim_; }
  int storage_dim() const noexcept { return storage_dim_; }
  int storage_offset(std::size_t d) const { return storage_offsets_[d]; }
  int ambient_offset(std::size_t d) const { return ambient_offsets_[d]; }
  double volume() const noexcept { return volume_; }
  bool is_torus() const noexcept;

  /// "circle x sphere2" style description.
  std::string describe() const;

  /// Throws ConfigError unless every column is a valid point (angles in
  /// [-pi, pi), unit sphere blocks within `tol`).
  void validate(const PointSet& points, double tol = 1e-9) const;

  /// Storage coordinates -> ambient coordinates (circle -> (cos, sin)).
  Eigen::MatrixXd to_ambient(const PointSet& points) const;
  /// Ambient coordinates (possibly off the manifold) -> storage coordinates
  /// by radial projection of every block.
  PointSet from_ambient(const Eigen::MatrixXd& ambient) const;

  friend bool operator==(const ProductManifold& a, const ProductManifold& b) {
    return a.marginals_ == b.marginals_;
  }

 private:
  std::vector<MarginalManifold> marginals_;
  std::vector<int> storage_offsets_;
  std::vector<int> ambient_offsets_;
  int intrinsic_dim_ = 0;
  int ambient_dim_ = 0;
  int storage_dim_ = 0;
  double volume_ = 1.0;
};

// ---------------------------------------------------------------------------
// Eigenfunctions

/// Fourier mode on S^1. phase 0 -> cos, phase 1 -> sin. freq 0 admits only
/// phase 0 (the constant).
struct CircleIndex {
  int freq = 0;
  int phase = 0;
  friend auto operator<=>(const CircleIndex&, const CircleIndex&) = default;
};

/// Real spherical harmonic of degree l and order m, |m| <= l.
struct SphereIndex {
  int degree = 0;
  int order = 0;
  friend auto operator<=>(const SphereIndex&, const SphereIndex&) = default;
};

using EigenIndex = std::variant<CircleIndex, SphereIndex>;

double circle_eigenfunction(CircleIndex idx, double angle);
double circle_eigenvalue(CircleIndex idx);
/// First and second angular derivatives of the circle eigenfunction.
double circle_eigenfunction_d1(CircleIndex idx, double angle);
double circle_eigenfunction_d2(CircleIndex idx, double angle);

/// Real orthonormal spherical harmonic at a unit vector. Throws ConfigError
/// if |x| deviates from 1 by more than 1e-9.
double sphere_eigenfunction(SphereIndex idx, const Eigen::Vector3d& x);
double sphere_eigenvalue(SphereIndex idx);

/// Flat index l^2 + l + m of a real harmonic.
inline int sphere_flat_index(SphereIndex idx) {
  return idx.degree * idx.degree + idx.degree + idx.order;
}

/// All real harmonics of degree <= max_degree at unit vector x, written to
/// `out` (size (max_degree+1)^2) at sphere_flat_index positions.
void real_spherical_harmonics(int max_degree, const Eigen::Vector3d& x,
                              std::span<double> out);

double eigenvalue(const EigenIndex& idx);

/// Orthogonal projector onto the tangent space at the ambient point x.
Eigen::MatrixXd tangent_projection(const MarginalManifold& m,
                                   const Eigen::VectorXd& ambient_point);

// ---------------------------------------------------------------------------
// Sampling

enum class SamplingMode { pseudo, qmc };

/// First n points of a Sobol sequence in [0,1)^dims with a random digital
/// shift drawn from rng.
Eigen::MatrixXd scrambled_sobol(int dims, std::size_t n, Rng& rng);

/// n points distributed uniformly w.r.t. the product volume form. qmc is
/// valid only on tori.
PointSet uniform_sample(const ProductManifold& spec, std::size_t n, Rng& rng,
                        SamplingMode mode = SamplingMode::pseudo);

/// QMC on tori, pseudo-random otherwise.
SamplingMode default_sampling_mode(const ProductManifold& spec);

}  // namespace neuropmd
