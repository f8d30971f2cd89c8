// SPDX-License-Identifier: Apache-2.0
//
// Anisotropic wrapped-normal mixtures on T^D.
#pragma once

#include <string>
#include <vector>

#include "neuropmd/manifold.hpp"

namespace neuropmd {

/// Q diag(logspace(1, factor, D)) Q^T with Haar-random Q, scaled so the
/// largest absolute entry is 1.
Eigen::MatrixXd make_covariance(int D, double anisotropy_factor, Rng& rng);

struct MixtureComponent {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  double weight = 1.0;
};

class WrappedNormalMixture {
 public:
  WrappedNormalMixture() = default;
  /// Validates weights (positive, summing to 1 within 1e-9), SPD covariances,
  /// and wrap window >= 1. Means are wrapped into [-pi, pi).
  WrappedNormalMixture(std::vector<MixtureComponent> components, int wrap_window = 3);

  int dim() const noexcept { return dim_; }
  int wrap_window() const noexcept { return wrap_window_; }
  const std::vector<MixtureComponent>& components() const noexcept { return components_; }
  ProductManifold manifold() const { return ProductManifold::torus(dim_); }

  double density(const Eigen::VectorXd& x) const;
  Eigen::RowVectorXd density(const PointSet& points) const;
  PointSet sample(std::size_t n, Rng& rng) const;

 private:
  struct Factor {
    Eigen::MatrixXd chol;      // lower Cholesky factor of the covariance
    Eigen::MatrixXd chol_inv;  // its inverse
    double log_norm = 0.0;     // log of the Gaussian normalizing constant
  };

  std::vector<MixtureComponent> components_;
  std::vector<Factor> factors_;
  std::vector<Eigen::VectorXd> shifts_;
  int dim_ = 0;
  int wrap_window_ = 3;
};

/// Named presets "t2_paper" and "t4_paper"; covariances drawn from rng.
WrappedNormalMixture mixture_preset(const std::string& name, Rng& rng);

}  // namespace neuropmd
