// SPDX-License-Identifier: Apache-2.0
//
// Product von Mises kernel density estimator and the tensor-product-basis
// penalized-likelihood estimator.
#pragma once

#include <vector>

#include "neuropmd/objective.hpp"

namespace neuropmd {

/// Modified Bessel function of the first kind, order 0.
double bessel_i0(double x);
/// I0(x) exp(-|x|), finite for large arguments.
double bessel_i0_scaled(double x);

class VonMisesKde {
 public:
  VonMisesKde() = default;
  /// data: D x n angles. kappa >= 0 and finite.
  VonMisesKde(PointSet data, double kappa);

  double kappa() const noexcept { return kappa_; }
  const PointSet& data() const noexcept { return data_; }
  ProductManifold manifold() const { return ProductManifold::torus(static_cast<int>(data_.rows())); }

  Eigen::RowVectorXd density(const PointSet& points) const;
  double density(const Eigen::VectorXd& point) const;
  DensityHandle handle() const;

 private:
  PointSet data_;
  Eigen::MatrixXd cos_, sin_;  // D x n
  double kappa_ = 0.0;
  double log_norm_ = 0.0;      // -D log(2 pi I0(kappa) e^{-kappa})
};

struct KappaSelection {
  double kappa = 0.0;
  std::vector<double> grid;
  std::vector<double> scores;  // fold-averaged criterion per grid entry
};

/// Cross-validated concentration: per fold fit on the remaining folds and
/// score the ISE criterion on the held-out fold. Ties go to the smaller kappa.
KappaSelection kde_select_kappa(const PointSet& data, const std::vector<double>& kappas, int folds,
                                std::uint64_t seed, const Integrator& integ);

/// (sum of marginal eigenvalues)^exponent for every entry of the encoding.
Eigen::VectorXd tpb_penalty_weights(const Encoding& enc, int exponent = 2);

struct TpbModel {
  NeuralField field;  // depth 1 on the full tensor encoding
  FieldParams params;
  Eigen::VectorXd penalty_weights;

  Eigen::VectorXd coefficients() const { return params.flatten(); }
  Eigen::RowVectorXd log_density(const PointSet& points) const { return field.forward(params, points); }
  DensityHandle handle() const { return field_density(field, params); }
};

/// The depth-1 field on the full tensor set (at most 1e6 coefficients).
NeuralField tpb_field(const ProductManifold& spec, const std::vector<int>& max_freq, std::uint64_t init_seed);

/// Mini-batch ascent on the linear model with penalty tau theta^T diag(F) theta.
TpbModel tpb_fit(const PointSet& data, const ProductManifold& spec, const std::vector<int>& max_freq,
                 const TrainConfig& cfg, std::uint64_t init_seed, int penalty_exponent = 2,
                 std::vector<HistoryRow>* history = nullptr);

}  // namespace neuropmd
