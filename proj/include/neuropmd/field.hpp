// SPDX-License-Identifier: Apache-2.0
//
// Sine-activated MLP log-density field
//
//   h0 = eta(x),  h_l = sin(W_l h_{l-1} + b_l)  (l < L),  v(x) = W_L h_{L-1}
//
// with reverse-mode parameter gradients and two spatial Laplacian paths:
// intrinsic second-order jets on tori, and projected centred-difference
// Hessians in ambient coordinates for any product of circles and spheres.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "neuropmd/encoding.hpp"

namespace neuropmd {

enum class Activation { sine, relu };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

struct FieldConfig {
  /// H_0 = K, hidden widths, H_L = 1.
  std::vector<int> widths;
  Activation activation = Activation::sine;
  std::uint64_t init_seed = 0;

  int depth() const noexcept { return static_cast<int>(widths.size()) - 1; }
};

/// Builds {K, hidden..., 1}.
FieldConfig make_field_config(std::size_t K, const std::vector<int>& hidden,
                              Activation activation = Activation::sine,
                              std::uint64_t init_seed = 0);

/// weights[l-1] is W^(l) (H_l x H_{l-1}); biases[l-1] is b^(l) for l < L.
/// The flat layout is vec(W^(1)), ..., vec(W^(L)), b^(1), ..., b^(L-1) with
/// column-major vec.
struct FieldParams {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static FieldParams zeros(const FieldConfig& cfg);
  static FieldParams unflatten(const FieldConfig& cfg, const Eigen::VectorXd& theta);

  std::size_t size() const;
  Eigen::VectorXd flatten() const;
  void set_zero();
  FieldParams& axpy(double alpha, const FieldParams& x);
  FieldParams& scale(double alpha);
  double squared_norm() const;
  bool all_finite() const;
};

/// First layer U(-s, s) with s = sqrt(3 Vol / H_0), so that orthonormal
/// eigenfunction features (mean square 1/Vol) give unit-variance
/// pre-activations; later layers U(-sqrt(6/H_{l-1}), sqrt(6/H_{l-1})); biases zero.
FieldParams init_params(const FieldConfig& cfg, Rng& rng, double domain_volume);

enum class PenaltyMethod { intrinsic, extrinsic };

std::string to_string(PenaltyMethod m);
PenaltyMethod parse_penalty_method(const std::string& name);

class NeuralField {
 public:
  NeuralField() = default;
  NeuralField(Encoding encoding, FieldConfig config);

  const Encoding& encoding() const noexcept { return encoding_; }
  const FieldConfig& config() const noexcept { return config_; }
  const ProductManifold& manifold() const noexcept { return encoding_.manifold(); }
  std::size_t parameter_count() const;

  /// init_params seeded by config().init_seed.
  FieldParams initial_params() const;

  Eigen::RowVectorXd forward(const FieldParams& params, const PointSet& points) const;
  double forward(const FieldParams& params, const Eigen::VectorXd& point) const;
  Eigen::RowVectorXd forward_features(const FieldParams& params, const Eigen::MatrixXd& features) const;
  Eigen::RowVectorXd density(const FieldParams& params, const PointSet& points) const;

  /// Adds sum_j s_j * dv(x_j)/dtheta to grad, where s = seed(v) is computed
  /// from the forward values. Returns v.
  Eigen::RowVectorXd accumulate_gradient(
      const FieldParams& params, const PointSet& points,
      const std::function<Eigen::RowVectorXd(const Eigen::RowVectorXd&)>& seed,
      FieldParams& grad) const;

  /// Same as accumulate_gradient for precomputed K x n encoding features.
  Eigen::RowVectorXd accumulate_gradient_features(
      const FieldParams& params, const Eigen::MatrixXd& features,
      const std::function<Eigen::RowVectorXd(const Eigen::RowVectorXd&)>& seed,
      FieldParams& grad) const;

  /// dv(x)/dtheta, flattened.
  Eigen::VectorXd param_gradient(const FieldParams& params, const Eigen::VectorXd& point) const;
  /// d exp(v(x))/dtheta, flattened.
  Eigen::VectorXd density_param_gradient(const FieldParams& params, const Eigen::VectorXd& point) const;

  /// Exact Laplacian on tori through second-order jets.
  Eigen::RowVectorXd laplacian_intrinsic(const FieldParams& params, const PointSet& points) const;
  /// Sum_i P_i. H P_i.^T with a centred-difference ambient Hessian of step h.
  Eigen::RowVectorXd laplacian_extrinsic(const FieldParams& params, const PointSet& points,
                                         double h = 1e-3) const;
  Eigen::RowVectorXd laplacian(const FieldParams& params, const PointSet& points,
                               PenaltyMethod method, double h = 1e-3) const;

  /// Adds coeff * sum_j d[Lap v(x_j)]^2/dtheta to grad. Returns Lap v.
  Eigen::RowVectorXd accumulate_penalty_gradient(const FieldParams& params, const PointSet& points,
                                                 PenaltyMethod method, double h, double coeff,
                                                 FieldParams& grad) const;

 private:
  struct Trace;
  struct JetTrace;

  Trace trace(const FieldParams& params, Eigen::MatrixXd features) const;
  void backward(const FieldParams& params, const Trace& t, const Eigen::RowVectorXd& seed,
                FieldParams& grad) const;
  JetTrace jet_trace(const FieldParams& params, EncodingJets jets) const;
  void jet_backward(const FieldParams& params, const JetTrace& t, const Eigen::RowVectorXd& seed,
                    FieldParams& grad) const;

  /// Stencil nodes and Laplacian coefficients for the extrinsic path. Column
  /// offsets[j] .. offsets[j+1] of `nodes` belong to point j.
  void extrinsic_stencil(const PointSet& points, double h, PointSet& nodes,
                         std::vector<double>& coeffs, std::vector<Eigen::Index>& offsets) const;

  void require_sine(const char* what) const;

  Encoding encoding_;
  FieldConfig config_;
};

/// tau * Vol / q * sum_j d[Lap v(x_j)]^2/dtheta, flattened.
Eigen::VectorXd penalty_param_gradient(const NeuralField& field, const FieldParams& params,
                                       const PointSet& points, double tau, PenaltyMethod method,
                                       double h = 1e-3);

}  // namespace neuropmd
