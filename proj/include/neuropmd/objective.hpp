// SPDX-License-Identifier: Apache-2.0
//
// Penalized log-likelihood, its unbiased three-term stochastic gradient,
// the mini-batch ascent loop, penalty selection and gradient SNR.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "neuropmd/field.hpp"
#include "neuropmd/metrics.hpp"

namespace neuropmd {

/// exp(v) of a field with fixed parameters (copied into the handle).
DensityHandle field_density(const NeuralField& field, const FieldParams& params);

struct LearningRateSchedule {
  enum class Kind { fixed, cyclic_triangular };
  Kind kind = Kind::fixed;
  double rate = 1e-3;
  double min_rate = 1e-5;
  double max_rate = 1e-3;
  int period = 1000;

  static LearningRateSchedule fixed(double w);
  static LearningRateSchedule cyclic(double w_min, double w_max, int period);
  /// "fixed:1e-3" or "cyclic:1e-5:1e-3:5000".
  static LearningRateSchedule parse(const std::string& text);
  std::string describe() const;
  void validate() const;
  /// Rate used during epoch t (0-based). The cyclic schedule equals
  /// min_rate at t = 0 and t = period and max_rate at t = period / 2.
  double at(int t) const;
};

struct TrainConfig {
  double tau = 0.0;
  /// 0 means the full training set.
  std::size_t batch_size = 0;
  std::size_t q1 = 1024;
  std::size_t q2 = 1024;
  int epochs = 100;
  LearningRateSchedule schedule;
  PenaltyMethod penalty = PenaltyMethod::intrinsic;
  double fd_step = 1e-3;
  std::uint64_t seed = 0;
  /// Held-out fraction used by select_tau and for validation tracking.
  double validation_fraction = 0.05;
  /// Evaluate the ISE criterion on the validation split every k epochs (0: never).
  int validation_every = 0;
  std::string validation_integrator = "qmc:4096";
  int snr_every = 0;
  /// Rescale the step when the gradient norm exceeds this value (0: off).
  double grad_clip = 0.0;
  /// Early stopping patience in validation evaluations (0: off).
  int patience = 0;
  /// Replaces the Laplacian penalty by tau * theta^T diag(F) theta when set.
  std::optional<Eigen::VectorXd> quadratic_penalty;
  /// With a quadratic penalty, apply it as a proximal shrinkage after each
  /// step instead of through its gradient.
  bool quadratic_proximal = true;

  void validate() const;
};

/// Gradient of tau * theta^T diag(weights) theta.
Eigen::VectorXd quadratic_penalty_gradient(const Eigen::VectorXd& weights, const Eigen::VectorXd& theta, double tau);

struct GradEstimate {
  Eigen::VectorXd a, b, c;
  Eigen::VectorXd total() const { return a - b - c; }
};

GradEstimate gradient_estimate(const NeuralField& field, const FieldParams& params, const PointSet& batch,
                               const PointSet& mc1, const PointSet& mc2, double tau,
                               PenaltyMethod method = PenaltyMethod::intrinsic, double fd_step = 1e-3);

struct ObjectiveTerms {
  double data = 0.0;
  double normalization = 0.0;
  double penalty = 0.0;
  double value() const { return data - normalization - penalty; }
};

/// mean v(batch) - Vol mean exp(v(mc1)) - tau Vol mean (Lap v(mc2))^2.
ObjectiveTerms objective_terms(const NeuralField& field, const FieldParams& params, const PointSet& data,
                               const PointSet& mc1, const PointSet& mc2, double tau,
                               PenaltyMethod method = PenaltyMethod::intrinsic, double fd_step = 1e-3);
double objective_estimate(const NeuralField& field, const FieldParams& params, const PointSet& data,
                          const PointSet& mc1, const PointSet& mc2, double tau,
                          PenaltyMethod method = PenaltyMethod::intrinsic, double fd_step = 1e-3);

struct SnrReport {
  double snr_a = 0.0;
  double snr_b = 0.0;
  double snr_c = 0.0;
};

/// Per-component squared mean over the empirical variance of each term,
/// averaged over parameters. Variances are floored at 1e-12; snr_c is 0
/// when tau is 0.
SnrReport grad_snr(const NeuralField& field, const FieldParams& params, const PointSet& batch,
                   const PointSet& mc1, const PointSet& mc2, double tau,
                   PenaltyMethod method = PenaltyMethod::intrinsic, double fd_step = 1e-3);

struct HistoryRow {
  int epoch = 0;
  double objective = 0.0;
  double lr = 0.0;
  std::optional<double> validation;
  std::optional<SnrReport> snr;
};

struct TrainResult {
  FieldParams params;
  std::vector<HistoryRow> history;
  int last_epoch = 0;
  bool stopped_early = false;
};

/// Runs cfg.epochs epochs of floor(n / b) ascent steps
/// theta <- theta + w_t (a - b - c), numbering epochs from start_epoch + 1.
/// `validation` may be empty. Throws NumericalError on divergence.
TrainResult train(const NeuralField& field, FieldParams init, const PointSet& data, const PointSet& validation,
                  const TrainConfig& cfg, int start_epoch = 0);

/// Seeded shuffle of the columns into (train, validation) with
/// round(fraction * n) validation points.
std::pair<PointSet, PointSet> split_validation(const PointSet& data, double fraction, std::uint64_t seed);

struct TauCandidate {
  double tau = 0.0;
  std::optional<double> criterion;
  std::string error;
};

struct TauSelection {
  double tau = 0.0;
  std::vector<TauCandidate> candidates;
  TrainResult best;
};

/// Trains once per tau on the training split and scores the ISE criterion on
/// the validation split. Ties go to the larger tau; failed runs are skipped.
TauSelection select_tau(const NeuralField& field, const PointSet& data, const std::vector<double>& taus,
                        const TrainConfig& cfg);

}  // namespace neuropmd
