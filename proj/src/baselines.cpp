// SPDX-License-Identifier: Apache-2.0
#include "neuropmd/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "neuropmd/error.hpp"

namespace neuropmd {

namespace {

constexpr Eigen::Index kQueryChunk = 256;

// Power series sum_k (x^2/4)^k / (k!)^2, accurate for moderate x.
double i0_series(double x) {
  const double q = 0.25 * x * x;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 500; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

// Asymptotic expansion of I0(x) e^{-x} sqrt(2 pi x) for large x.
double i0_asymptotic_scaled(double x) {
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 200; ++k) {
    const double next = term * (2.0 * k - 1.0) * (2.0 * k - 1.0) / (8.0 * k * x);
    if (next > term) break;
    term = next;
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum / std::sqrt(kTwoPi * x);
}

}  // namespace

double bessel_i0(double x) {
  const double ax = std::abs(x);
  if (ax <= 20.0) return i0_series(ax);
  return i0_asymptotic_scaled(ax) * std::exp(ax);
}

double bessel_i0_scaled(double x) {
  const double ax = std::abs(x);
  if (ax <= 20.0) return i0_series(ax) * std::exp(-ax);
  return i0_asymptotic_scaled(ax);
}

// ---------------------------------------------------------------------------
// KDE

VonMisesKde::VonMisesKde(PointSet data, double kappa) : data_(std::move(data)), kappa_(kappa) {
  if (data_.cols() == 0 || data_.rows() == 0) throw ConfigError("KDE needs a nonempty data set");
  if (!(kappa_ >= 0.0) || !std::isfinite(kappa_)) throw ConfigError("KDE concentration must be finite and >= 0");
  cos_ = data_.array().cos();
  sin_ = data_.array().sin();
  log_norm_ = -static_cast<double>(data_.rows()) * std::log(kTwoPi * bessel_i0_scaled(kappa_));
}

Eigen::RowVectorXd VonMisesKde::density(const PointSet& points) const {
  if (points.rows() != data_.rows()) throw ConfigError("query dimension does not match the KDE data");
  const auto D = static_cast<double>(data_.rows());
  const double inv_n = 1.0 / static_cast<double>(data_.cols());
  Eigen::RowVectorXd out(points.cols());
  if (kappa_ == 0.0) return out.setConstant(1.0 / manifold().volume());
  for (Eigen::Index s = 0; s < points.cols(); s += kQueryChunk) {
    const Eigen::Index len = std::min(kQueryChunk, points.cols() - s);
    const Eigen::MatrixXd qc = points.middleCols(s, len).array().cos();
    const Eigen::MatrixXd qs = points.middleCols(s, len).array().sin();
    // sum_d cos(x_d - X_d) for every (data, query) pair.
    Eigen::MatrixXd c = cos_.transpose() * qc;
    c.noalias() += sin_.transpose() * qs;
    const Eigen::ArrayXXd k = (kappa_ * (c.array() - D) + log_norm_).exp();
    out.segment(s, len) = k.colwise().sum().matrix() * inv_n;
  }
  return out;
}

double VonMisesKde::density(const Eigen::VectorXd& point) const {
  PointSet p(point.size(), 1);
  p.col(0) = point;
  return density(p)(0);
}

DensityHandle VonMisesKde::handle() const {
  return {manifold(), [kde = *this](const PointSet& p) { return kde.density(p); }};
}

KappaSelection kde_select_kappa(const PointSet& data, const std::vector<double>& kappas, int folds,
                                std::uint64_t seed, const Integrator& integ) {
  if (kappas.empty()) throw ConfigError("kappa grid is empty");
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  const Eigen::Index n = data.cols();
  if (n < folds) throw ConfigError("fewer data points than folds");
  const ProductManifold spec = ProductManifold::torus(static_cast<int>(data.rows()));
  const Quadrature quad = integ.quadrature(spec);

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<PointSet> fit_sets, held_sets;
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> fit, held;
    for (std::size_t i = 0; i < perm.size(); ++i) (static_cast<int>(i % folds) == f ? held : fit).push_back(perm[i]);
    std::sort(fit.begin(), fit.end());
    std::sort(held.begin(), held.end());
    fit_sets.push_back(data(Eigen::all, fit));
    held_sets.push_back(data(Eigen::all, held));
  }

  KappaSelection sel;
  sel.grid = kappas;
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  for (double kappa : kappas) {
    double total = 0.0;
    for (int f = 0; f < folds; ++f) {
      const VonMisesKde kde(fit_sets[static_cast<std::size_t>(f)], kappa);
      total += ise_criterion(kde.handle(), held_sets[static_cast<std::size_t>(f)], quad);
    }
    const double score = total / folds;
    sel.scores.push_back(score);
    if (!found || score < best || (score == best && kappa < sel.kappa)) {
      found = true;
      best = score;
      sel.kappa = kappa;
    }
  }
  return sel;
}

// ---------------------------------------------------------------------------
// Tensor-product basis

Eigen::VectorXd tpb_penalty_weights(const Encoding& enc, int exponent) {
  if (exponent != 1 && exponent != 2) throw ConfigError("penalty exponent must be 1 or 2");
  Eigen::VectorXd F(static_cast<Eigen::Index>(enc.size()));
  for (std::size_t k = 0; k < enc.size(); ++k) {
    const double lam = enc.eigenvalues()[k];
    F(static_cast<Eigen::Index>(k)) = exponent == 2 ? lam * lam : lam;
  }
  return F;
}

NeuralField tpb_field(const ProductManifold& spec, const std::vector<int>& max_freq, std::uint64_t init_seed) {
  Encoding enc = full_tensor_encoding(spec, max_freq);
  const std::size_t K = enc.size();
  return NeuralField(std::move(enc), make_field_config(K, {}, Activation::sine, init_seed));
}

TpbModel tpb_fit(const PointSet& data, const ProductManifold& spec, const std::vector<int>& max_freq,
                 const TrainConfig& cfg, std::uint64_t init_seed, int penalty_exponent,
                 std::vector<HistoryRow>* history) {
  TpbModel model{tpb_field(spec, max_freq, init_seed), {}, {}};
  model.penalty_weights = tpb_penalty_weights(model.field.encoding(), penalty_exponent);
  TrainConfig c = cfg;
  c.quadratic_penalty = model.penalty_weights;
  TrainResult r = train(model.field, model.field.initial_params(), data, PointSet(), c);
  model.params = std::move(r.params);
  if (history) *history = std::move(r.history);
  return model;
}

}  // namespace neuropmd
