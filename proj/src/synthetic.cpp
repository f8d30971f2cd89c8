// SPDX-License-Identifier: Apache-2.0
#include "neuropmd/synthetic.hpp"

#include <cmath>
#include <numeric>

#include "neuropmd/error.hpp"

namespace neuropmd {

Eigen::MatrixXd make_covariance(int D, double anisotropy_factor, Rng& rng) {
  if (D < 1) throw ConfigError("covariance dimension must be >= 1");
  if (!(anisotropy_factor >= 1.0) || !std::isfinite(anisotropy_factor))
    throw ConfigError("anisotropy factor must be >= 1");
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd G(D, D);
  for (Eigen::Index c = 0; c < D; ++c)
    for (Eigen::Index r = 0; r < D; ++r) G(r, c) = gauss(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(D, D);
  const Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < D; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);

  Eigen::VectorXd eig(D);
  const double top = std::log10(anisotropy_factor);
  for (int j = 0; j < D; ++j) eig(j) = D == 1 ? 1.0 : std::pow(10.0, top * j / (D - 1));
  if (D == 1) eig(0) = 1.0;
  Eigen::MatrixXd C = Q * eig.asDiagonal() * Q.transpose();
  C = 0.5 * (C + C.transpose());
  return C / C.cwiseAbs().maxCoeff();
}

WrappedNormalMixture::WrappedNormalMixture(std::vector<MixtureComponent> components, int wrap_window)
    : components_(std::move(components)), wrap_window_(wrap_window) {
  if (components_.empty()) throw ConfigError("mixture needs at least one component");
  if (wrap_window_ < 1) throw ConfigError("wrap window must be >= 1");
  dim_ = static_cast<int>(components_.front().mean.size());
  if (dim_ < 1) throw ConfigError("mixture dimension must be >= 1");
  double total = 0.0;
  for (auto& c : components_) {
    if (c.mean.size() != dim_ || c.covariance.rows() != dim_ || c.covariance.cols() != dim_)
      throw ConfigError("mixture component shapes are inconsistent");
    if (!(c.weight > 0.0)) throw ConfigError("mixture weights must be positive");
    if (!c.covariance.isApprox(c.covariance.transpose(), 1e-12))
      throw ConfigError("mixture covariance must be symmetric");
    total += c.weight;
    for (Eigen::Index d = 0; d < dim_; ++d) c.mean(d) = wrap_angle(c.mean(d));
    Eigen::LLT<Eigen::MatrixXd> llt(c.covariance);
    if (llt.info() != Eigen::Success) throw ConfigError("mixture covariance must be positive definite");
    Factor f;
    f.chol = llt.matrixL();
    f.chol_inv = f.chol.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(dim_, dim_));
    f.log_norm = -0.5 * dim_ * std::log(kTwoPi) - f.chol.diagonal().array().log().sum();
    factors_.push_back(std::move(f));
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("mixture weights must sum to 1");

  // Every lattice shift 2 pi k with k in {-W..W}^D.
  const int side = 2 * wrap_window_ + 1;
  std::size_t count = 1;
  for (int d = 0; d < dim_; ++d) count *= static_cast<std::size_t>(side);
  shifts_.reserve(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    Eigen::VectorXd s(dim_);
    std::size_t rest = idx;
    for (int d = dim_ - 1; d >= 0; --d) {
      s(d) = kTwoPi * (static_cast<int>(rest % side) - wrap_window_);
      rest /= side;
    }
    shifts_.push_back(std::move(s));
  }
}

double WrappedNormalMixture::density(const Eigen::VectorXd& x) const {
  if (x.size() != dim_) throw ConfigError("point dimension does not match the mixture");
  double total = 0.0;
  for (std::size_t c = 0; c < components_.size(); ++c) {
    const Factor& f = factors_[c];
    const Eigen::VectorXd base = x - components_[c].mean;
    double acc = 0.0;
    for (const auto& s : shifts_) {
      const double q = (f.chol_inv * (base + s)).squaredNorm();
      acc += std::exp(f.log_norm - 0.5 * q);
    }
    total += components_[c].weight * acc;
  }
  return total;
}

Eigen::RowVectorXd WrappedNormalMixture::density(const PointSet& points) const {
  Eigen::RowVectorXd out(points.cols());
  for (Eigen::Index j = 0; j < points.cols(); ++j) out(j) = density(Eigen::VectorXd(points.col(j)));
  return out;
}

PointSet WrappedNormalMixture::sample(std::size_t n, Rng& rng) const {
  std::vector<double> w;
  for (const auto& c : components_) w.push_back(c.weight);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  std::normal_distribution<double> gauss;
  PointSet out(dim_, static_cast<Eigen::Index>(n));
  Eigen::VectorXd z(dim_);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t c = pick(rng);
    for (Eigen::Index d = 0; d < dim_; ++d) z(d) = gauss(rng);
    const Eigen::VectorXd y = components_[c].mean + factors_[c].chol * z;
    for (Eigen::Index d = 0; d < dim_; ++d) out(d, static_cast<Eigen::Index>(j)) = wrap_angle(y(d));
  }
  return out;
}

WrappedNormalMixture mixture_preset(const std::string& name, Rng& rng) {
  std::vector<std::vector<double>> means;
  std::vector<double> factors;
  if (name == "t2_paper") {
    means = {{kPi, kPi / 2}, {kPi, 5 * kPi / 3}, {kPi / 4, kPi}};
    factors = {100, 100, 20};
  } else if (name == "t4_paper") {
    means = {{0.5, 0.5, 0.5, 0.5},
             {kPi, kPi, kPi, kPi},
             {kPi / 2, 3 * kPi / 2, 3 * kPi / 2, kPi / 2},
             {3 * kPi / 2, kPi / 2, kPi / 2, 3 * kPi / 2},
             {kPi / 4, kPi / 4, 7 * kPi / 4, 7 * kPi / 4}};
    factors = {100, 100, 20, 50, 75};
  } else {
    throw ConfigError("unknown mixture preset '" + name + "'");
  }
  std::vector<MixtureComponent> comps;
  const double weight = 1.0 / static_cast<double>(means.size());
  for (std::size_t c = 0; c < means.size(); ++c) {
    MixtureComponent mc;
    mc.mean = Eigen::Map<const Eigen::VectorXd>(means[c].data(), static_cast<Eigen::Index>(means[c].size()));
    mc.covariance = make_covariance(static_cast<int>(means[c].size()), factors[c], rng);
    mc.weight = weight;
    comps.push_back(std::move(mc));
  }
  return WrappedNormalMixture(std::move(comps));
}

}  // namespace neuropmd
