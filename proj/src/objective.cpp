// SPDX-License-Identifier: Apache-2.0
#include "neuropmd/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "neuropmd/error.hpp"

namespace neuropmd {

Eigen::VectorXd quadratic_penalty_gradient(const Eigen::VectorXd& weights, const Eigen::VectorXd& theta, double tau) {
  return 2.0 * tau * weights.cwiseProduct(theta);
}

namespace {

// Stream identifiers for derive_seed.
constexpr std::uint64_t kStreamBatch = 3;
constexpr std::uint64_t kStreamMc = 4;
constexpr std::uint64_t kStreamSplit = 6;
constexpr std::uint64_t kStreamValidation = 7;

Eigen::RowVectorXd ones_like(const Eigen::RowVectorXd& v) { return Eigen::RowVectorXd::Ones(v.size()); }

double parse_double(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !std::isfinite(value)) throw ConfigError("invalid " + what + " '" + text + "'");
  return value;
}

// Running per-component mean and sum of squared deviations.
struct Welford {
  Eigen::VectorXd mean, m2;
  std::size_t count = 0;

  explicit Welford(Eigen::Index dim) : mean(Eigen::VectorXd::Zero(dim)), m2(Eigen::VectorXd::Zero(dim)) {}

  void add(const Eigen::VectorXd& x) {
    ++count;
    const Eigen::VectorXd delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2.array() += delta.array() * (x - mean).array();
  }

  // Average over components of (scale * mean)^2 / max(scale^2 * var, 1e-12).
  double snr(double scale) const {
    const Eigen::ArrayXd var = (scale * scale) * m2.array() / static_cast<double>(count - 1);
    const Eigen::ArrayXd sig = (scale * mean.array()).square();
    return (sig / var.max(1e-12)).mean();
  }
};

}  // namespace

DensityHandle field_density(const NeuralField& field, const FieldParams& params) {
  return {field.manifold(), [field, params](const PointSet& p) { return field.density(params, p); }};
}

// ---------------------------------------------------------------------------
// Schedules

LearningRateSchedule LearningRateSchedule::fixed(double w) {
  LearningRateSchedule s;
  s.kind = Kind::fixed;
  s.rate = w;
  s.validate();
  return s;
}

LearningRateSchedule LearningRateSchedule::cyclic(double w_min, double w_max, int period) {
  LearningRateSchedule s;
  s.kind = Kind::cyclic_triangular;
  s.min_rate = w_min;
  s.max_rate = w_max;
  s.period = period;
  s.validate();
  return s;
}

LearningRateSchedule LearningRateSchedule::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  if (parts.size() == 2 && parts[0] == "fixed") return fixed(parse_double(parts[1], "learning rate"));
  if (parts.size() == 4 && parts[0] == "cyclic") {
    const double period = parse_double(parts[3], "cycle period");
    if (period != std::floor(period)) throw ConfigError("cycle period must be an integer");
    return cyclic(parse_double(parts[1], "minimum rate"), parse_double(parts[2], "maximum rate"),
                  static_cast<int>(period));
  }
  throw ConfigError("schedule must look like fixed:W or cyclic:WMIN:WMAX:PERIOD, got '" + text + "'");
}

std::string LearningRateSchedule::describe() const {
  std::ostringstream os;
  os.precision(17);
  if (kind == Kind::fixed)
    os << "fixed:" << rate;
  else
    os << "cyclic:" << min_rate << ':' << max_rate << ':' << period;
  return os.str();
}

void LearningRateSchedule::validate() const {
  if (kind == Kind::fixed) {
    if (!(rate >= 0.0) || !std::isfinite(rate)) throw ConfigError("learning rate must be finite and >= 0");
    return;
  }
  if (!(min_rate >= 0.0) || !std::isfinite(max_rate) || min_rate > max_rate)
    throw ConfigError("cyclic schedule needs 0 <= w_min <= w_max");
  if (period < 1) throw ConfigError("cycle period must be >= 1");
}

double LearningRateSchedule::at(int t) const {
  if (kind == Kind::fixed) return rate;
  const double phase = static_cast<double>(((t % period) + period) % period) / period;
  return min_rate + (max_rate - min_rate) * (1.0 - std::abs(2.0 * phase - 1.0));
}

void TrainConfig::validate() const {
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be finite and >= 0");
  if (q1 < 1 || q2 < 1) throw ConfigError("Monte Carlo sizes must be >= 1");
  if (epochs < 0) throw ConfigError("epoch count must be >= 0");
  if (!(fd_step > 0.0)) throw ConfigError("finite-difference step must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation fraction must lie in [0, 1)");
  if (validation_every < 0 || snr_every < 0 || patience < 0)
    throw ConfigError("validation_every, snr_every and patience must be >= 0");
  if (grad_clip < 0.0) throw ConfigError("gradient clip must be >= 0");
  schedule.validate();
}

// ---------------------------------------------------------------------------
// Gradient and objective estimates

GradEstimate gradient_estimate(const NeuralField& field, const FieldParams& params, const PointSet& batch,
                               const PointSet& mc1, const PointSet& mc2, double tau, PenaltyMethod method,
                               double fd_step) {
  if (batch.cols() == 0) throw ConfigError("data batch is empty");
  if (mc1.cols() == 0 || mc2.cols() == 0) throw ConfigError("Monte Carlo sets must be nonempty");
  const double vol = field.manifold().volume();
  FieldParams ga = FieldParams::zeros(field.config());
  FieldParams gb = ga;
  FieldParams gc = ga;
  const double inv_b = 1.0 / static_cast<double>(batch.cols());
  field.accumulate_gradient(params, batch, [inv_b](const Eigen::RowVectorXd& v) { return Eigen::RowVectorXd::Constant(v.size(), inv_b); }, ga);
  const double sb = vol / static_cast<double>(mc1.cols());
  field.accumulate_gradient(params, mc1, [sb](const Eigen::RowVectorXd& v) { return Eigen::RowVectorXd(sb * v.array().exp()); }, gb);
  if (tau > 0.0)
    field.accumulate_penalty_gradient(params, mc2, method, fd_step, tau * vol / static_cast<double>(mc2.cols()), gc);
  return {ga.flatten(), gb.flatten(), gc.flatten()};
}

ObjectiveTerms objective_terms(const NeuralField& field, const FieldParams& params, const PointSet& data,
                               const PointSet& mc1, const PointSet& mc2, double tau, PenaltyMethod method,
                               double fd_step) {
  if (data.cols() == 0) throw ConfigError("data set is empty");
  const double vol = field.manifold().volume();
  ObjectiveTerms t;
  t.data = field.forward(params, data).mean();
  t.normalization = vol * field.density(params, mc1).mean();
  if (tau > 0.0) t.penalty = tau * vol * field.laplacian(params, mc2, method, fd_step).array().square().mean();
  return t;
}

double objective_estimate(const NeuralField& field, const FieldParams& params, const PointSet& data,
                          const PointSet& mc1, const PointSet& mc2, double tau, PenaltyMethod method,
                          double fd_step) {
  return objective_terms(field, params, data, mc1, mc2, tau, method, fd_step).value();
}

SnrReport grad_snr(const NeuralField& field, const FieldParams& params, const PointSet& batch, const PointSet& mc1,
                   const PointSet& mc2, double tau, PenaltyMethod method, double fd_step) {
  if (batch.cols() < 2 || mc1.cols() < 2 || mc2.cols() < 2)
    throw ConfigError("gradient SNR needs at least two samples per term");
  const double vol = field.manifold().volume();
  const auto P = static_cast<Eigen::Index>(field.parameter_count());
  FieldParams g = FieldParams::zeros(field.config());
  auto single = [](const PointSet& pts, Eigen::Index j) { return PointSet(pts.col(j)); };

  Welford a(P), b(P), c(P);
  for (Eigen::Index j = 0; j < batch.cols(); ++j) {
    g.set_zero();
    field.accumulate_gradient(params, single(batch, j), ones_like, g);
    a.add(g.flatten());
  }
  for (Eigen::Index j = 0; j < mc1.cols(); ++j) {
    g.set_zero();
    field.accumulate_gradient(params, single(mc1, j), [](const Eigen::RowVectorXd& v) { return Eigen::RowVectorXd(v.array().exp()); }, g);
    b.add(g.flatten());
  }
  SnrReport r;
  r.snr_a = a.snr(1.0);
  r.snr_b = b.snr(vol);
  if (tau > 0.0) {
    for (Eigen::Index j = 0; j < mc2.cols(); ++j) {
      g.set_zero();
      field.accumulate_penalty_gradient(params, single(mc2, j), method, fd_step, 1.0, g);
      c.add(g.flatten());
    }
    r.snr_c = c.snr(tau * vol);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Training

std::pair<PointSet, PointSet> split_validation(const PointSet& data, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("validation fraction must lie in [0, 1)");
  const Eigen::Index n = data.cols();
  const auto n_val = static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(n)));
  if (n - n_val < 1) throw ConfigError("validation split leaves no training data");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng(derive_seed(seed, kStreamSplit));
  std::shuffle(perm.begin(), perm.end(), rng);
  // Keep the original order inside each part.
  std::sort(perm.begin(), perm.begin() + n_val);
  std::sort(perm.begin() + n_val, perm.end());
  const std::vector<Eigen::Index> val(perm.begin(), perm.begin() + n_val);
  const std::vector<Eigen::Index> tr(perm.begin() + n_val, perm.end());
  return {data(Eigen::all, tr), data(Eigen::all, val)};
}

TrainResult train(const NeuralField& field, FieldParams init, const PointSet& data, const PointSet& validation,
                  const TrainConfig& cfg, int start_epoch) {
  cfg.validate();
  const ProductManifold& spec = field.manifold();
  const Eigen::Index n = data.cols();
  if (n == 0) throw ConfigError("training data is empty");
  if (data.rows() != spec.storage_dim()) throw ConfigError("data dimension does not match the manifold");
  const auto b = static_cast<Eigen::Index>(cfg.batch_size == 0 ? static_cast<std::size_t>(n) : cfg.batch_size);
  if (b > n) throw ConfigError("batch size exceeds the number of training points");
  if (init.size() != field.parameter_count()) throw ConfigError("initial parameters do not match the field");
  const bool quadratic = cfg.quadratic_penalty.has_value();
  if (quadratic && static_cast<std::size_t>(cfg.quadratic_penalty->size()) != field.parameter_count())
    throw ConfigError("quadratic penalty weights do not match the parameter count");
  if (!quadratic && cfg.tau > 0.0 && field.config().activation != Activation::sine)
    throw ConfigError("Laplacian penalties require sine activations; use tau = 0 with relu");

  const double vol = spec.volume();
  const SamplingMode mode = default_sampling_mode(spec);
  const Eigen::MatrixXd features = field.encoding().encode_batch(data);
  const Eigen::Index steps = n / b;

  const bool track_validation = cfg.validation_every > 0 && validation.cols() > 0;
  Quadrature val_quad;
  if (track_validation) {
    Integrator integ = Integrator::parse(cfg.validation_integrator, derive_seed(cfg.seed, kStreamValidation));
    val_quad = integ.quadrature(spec);
  }

  TrainResult result;
  result.params = std::move(init);
  FieldParams& theta = result.params;
  FieldParams grad = FieldParams::zeros(field.config());
  std::optional<FieldParams> best_params;
  double best_criterion = std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  Eigen::MatrixXd batch_features(features.rows(), b);

  for (int i = 0; i < cfg.epochs; ++i) {
    const int epoch = start_epoch + i + 1;
    const double lr = cfg.schedule.at(epoch - 1);
    Rng batch_rng(derive_seed(cfg.seed, kStreamBatch, static_cast<std::uint64_t>(epoch)));
    Rng mc_rng(derive_seed(cfg.seed, kStreamMc, static_cast<std::uint64_t>(epoch)));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), batch_rng);

    HistoryRow row;
    row.epoch = epoch;
    row.lr = lr;
    double objective_sum = 0.0;

    for (Eigen::Index s = 0; s < steps; ++s) {
      for (Eigen::Index j = 0; j < b; ++j) batch_features.col(j) = features.col(perm[static_cast<std::size_t>(s * b + j)]);
      const PointSet mc1 = uniform_sample(spec, cfg.q1, mc_rng, mode);
      const PointSet mc2 = (!quadratic && cfg.tau > 0.0) ? uniform_sample(spec, cfg.q2, mc_rng, mode) : PointSet();

      if (s == 0 && cfg.snr_every > 0 && i % cfg.snr_every == 0 && b >= 2) {
        std::vector<Eigen::Index> idx(perm.begin() + s * b, perm.begin() + (s + 1) * b);
        const PointSet batch_pts = data(Eigen::all, idx);
        const PointSet mc2_snr = mc2.cols() >= 2 ? mc2 : uniform_sample(spec, std::max<std::size_t>(cfg.q2, 2), mc_rng, mode);
        row.snr = grad_snr(field, theta, batch_pts, mc1, mc2_snr, quadratic ? 0.0 : cfg.tau, cfg.penalty, cfg.fd_step);
      }

      grad.set_zero();
      const double inv_b = 1.0 / static_cast<double>(b);
      const Eigen::RowVectorXd v_data = field.accumulate_gradient_features(
          theta, batch_features, [inv_b](const Eigen::RowVectorXd& v) { return Eigen::RowVectorXd::Constant(v.size(), inv_b); }, grad);
      const double sb = vol / static_cast<double>(cfg.q1);
      const Eigen::RowVectorXd v_mc = field.accumulate_gradient(
          theta, mc1, [sb](const Eigen::RowVectorXd& v) { return Eigen::RowVectorXd(-sb * v.array().exp()); }, grad);
      double penalty = 0.0;
      if (quadratic) {
        const Eigen::VectorXd flat = theta.flatten();
        const Eigen::VectorXd& F = *cfg.quadratic_penalty;
        penalty = cfg.tau * flat.dot(F.cwiseProduct(flat));
        if (cfg.tau > 0.0 && !cfg.quadratic_proximal)
          grad.axpy(-1.0, FieldParams::unflatten(field.config(), quadratic_penalty_gradient(F, flat, cfg.tau)));
      } else if (cfg.tau > 0.0) {
        const double sc = cfg.tau * vol / static_cast<double>(cfg.q2);
        const Eigen::RowVectorXd lap = field.accumulate_penalty_gradient(theta, mc2, cfg.penalty, cfg.fd_step, -sc, grad);
        penalty = cfg.tau * vol * lap.array().square().mean();
      }
      const double objective = v_data.mean() - vol * v_mc.array().exp().mean() - penalty;
      if (!std::isfinite(objective) || !grad.all_finite())
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) +
                             " (non-finite objective or gradient); try a smaller learning rate or a larger tau");
      objective_sum += objective;

      double step = lr;
      if (cfg.grad_clip > 0.0) {
        const double norm = std::sqrt(grad.squared_norm());
        if (norm > cfg.grad_clip) step *= cfg.grad_clip / norm;
      }
      theta.axpy(step, grad);
      if (quadratic && cfg.quadratic_proximal && cfg.tau > 0.0) {
        // Exact minimizer of the penalty plus a proximity term; stable for any step.
        const Eigen::VectorXd shrink = (1.0 + 2.0 * step * cfg.tau * cfg.quadratic_penalty->array()).inverse();
        theta = FieldParams::unflatten(field.config(), theta.flatten().cwiseProduct(shrink));
      }
    }
    if (!theta.all_finite()) throw NumericalError("training diverged at epoch " + std::to_string(epoch));
    row.objective = objective_sum / static_cast<double>(steps);

    if (track_validation && ((i + 1) % cfg.validation_every == 0 || i + 1 == cfg.epochs)) {
      const double crit = ise_criterion(field_density(field, theta), validation, val_quad);
      if (!std::isfinite(crit)) throw NumericalError("validation criterion is not finite at epoch " + std::to_string(epoch));
      row.validation = crit;
      if (cfg.patience > 0) {
        if (crit < best_criterion) {
          best_criterion = crit;
          best_params = theta;
          since_best = 0;
        } else if (++since_best >= cfg.patience) {
          result.history.push_back(row);
          result.last_epoch = epoch;
          result.stopped_early = true;
          break;
        }
      }
    }
    result.history.push_back(row);
    result.last_epoch = epoch;
  }
  if (cfg.patience > 0 && best_params) result.params = std::move(*best_params);
  if (cfg.epochs == 0) result.last_epoch = start_epoch;
  return result;
}

TauSelection select_tau(const NeuralField& field, const PointSet& data, const std::vector<double>& taus,
                        const TrainConfig& cfg) {
  if (taus.empty()) throw ConfigError("tau grid is empty");
  auto [train_pts, val_pts] = split_validation(data, cfg.validation_fraction, cfg.seed);
  if (val_pts.cols() == 0) throw ConfigError("tau selection needs a nonempty validation split");
  const Quadrature quad =
      Integrator::parse(cfg.validation_integrator, derive_seed(cfg.seed, kStreamValidation)).quadrature(field.manifold());

  TauSelection sel;
  bool found = false;
  double best = std::numeric_limits<double>::infinity();
  for (double tau : taus) {
    TrainConfig c = cfg;
    c.tau = tau;
    TauCandidate cand;
    cand.tau = tau;
    try {
      TrainResult r = train(field, field.initial_params(), train_pts, val_pts, c);
      const double crit = ise_criterion(field_density(field, r.params), val_pts, quad);
      if (!std::isfinite(crit)) throw NumericalError("validation criterion is not finite");
      cand.criterion = crit;
      if (!found || crit < best || (crit == best && tau > sel.tau)) {
        found = true;
        best = crit;
        sel.tau = tau;
        sel.best = std::move(r);
      }
    } catch (const NumericalError& e) {
      cand.error = e.what();
    }
    sel.candidates.push_back(std::move(cand));
  }
  if (!found) throw NumericalError("training failed for every tau in the grid");
  return sel;
}

}  // namespace neuropmd
