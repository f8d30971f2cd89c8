// SPDX-License-Identifier: Apache-2.0
#include "neuropmd/field.hpp"

#include <algorithm>
#include <cmath>

#include "neuropmd/error.hpp"

namespace neuropmd {

namespace {

constexpr Eigen::Index kChunk = 256;

Eigen::MatrixXd relu(const Eigen::MatrixXd& u) { return u.cwiseMax(0.0); }

Eigen::MatrixXd relu_grad(const Eigen::MatrixXd& u) {
  return (u.array() > 0.0).cast<double>().matrix();
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::sine ? "sine" : "relu"; }

Activation parse_activation(const std::string& name) {
  if (name == "sine") return Activation::sine;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(PenaltyMethod m) { return m == PenaltyMethod::intrinsic ? "intrinsic" : "extrinsic"; }

PenaltyMethod parse_penalty_method(const std::string& name) {
  if (name == "intrinsic") return PenaltyMethod::intrinsic;
  if (name == "extrinsic") return PenaltyMethod::extrinsic;
  throw ConfigError("unknown penalty method '" + name + "'");
}

FieldConfig make_field_config(std::size_t K, const std::vector<int>& hidden, Activation activation,
                              std::uint64_t init_seed) {
  FieldConfig cfg;
  cfg.widths.push_back(static_cast<int>(K));
  cfg.widths.insert(cfg.widths.end(), hidden.begin(), hidden.end());
  cfg.widths.push_back(1);
  cfg.activation = activation;
  cfg.init_seed = init_seed;
  return cfg;
}

// ---------------------------------------------------------------------------
// FieldParams

FieldParams FieldParams::zeros(const FieldConfig& cfg) {
  const int L = cfg.depth();
  if (L < 1) throw ConfigError("field depth must be >= 1");
  if (cfg.widths.back() != 1) throw ConfigError("final layer must have output dimension 1");
  FieldParams p;
  for (int l = 1; l <= L; ++l) {
    if (cfg.widths[static_cast<std::size_t>(l)] < 1) throw ConfigError("layer widths must be >= 1");
    p.weights.push_back(Eigen::MatrixXd::Zero(cfg.widths[static_cast<std::size_t>(l)],
                                              cfg.widths[static_cast<std::size_t>(l - 1)]));
    if (l < L) p.biases.push_back(Eigen::VectorXd::Zero(cfg.widths[static_cast<std::size_t>(l)]));
  }
  return p;
}

std::size_t FieldParams::size() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
  for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
  return n;
}

Eigen::VectorXd FieldParams::flatten() const {
  Eigen::VectorXd theta(static_cast<Eigen::Index>(size()));
  Eigen::Index pos = 0;
  for (const auto& w : weights) {
    theta.segment(pos, w.size()) = Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
    pos += w.size();
  }
  for (const auto& b : biases) {
    theta.segment(pos, b.size()) = b;
    pos += b.size();
  }
  return theta;
}

FieldParams FieldParams::unflatten(const FieldConfig& cfg, const Eigen::VectorXd& theta) {
  FieldParams p = zeros(cfg);
  if (static_cast<std::size_t>(theta.size()) != p.size())
    throw ConfigError("parameter vector has length " + std::to_string(theta.size()) + ", expected " +
                      std::to_string(p.size()));
  Eigen::Index pos = 0;
  for (auto& w : p.weights) {
    Eigen::Map<Eigen::VectorXd>(w.data(), w.size()) = theta.segment(pos, w.size());
    pos += w.size();
  }
  for (auto& b : p.biases) {
    b = theta.segment(pos, b.size());
    pos += b.size();
  }
  return p;
}

void FieldParams::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

FieldParams& FieldParams::axpy(double alpha, const FieldParams& x) {
  for (std::size_t l = 0; l < weights.size(); ++l) weights[l] += alpha * x.weights[l];
  for (std::size_t l = 0; l < biases.size(); ++l) biases[l] += alpha * x.biases[l];
  return *this;
}

FieldParams& FieldParams::scale(double alpha) {
  for (auto& w : weights) w *= alpha;
  for (auto& b : biases) b *= alpha;
  return *this;
}

double FieldParams::squared_norm() const {
  double s = 0.0;
  for (const auto& w : weights) s += w.squaredNorm();
  for (const auto& b : biases) s += b.squaredNorm();
  return s;
}

bool FieldParams::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

FieldParams init_params(const FieldConfig& cfg, Rng& rng, double domain_volume) {
  FieldParams p = FieldParams::zeros(cfg);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const double fan_in = cfg.widths[l];
    const double bound = l == 0 ? std::sqrt(3.0 * domain_volume / fan_in) : std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> unif(-bound, bound);
    auto& w = p.weights[l];
    // Column-major fill keeps the draw order aligned with the flat layout.
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = unif(rng);
  }
  return p;
}

// ---------------------------------------------------------------------------
// NeuralField

struct NeuralField::Trace {
  std::vector<Eigen::MatrixXd> h;  // h[0] features, h[l] hidden outputs
  std::vector<Eigen::MatrixXd> u;  // u[l-1] pre-activation of layer l
  Eigen::RowVectorXd v;
};

struct NeuralField::JetTrace {
  // Inputs to layer l (index l-1): value, per-axis first and pure second derivatives.
  std::vector<Eigen::MatrixXd> in_v;
  std::vector<std::vector<Eigen::MatrixXd>> in_d1, in_d2;
  // Per hidden layer: sin/cos of the pre-activation and its derivatives.
  std::vector<Eigen::MatrixXd> sin_u, cos_u;
  std::vector<std::vector<Eigen::MatrixXd>> du, d2u;
  Eigen::RowVectorXd v;
  Eigen::RowVectorXd lap;
};

NeuralField::NeuralField(Encoding encoding, FieldConfig config)
    : encoding_(std::move(encoding)), config_(std::move(config)) {
  if (config_.depth() < 1) throw ConfigError("field depth must be >= 1");
  if (static_cast<std::size_t>(config_.widths.front()) != encoding_.size())
    throw ConfigError("first width must equal the encoding size K");
  if (config_.widths.back() != 1) throw ConfigError("final layer must have output dimension 1");
  for (int w : config_.widths)
    if (w < 1) throw ConfigError("layer widths must be >= 1");
}

std::size_t NeuralField::parameter_count() const { return FieldParams::zeros(config_).size(); }

FieldParams NeuralField::initial_params() const {
  Rng rng(config_.init_seed);
  return init_params(config_, rng, manifold().volume());
}

void NeuralField::require_sine(const char* what) const {
  if (config_.activation != Activation::sine)
    throw ConfigError(std::string(what) + " requires sine activations (second-derivative penalties are disabled for relu)");
}

NeuralField::Trace NeuralField::trace(const FieldParams& params, Eigen::MatrixXd features) const {
  const int L = config_.depth();
  Trace t;
  t.h.reserve(static_cast<std::size_t>(L));
  t.h.push_back(std::move(features));
  for (int l = 1; l < L; ++l) {
    Eigen::MatrixXd u = params.weights[static_cast<std::size_t>(l - 1)] * t.h.back();
    u.colwise() += params.biases[static_cast<std::size_t>(l - 1)];
    t.h.push_back(config_.activation == Activation::sine ? Eigen::MatrixXd(u.array().sin()) : relu(u));
    t.u.push_back(std::move(u));
  }
  t.v = params.weights.back() * t.h.back();
  return t;
}

void NeuralField::backward(const FieldParams& params, const Trace& t, const Eigen::RowVectorXd& seed,
                           FieldParams& grad) const {
  const int L = config_.depth();
  grad.weights.back().noalias() += seed * t.h.back().transpose();
  if (L == 1) return;
  Eigen::MatrixXd delta = params.weights.back().transpose() * seed;
  for (int l = L - 1; l >= 1; --l) {
    const auto li = static_cast<std::size_t>(l - 1);
    const Eigen::MatrixXd& u = t.u[li];
    if (config_.activation == Activation::sine)
      delta.array() *= u.array().cos();
    else
      delta.array() *= relu_grad(u).array();
    grad.weights[li].noalias() += delta * t.h[li].transpose();
    grad.biases[li] += delta.rowwise().sum();
    if (l > 1) delta = params.weights[li].transpose() * delta;
  }
}

Eigen::RowVectorXd NeuralField::forward_features(const FieldParams& params, const Eigen::MatrixXd& features) const {
  return trace(params, features).v;
}

Eigen::RowVectorXd NeuralField::forward(const FieldParams& params, const PointSet& points) const {
  Eigen::RowVectorXd v(points.cols());
  for (Eigen::Index s = 0; s < points.cols(); s += kChunk) {
    const Eigen::Index len = std::min(kChunk, points.cols() - s);
    v.segment(s, len) = trace(params, encoding_.encode_batch(points.middleCols(s, len))).v;
  }
  return v;
}

double NeuralField::forward(const FieldParams& params, const Eigen::VectorXd& point) const {
  PointSet p(point.size(), 1);
  p.col(0) = point;
  return forward(params, p)(0);
}

Eigen::RowVectorXd NeuralField::density(const FieldParams& params, const PointSet& points) const {
  return forward(params, points).array().exp();
}

Eigen::RowVectorXd NeuralField::accumulate_gradient(
    const FieldParams& params, const PointSet& points,
    const std::function<Eigen::RowVectorXd(const Eigen::RowVectorXd&)>& seed, FieldParams& grad) const {
  Eigen::RowVectorXd v(points.cols());
  for (Eigen::Index s = 0; s < points.cols(); s += kChunk) {
    const Eigen::Index len = std::min(kChunk, points.cols() - s);
    Trace t = trace(params, encoding_.encode_batch(points.middleCols(s, len)));
    backward(params, t, seed(t.v), grad);
    v.segment(s, len) = t.v;
  }
  return v;
}

Eigen::RowVectorXd NeuralField::accumulate_gradient_features(
    const FieldParams& params, const Eigen::MatrixXd& features,
    const std::function<Eigen::RowVectorXd(const Eigen::RowVectorXd&)>& seed, FieldParams& grad) const {
  Eigen::RowVectorXd v(features.cols());
  for (Eigen::Index s = 0; s < features.cols(); s += kChunk) {
    const Eigen::Index len = std::min(kChunk, features.cols() - s);
    Trace t = trace(params, features.middleCols(s, len));
    backward(params, t, seed(t.v), grad);
    v.segment(s, len) = t.v;
  }
  return v;
}

Eigen::VectorXd NeuralField::param_gradient(const FieldParams& params, const Eigen::VectorXd& point) const {
  PointSet p(point.size(), 1);
  p.col(0) = point;
  FieldParams g = FieldParams::zeros(config_);
  accumulate_gradient(params, p, [](const Eigen::RowVectorXd& v) { return Eigen::RowVectorXd::Ones(v.size()); }, g);
  return g.flatten();
}

Eigen::VectorXd NeuralField::density_param_gradient(const FieldParams& params, const Eigen::VectorXd& point) const {
  PointSet p(point.size(), 1);
  p.col(0) = point;
  FieldParams g = FieldParams::zeros(config_);
  accumulate_gradient(params, p, [](const Eigen::RowVectorXd& v) { return Eigen::RowVectorXd(v.array().exp()); }, g);
  return g.flatten();
}

// ---------------------------------------------------------------------------
// Intrinsic jets

NeuralField::JetTrace NeuralField::jet_trace(const FieldParams& params, EncodingJets jets) const {
  const int L = config_.depth();
  const std::size_t dims = jets.d1.size();
  JetTrace t;
  t.in_v.push_back(std::move(jets.value));
  t.in_d1.push_back(std::move(jets.d1));
  t.in_d2.push_back(std::move(jets.d2));
  for (int l = 1; l < L; ++l) {
    const auto li = static_cast<std::size_t>(l - 1);
    const Eigen::MatrixXd& W = params.weights[li];
    Eigen::MatrixXd u = W * t.in_v[li];
    u.colwise() += params.biases[li];
    std::vector<Eigen::MatrixXd> du(dims), d2u(dims);
    for (std::size_t d = 0; d < dims; ++d) {
      du[d].noalias() = W * t.in_d1[li][d];
      d2u[d].noalias() = W * t.in_d2[li][d];
    }
    Eigen::MatrixXd su = u.array().sin();
    Eigen::MatrixXd cu = u.array().cos();
    std::vector<Eigen::MatrixXd> out_d1(dims), out_d2(dims);
    for (std::size_t d = 0; d < dims; ++d) {
      out_d1[d] = cu.array() * du[d].array();
      out_d2[d] = cu.array() * d2u[d].array() - su.array() * du[d].array().square();
    }
    t.in_v.push_back(su);
    t.in_d1.push_back(std::move(out_d1));
    t.in_d2.push_back(std::move(out_d2));
    t.sin_u.push_back(std::move(su));
    t.cos_u.push_back(std::move(cu));
    t.du.push_back(std::move(du));
    t.d2u.push_back(std::move(d2u));
  }
  const auto top = static_cast<std::size_t>(L - 1);
  Eigen::MatrixXd lap_in = t.in_d2[top][0];
  for (std::size_t d = 1; d < dims; ++d) lap_in += t.in_d2[top][d];
  t.v = params.weights.back() * t.in_v[top];
  t.lap = params.weights.back() * lap_in;
  return t;
}

void NeuralField::jet_backward(const FieldParams& params, const JetTrace& t, const Eigen::RowVectorXd& seed,
                               FieldParams& grad) const {
  const int L = config_.depth();
  const std::size_t dims = t.in_d1.front().size();
  const auto top = static_cast<std::size_t>(L - 1);
  {
    Eigen::MatrixXd lap_in = t.in_d2[top][0];
    for (std::size_t d = 1; d < dims; ++d) lap_in += t.in_d2[top][d];
    grad.weights.back().noalias() += seed * lap_in.transpose();
  }
  if (L == 1) return;

  // Adjoints of the inputs to the current layer (value, d1, d2).
  const Eigen::MatrixXd s_top = params.weights.back().transpose() * seed;
  Eigen::MatrixXd bar_v = Eigen::MatrixXd::Zero(s_top.rows(), s_top.cols());
  std::vector<Eigen::MatrixXd> bar_g(dims, bar_v);
  std::vector<Eigen::MatrixXd> bar_s(dims, s_top);

  for (int l = L - 1; l >= 1; --l) {
    const auto li = static_cast<std::size_t>(l - 1);
    const auto& su = t.sin_u[li].array();
    const auto& cu = t.cos_u[li].array();
    Eigen::MatrixXd bar_u = (cu * bar_v.array()).matrix();
    std::vector<Eigen::MatrixXd> bar_du(dims), bar_d2u(dims);
    for (std::size_t d = 0; d < dims; ++d) {
      const auto& du = t.du[li][d].array();
      const auto& d2u = t.d2u[li][d].array();
      const auto& g = bar_g[d].array();
      const auto& s = bar_s[d].array();
      bar_u.array() += -su * du * g + (-su * d2u - cu * du.square()) * s;
      bar_du[d] = cu * g - 2.0 * su * du * s;
      bar_d2u[d] = cu * s;
    }
    auto& gw = grad.weights[li];
    gw.noalias() += bar_u * t.in_v[li].transpose();
    for (std::size_t d = 0; d < dims; ++d) {
      gw.noalias() += bar_du[d] * t.in_d1[li][d].transpose();
      gw.noalias() += bar_d2u[d] * t.in_d2[li][d].transpose();
    }
    grad.biases[li] += bar_u.rowwise().sum();
    if (l > 1) {
      const Eigen::MatrixXd& W = params.weights[li];
      bar_v.noalias() = W.transpose() * bar_u;
      for (std::size_t d = 0; d < dims; ++d) {
        bar_g[d].noalias() = W.transpose() * bar_du[d];
        bar_s[d].noalias() = W.transpose() * bar_d2u[d];
      }
    }
  }
}

Eigen::RowVectorXd NeuralField::laplacian_intrinsic(const FieldParams& params, const PointSet& points) const {
  if (!manifold().is_torus()) throw ConfigError("the intrinsic Laplacian is only available on tori");
  require_sine("laplacian_intrinsic");
  Eigen::RowVectorXd lap(points.cols());
  for (Eigen::Index s = 0; s < points.cols(); s += kChunk) {
    const Eigen::Index len = std::min(kChunk, points.cols() - s);
    lap.segment(s, len) = jet_trace(params, encoding_.encode_jets(points.middleCols(s, len))).lap;
  }
  return lap;
}

// ---------------------------------------------------------------------------
// Extrinsic stencil

void NeuralField::extrinsic_stencil(const PointSet& points, double h, PointSet& nodes,
                                    std::vector<double>& coeffs, std::vector<Eigen::Index>& offsets) const {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
  const ProductManifold& spec = manifold();
  const Eigen::MatrixXd ambient = spec.to_ambient(points);
  const Eigen::Index M = ambient.rows();

  Eigen::Index per_point = 1;
  for (std::size_t d = 0; d < spec.size(); ++d) {
    const Eigen::Index m = spec[d].ambient_dim();
    per_point += 2 * m + 2 * m * (m - 1);
  }
  const Eigen::Index n = points.cols();
  Eigen::MatrixXd amb_nodes(M, n * per_point);
  coeffs.assign(static_cast<std::size_t>(n * per_point), 0.0);
  offsets.resize(static_cast<std::size_t>(n + 1));

  const double inv_h2 = 1.0 / (h * h);
  const double inv_4h2 = 0.25 * inv_h2;
  Eigen::Index col = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    offsets[static_cast<std::size_t>(j)] = col;
    const Eigen::VectorXd x = ambient.col(j);
    const Eigen::Index center = col;
    amb_nodes.col(col++) = x;
    auto add = [&](const Eigen::VectorXd& y, double c) {
      amb_nodes.col(col) = y;
      coeffs[static_cast<std::size_t>(col)] = c;
      ++col;
    };
    for (std::size_t d = 0; d < spec.size(); ++d) {
      const Eigen::Index ao = spec.ambient_offset(d);
      const Eigen::Index m = spec[d].ambient_dim();
      const Eigen::MatrixXd P = tangent_projection(spec[d], x.segment(ao, m));
      // sum_i P_i. H P_i.^T = sum_{a,b} Q_ab H_ab with Q = P^T P.
      const Eigen::MatrixXd Q = P.transpose() * P;
      for (Eigen::Index a = 0; a < m; ++a) {
        Eigen::VectorXd y = x;
        y(ao + a) += h;
        add(y, Q(a, a) * inv_h2);
        y(ao + a) -= 2.0 * h;
        add(y, Q(a, a) * inv_h2);
        coeffs[static_cast<std::size_t>(center)] -= 2.0 * Q(a, a) * inv_h2;
      }
      for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = a + 1; b < m; ++b) {
          const double c = 2.0 * Q(a, b) * inv_4h2;
          for (int sa : {1, -1}) {
            for (int sb : {1, -1}) {
              Eigen::VectorXd y = x;
              y(ao + a) += sa * h;
              y(ao + b) += sb * h;
              add(y, sa * sb * c);
            }
          }
        }
      }
    }
  }
  offsets[static_cast<std::size_t>(n)] = col;
  nodes = spec.from_ambient(amb_nodes);
}

Eigen::RowVectorXd NeuralField::laplacian_extrinsic(const FieldParams& params, const PointSet& points,
                                                    double h) const {
  require_sine("laplacian_extrinsic");
  Eigen::RowVectorXd lap(points.cols());
  const Eigen::Index step = std::max<Eigen::Index>(1, kChunk / 16);
  for (Eigen::Index s = 0; s < points.cols(); s += step) {
    const Eigen::Index len = std::min(step, points.cols() - s);
    PointSet nodes;
    std::vector<double> coeffs;
    std::vector<Eigen::Index> offsets;
    extrinsic_stencil(points.middleCols(s, len), h, nodes, coeffs, offsets);
    const Eigen::RowVectorXd v = forward_features(params, encoding_.encode_batch(nodes));
    for (Eigen::Index j = 0; j < len; ++j) {
      double acc = 0.0;
      for (Eigen::Index c = offsets[static_cast<std::size_t>(j)]; c < offsets[static_cast<std::size_t>(j + 1)]; ++c)
        acc += coeffs[static_cast<std::size_t>(c)] * v(c);
      lap(s + j) = acc;
    }
  }
  return lap;
}

Eigen::RowVectorXd NeuralField::laplacian(const FieldParams& params, const PointSet& points, PenaltyMethod method,
                                          double h) const {
  return method == PenaltyMethod::intrinsic ? laplacian_intrinsic(params, points)
                                            : laplacian_extrinsic(params, points, h);
}

Eigen::RowVectorXd NeuralField::accumulate_penalty_gradient(const FieldParams& params, const PointSet& points,
                                                            PenaltyMethod method, double h, double coeff,
                                                            FieldParams& grad) const {
  require_sine("penalty gradient");
  Eigen::RowVectorXd lap(points.cols());
  if (method == PenaltyMethod::intrinsic) {
    if (!manifold().is_torus()) throw ConfigError("the intrinsic Laplacian is only available on tori");
    for (Eigen::Index s = 0; s < points.cols(); s += kChunk) {
      const Eigen::Index len = std::min(kChunk, points.cols() - s);
      JetTrace t = jet_trace(params, encoding_.encode_jets(points.middleCols(s, len)));
      jet_backward(params, t, 2.0 * coeff * t.lap, grad);
      lap.segment(s, len) = t.lap;
    }
    return lap;
  }
  const Eigen::Index step = std::max<Eigen::Index>(1, kChunk / 16);
  for (Eigen::Index s = 0; s < points.cols(); s += step) {
    const Eigen::Index len = std::min(step, points.cols() - s);
    PointSet nodes;
    std::vector<double> coeffs;
    std::vector<Eigen::Index> offsets;
    extrinsic_stencil(points.middleCols(s, len), h, nodes, coeffs, offsets);
    Trace t = trace(params, encoding_.encode_batch(nodes));
    Eigen::RowVectorXd node_seed(t.v.size());
    for (Eigen::Index j = 0; j < len; ++j) {
      const auto b = offsets[static_cast<std::size_t>(j)];
      const auto e = offsets[static_cast<std::size_t>(j + 1)];
      double acc = 0.0;
      for (Eigen::Index c = b; c < e; ++c) acc += coeffs[static_cast<std::size_t>(c)] * t.v(c);
      lap(s + j) = acc;
      for (Eigen::Index c = b; c < e; ++c) node_seed(c) = 2.0 * coeff * acc * coeffs[static_cast<std::size_t>(c)];
    }
    backward(params, t, node_seed, grad);
  }
  return lap;
}

Eigen::VectorXd penalty_param_gradient(const NeuralField& field, const FieldParams& params, const PointSet& points,
                                       double tau, PenaltyMethod method, double h) {
  FieldParams g = FieldParams::zeros(field.config());
  if (tau == 0.0 || points.cols() == 0) return g.flatten();
  const double coeff = tau * field.manifold().volume() / static_cast<double>(points.cols());
  field.accumulate_penalty_gradient(params, points, method, h, coeff, g);
  return g.flatten();
}

}  // namespace neuropmd
