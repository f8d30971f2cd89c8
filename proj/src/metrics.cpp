// SPDX-License-Identifier: Apache-2.0
#include "neuropmd/metrics.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "neuropmd/error.hpp"

namespace neuropmd {

namespace {

int parse_positive(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  long value = 0;
  try {
    value = std::stol(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || value < 1) throw ConfigError("invalid " + what + " '" + text + "'");
  return static_cast<int>(value);
}

double clamp_unit(double s) { return std::clamp(s, -1.0, 1.0); }

}  // namespace

Integrator Integrator::parse(const std::string& text, std::uint64_t seed) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("integrator must look like grid:256, mc:4096 or qmc:4096");
  const std::string mode = text.substr(0, colon);
  const std::string arg = text.substr(colon + 1);
  Integrator integ;
  integ.seed = seed;
  if (mode == "grid") {
    integ.mode = IntegratorMode::grid;
    integ.resolution.clear();
    std::stringstream ss(arg);
    std::string part;
    while (std::getline(ss, part, 'x')) integ.resolution.push_back(parse_positive(part, "grid resolution"));
    if (integ.resolution.empty()) throw ConfigError("grid resolution missing");
    for (int r : integ.resolution)
      if (r < 2) throw ConfigError("grid resolution must be >= 2");
  } else if (mode == "mc" || mode == "qmc") {
    integ.mode = mode == "mc" ? IntegratorMode::mc : IntegratorMode::qmc;
    integ.points = static_cast<std::size_t>(parse_positive(arg, "sample count"));
  } else {
    throw ConfigError("unknown integrator mode '" + mode + "'");
  }
  return integ;
}

std::string Integrator::describe() const {
  if (mode == IntegratorMode::grid) {
    std::string s = "grid:";
    for (std::size_t i = 0; i < resolution.size(); ++i) s += (i ? "x" : "") + std::to_string(resolution[i]);
    return s;
  }
  return (mode == IntegratorMode::mc ? "mc:" : "qmc:") + std::to_string(points);
}

Quadrature torus_grid(const ProductManifold& spec, const std::vector<int>& resolution) {
  if (!spec.is_torus()) throw ConfigError("grid integration is only available on tori");
  const auto D = static_cast<int>(spec.size());
  std::vector<int> res(static_cast<std::size_t>(D));
  if (resolution.size() == 1) {
    std::fill(res.begin(), res.end(), resolution.front());
  } else if (static_cast<int>(resolution.size()) == D) {
    res = resolution;
  } else {
    throw ConfigError("grid resolution count does not match the manifold");
  }
  std::size_t total = 1;
  double w = 1.0;
  for (int r : res) {
    if (r < 2) throw ConfigError("grid resolution must be >= 2");
    total *= static_cast<std::size_t>(r);
    w *= kTwoPi / r;
  }
  Quadrature q;
  q.nodes.resize(D, static_cast<Eigen::Index>(total));
  q.weights = Eigen::RowVectorXd::Constant(static_cast<Eigen::Index>(total), w);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rest = idx;
    for (int d = D - 1; d >= 0; --d) {
      const int r = res[static_cast<std::size_t>(d)];
      q.nodes(d, static_cast<Eigen::Index>(idx)) = -kPi + kTwoPi * static_cast<double>(rest % r) / r;
      rest /= static_cast<std::size_t>(r);
    }
  }
  return q;
}

Quadrature Integrator::quadrature(const ProductManifold& spec) const {
  if (mode == IntegratorMode::grid) return torus_grid(spec, resolution);
  if (mode == IntegratorMode::qmc && !spec.is_torus()) throw ConfigError("qmc integration is only available on tori");
  Rng rng(seed);
  Quadrature q;
  q.nodes = uniform_sample(spec, points, rng, mode == IntegratorMode::qmc ? SamplingMode::qmc : SamplingMode::pseudo);
  q.weights = Eigen::RowVectorXd::Constant(static_cast<Eigen::Index>(points), spec.volume() / static_cast<double>(points));
  return q;
}

DensityHandle uniform_density(const ProductManifold& spec) {
  const double value = 1.0 / spec.volume();
  return {spec, [value](const PointSet& p) { return Eigen::RowVectorXd::Constant(p.cols(), value); }};
}

double integrate(const DensityHandle& f, const Quadrature& quad) { return f(quad.nodes).dot(quad.weights); }

double nise(const DensityHandle& f, const DensityHandle& f_hat, const Quadrature& quad) {
  if (!(f.manifold == f_hat.manifold)) throw ConfigError("densities live on different manifolds");
  const Eigen::RowVectorXd a = f(quad.nodes);
  const Eigen::RowVectorXd b = f_hat(quad.nodes);
  const double denom = a.array().square().matrix().dot(quad.weights);
  if (!(denom > 0.0)) throw NumericalError("reference density has zero L2 norm");
  return (a - b).array().square().matrix().dot(quad.weights) / denom;
}

double nise(const DensityHandle& f, const DensityHandle& f_hat, const Integrator& integ) {
  return nise(f, f_hat, integ.quadrature(f.manifold));
}

std::string to_string(FrConvention c) {
  switch (c) {
    case FrConvention::as_written: return "as_written";
    case FrConvention::inner: return "inner";
    case FrConvention::geodesic: return "geodesic";
  }
  return "as_written";
}

FrConvention parse_fr_convention(const std::string& name) {
  if (name == "as_written") return FrConvention::as_written;
  if (name == "inner") return FrConvention::inner;
  if (name == "geodesic") return FrConvention::geodesic;
  throw ConfigError("unknown Fisher-Rao convention '" + name + "'");
}

double fisher_rao(const DensityHandle& f, const DensityHandle& f_hat, const Quadrature& quad,
                  FrConvention convention) {
  if (!(f.manifold == f_hat.manifold)) throw ConfigError("densities live on different manifolds");
  const Eigen::RowVectorXd a = f(quad.nodes);
  const Eigen::RowVectorXd b = f_hat(quad.nodes);
  const double s = (a.array() * b.array()).max(0.0).sqrt().matrix().dot(quad.weights);
  switch (convention) {
    case FrConvention::as_written: return std::acos(clamp_unit(s * s));
    case FrConvention::inner: return std::acos(clamp_unit(s));
    case FrConvention::geodesic: return 2.0 * std::acos(clamp_unit(s));
  }
  return 0.0;
}

double fisher_rao(const DensityHandle& f, const DensityHandle& f_hat, const Integrator& integ,
                  FrConvention convention) {
  return fisher_rao(f, f_hat, integ.quadrature(f.manifold), convention);
}

double ise_criterion(const DensityHandle& f_hat, const PointSet& validation, const Quadrature& quad) {
  if (validation.cols() == 0) throw ConfigError("validation set is empty");
  const double norm2 = f_hat(quad.nodes).array().square().matrix().dot(quad.weights);
  return norm2 - 2.0 * f_hat(validation).mean();
}

double ise_criterion(const DensityHandle& f_hat, const PointSet& validation, const Integrator& integ) {
  return ise_criterion(f_hat, validation, integ.quadrature(f_hat.manifold));
}

bool Region::contains(const MarginalManifold& m, const Eigen::VectorXd& block) const {
  bool inside = true;
  switch (kind) {
    case Kind::all: inside = true; break;
    case Kind::arc: {
      if (m.kind != ManifoldKind::circle) throw ConfigError("arc regions need a circle marginal");
      const double x = wrap_angle(block(0));
      const double lo_w = wrap_angle(lo), hi_w = wrap_angle(hi);
      inside = lo_w <= hi_w ? (x >= lo_w && x <= hi_w) : (x >= lo_w || x <= hi_w);
      break;
    }
    case Kind::cap: {
      if (m.kind != ManifoldKind::sphere2) throw ConfigError("cap regions need a sphere marginal");
      const Eigen::Vector3d c = center.normalized();
      inside = c.dot(block.head<3>()) >= std::cos(angle);
      break;
    }
  }
  return inside != complement;
}

Eigen::RowVectorXd marginal_density(const DensityHandle& f, const Region& region, const Integrator& integ,
                                    const PointSet& x2) {
  const ProductManifold& spec = f.manifold;
  if (spec.size() != 2) throw ConfigError("marginal densities need a product of exactly two manifolds");
  const ProductManifold first({spec[0]});
  const Quadrature quad = integ.quadrature(first);
  const int s1 = spec[0].storage_dim();
  const int s2 = spec[1].storage_dim();
  if (x2.rows() != s2) throw ConfigError("conditioning points do not match the second marginal");

  Eigen::RowVectorXd w = quad.weights;
  for (Eigen::Index j = 0; j < quad.nodes.cols(); ++j)
    if (!region.contains(spec[0], quad.nodes.col(j))) w(j) = 0.0;
  if (!(w.sum() > 0.0)) throw ConfigError("region has zero measure under the integrator");

  const Eigen::Index q = quad.nodes.cols();
  Eigen::RowVectorXd out(x2.cols());
  PointSet pts(s1 + s2, q);
  pts.topRows(s1) = quad.nodes;
  for (Eigen::Index k = 0; k < x2.cols(); ++k) {
    pts.bottomRows(s2) = x2.col(k).replicate(1, q);
    out(k) = f(pts).dot(w);
  }
  return out;
}

Eigen::MatrixXd torus_grid_values(const DensityHandle& f, int res, SpectrumQuantity quantity) {
  if (!f.manifold.is_torus() || f.manifold.size() != 2) throw ConfigError("spectra are only available on T^2");
  if (res < 2) throw ConfigError("grid resolution must be >= 2");
  const Quadrature grid = torus_grid(f.manifold, {res});
  const Eigen::RowVectorXd vals = f(grid.nodes);
  Eigen::MatrixXd out(res, res);
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j) {
      const double v = vals(static_cast<Eigen::Index>(i) * res + j);
      if (quantity == SpectrumQuantity::log_density && !(v > 0.0))
        throw NumericalError("log density requested where the density is not positive");
      out(i, j) = quantity == SpectrumQuantity::log_density ? std::log(v) : v;
    }
  return out;
}

Eigen::MatrixXd spectral_content(const Eigen::MatrixXd& g) {
  const int n0 = static_cast<int>(g.rows());
  const int n1 = static_cast<int>(g.cols());
  if (n0 < 1 || n1 < 1) throw ConfigError("empty grid");
  const std::size_t total = static_cast<std::size_t>(n0) * static_cast<std::size_t>(n1);
  fftw_complex* in = fftw_alloc_complex(total);
  fftw_complex* out = fftw_alloc_complex(total);
  for (int i = 0; i < n0; ++i)
    for (int j = 0; j < n1; ++j) {
      in[static_cast<std::size_t>(i) * n1 + j][0] = g(i, j);
      in[static_cast<std::size_t>(i) * n1 + j][1] = 0.0;
    }
  fftw_plan plan = fftw_plan_dft_2d(n0, n1, in, out, FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_execute(plan);
  const double scale = 1.0 / std::sqrt(static_cast<double>(total));
  Eigen::MatrixXd mag(n0, n1);
  for (int i = 0; i < n0; ++i)
    for (int j = 0; j < n1; ++j) {
      const int si = ((i - n0 / 2) % n0 + n0) % n0;
      const int sj = ((j - n1 / 2) % n1 + n1) % n1;
      const auto& c = out[static_cast<std::size_t>(si) * n1 + sj];
      mag(i, j) = std::hypot(c[0], c[1]) * scale;
    }
  fftw_destroy_plan(plan);
  fftw_free(in);
  fftw_free(out);
  return mag;
}

Eigen::MatrixXd spectral_content(const DensityHandle& f, int res, SpectrumQuantity quantity) {
  return spectral_content(torus_grid_values(f, res, quantity));
}

}  // namespace neuropmd
