// SPDX-License-Identifier: Apache-2.0
#include "neuropmd/manifold.hpp"

#include <cmath>
#include <complex>
#include <sstream>

#include <boost/random/sobol.hpp>

#include "neuropmd/error.hpp"

namespace neuropmd {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const double kInvSqrtPi = 1.0 / std::sqrt(kPi);
const double kInvSqrtTwoPi = 1.0 / std::sqrt(kTwoPi);

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(base) ^ stream) ^ (index * 0x632be59bd9b4e019ULL));
}

double wrap_angle(double angle) {
  double r = std::fmod(angle + kPi, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  r -= kPi;
  // fmod can land exactly on +pi after rounding
  if (r >= kPi) r -= kTwoPi;
  return r;
}

std::string to_string(ManifoldKind kind) {
  return kind == ManifoldKind::circle ? "circle" : "sphere2";
}

ManifoldKind parse_manifold_kind(const std::string& name) {
  if (name == "circle") return ManifoldKind::circle;
  if (name == "sphere2") return ManifoldKind::sphere2;
  throw ConfigError("unknown manifold kind '" + name + "' (expected circle or sphere2)");
}

ProductManifold::ProductManifold(std::vector<MarginalManifold> marginals)
    : marginals_(std::move(marginals)) {
  if (marginals_.empty()) throw ConfigError("product manifold needs at least one marginal");
  for (const auto& m : marginals_) {
    storage_offsets_.push_back(storage_dim_);
    ambient_offsets_.push_back(ambient_dim_);
    storage_dim_ += m.storage_dim();
    ambient_dim_ += m.ambient_dim();
    intrinsic_dim_ += m.intrinsic_dim();
    volume_ *= m.volume();
  }
}

ProductManifold ProductManifold::torus(int dims) {
  if (dims < 1) throw ConfigError("torus dimension must be >= 1");
  return ProductManifold(std::vector<MarginalManifold>(static_cast<std::size_t>(dims),
                                                       MarginalManifold{ManifoldKind::circle}));
}

bool ProductManifold::is_torus() const noexcept {
  for (const auto& m : marginals_)
    if (m.kind != ManifoldKind::circle) return false;
  return !marginals_.empty();
}

std::string ProductManifold::describe() const {
  std::ostringstream os;
  for (std::size_t d = 0; d < marginals_.size(); ++d) {
    if (d) os << " x ";
    os << to_string(marginals_[d].kind);
  }
  return os.str();
}

void ProductManifold::validate(const PointSet& points, double tol) const {
  if (points.rows() != storage_dim_) {
    throw ConfigError("point dimension " + std::to_string(points.rows()) +
                      " does not match manifold " + describe() + " (expected " +
                      std::to_string(storage_dim_) + ")");
  }
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    for (std::size_t d = 0; d < marginals_.size(); ++d) {
      const int off = storage_offsets_[d];
      if (marginals_[d].kind == ManifoldKind::circle) {
        const double a = points(off, j);
        if (!(a >= -kPi && a < kPi))
          throw ConfigError("angle outside [-pi, pi) at point " + std::to_string(j));
      } else {
        const double n = points.block(off, j, 3, 1).norm();
        if (!(std::abs(n - 1.0) <= tol))
          throw ConfigError("sphere block not unit length at point " + std::to_string(j));
      }
    }
  }
}

Eigen::MatrixXd ProductManifold::to_ambient(const PointSet& points) const {
  Eigen::MatrixXd out(ambient_dim_, points.cols());
  for (std::size_t d = 0; d < marginals_.size(); ++d) {
    const int so = storage_offsets_[d];
    const int ao = ambient_offsets_[d];
    if (marginals_[d].kind == ManifoldKind::circle) {
      out.row(ao) = points.row(so).array().cos();
      out.row(ao + 1) = points.row(so).array().sin();
    } else {
      out.middleRows(ao, 3) = points.middleRows(so, 3);
    }
  }
  return out;
}

PointSet ProductManifold::from_ambient(const Eigen::MatrixXd& ambient) const {
  PointSet out(storage_dim_, ambient.cols());
  for (Eigen::Index j = 0; j < ambient.cols(); ++j) {
    for (std::size_t d = 0; d < marginals_.size(); ++d) {
      const int so = storage_offsets_[d];
      const int ao = ambient_offsets_[d];
      if (marginals_[d].kind == ManifoldKind::circle) {
        out(so, j) = wrap_angle(std::atan2(ambient(ao + 1, j), ambient(ao, j)));
      } else {
        const Eigen::Vector3d v = ambient.block(ao, j, 3, 1);
        out.block(so, j, 3, 1) = v / v.norm();
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

double circle_eigenfunction(CircleIndex idx, double angle) {
  if (idx.freq == 0) return kInvSqrtTwoPi;
  const double u = idx.freq * angle;
  return (idx.phase == 0 ? std::cos(u) : std::sin(u)) * kInvSqrtPi;
}

double circle_eigenfunction_d1(CircleIndex idx, double angle) {
  if (idx.freq == 0) return 0.0;
  const double u = idx.freq * angle;
  return idx.freq * (idx.phase == 0 ? -std::sin(u) : std::cos(u)) * kInvSqrtPi;
}

double circle_eigenfunction_d2(CircleIndex idx, double angle) {
  return -static_cast<double>(idx.freq) * idx.freq * circle_eigenfunction(idx, angle);
}

double circle_eigenvalue(CircleIndex idx) {
  return static_cast<double>(idx.freq) * idx.freq;
}

double sphere_eigenvalue(SphereIndex idx) {
  return static_cast<double>(idx.degree) * (idx.degree + 1);
}

double eigenvalue(const EigenIndex& idx) {
  return std::visit(
      [](const auto& i) {
        if constexpr (std::is_same_v<std::decay_t<decltype(i)>, CircleIndex>)
          return circle_eigenvalue(i);
        else
          return sphere_eigenvalue(i);
      },
      idx);
}

void real_spherical_harmonics(int max_degree, const Eigen::Vector3d& x, std::span<double> out) {
  const int count = (max_degree + 1) * (max_degree + 1);
  if (static_cast<int>(out.size()) < count)
    throw ConfigError("real_spherical_harmonics: output span too small");
  const double z = x.z();
  const std::complex<double> xy(x.x(), x.y());
  // P_l^m(z) = (1 - z^2)^{m/2} Q_l^m(z); (1 - z^2)^{m/2} e^{i m phi} = (x + i y)^m.
  std::complex<double> power(1.0, 0.0);
  double qmm = 1.0;  // (2m - 1)!!
  for (int m = 0; m <= max_degree; ++m) {
    if (m > 0) {
      power *= xy;
      qmm *= (2.0 * m - 1.0);
    }
    double q_prev = 0.0;
    double q_cur = qmm;
    for (int l = m; l <= max_degree; ++l) {
      if (l == m + 1) {
        q_prev = q_cur;
        q_cur = z * (2.0 * m + 1.0) * qmm;
      } else if (l > m + 1) {
        const double q_next = ((2.0 * l - 1.0) * z * q_cur - (l + m - 1.0) * q_prev) / (l - m);
        q_prev = q_cur;
        q_cur = q_next;
      }
      // (l - m)! / (l + m)!
      const double log_ratio = std::lgamma(l - m + 1.0) - std::lgamma(l + m + 1.0);
      const double norm = std::sqrt((2.0 * l + 1.0) / (4.0 * kPi) * std::exp(log_ratio));
      const int base = l * l + l;
      if (m == 0) {
        out[base] = norm * q_cur;
      } else {
        const double s = std::sqrt(2.0) * norm * q_cur;
        out[base + m] = s * power.imag();
        out[base - m] = s * power.real();
      }
    }
  }
}

double sphere_eigenfunction(SphereIndex idx, const Eigen::Vector3d& x) {
  if (idx.degree < 0 || std::abs(idx.order) > idx.degree)
    throw ConfigError("invalid spherical harmonic index");
  if (std::abs(x.norm() - 1.0) > 1e-9)
    throw ConfigError("sphere_eigenfunction: input is not a unit vector");
  std::vector<double> values(static_cast<std::size_t>((idx.degree + 1) * (idx.degree + 1)));
  real_spherical_harmonics(idx.degree, x, values);
  return values[static_cast<std::size_t>(sphere_flat_index(idx))];
}

Eigen::MatrixXd tangent_projection(const MarginalManifold& m, const Eigen::VectorXd& ambient_point) {
  const int n = m.ambient_dim();
  if (ambient_point.size() != n) throw ConfigError("tangent_projection: wrong ambient dimension");
  const Eigen::VectorXd u = ambient_point / ambient_point.norm();
  return Eigen::MatrixXd::Identity(n, n) - u * u.transpose();
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd scrambled_sobol(int dims, std::size_t n, Rng& rng) {
  boost::random::sobol engine(static_cast<unsigned>(dims));
  std::vector<std::uint64_t> shift(static_cast<std::size_t>(dims));
  for (auto& s : shift) s = rng();
  Eigen::MatrixXd out(dims, static_cast<Eigen::Index>(n));
  constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
  // Boost's generator starts after the origin; put it back so that the first
  // 2^m points form a digital net.
  for (std::size_t j = 0; j < n; ++j) {
    for (int d = 0; d < dims; ++d) {
      const std::uint64_t raw = j == 0 ? 0 : static_cast<std::uint64_t>(engine());
      const std::uint64_t v = raw ^ shift[static_cast<std::size_t>(d)];
      out(d, static_cast<Eigen::Index>(j)) = static_cast<double>(v >> 11) * kScale;
    }
  }
  return out;
}

SamplingMode default_sampling_mode(const ProductManifold& spec) {
  return spec.is_torus() ? SamplingMode::qmc : SamplingMode::pseudo;
}

PointSet uniform_sample(const ProductManifold& spec, std::size_t n, Rng& rng, SamplingMode mode) {
  if (n == 0) throw ConfigError("uniform_sample: n must be >= 1");
  PointSet out(spec.storage_dim(), static_cast<Eigen::Index>(n));
  if (mode == SamplingMode::qmc) {
    if (!spec.is_torus())
      throw ConfigError("quasi-Monte Carlo sampling is only available on tori");
    const Eigen::MatrixXd u = scrambled_sobol(static_cast<int>(spec.size()), n, rng);
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      for (Eigen::Index d = 0; d < out.rows(); ++d) out(d, j) = wrap_angle(-kPi + kTwoPi * u(d, j));
    return out;
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    for (std::size_t d = 0; d < spec.size(); ++d) {
      const int off = spec.storage_offset(d);
      if (spec[d].kind == ManifoldKind::circle) {
        out(off, j) = wrap_angle(-kPi + kTwoPi * unif(rng));
      } else {
        Eigen::Vector3d v;
        double norm = 0.0;
        do {
          v = Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
          norm = v.norm();
        } while (norm < 1e-12);
        out.block(off, j, 3, 1) = v / norm;
      }
    }
  }
  return out;
}

}  // namespace neuropmd
