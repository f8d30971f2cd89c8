// SPDX-License-Identifier: Apache-2.0
//
// Integrators, density comparison metrics, the held-out ISE criterion,
// region-restricted marginals and torus spectra.
#pragma once

#include <functional>
#include <string>

#include "neuropmd/manifold.hpp"

namespace neuropmd {

/// Nodes and weights approximating the integral over a product manifold.
struct Quadrature {
  PointSet nodes;
  Eigen::RowVectorXd weights;
};

enum class IntegratorMode { grid, mc, qmc };

struct Integrator {
  IntegratorMode mode = IntegratorMode::grid;
  /// Grid points per marginal (grid mode). A single entry applies to all.
  std::vector<int> resolution{256};
  std::size_t points = 4096;
  std::uint64_t seed = 0;

  /// "grid:256", "grid:256x128", "mc:4096", "qmc:65536".
  static Integrator parse(const std::string& text, std::uint64_t seed = 0);
  std::string describe() const;
  /// Grid and qmc modes require a torus.
  Quadrature quadrature(const ProductManifold& spec) const;
};

/// Trapezoid rule on [-pi, pi)^D, weight prod(2 pi / res).
Quadrature torus_grid(const ProductManifold& spec, const std::vector<int>& resolution);

/// A density evaluator over a manifold. eval returns one value per column.
struct DensityHandle {
  ProductManifold manifold;
  std::function<Eigen::RowVectorXd(const PointSet&)> eval;

  Eigen::RowVectorXd operator()(const PointSet& points) const { return eval(points); }
};

DensityHandle uniform_density(const ProductManifold& spec);

/// Integral of f under the quadrature.
double integrate(const DensityHandle& f, const Quadrature& quad);

/// ||f - f_hat||^2 / ||f||^2. Throws NumericalError if ||f|| vanishes.
double nise(const DensityHandle& f, const DensityHandle& f_hat, const Integrator& integ);
double nise(const DensityHandle& f, const DensityHandle& f_hat, const Quadrature& quad);

enum class FrConvention { as_written, inner, geodesic };
std::string to_string(FrConvention c);
FrConvention parse_fr_convention(const std::string& name);

/// Fisher-Rao distance built from s = integral sqrt(f f_hat):
/// as_written arccos(s^2), inner arccos(s), geodesic 2 arccos(s).
double fisher_rao(const DensityHandle& f, const DensityHandle& f_hat, const Integrator& integ,
                  FrConvention convention = FrConvention::as_written);
double fisher_rao(const DensityHandle& f, const DensityHandle& f_hat, const Quadrature& quad,
                  FrConvention convention = FrConvention::as_written);

/// ||f_hat||^2 - (2 / |V|) sum_{x in V} f_hat(x).
double ise_criterion(const DensityHandle& f_hat, const PointSet& validation, const Integrator& integ);
double ise_criterion(const DensityHandle& f_hat, const PointSet& validation, const Quadrature& quad);

/// Indicator of a subset of a single marginal manifold.
struct Region {
  enum class Kind { all, arc, cap };
  Kind kind = Kind::all;
  /// Arc [lo, hi] on a circle (wrapping allowed when lo > hi).
  double lo = 0.0, hi = 0.0;
  /// Spherical cap of angular radius `angle` around `center`.
  Eigen::Vector3d center = Eigen::Vector3d::UnitZ();
  double angle = 0.0;
  bool complement = false;

  bool contains(const MarginalManifold& m, const Eigen::VectorXd& block) const;
};

/// Integral over x1 in E of f(x1, x2), for each column of x2 (points on the
/// second marginal). The integrator applies to the first marginal alone.
Eigen::RowVectorXd marginal_density(const DensityHandle& f, const Region& region, const Integrator& integ,
                                    const PointSet& x2);

enum class SpectrumQuantity { density, log_density };

/// Values of the quantity on the res x res torus grid; entry (i, j) sits at
/// (-pi + 2 pi i / res, -pi + 2 pi j / res).
Eigen::MatrixXd torus_grid_values(const DensityHandle& f, int res,
                                  SpectrumQuantity quantity = SpectrumQuantity::density);

/// |DFT| / res of the grid values, DC-centred: entry (i, j) holds frequency
/// (i - res/2, j - res/2). With this scaling the sum of squared magnitudes
/// equals the sum of squared grid values.
Eigen::MatrixXd spectral_content(const Eigen::MatrixXd& grid_values);
Eigen::MatrixXd spectral_content(const DensityHandle& f, int res,
                                 SpectrumQuantity quantity = SpectrumQuantity::density);

/// Frequency of row or column i of a DC-centred spectrum.
inline int centred_frequency(int index, int res) { return index - res / 2; }

}  // namespace neuropmd
