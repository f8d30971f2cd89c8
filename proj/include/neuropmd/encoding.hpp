// SPDX-License-Identifier: Apache-2.0
//
// First-layer encoding: K tensor-product Laplace-Beltrami eigenfunctions drawn
// uniformly without replacement from the truncated tensor set, optionally
// replaced by their within-eigenspace rotations on tori.
#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "neuropmd/manifold.hpp"

namespace neuropmd {

enum class EncodingVariant { separable, nonseparable_torus };

std::string to_string(EncodingVariant v);
EncodingVariant parse_encoding_variant(const std::string& name);

struct EncodingConfig {
  std::size_t K = 0;
  /// Max frequency (circle) or max degree (sphere) per marginal.
  std::vector<int> max_freq;
  EncodingVariant variant = EncodingVariant::separable;
  std::uint64_t seed = 0;
};

/// prod_d phi_{i_d}(x_d)
struct SeparableTerm {
  std::vector<EigenIndex> factors;
};

/// c_S * h(sum_d freqs[d] * x_d) on a torus, h = sin or cos. The first
/// nonzero frequency is positive; S is the set of nonzero frequencies and
/// c_S = pi^{-|S|/2} (2 pi)^{-(D-|S|)/2}.
struct RotatedTerm {
  std::vector<int> freqs;
  bool sine = false;
};

using BasisTerm = std::variant<SeparableTerm, RotatedTerm>;

/// Value, first and pure second derivatives of every encoding entry with
/// respect to each torus angle. All matrices are K x n.
struct EncodingJets {
  Eigen::MatrixXd value;
  std::vector<Eigen::MatrixXd> d1;
  std::vector<Eigen::MatrixXd> d2;
};

class Encoding {
 public:
  Encoding() = default;
  /// Validates the terms against the manifold and checks they are distinct.
  Encoding(ProductManifold manifold, EncodingVariant variant, std::vector<BasisTerm> basis);

  std::size_t size() const noexcept { return basis_.size(); }
  const ProductManifold& manifold() const noexcept { return manifold_; }
  EncodingVariant variant() const noexcept { return variant_; }
  const std::vector<BasisTerm>& basis() const noexcept { return basis_; }
  const std::vector<double>& eigenvalues() const noexcept { return eigenvalues_; }

  Eigen::VectorXd encode(const Eigen::VectorXd& point) const;
  /// K x n feature matrix.
  Eigen::MatrixXd encode_batch(const PointSet& points) const;
  /// Torus only.
  EncodingJets encode_jets(const PointSet& points) const;

  /// Signed frequency vector of entry k on a torus (separable entries report
  /// their nonnegative frequencies).
  std::vector<int> torus_frequencies(std::size_t k) const;

 private:
  ProductManifold manifold_;
  EncodingVariant variant_ = EncodingVariant::separable;
  std::vector<BasisTerm> basis_;
  std::vector<double> eigenvalues_;
  // Separable entries: per marginal local table row for each term.
  std::vector<std::vector<int>> local_rows_;
  std::vector<int> table_size_;
};

/// Size of the truncated tensor set, prod_d (2 M_d + 1) for circles and
/// (M_d + 1)^2 for spheres. Identical for both variants.
std::size_t tensor_set_size(const ProductManifold& spec, std::span<const int> max_freq);

/// Decodes a flat index of the tensor set into a basis term.
BasisTerm tensor_term(const ProductManifold& spec, std::span<const int> max_freq,
                      std::size_t flat, EncodingVariant variant);

/// Draws cfg.K distinct terms uniformly without replacement (seeded by cfg.seed).
Encoding sample_encoding(const ProductManifold& spec, const EncodingConfig& cfg);

/// Every term of the separable tensor set, in flat-index order.
Encoding full_tensor_encoding(const ProductManifold& spec, std::span<const int> max_freq);

}  // namespace neuropmd
