// SPDX-License-Identifier: Apache-2.0
#include "neuropmd/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "neuropmd/error.hpp"

namespace neuropmd {

namespace {

int circle_local_row(CircleIndex idx) {
  return idx.freq == 0 ? 0 : 2 * idx.freq - 1 + idx.phase;
}

CircleIndex circle_from_row(int row) {
  if (row == 0) return {0, 0};
  return {(row + 1) / 2, (row + 1) % 2};
}

int local_count(const MarginalManifold& m, int max_freq) {
  return m.kind == ManifoldKind::circle ? 2 * max_freq + 1 : (max_freq + 1) * (max_freq + 1);
}

double rotated_scale(std::size_t support, std::size_t dims) {
  return std::pow(kPi, -0.5 * static_cast<double>(support)) *
         std::pow(kTwoPi, -0.5 * static_cast<double>(dims - support));
}

std::vector<int> term_key(const BasisTerm& term) {
  std::vector<int> key;
  if (const auto* s = std::get_if<SeparableTerm>(&term)) {
    key.push_back(0);
    for (const auto& f : s->factors) {
      if (const auto* c = std::get_if<CircleIndex>(&f)) {
        key.insert(key.end(), {0, c->freq, c->phase});
      } else {
        const auto& sp = std::get<SphereIndex>(f);
        key.insert(key.end(), {1, sp.degree, sp.order});
      }
    }
  } else {
    const auto& r = std::get<RotatedTerm>(term);
    key.push_back(1);
    key.insert(key.end(), r.freqs.begin(), r.freqs.end());
    key.push_back(r.sine ? 1 : 0);
  }
  return key;
}

}  // namespace

std::string to_string(EncodingVariant v) {
  return v == EncodingVariant::separable ? "separable" : "nonseparable_torus";
}

EncodingVariant parse_encoding_variant(const std::string& name) {
  if (name == "separable") return EncodingVariant::separable;
  if (name == "nonseparable_torus") return EncodingVariant::nonseparable_torus;
  throw ConfigError("unknown encoding variant '" + name + "'");
}

Encoding::Encoding(ProductManifold manifold, EncodingVariant variant, std::vector<BasisTerm> basis)
    : manifold_(std::move(manifold)), variant_(variant), basis_(std::move(basis)) {
  const std::size_t dims = manifold_.size();
  if (dims == 0) throw ConfigError("encoding needs a nonempty manifold");
  if (basis_.empty()) throw ConfigError("encoding needs at least one basis function");
  if (variant_ == EncodingVariant::nonseparable_torus && !manifold_.is_torus())
    throw ConfigError("nonseparable encodings are only defined on tori");

  table_size_.assign(dims, 1);
  std::set<std::vector<int>> seen;
  for (const auto& term : basis_) {
    if (!seen.insert(term_key(term)).second) throw ConfigError("encoding contains a duplicate basis function");
    if (const auto* s = std::get_if<SeparableTerm>(&term)) {
      if (s->factors.size() != dims) throw ConfigError("separable term has wrong number of factors");
      std::vector<int> rows(dims);
      double lambda = 0.0;
      for (std::size_t d = 0; d < dims; ++d) {
        const auto& f = s->factors[d];
        if (manifold_[d].kind == ManifoldKind::circle) {
          const auto* c = std::get_if<CircleIndex>(&f);
          if (!c) throw ConfigError("sphere index given for a circle marginal");
          if (c->freq < 0 || c->phase < 0 || c->phase > 1 || (c->freq == 0 && c->phase != 0))
            throw ConfigError("invalid circle eigen index");
          rows[d] = circle_local_row(*c);
          lambda += circle_eigenvalue(*c);
        } else {
          const auto* sp = std::get_if<SphereIndex>(&f);
          if (!sp) throw ConfigError("circle index given for a sphere marginal");
          if (sp->degree < 0 || std::abs(sp->order) > sp->degree)
            throw ConfigError("invalid spherical harmonic index");
          rows[d] = sphere_flat_index(*sp);
          lambda += sphere_eigenvalue(*sp);
        }
        table_size_[d] = std::max(table_size_[d], rows[d] + 1);
      }
      local_rows_.push_back(std::move(rows));
      eigenvalues_.push_back(lambda);
    } else {
      const auto& r = std::get<RotatedTerm>(term);
      if (!manifold_.is_torus()) throw ConfigError("rotated terms need a torus");
      if (r.freqs.size() != dims) throw ConfigError("rotated term has wrong dimension");
      const auto first = std::find_if(r.freqs.begin(), r.freqs.end(), [](int f) { return f != 0; });
      if (first != r.freqs.end() && *first < 0)
        throw ConfigError("rotated term must have a positive leading frequency");
      if (first == r.freqs.end() && r.sine) throw ConfigError("sine of the zero frequency vanishes");
      double lambda = 0.0;
      for (int f : r.freqs) lambda += static_cast<double>(f) * f;
      local_rows_.emplace_back();
      eigenvalues_.push_back(lambda);
    }
  }
}

Eigen::VectorXd Encoding::encode(const Eigen::VectorXd& point) const {
  PointSet p(point.size(), 1);
  p.col(0) = point;
  return encode_batch(p).col(0);
}

Eigen::MatrixXd Encoding::encode_batch(const PointSet& points) const {
  const std::size_t dims = manifold_.size();
  const Eigen::Index n = points.cols();
  const Eigen::Index K = static_cast<Eigen::Index>(basis_.size());
  Eigen::MatrixXd out(K, n);

  // Per-marginal eigenfunction tables, rows indexed by local row.
  std::vector<Eigen::MatrixXd> tables(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    const int off = manifold_.storage_offset(d);
    Eigen::MatrixXd& t = tables[d];
    t.resize(table_size_[d], n);
    if (manifold_[d].kind == ManifoldKind::circle) {
      for (Eigen::Index j = 0; j < n; ++j)
        for (int r = 0; r < table_size_[d]; ++r) t(r, j) = circle_eigenfunction(circle_from_row(r), points(off, j));
    } else {
      int max_deg = 0;
      while ((max_deg + 1) * (max_deg + 1) < table_size_[d]) ++max_deg;
      std::vector<double> buf(static_cast<std::size_t>((max_deg + 1) * (max_deg + 1)));
      for (Eigen::Index j = 0; j < n; ++j) {
        real_spherical_harmonics(max_deg, points.block(off, j, 3, 1), buf);
        for (int r = 0; r < table_size_[d]; ++r) t(r, j) = buf[static_cast<std::size_t>(r)];
      }
    }
  }

  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& term = basis_[static_cast<std::size_t>(k)];
    if (std::holds_alternative<SeparableTerm>(term)) {
      const auto& rows = local_rows_[static_cast<std::size_t>(k)];
      out.row(k) = tables[0].row(rows[0]);
      for (std::size_t d = 1; d < dims; ++d) out.row(k).array() *= tables[d].row(rows[d]).array();
    } else {
      const auto& r = std::get<RotatedTerm>(term);
      std::size_t support = 0;
      for (int f : r.freqs) support += (f != 0);
      const double c = rotated_scale(support, dims);
      for (Eigen::Index j = 0; j < n; ++j) {
        double u = 0.0;
        for (std::size_t d = 0; d < dims; ++d) u += r.freqs[d] * points(static_cast<Eigen::Index>(d), j);
        out(k, j) = c * (r.sine ? std::sin(u) : std::cos(u));
      }
    }
  }
  return out;
}

EncodingJets Encoding::encode_jets(const PointSet& points) const {
  if (!manifold_.is_torus()) throw ConfigError("intrinsic jets are only available on tori");
  const std::size_t dims = manifold_.size();
  const Eigen::Index n = points.cols();
  const Eigen::Index K = static_cast<Eigen::Index>(basis_.size());
  EncodingJets jets;
  jets.value.resize(K, n);
  jets.d1.assign(dims, Eigen::MatrixXd(K, n));
  jets.d2.assign(dims, Eigen::MatrixXd(K, n));

  std::vector<Eigen::MatrixXd> t0(dims), t1(dims), t2(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    t0[d].resize(table_size_[d], n);
    t1[d].resize(table_size_[d], n);
    t2[d].resize(table_size_[d], n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double x = points(static_cast<Eigen::Index>(d), j);
      for (int r = 0; r < table_size_[d]; ++r) {
        const CircleIndex idx = circle_from_row(r);
        t0[d](r, j) = circle_eigenfunction(idx, x);
        t1[d](r, j) = circle_eigenfunction_d1(idx, x);
        t2[d](r, j) = -static_cast<double>(idx.freq) * idx.freq * t0[d](r, j);
      }
    }
  }

  Eigen::RowVectorXd others(n);
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& term = basis_[static_cast<std::size_t>(k)];
    if (std::holds_alternative<SeparableTerm>(term)) {
      const auto& rows = local_rows_[static_cast<std::size_t>(k)];
      for (std::size_t d = 0; d < dims; ++d) {
        others.setOnes();
        for (std::size_t e = 0; e < dims; ++e)
          if (e != d) others.array() *= t0[e].row(rows[e]).array();
        jets.d1[d].row(k) = t1[d].row(rows[d]).array() * others.array();
        jets.d2[d].row(k) = t2[d].row(rows[d]).array() * others.array();
        if (d == 0) jets.value.row(k) = t0[0].row(rows[0]).array() * others.array();
      }
    } else {
      const auto& r = std::get<RotatedTerm>(term);
      std::size_t support = 0;
      for (int f : r.freqs) support += (f != 0);
      const double c = rotated_scale(support, dims);
      for (Eigen::Index j = 0; j < n; ++j) {
        double u = 0.0;
        for (std::size_t d = 0; d < dims; ++d) u += r.freqs[d] * points(static_cast<Eigen::Index>(d), j);
        const double h = c * (r.sine ? std::sin(u) : std::cos(u));
        const double dh = c * (r.sine ? std::cos(u) : -std::sin(u));
        jets.value(k, j) = h;
        for (std::size_t d = 0; d < dims; ++d) {
          const double f = r.freqs[d];
          jets.d1[d](k, j) = f * dh;
          jets.d2[d](k, j) = -f * f * h;
        }
      }
    }
  }
  return jets;
}

std::vector<int> Encoding::torus_frequencies(std::size_t k) const {
  if (!manifold_.is_torus()) throw ConfigError("torus_frequencies requires a torus");
  const auto& term = basis_.at(k);
  if (const auto* r = std::get_if<RotatedTerm>(&term)) return r->freqs;
  std::vector<int> f;
  for (const auto& factor : std::get<SeparableTerm>(term).factors) f.push_back(std::get<CircleIndex>(factor).freq);
  return f;
}

std::size_t tensor_set_size(const ProductManifold& spec, std::span<const int> max_freq) {
  if (max_freq.size() != spec.size()) throw ConfigError("max_freq must have one entry per marginal");
  std::size_t total = 1;
  for (std::size_t d = 0; d < spec.size(); ++d) {
    if (max_freq[d] < 0) throw ConfigError("max_freq entries must be >= 0");
    total *= static_cast<std::size_t>(local_count(spec[d], max_freq[d]));
  }
  return total;
}

BasisTerm tensor_term(const ProductManifold& spec, std::span<const int> max_freq, std::size_t flat,
                      EncodingVariant variant) {
  const std::size_t dims = spec.size();
  std::vector<int> local(dims);
  // Last marginal varies fastest.
  for (std::size_t d = dims; d-- > 0;) {
    const auto count = static_cast<std::size_t>(local_count(spec[d], max_freq[d]));
    local[d] = static_cast<int>(flat % count);
    flat /= count;
  }
  if (variant == EncodingVariant::separable) {
    SeparableTerm term;
    for (std::size_t d = 0; d < dims; ++d) {
      if (spec[d].kind == ManifoldKind::circle) {
        term.factors.emplace_back(circle_from_row(local[d]));
      } else {
        int l = 0;
        while ((l + 1) * (l + 1) <= local[d]) ++l;
        term.factors.emplace_back(SphereIndex{l, local[d] - l * l - l});
      }
    }
    return term;
  }
  if (!spec.is_torus()) throw ConfigError("nonseparable encodings are only defined on tori");
  // Phase bits of the separable index become (h, signs): the first nonzero
  // axis chooses sin/cos, later nonzero axes choose the sign.
  RotatedTerm term;
  term.freqs.assign(dims, 0);
  bool leading = true;
  for (std::size_t d = 0; d < dims; ++d) {
    const CircleIndex c = circle_from_row(local[d]);
    if (c.freq == 0) continue;
    if (leading) {
      term.sine = c.phase == 1;
      term.freqs[d] = c.freq;
      leading = false;
    } else {
      term.freqs[d] = c.phase == 1 ? -c.freq : c.freq;
    }
  }
  return term;
}

Encoding sample_encoding(const ProductManifold& spec, const EncodingConfig& cfg) {
  const std::size_t total = tensor_set_size(spec, cfg.max_freq);
  if (cfg.K == 0) throw ConfigError("encoding size K must be >= 1");
  if (cfg.K > total) {
    throw ConfigError("encoding size K=" + std::to_string(cfg.K) + " exceeds the tensor set size " +
                      std::to_string(total));
  }
  if (cfg.variant == EncodingVariant::nonseparable_torus && !spec.is_torus())
    throw ConfigError("nonseparable encodings are only defined on tori");

  // Floyd's algorithm: K distinct draws from [0, total).
  Rng rng(cfg.seed);
  std::unordered_set<std::size_t> chosen;
  chosen.reserve(cfg.K * 2);
  for (std::size_t j = total - cfg.K; j < total; ++j) {
    std::uniform_int_distribution<std::size_t> pick(0, j);
    const std::size_t t = pick(rng);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  std::vector<std::size_t> flat(chosen.begin(), chosen.end());
  std::sort(flat.begin(), flat.end());

  std::vector<BasisTerm> basis;
  basis.reserve(flat.size());
  for (std::size_t f : flat) basis.push_back(tensor_term(spec, cfg.max_freq, f, cfg.variant));
  return Encoding(spec, cfg.variant, std::move(basis));
}

Encoding full_tensor_encoding(const ProductManifold& spec, std::span<const int> max_freq) {
  const std::size_t total = tensor_set_size(spec, max_freq);
  if (total > 1'000'000) throw ConfigError("full tensor set exceeds 10^6 basis functions");
  std::vector<BasisTerm> basis;
  basis.reserve(total);
  for (std::size_t f = 0; f < total; ++f) basis.push_back(tensor_term(spec, max_freq, f, EncodingVariant::separable));
  return Encoding(spec, EncodingVariant::separable, std::move(basis));
}

}  // namespace neuropmd
