// SPDX-License-Identifier: Apache-2.0
#include "neuropmd/neuropmd.h"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <string>
#include <variant>

#include <json.hpp>

#include "neuropmd/baselines.hpp"
#include "neuropmd/error.hpp"
#include "neuropmd/io.hpp"

using namespace neuropmd;

struct npmd_dataset {
  Dataset ds;
};

struct npmd_mixture {
  WrappedNormalMixture mix;
};

struct npmd_model {
  npmd_model_kind kind = NPMD_MODEL_NEUROPMD;
  Checkpoint ck;  // field models
  VonMisesKde kde;
  std::string data_file;  // KDE only
};

struct npmd_density {
  DensityHandle f;
};

namespace {

thread_local std::string g_last_error;

npmd_status fail(npmd_status code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

template <typename Fn>
npmd_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return NPMD_OK;
  } catch (const ConfigError& e) {
    return fail(NPMD_ERR_CONFIG, e.what());
  } catch (const NumericalError& e) {
    return fail(NPMD_ERR_NUMERIC, e.what());
  } catch (const IoError& e) {
    return fail(NPMD_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(NPMD_ERR_INVALID, "out of memory");
  } catch (const std::exception& e) {
    return fail(NPMD_ERR_INVALID, e.what());
  }
}


void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

PointSet points_from(const ProductManifold& spec, const double* data, std::size_t n) {
  require(data != nullptr || n == 0, "point array is null");
  const int rows = spec.storage_dim();
  PointSet p = Eigen::Map<const Eigen::MatrixXd>(data, rows, static_cast<Eigen::Index>(n));
  spec.validate(p, 1e-6);
  return p;
}

void copy_row(const Eigen::RowVectorXd& v, double* out) {
  std::memcpy(out, v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
}

void copy_string(const std::string& s, char* buf, std::size_t cap) {
  require(buf != nullptr && cap > s.size(), "string buffer is too small");
  std::memcpy(buf, s.c_str(), s.size() + 1);
}

DensityHandle model_density(const npmd_model& m) {
  if (m.kind == NPMD_MODEL_KDE) return m.kde.handle();
  return field_density(m.ck.field, m.ck.params);
}

Integrator integrator_of(const char* text, std::uint64_t seed) {
  require(text != nullptr, "integrator is null");
  return Integrator::parse(text, seed);
}

void write_optional(const char* path, const std::string& content) {
  if (path && *path) write_file(path, content);
}

Region region_of(const char* text) {
  require(text != nullptr, "region is null");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed region: ") + e.what());
  }
  Region r;
  try {
    const std::string type = j.value("type", "all");
    if (type == "all") {
      r.kind = Region::Kind::all;
    } else if (type == "arc") {
      r.kind = Region::Kind::arc;
      r.lo = j.at("lo").get<double>();
      r.hi = j.at("hi").get<double>();
    } else if (type == "cap") {
      r.kind = Region::Kind::cap;
      const auto c = j.at("center").get<std::vector<double>>();
      if (c.size() != 3) throw ConfigError("cap center needs three coordinates");
      r.center = Eigen::Vector3d(c[0], c[1], c[2]);
      if (!(r.center.norm() > 0.0)) throw ConfigError("cap center must be nonzero");
      r.angle = j.at("angle").get<double>();
    } else {
      throw ConfigError("unknown region type '" + type + "'");
    }
    r.complement = j.value("complement", false);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid region: ") + e.what());
  }
  return r;
}

npmd_model* field_model(Checkpoint ck) {
  auto* m = new npmd_model;
  m->kind = ck.kind == Checkpoint::Kind::tpb ? NPMD_MODEL_TPB : NPMD_MODEL_NEUROPMD;
  m->ck = std::move(ck);
  return m;
}

NeuralField build_field(const RunConfig& cfg) {
  Encoding enc = sample_encoding(cfg.manifold, cfg.encoding);
  const std::size_t K = enc.size();
  return NeuralField(std::move(enc), make_field_config(K, cfg.hidden, cfg.activation, cfg.init_seed));
}

void check_data(const RunConfig& cfg, const npmd_dataset* data) {
  require(data != nullptr, "dataset is null");
  if (!(data->ds.manifold == cfg.manifold))
    throw ConfigError("dataset manifold (" + data->ds.manifold.describe() + ") does not match the configuration (" +
                      cfg.manifold.describe() + ")");
}

}  // namespace

extern "C" {

const char* npmd_version(void) { return "1.0.0"; }

const char* npmd_last_error(void) { return g_last_error.c_str(); }

// ---------------------------------------------------------------------------
// Datasets

npmd_status npmd_dataset_load(const char* path, npmd_dataset** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new npmd_dataset{load_dataset(path)};
  });
}

npmd_status npmd_dataset_save(const npmd_dataset* ds, const char* path) {
  return guarded([&] {
    require(ds && path, "null argument");
    save_dataset(path, ds->ds);
  });
}

npmd_status npmd_dataset_from_points(const char* manifold_json, const double* points, size_t n, npmd_dataset** out) {
  return guarded([&] {
    require(manifold_json && out, "null argument");
    Dataset ds;
    ds.manifold = manifold_from_json(manifold_json);
    ds.points = points_from(ds.manifold, points, n);
    ds.manifold.validate(ds.points, 1e-9);
    *out = new npmd_dataset{std::move(ds)};
  });
}

size_t npmd_dataset_size(const npmd_dataset* ds) { return ds ? static_cast<size_t>(ds->ds.points.cols()) : 0; }

int npmd_dataset_dim(const npmd_dataset* ds) { return ds ? ds->ds.manifold.storage_dim() : 0; }

npmd_status npmd_dataset_manifold_json(const npmd_dataset* ds, char* buf, size_t cap) {
  return guarded([&] {
    require(ds != nullptr, "null argument");
    copy_string(manifold_to_json(ds->ds.manifold), buf, cap);
  });
}

npmd_status npmd_dataset_copy_points(const npmd_dataset* ds, double* out, size_t capacity) {
  return guarded([&] {
    require(ds && out, "null argument");
    const auto size = static_cast<size_t>(ds->ds.points.size());
    require(capacity >= size, "output buffer is too small");
    std::memcpy(out, ds->ds.points.data(), sizeof(double) * size);
  });
}

void npmd_dataset_free(npmd_dataset* ds) { delete ds; }

// ---------------------------------------------------------------------------
// Mixtures

npmd_status npmd_mixture_preset(const char* name, uint64_t seed, npmd_mixture** out) {
  return guarded([&] {
    require(name && out, "null argument");
    Rng rng(seed);
    *out = new npmd_mixture{mixture_preset(name, rng)};
  });
}

npmd_status npmd_mixture_load(const char* path, npmd_mixture** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new npmd_mixture{mixture_from_json(read_file(path))};
  });
}

npmd_status npmd_mixture_save(const npmd_mixture* mix, const char* path) {
  return guarded([&] {
    require(mix && path, "null argument");
    write_file(path, mixture_to_json(mix->mix));
  });
}

npmd_status npmd_mixture_sample(const npmd_mixture* mix, size_t n, uint64_t seed, npmd_dataset** out) {
  return guarded([&] {
    require(mix && out, "null argument");
    if (n == 0) throw ConfigError("sample size must be >= 1");
    Rng rng(seed);
    *out = new npmd_dataset{Dataset{mix->mix.manifold(), mix->mix.sample(n, rng)}};
  });
}

void npmd_mixture_free(npmd_mixture* mix) { delete mix; }

// ---------------------------------------------------------------------------
// Fitting

npmd_status npmd_train(const char* config_json, const uint64_t* seed, const npmd_dataset* data,
                       const npmd_model* resume, const char* history_path, npmd_model** out) {
  return guarded([&] {
    require(config_json && out, "null argument");
    const RunConfig cfg = parse_run_config(config_json, seed ? std::optional<std::uint64_t>(*seed) : std::nullopt);
    check_data(cfg, data);

    Checkpoint ck;
    ck.kind = Checkpoint::Kind::neuropmd;
    FieldParams init;
    int start_epoch = 0;
    if (resume) {
      if (resume->kind != NPMD_MODEL_NEUROPMD) throw ConfigError("only neural field checkpoints can be resumed");
      if (!(resume->ck.field.manifold() == cfg.manifold)) throw ConfigError("checkpoint manifold does not match");
      ck.field = resume->ck.field;
      init = resume->ck.params;
      start_epoch = resume->ck.epoch;
    } else {
      ck.field = build_field(cfg);
      init = ck.field.initial_params();
    }

    PointSet train_pts = data->ds.points, val_pts;
    if (cfg.train.validation_every > 0 || cfg.train.patience > 0) {
      auto split = split_validation(data->ds.points, cfg.train.validation_fraction, cfg.train.seed);
      train_pts = std::move(split.first);
      val_pts = std::move(split.second);
    }
    TrainResult r = train(ck.field, std::move(init), train_pts, val_pts, cfg.train, start_epoch);
    ck.params = std::move(r.params);
    ck.epoch = r.last_epoch;
    ck.seed = cfg.seed;
    ck.train_json = nlohmann::json::parse(run_config_to_json(cfg)).dump();
    write_optional(history_path, history_to_csv(r.history));
    *out = field_model(std::move(ck));
  });
}

npmd_status npmd_select_tau(const char* config_json, const uint64_t* seed, const npmd_dataset* data,
                            const char* criteria_path, const char* history_path, double* tau_out,
                            npmd_model** out) {
  return guarded([&] {
    require(config_json && out, "null argument");
    RunConfig cfg = parse_run_config(config_json, seed ? std::optional<std::uint64_t>(*seed) : std::nullopt);
    check_data(cfg, data);
    std::vector<double> grid = cfg.tau_grid;
    if (grid.empty()) grid.push_back(cfg.train.tau);
    const NeuralField field = build_field(cfg);
    TauSelection sel = select_tau(field, data->ds.points, grid, cfg.train);

    std::string csv = "tau,criterion,status\n";
    for (const auto& c : sel.candidates)
      csv += format_double(c.tau) + ',' + (c.criterion ? format_double(*c.criterion) : std::string()) + ',' +
             (c.criterion ? std::string("ok") : "failed: " + c.error) + '\n';
    write_optional(criteria_path, csv);
    write_optional(history_path, history_to_csv(sel.best.history));

    cfg.train.tau = sel.tau;
    Checkpoint ck;
    ck.field = field;
    ck.params = std::move(sel.best.params);
    ck.epoch = sel.best.last_epoch;
    ck.seed = cfg.seed;
    ck.train_json = nlohmann::json::parse(run_config_to_json(cfg)).dump();
    if (tau_out) *tau_out = sel.tau;
    *out = field_model(std::move(ck));
  });
}

npmd_status npmd_fit_kde(const npmd_dataset* data, const char* data_file, const double* kappa_grid, size_t grid_len,
                         int folds, uint64_t seed, const char* integrator, double* scores_out, npmd_model** out) {
  return guarded([&] {
    require(data && kappa_grid && out, "null argument");
    if (!data->ds.manifold.is_torus()) throw ConfigError("the von Mises KDE is only available on tori");
    const std::vector<double> grid(kappa_grid, kappa_grid + grid_len);
    const KappaSelection sel = kde_select_kappa(data->ds.points, grid, folds, seed, integrator_of(integrator, seed));
    if (scores_out) std::copy(sel.scores.begin(), sel.scores.end(), scores_out);
    auto* m = new npmd_model;
    m->kind = NPMD_MODEL_KDE;
    m->kde = VonMisesKde(data->ds.points, sel.kappa);
    m->data_file = data_file ? data_file : "";
    *out = m;
  });
}

npmd_status npmd_kde_create(const npmd_dataset* data, const char* data_file, double kappa, npmd_model** out) {
  return guarded([&] {
    require(data && out, "null argument");
    if (!data->ds.manifold.is_torus()) throw ConfigError("the von Mises KDE is only available on tori");
    auto* m = new npmd_model;
    m->kind = NPMD_MODEL_KDE;
    try {
      m->kde = VonMisesKde(data->ds.points, kappa);
    } catch (...) {
      delete m;
      throw;
    }
    m->data_file = data_file ? data_file : "";
    *out = m;
  });
}

npmd_status npmd_fit_tpb(const npmd_dataset* data, const int* max_freq, size_t dims, const char* train_json,
                         uint64_t init_seed, int penalty_exponent, const char* history_path, npmd_model** out) {
  return guarded([&] {
    require(data && max_freq && train_json && out, "null argument");
    if (dims != data->ds.manifold.size()) throw ConfigError("max_freq needs one entry per marginal");
    const std::vector<int> mf(max_freq, max_freq + dims);
    const TrainConfig cfg = parse_train_config(train_json);
    std::vector<HistoryRow> history;
    TpbModel model = tpb_fit(data->ds.points, data->ds.manifold, mf, cfg, init_seed, penalty_exponent, &history);
    write_optional(history_path, history_to_csv(history));
    Checkpoint ck;
    ck.kind = Checkpoint::Kind::tpb;
    ck.field = std::move(model.field);
    ck.params = std::move(model.params);
    ck.seed = cfg.seed;
    ck.epoch = history.empty() ? 0 : history.back().epoch;
    ck.max_freq = mf;
    ck.penalty_exponent = penalty_exponent;
    ck.train_json = train_config_to_json(cfg);
    *out = field_model(std::move(ck));
  });
}

// ---------------------------------------------------------------------------
// Models

npmd_status npmd_model_load(const char* path, npmd_model** out) {
  return guarded([&] {
    require(path && out, "null argument");
    const std::string text = read_file(path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed model file: ") + e.what());
    }
    if (j.is_object() && j.value("model", "") == "kde") {
      const KdeFile kf = kde_from_json(text);
      std::filesystem::path data_path(kf.data_file);
      if (data_path.is_relative()) data_path = std::filesystem::path(path).parent_path() / data_path;
      Dataset ds = load_dataset(data_path.string());
      if (!ds.manifold.is_torus()) throw ConfigError("the von Mises KDE is only available on tori");
      auto* m = new npmd_model;
      m->kind = NPMD_MODEL_KDE;
      try {
        m->kde = VonMisesKde(std::move(ds.points), kf.kappa);
      } catch (...) {
        delete m;
        throw;
      }
      m->data_file = kf.data_file;
      *out = m;
      return;
    }
    *out = field_model(checkpoint_from_json(text));
  });
}

npmd_status npmd_model_save(const npmd_model* model, const char* path) {
  return guarded([&] {
    require(model && path, "null argument");
    if (model->kind == NPMD_MODEL_KDE) {
      if (model->data_file.empty()) throw ConfigError("KDE model has no data file to reference");
      write_file(path, kde_to_json({model->kde.kappa(), model->data_file}));
    } else {
      save_checkpoint(path, model->ck);
    }
  });
}

npmd_model_kind npmd_model_kind_of(const npmd_model* model) { return model ? model->kind : NPMD_MODEL_NEUROPMD; }

int npmd_model_epoch(const npmd_model* model) {
  return model && model->kind != NPMD_MODEL_KDE ? model->ck.epoch : 0;
}

double npmd_model_kappa(const npmd_model* model) {
  return model && model->kind == NPMD_MODEL_KDE ? model->kde.kappa() : 0.0;
}

npmd_status npmd_model_log_density(const npmd_model* model, const double* points, size_t n, double* out) {
  return guarded([&] {
    require(model && out, "null argument");
    if (model->kind == NPMD_MODEL_KDE) {
      const PointSet p = points_from(model->kde.manifold(), points, n);
      copy_row(model->kde.density(p).array().log().matrix(), out);
    } else {
      const PointSet p = points_from(model->ck.field.manifold(), points, n);
      copy_row(model->ck.field.forward(model->ck.params, p), out);
    }
  });
}

npmd_status npmd_model_snr(const npmd_model* model, const npmd_dataset* data, const char* train_json, double* out) {
  return guarded([&] {
    require(model && data && train_json && out, "null argument");
    if (model->kind == NPMD_MODEL_KDE) throw ConfigError("gradient SNR needs a field model");
    const TrainConfig cfg = parse_train_config(train_json);
    const NeuralField& field = model->ck.field;
    if (!(data->ds.manifold == field.manifold())) throw ConfigError("dataset manifold does not match the model");
    const Eigen::Index n = data->ds.points.cols();
    const auto b = static_cast<Eigen::Index>(cfg.batch_size == 0 ? static_cast<std::size_t>(n) : cfg.batch_size);
    if (b > n) throw ConfigError("batch size exceeds the number of data points");
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    Rng rng(cfg.seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    perm.resize(static_cast<std::size_t>(b));
    const PointSet batch = data->ds.points(Eigen::all, perm);
    const SamplingMode mode = default_sampling_mode(field.manifold());
    const PointSet mc1 = uniform_sample(field.manifold(), cfg.q1, rng, mode);
    const PointSet mc2 = uniform_sample(field.manifold(), cfg.q2, rng, mode);
    const double tau = model->kind == NPMD_MODEL_TPB ? 0.0 : cfg.tau;
    const SnrReport r = grad_snr(field, model->ck.params, batch, mc1, mc2, tau, cfg.penalty, cfg.fd_step);
    out[0] = r.snr_a;
    out[1] = r.snr_b;
    out[2] = r.snr_c;
  });
}

void npmd_model_free(npmd_model* model) { delete model; }

// ---------------------------------------------------------------------------
// Densities and metrics

npmd_status npmd_density_from_mixture(const npmd_mixture* mix, npmd_density** out) {
  return guarded([&] {
    require(mix && out, "null argument");
    *out = new npmd_density{{mix->mix.manifold(), [m = mix->mix](const PointSet& p) { return m.density(p); }}};
  });
}

npmd_status npmd_density_from_model(const npmd_model* model, npmd_density** out) {
  return guarded([&] {
    require(model && out, "null argument");
    *out = new npmd_density{model_density(*model)};
  });
}

npmd_status npmd_density_uniform(const char* manifold_json, npmd_density** out) {
  return guarded([&] {
    require(manifold_json && out, "null argument");
    *out = new npmd_density{uniform_density(manifold_from_json(manifold_json))};
  });
}

npmd_status npmd_density_eval(const npmd_density* f, const double* points, size_t n, double* out) {
  return guarded([&] {
    require(f && out, "null argument");
    copy_row(f->f(points_from(f->f.manifold, points, n)), out);
  });
}

npmd_status npmd_density_manifold_json(const npmd_density* f, char* buf, size_t cap) {
  return guarded([&] {
    require(f != nullptr, "null argument");
    copy_string(manifold_to_json(f->f.manifold), buf, cap);
  });
}

void npmd_density_free(npmd_density* f) { delete f; }

npmd_status npmd_integral(const npmd_density* f, const char* integrator, uint64_t seed, double* out) {
  return guarded([&] {
    require(f && out, "null argument");
    *out = integrate(f->f, integrator_of(integrator, seed).quadrature(f->f.manifold));
  });
}

npmd_status npmd_nise(const npmd_density* truth, const npmd_density* est, const char* integrator, uint64_t seed,
                      double* out) {
  return guarded([&] {
    require(truth && est && out, "null argument");
    *out = nise(truth->f, est->f, integrator_of(integrator, seed));
  });
}

npmd_status npmd_fisher_rao(const npmd_density* truth, const npmd_density* est, const char* integrator,
                            uint64_t seed, const char* convention, double* out) {
  return guarded([&] {
    require(truth && est && out, "null argument");
    const FrConvention c = parse_fr_convention(convention ? convention : "as_written");
    *out = fisher_rao(truth->f, est->f, integrator_of(integrator, seed), c);
  });
}

npmd_status npmd_ise_criterion(const npmd_density* est, const npmd_dataset* validation, const char* integrator,
                               uint64_t seed, double* out) {
  return guarded([&] {
    require(est && validation && out, "null argument");
    if (!(validation->ds.manifold == est->f.manifold)) throw ConfigError("validation data manifold does not match");
    *out = ise_criterion(est->f, validation->ds.points, integrator_of(integrator, seed));
  });
}

npmd_status npmd_marginal_density(const npmd_density* f, const char* region_json, const char* integrator,
                                  uint64_t seed, const double* x2, size_t n, double* out) {
  return guarded([&] {
    require(f && out, "null argument");
    if (f->f.manifold.size() != 2) throw ConfigError("marginal densities need a product of exactly two manifolds");
    const ProductManifold second({f->f.manifold[1]});
    const PointSet pts = points_from(second, x2, n);
    copy_row(marginal_density(f->f, region_of(region_json), integrator_of(integrator, seed), pts), out);
  });
}

npmd_status npmd_grid_values(const npmd_density* f, int res, int log_quantity, double* out) {
  return guarded([&] {
    require(f && out, "null argument");
    const Eigen::MatrixXd g =
        torus_grid_values(f->f, res, log_quantity ? SpectrumQuantity::log_density : SpectrumQuantity::density);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out, res, res) = g;
  });
}

npmd_status npmd_spectrum(const npmd_density* f, int res, int log_quantity, double* out) {
  return guarded([&] {
    require(f && out, "null argument");
    const Eigen::MatrixXd s =
        spectral_content(f->f, res, log_quantity ? SpectrumQuantity::log_density : SpectrumQuantity::density);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out, res, res) = s;
  });
}

}  // extern "C"
