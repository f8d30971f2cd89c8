// SPDX-License-Identifier: Apache-2.0
#include "neuropmd/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "neuropmd/error.hpp"

namespace neuropmd {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointVersion = "neuropmd-ckpt-1";

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : obj.items())
    if (!allowed.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("malformed " + what + ": " + e.what());
  }
}

template <typename T>
T get_as(const json& obj, const std::string& key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("missing or invalid '" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  return get_as<T>(obj, key, where);
}

json manifold_json(const ProductManifold& spec) {
  json arr = json::array();
  for (const auto& m : spec.marginals()) arr.push_back({{"kind", to_string(m.kind)}});
  return arr;
}

ProductManifold manifold_of(const json& arr) {
  if (!arr.is_array() || arr.empty()) throw ConfigError("manifold must be a nonempty list of {\"kind\": ...}");
  std::vector<MarginalManifold> ms;
  for (const auto& item : arr) {
    check_keys(item, {"kind"}, "manifold entry");
    ms.push_back({parse_manifold_kind(get_as<std::string>(item, "kind", "manifold entry"))});
  }
  return ProductManifold(std::move(ms));
}

json term_json(const BasisTerm& term) {
  if (const auto* s = std::get_if<SeparableTerm>(&term)) {
    json factors = json::array();
    for (const auto& f : s->factors) {
      if (const auto* c = std::get_if<CircleIndex>(&f))
        factors.push_back({{"freq", c->freq}, {"phase", c->phase}});
      else {
        const auto& sp = std::get<SphereIndex>(f);
        factors.push_back({{"degree", sp.degree}, {"order", sp.order}});
      }
    }
    return {{"factors", factors}};
  }
  const auto& r = std::get<RotatedTerm>(term);
  return {{"freqs", r.freqs}, {"sine", r.sine}};
}

BasisTerm term_of(const json& j) {
  if (j.contains("factors")) {
    SeparableTerm s;
    for (const auto& f : j.at("factors")) {
      if (f.contains("freq"))
        s.factors.emplace_back(CircleIndex{get_as<int>(f, "freq", "basis factor"), get_as<int>(f, "phase", "basis factor")});
      else
        s.factors.emplace_back(SphereIndex{get_as<int>(f, "degree", "basis factor"), get_as<int>(f, "order", "basis factor")});
    }
    return s;
  }
  return RotatedTerm{get_as<std::vector<int>>(j, "freqs", "basis term"), get_as<bool>(j, "sine", "basis term")};
}

std::vector<int> expand_max_freq(const json& j, std::size_t dims, const std::string& where) {
  if (j.is_number_integer()) return std::vector<int>(dims, j.get<int>());
  try {
    auto v = j.get<std::vector<int>>();
    if (v.size() != dims) throw ConfigError("max_freq in " + where + " needs one entry per marginal");
    return v;
  } catch (const json::exception&) {
    throw ConfigError("max_freq in " + where + " must be an integer or a list of integers");
  }
}

json train_json(const TrainConfig& c) {
  json j = {{"tau", c.tau},
            {"batch_size", c.batch_size},
            {"q1", c.q1},
            {"q2", c.q2},
            {"epochs", c.epochs},
            {"schedule", c.schedule.describe()},
            {"penalty", to_string(c.penalty)},
            {"fd_step", c.fd_step},
            {"seed", c.seed},
            {"validation_fraction", c.validation_fraction},
            {"validation_every", c.validation_every},
            {"validation_integrator", c.validation_integrator},
            {"snr_every", c.snr_every},
            {"grad_clip", c.grad_clip},
            {"patience", c.patience},
            {"quadratic_proximal", c.quadratic_proximal}};
  return j;
}

const std::set<std::string> kTrainKeys = {"tau", "batch_size", "q1", "q2", "epochs", "schedule", "penalty",
                                          "fd_step", "seed", "validation_fraction", "validation_every",
                                          "validation_integrator", "snr_every", "grad_clip", "patience",
                                          "quadratic_proximal", "tau_grid"};

TrainConfig train_of(const json& j, const std::string& where) {
  check_keys(j, kTrainKeys, where);
  TrainConfig c;
  c.tau = get_or<double>(j, "tau", c.tau, where);
  c.batch_size = get_or<std::size_t>(j, "batch_size", c.batch_size, where);
  c.q1 = get_or<std::size_t>(j, "q1", c.q1, where);
  c.q2 = get_or<std::size_t>(j, "q2", c.q2, where);
  c.epochs = get_or<int>(j, "epochs", c.epochs, where);
  if (j.contains("schedule")) c.schedule = LearningRateSchedule::parse(get_as<std::string>(j, "schedule", where));
  if (j.contains("penalty")) c.penalty = parse_penalty_method(get_as<std::string>(j, "penalty", where));
  c.fd_step = get_or<double>(j, "fd_step", c.fd_step, where);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed, where);
  c.validation_fraction = get_or<double>(j, "validation_fraction", c.validation_fraction, where);
  c.validation_every = get_or<int>(j, "validation_every", c.validation_every, where);
  c.validation_integrator = get_or<std::string>(j, "validation_integrator", c.validation_integrator, where);
  c.snr_every = get_or<int>(j, "snr_every", c.snr_every, where);
  c.grad_clip = get_or<double>(j, "grad_clip", c.grad_clip, where);
  c.patience = get_or<int>(j, "patience", c.patience, where);
  c.quadratic_proximal = get_or<bool>(j, "quadratic_proximal", c.quadratic_proximal, where);
  c.validate();
  Integrator::parse(c.validation_integrator);
  return c;
}

}  // namespace

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("failed writing '" + path + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path + "'");
  }
}

std::string history_to_csv(const std::vector<HistoryRow>& rows) {
  std::string out = "epoch,objective,lr,validation_criterion,snr_a,snr_b,snr_c\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + ',' + format_double(r.objective) + ',' + format_double(r.lr) + ',';
    if (r.validation) out += format_double(*r.validation);
    if (r.snr)
      out += ',' + format_double(r.snr->snr_a) + ',' + format_double(r.snr->snr_b) + ',' + format_double(r.snr->snr_c);
    else
      out += ",,,";
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Datasets

std::string dataset_header(const ProductManifold& spec) {
  std::string h;
  for (std::size_t d = 0; d < spec.size(); ++d) {
    if (d) h += ',';
    const std::string base = to_string(spec[d].kind) + std::to_string(d);
    if (spec[d].kind == ManifoldKind::circle)
      h += base;
    else
      h += base + "_x," + base + "_y," + base + "_z";
  }
  return h;
}

ProductManifold manifold_from_header(const std::string& header) {
  std::vector<std::string> cols;
  std::stringstream ss(header);
  std::string c;
  while (std::getline(ss, c, ',')) {
    while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) c.pop_back();
    cols.push_back(c);
  }
  std::vector<MarginalManifold> ms;
  std::size_t i = 0;
  while (i < cols.size()) {
    const std::string d = std::to_string(ms.size());
    if (cols[i] == "circle" + d) {
      ms.push_back({ManifoldKind::circle});
      i += 1;
    } else if (i + 2 < cols.size() && cols[i] == "sphere2" + d + "_x" && cols[i + 1] == "sphere2" + d + "_y" &&
               cols[i + 2] == "sphere2" + d + "_z") {
      ms.push_back({ManifoldKind::sphere2});
      i += 3;
    } else {
      throw ConfigError("unrecognised dataset header column '" + cols[i] + "'");
    }
  }
  if (ms.empty()) throw ConfigError("dataset header is empty");
  return ProductManifold(std::move(ms));
}

std::string dataset_to_csv(const Dataset& ds) {
  std::string out = dataset_header(ds.manifold) + "\n";
  for (Eigen::Index j = 0; j < ds.points.cols(); ++j) {
    for (Eigen::Index r = 0; r < ds.points.rows(); ++r) {
      if (r) out += ',';
      out += format_double(ds.points(r, j));
    }
    out += '\n';
  }
  return out;
}

Dataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("dataset is empty");
  Dataset ds;
  ds.manifold = manifold_from_header(line);
  const int rows = ds.manifold.storage_dim();
  std::vector<double> values;
  std::size_t count = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::stringstream ls(line);
    std::string cell;
    int k = 0;
    while (std::getline(ls, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      while (end && (*end == ' ' || *end == '\r')) ++end;
      if (end == cell.c_str() || (end && *end != '\0') || !std::isfinite(v))
        throw ConfigError("bad number on dataset line " + std::to_string(lineno));
      values.push_back(v);
      ++k;
    }
    if (k != rows) throw ConfigError("dataset line " + std::to_string(lineno) + " has " + std::to_string(k) +
                                     " columns, expected " + std::to_string(rows));
    ++count;
  }
  ds.points = Eigen::Map<Eigen::MatrixXd>(values.data(), rows, static_cast<Eigen::Index>(count));
  ds.manifold.validate(ds.points, 1e-9);
  return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) { write_file(path, dataset_to_csv(ds)); }

Dataset load_dataset(const std::string& path) { return dataset_from_csv(read_file(path)); }

// ---------------------------------------------------------------------------
// Mixtures and manifolds

std::string mixture_to_json(const WrappedNormalMixture& mix) {
  json comps = json::array();
  for (const auto& c : mix.components()) {
    json cov = json::array();
    for (Eigen::Index r = 0; r < c.covariance.rows(); ++r) {
      std::vector<double> row;
      for (Eigen::Index k = 0; k < c.covariance.cols(); ++k) row.push_back(c.covariance(r, k));
      cov.push_back(row);
    }
    comps.push_back({{"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())},
                     {"covariance", cov},
                     {"weight", c.weight}});
  }
  json j = {{"type", "wrapped_normal_mixture"}, {"dim", mix.dim()}, {"wrap_window", mix.wrap_window()},
            {"components", comps}};
  return j.dump(2) + "\n";
}

WrappedNormalMixture mixture_from_json(const std::string& text) {
  const json j = parse_json(text, "mixture file");
  check_keys(j, {"type", "dim", "wrap_window", "components"}, "mixture file");
  if (get_or<std::string>(j, "type", "wrapped_normal_mixture", "mixture file") != "wrapped_normal_mixture")
    throw ConfigError("mixture file has an unsupported type");
  std::vector<MixtureComponent> comps;
  if (!j.contains("components") || !j.at("components").is_array()) throw ConfigError("mixture file needs components");
  for (const auto& c : j.at("components")) {
    check_keys(c, {"mean", "covariance", "weight"}, "mixture component");
    MixtureComponent mc;
    const auto mean = get_as<std::vector<double>>(c, "mean", "mixture component");
    const auto cov = get_as<std::vector<std::vector<double>>>(c, "covariance", "mixture component");
    const auto D = static_cast<Eigen::Index>(mean.size());
    mc.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), D);
    if (static_cast<Eigen::Index>(cov.size()) != D) throw ConfigError("covariance shape does not match the mean");
    mc.covariance.resize(D, D);
    for (Eigen::Index r = 0; r < D; ++r) {
      if (static_cast<Eigen::Index>(cov[static_cast<std::size_t>(r)].size()) != D)
        throw ConfigError("covariance shape does not match the mean");
      for (Eigen::Index k = 0; k < D; ++k) mc.covariance(r, k) = cov[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)];
    }
    mc.weight = get_as<double>(c, "weight", "mixture component");
    comps.push_back(std::move(mc));
  }
  WrappedNormalMixture mix(std::move(comps), get_or<int>(j, "wrap_window", 3, "mixture file"));
  if (j.contains("dim") && get_as<int>(j, "dim", "mixture file") != mix.dim())
    throw ConfigError("mixture dim does not match its components");
  return mix;
}

std::string manifold_to_json(const ProductManifold& spec) { return manifold_json(spec).dump(); }

ProductManifold manifold_from_json(const std::string& text) { return manifold_of(parse_json(text, "manifold")); }

// ---------------------------------------------------------------------------
// Checkpoints

std::string checkpoint_to_json(const Checkpoint& ck) {
  const Encoding& enc = ck.field.encoding();
  json terms = json::array();
  for (const auto& t : enc.basis()) terms.push_back(term_json(t));
  const Eigen::VectorXd theta = ck.params.flatten();
  json j = {{"version", kCheckpointVersion},
            {"model", ck.kind == Checkpoint::Kind::tpb ? "tpb" : "neuropmd"},
            {"manifold", manifold_json(ck.field.manifold())},
            {"encoding", {{"variant", to_string(enc.variant())}, {"terms", terms}}},
            {"field",
             {{"widths", ck.field.config().widths},
              {"activation", to_string(ck.field.config().activation)},
              {"init_seed", ck.field.config().init_seed}}},
            {"theta", std::vector<double>(theta.data(), theta.data() + theta.size())},
            {"seed", ck.seed},
            {"epoch", ck.epoch},
            {"train", parse_json(ck.train_json, "training configuration")}};
  if (ck.kind == Checkpoint::Kind::tpb)
    j["tpb"] = {{"depth", 1}, {"max_freq", ck.max_freq}, {"penalty_exponent", ck.penalty_exponent}};
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  const json j = parse_json(text, "checkpoint");
  check_keys(j, {"version", "model", "manifold", "encoding", "field", "theta", "seed", "epoch", "train", "tpb"},
             "checkpoint");
  if (get_or<std::string>(j, "version", "", "checkpoint") != kCheckpointVersion)
    throw ConfigError("unsupported checkpoint version (expected " + std::string(kCheckpointVersion) + ")");
  Checkpoint ck;
  const std::string model = get_as<std::string>(j, "model", "checkpoint");
  if (model == "tpb")
    ck.kind = Checkpoint::Kind::tpb;
  else if (model != "neuropmd")
    throw ConfigError("unknown checkpoint model '" + model + "'");
  ProductManifold spec = manifold_of(j.at("manifold"));
  const json& e = j.at("encoding");
  std::vector<BasisTerm> terms;
  for (const auto& t : e.at("terms")) terms.push_back(term_of(t));
  Encoding enc(spec, parse_encoding_variant(get_as<std::string>(e, "variant", "checkpoint encoding")), std::move(terms));
  const json& f = j.at("field");
  FieldConfig fc;
  fc.widths = get_as<std::vector<int>>(f, "widths", "checkpoint field");
  fc.activation = parse_activation(get_as<std::string>(f, "activation", "checkpoint field"));
  fc.init_seed = get_as<std::uint64_t>(f, "init_seed", "checkpoint field");
  ck.field = NeuralField(std::move(enc), fc);
  const auto theta = get_as<std::vector<double>>(j, "theta", "checkpoint");
  ck.params = FieldParams::unflatten(fc, Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size())));
  ck.seed = get_as<std::uint64_t>(j, "seed", "checkpoint");
  ck.epoch = get_as<int>(j, "epoch", "checkpoint");
  ck.train_json = j.contains("train") ? j.at("train").dump() : "{}";
  if (ck.kind == Checkpoint::Kind::tpb) {
    const json& t = j.at("tpb");
    ck.max_freq = get_as<std::vector<int>>(t, "max_freq", "checkpoint tpb");
    ck.penalty_exponent = get_or<int>(t, "penalty_exponent", 2, "checkpoint tpb");
    if (fc.depth() != 1) throw ConfigError("tpb checkpoints must have depth 1");
  }
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) { write_file(path, checkpoint_to_json(ck)); }

Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(read_file(path)); }

std::string kde_to_json(const KdeFile& k) {
  return json({{"model", "kde"}, {"kappa", k.kappa}, {"data_file", k.data_file}}).dump(2) + "\n";
}

KdeFile kde_from_json(const std::string& text) {
  const json j = parse_json(text, "KDE file");
  check_keys(j, {"model", "kappa", "data_file"}, "KDE file");
  return {get_as<double>(j, "kappa", "KDE file"), get_as<std::string>(j, "data_file", "KDE file")};
}

// ---------------------------------------------------------------------------
// Run configuration

TrainConfig parse_train_config(const std::string& text) { return train_of(parse_json(text, "train config"), "train config"); }

std::string train_config_to_json(const TrainConfig& cfg) { return train_json(cfg).dump(); }

RunConfig parse_run_config(const std::string& text, std::optional<std::uint64_t> seed) {
  const json j = parse_json(text, "run config");
  check_keys(j, {"manifold", "seed", "encoding", "field", "train", "paths"}, "run config");
  RunConfig cfg;
  if (!j.contains("manifold")) throw ConfigError("run config needs a manifold");
  cfg.manifold = manifold_of(j.at("manifold"));
  if (seed)
    cfg.seed = *seed;
  else if (j.contains("seed"))
    cfg.seed = get_as<std::uint64_t>(j, "seed", "run config");
  else
    throw ConfigError("a seed is required");

  const json enc = j.value("encoding", json::object());
  check_keys(enc, {"K", "max_freq", "variant", "seed"}, "encoding config");
  cfg.encoding.K = get_as<std::size_t>(enc, "K", "encoding config");
  cfg.encoding.max_freq = expand_max_freq(enc.value("max_freq", json(10)), cfg.manifold.size(), "encoding config");
  cfg.encoding.variant = parse_encoding_variant(get_or<std::string>(enc, "variant", "separable", "encoding config"));
  cfg.encoding.seed = get_or<std::uint64_t>(enc, "seed", cfg.seed + 1, "encoding config");

  const json fld = j.value("field", json::object());
  check_keys(fld, {"hidden", "activation", "init_seed"}, "field config");
  cfg.hidden = get_or<std::vector<int>>(fld, "hidden", {}, "field config");
  cfg.activation = parse_activation(get_or<std::string>(fld, "activation", "sine", "field config"));
  cfg.init_seed = get_or<std::uint64_t>(fld, "init_seed", cfg.seed + 2, "field config");

  json tr = j.value("train", json::object());
  if (!tr.contains("seed")) tr["seed"] = cfg.seed + 3;
  cfg.train = train_of(tr, "train config");
  cfg.tau_grid = get_or<std::vector<double>>(tr, "tau_grid", {}, "train config");
  for (double t : cfg.tau_grid)
    if (!(t >= 0.0) || !std::isfinite(t)) throw ConfigError("tau grid entries must be finite and >= 0");

  if (j.contains("paths")) {
    for (const auto& item : j.at("paths").items()) {
      if (!item.value().is_string()) throw ConfigError("paths must map names to strings");
      cfg.paths[item.key()] = item.value().get<std::string>();
    }
  }
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json tr = train_json(cfg.train);
  if (!cfg.tau_grid.empty()) tr["tau_grid"] = cfg.tau_grid;
  json j = {{"manifold", manifold_json(cfg.manifold)},
            {"seed", cfg.seed},
            {"encoding",
             {{"K", cfg.encoding.K},
              {"max_freq", cfg.encoding.max_freq},
              {"variant", to_string(cfg.encoding.variant)},
              {"seed", cfg.encoding.seed}}},
            {"field", {{"hidden", cfg.hidden}, {"activation", to_string(cfg.activation)}, {"init_seed", cfg.init_seed}}},
            {"train", tr}};
  if (!cfg.paths.empty()) j["paths"] = cfg.paths;
  return j.dump(2) + "\n";
}

}  // namespace neuropmd
