// SPDX-License-Identifier: Apache-2.0
//
// neuropmd command-line driver. Built on the C interface only.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "neuropmd/neuropmd.h"

namespace {

constexpr double kPi = 3.14159265358979323846;

struct CliError : std::runtime_error {
  int code;
  CliError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

int exit_code_for(npmd_status s) { return s == NPMD_ERR_NUMERIC ? 3 : 2; }

void check(npmd_status s) {
  if (s != NPMD_OK) throw CliError(exit_code_for(s), npmd_last_error());
}

void usage_error(const std::string& msg) { throw CliError(2, msg); }

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Dataset = std::unique_ptr<npmd_dataset, Deleter<npmd_dataset, npmd_dataset_free>>;
using Mixture = std::unique_ptr<npmd_mixture, Deleter<npmd_mixture, npmd_mixture_free>>;
using Model = std::unique_ptr<npmd_model, Deleter<npmd_model, npmd_model_free>>;
using Density = std::unique_ptr<npmd_density, Deleter<npmd_density, npmd_density_free>>;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) usage_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text, bool append = false) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
  if (!out) usage_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) usage_error("failed writing '" + path + "'");
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Dataset load_dataset(const std::string& path) {
  npmd_dataset* ds = nullptr;
  check(npmd_dataset_load(path.c_str(), &ds));
  return Dataset(ds);
}

Model load_model(const std::string& path) {
  npmd_model* m = nullptr;
  check(npmd_model_load(path.c_str(), &m));
  return Model(m);
}

Density density_of(const npmd_model* m) {
  npmd_density* d = nullptr;
  check(npmd_density_from_model(m, &d));
  return Density(d);
}

Density density_of_mixture(const std::string& path) {
  npmd_mixture* mix = nullptr;
  check(npmd_mixture_load(path.c_str(), &mix));
  Mixture owner(mix);
  npmd_density* d = nullptr;
  check(npmd_density_from_mixture(mix, &d));
  return Density(d);
}

std::vector<std::string> manifold_kinds(const npmd_density* f) {
  std::vector<char> buf(4096);
  check(npmd_density_manifold_json(f, buf.data(), buf.size()));
  std::vector<std::string> kinds;
  for (const auto& m : nlohmann::json::parse(buf.data())) kinds.push_back(m.at("kind").get<std::string>());
  return kinds;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || *end != '\0') usage_error("bad number '" + item + "' in list");
    out.push_back(v);
  }
  if (out.empty()) usage_error("empty list");
  return out;
}

/// Writes a res x res matrix with frequency or coordinate labels.
std::string matrix_csv(const std::vector<double>& m, int res, bool frequencies) {
  auto label = [&](int i) {
    return frequencies ? std::to_string(i - res / 2) : fmt(-kPi + 2.0 * kPi * i / res);
  };
  std::string out = frequencies ? "k0\\k1" : "x0\\x1";
  for (int j = 0; j < res; ++j) out += "," + label(j);
  out += "\n";
  for (int i = 0; i < res; ++i) {
    out += label(i);
    for (int j = 0; j < res; ++j) out += "," + fmt(m[static_cast<std::size_t>(i) * res + j]);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

struct SimulateOpts {
  std::string preset, spec, out, spec_out;
  long long n = -1;
  std::uint64_t seed = 0;
};

void cmd_simulate(const SimulateOpts& o) {
  if (o.n < 1) usage_error("--n must be >= 1");
  if (o.preset.empty() == o.spec.empty()) usage_error("give exactly one of --preset or --spec");
  npmd_mixture* mix = nullptr;
  if (!o.preset.empty())
    check(npmd_mixture_preset(o.preset.c_str(), o.seed, &mix));
  else
    check(npmd_mixture_load(o.spec.c_str(), &mix));
  Mixture owner(mix);
  npmd_dataset* ds = nullptr;
  check(npmd_mixture_sample(mix, static_cast<size_t>(o.n), o.seed + 1, &ds));
  Dataset data(ds);
  check(npmd_dataset_save(ds, o.out.c_str()));
  const std::string spec_out = o.spec_out.empty() ? o.out + ".spec.json" : o.spec_out;
  check(npmd_mixture_save(mix, spec_out.c_str()));
}

struct TrainOpts {
  std::string config, data, checkpoint, history, resume, criteria;
  std::uint64_t seed = 0;
  bool has_seed = false;
};

void cmd_train(const TrainOpts& o, bool force_select) {
  const std::string text = read_text(o.config);
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    usage_error(std::string("malformed config: ") + e.what());
  }
  auto path_or = [&](const std::string& flag, const char* key) {
    if (!flag.empty()) return flag;
    if (cfg.contains("paths") && cfg["paths"].contains(key)) return cfg["paths"][key].get<std::string>();
    return std::string();
  };
  const std::string data_path = path_or(o.data, "data");
  const std::string ckpt_path = path_or(o.checkpoint, "checkpoint");
  const std::string history_path = path_or(o.history, "history");
  if (data_path.empty()) usage_error("no dataset given (--data or paths.data)");
  if (ckpt_path.empty()) usage_error("no checkpoint output given (--checkpoint or paths.checkpoint)");

  Dataset data = load_dataset(data_path);
  const std::uint64_t* seed = o.has_seed ? &o.seed : nullptr;
  const bool grid = cfg.contains("train") && cfg["train"].contains("tau_grid") && !cfg["train"]["tau_grid"].empty();
  npmd_model* m = nullptr;
  if (force_select || grid) {
    if (!o.resume.empty()) usage_error("--resume cannot be combined with tau selection");
    const std::string criteria = path_or(o.criteria, "criteria");
    double tau = 0.0;
    check(npmd_select_tau(text.c_str(), seed, data.get(), criteria.empty() ? nullptr : criteria.c_str(),
                          history_path.empty() ? nullptr : history_path.c_str(), &tau, &m));
    std::cerr << "selected tau = " << fmt(tau) << "\n";
  } else {
    Model resume;
    if (!o.resume.empty()) resume = load_model(o.resume);
    check(npmd_train(text.c_str(), seed, data.get(), resume.get(), history_path.empty() ? nullptr : history_path.c_str(),
                     &m));
  }
  Model model(m);
  check(npmd_model_save(m, ckpt_path.c_str()));
}

struct KdeOpts {
  std::string data, out, kappas = "0,1,2,5,10,20,50,100,200,500", integrator = "grid:128", scores;
  int folds = 5;
  std::uint64_t seed = 0;
};

void cmd_fit_kde(const KdeOpts& o) {
  Dataset data = load_dataset(o.data);
  const std::vector<double> grid = parse_list(o.kappas);
  std::vector<double> scores(grid.size());
  npmd_model* m = nullptr;
  check(npmd_fit_kde(data.get(), o.data.c_str(), grid.data(), grid.size(), o.folds, o.seed + 5, o.integrator.c_str(),
                     scores.data(), &m));
  Model model(m);
  check(npmd_model_save(m, o.out.c_str()));
  if (!o.scores.empty()) {
    std::string csv = "kappa,criterion\n";
    for (std::size_t i = 0; i < grid.size(); ++i) csv += fmt(grid[i]) + "," + fmt(scores[i]) + "\n";
    write_text(o.scores, csv);
  }
  std::cerr << "selected kappa = " << fmt(npmd_model_kappa(m)) << "\n";
}

struct TpbOpts {
  std::string data, out, history, config, schedule = "fixed:1e-2";
  int max_freq = 5, epochs = 500, penalty_exponent = 2;
  double tau = 1e-2;
  long long batch_size = 0, q1 = 1024;
  std::uint64_t seed = 0, init_seed = 0;
  bool has_init_seed = false;
};

void cmd_fit_tpb(const TpbOpts& o) {
  Dataset data = load_dataset(o.data);
  std::string train_json;
  if (!o.config.empty()) {
    train_json = read_text(o.config);
  } else {
    nlohmann::json j = {{"tau", o.tau},           {"epochs", o.epochs}, {"schedule", o.schedule},
                        {"batch_size", o.batch_size}, {"q1", o.q1},     {"seed", o.seed + 3}};
    train_json = j.dump();
  }
  std::vector<char> buf(4096);
  check(npmd_dataset_manifold_json(data.get(), buf.data(), buf.size()));
  const std::size_t dims = nlohmann::json::parse(buf.data()).size();
  const std::vector<int> mf(dims, o.max_freq);
  npmd_model* m = nullptr;
  check(npmd_fit_tpb(data.get(), mf.data(), dims, train_json.c_str(), o.has_init_seed ? o.init_seed : o.seed + 2,
                     o.penalty_exponent, o.history.empty() ? nullptr : o.history.c_str(), &m));
  Model model(m);
  check(npmd_model_save(m, o.out.c_str()));
}

void write_spectrum(const npmd_density* d, int res, bool log_q, const std::string& out, const std::string& grid_out) {
  if (res < 2) usage_error("spectrum resolution must be >= 2");
  std::vector<double> buf(static_cast<std::size_t>(res) * res);
  check(npmd_spectrum(d, res, log_q ? 1 : 0, buf.data()));
  write_text(out, matrix_csv(buf, res, true));
  if (!grid_out.empty()) {
    check(npmd_grid_values(d, res, log_q ? 1 : 0, buf.data()));
    write_text(grid_out, matrix_csv(buf, res, false));
  }
}

void write_marginal(const npmd_density* d, const std::string& region_arg, const std::string& integrator,
                    std::uint64_t seed, const std::string& points, int grid, const std::string& out) {
  const auto kinds = manifold_kinds(d);
  if (kinds.size() != 2) usage_error("marginal densities need a product of exactly two manifolds");
  const int width = kinds[1] == "circle" ? 1 : 3;

  std::string region = region_arg;
  if (!region.empty() && region.front() != '{') region = read_text(region);

  std::vector<double> x2;
  if (!points.empty()) {
    Dataset pts = load_dataset(points);
    if (npmd_dataset_dim(pts.get()) != width) usage_error("--points do not match the second marginal");
    x2.resize(npmd_dataset_size(pts.get()) * static_cast<std::size_t>(width));
    check(npmd_dataset_copy_points(pts.get(), x2.data(), x2.size()));
  } else {
    if (grid < 1) usage_error("give --points or --grid N");
    for (int i = 0; i < grid; ++i) {
      if (width == 1) {
        x2.push_back(-kPi + 2.0 * kPi * i / grid);
      } else {
        // Fibonacci lattice on the sphere.
        const double z = 1.0 - (2.0 * i + 1.0) / grid;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = i * kPi * (3.0 - std::sqrt(5.0));
        x2.insert(x2.end(), {r * std::cos(phi), r * std::sin(phi), z});
      }
    }
  }
  const std::size_t n = x2.size() / static_cast<std::size_t>(width);
  std::vector<double> vals(n);
  check(npmd_marginal_density(d, region.c_str(), integrator.c_str(), seed, x2.data(), n, vals.data()));
  std::string csv = width == 1 ? "x\n" : "x,y,z\n";
  csv.pop_back();
  csv += ",marginal_density\n";
  for (std::size_t j = 0; j < n; ++j) {
    for (int c = 0; c < width; ++c) csv += fmt(x2[j * static_cast<std::size_t>(width) + static_cast<std::size_t>(c)]) + ",";
    csv += fmt(vals[j]) + "\n";
  }
  write_text(out, csv);
}

struct EvalOpts {
  std::vector<std::string> models;
  std::string truth, out = "-", metrics = "nise,fr", conventions = "as_written", integrator = "grid:256", ranked;
  std::string marginal, diag_dir = ".", quantity = "log_density";
  int spectrum = 0, marginal_grid = 64;
  bool truth_uniform = false, append = false, compare = false;
  std::uint64_t seed = 0;
};

void cmd_evaluate(const EvalOpts& o) {
  if (o.models.empty()) usage_error("give at least one --model");
  struct Entry {
    std::string name;
    Model model;
    Density density;
  };
  std::vector<Entry> entries;
  for (const auto& spec : o.models) {
    const auto eq = spec.find('=');
    const std::string name = eq == std::string::npos ? spec : spec.substr(0, eq);
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    Model m = load_model(path);
    Density d = density_of(m.get());
    entries.push_back({name, std::move(m), std::move(d)});
  }
  Density truth;
  if (o.truth_uniform == !o.truth.empty()) usage_error("give exactly one of --truth or --truth-uniform");
  if (o.truth_uniform) {
    std::vector<char> buf(4096);
    check(npmd_density_manifold_json(entries.front().density.get(), buf.data(), buf.size()));
    npmd_density* u = nullptr;
    check(npmd_density_uniform(buf.data(), &u));
    truth.reset(u);
  } else {
    truth = density_of_mixture(o.truth);
  }

  std::vector<std::string> metrics, conventions;
  {
    std::stringstream ss(o.metrics);
    std::string m;
    while (std::getline(ss, m, ',')) {
      if (m != "nise" && m != "fr" && m != "integral") usage_error("unknown metric '" + m + "'");
      metrics.push_back(m);
    }
    std::stringstream cs(o.conventions);
    while (std::getline(cs, m, ',')) conventions.push_back(m);
  }

  std::string csv = o.append ? "" : "method,metric,convention,value,integrator,seed\n";
  struct Ranked {
    std::string name;
    double nise = NAN, fr = NAN;
  };
  std::vector<Ranked> ranked;
  for (const auto& e : entries) {
    Ranked r{e.name};
    for (const auto& m : metrics) {
      if (m == "nise") {
        check(npmd_nise(truth.get(), e.density.get(), o.integrator.c_str(), o.seed, &r.nise));
        csv += e.name + ",nise,," + fmt(r.nise) + "," + o.integrator + "," + std::to_string(o.seed) + "\n";
      } else if (m == "integral") {
        double v = 0.0;
        check(npmd_integral(e.density.get(), o.integrator.c_str(), o.seed, &v));
        csv += e.name + ",integral,," + fmt(v) + "," + o.integrator + "," + std::to_string(o.seed) + "\n";
      } else {
        for (const auto& c : conventions) {
          double v = 0.0;
          check(npmd_fisher_rao(truth.get(), e.density.get(), o.integrator.c_str(), o.seed, c.c_str(), &v));
          if (std::isnan(r.fr)) r.fr = v;
          csv += e.name + ",fr," + c + "," + fmt(v) + "," + o.integrator + "," + std::to_string(o.seed) + "\n";
        }
      }
    }
    ranked.push_back(r);
  }
  write_text(o.out, csv, o.append);

  if (o.compare) {
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
      if (std::isnan(a.nise)) return false;
      if (std::isnan(b.nise)) return true;
      return a.nise < b.nise;
    });
    std::string table = "rank,method,nise,fr_" + conventions.front() + "\n";
    for (std::size_t i = 0; i < ranked.size(); ++i)
      table += std::to_string(i + 1) + "," + ranked[i].name + "," + fmt(ranked[i].nise) + "," + fmt(ranked[i].fr) + "\n";
    write_text(o.ranked.empty() ? "-" : o.ranked, table);
  }

  for (const auto& e : entries) {
    const std::string stem = o.diag_dir + "/" + e.name;
    if (o.spectrum > 0) write_spectrum(e.density.get(), o.spectrum, o.quantity == "log_density", stem + "_spectrum.csv", "");
    if (!o.marginal.empty())
      write_marginal(e.density.get(), o.marginal, o.integrator, o.seed, "", o.marginal_grid, stem + "_marginal.csv");
  }
}

struct SpectrumOpts {
  std::string model, truth, out = "-", grid_out, quantity = "log_density";
  int res = 256;
};

void cmd_spectrum(const SpectrumOpts& o) {
  if (o.model.empty() == o.truth.empty()) usage_error("give exactly one of --model or --truth");
  if (o.quantity != "density" && o.quantity != "log_density") usage_error("--quantity must be density or log_density");
  Model m;
  Density d;
  if (!o.model.empty()) {
    m = load_model(o.model);
    d = density_of(m.get());
  } else {
    d = density_of_mixture(o.truth);
  }
  write_spectrum(d.get(), o.res, o.quantity == "log_density", o.out, o.grid_out);
}

struct MarginalOpts {
  std::string model, truth, region = "{\"type\":\"all\"}", integrator = "mc:4096", points, out = "-";
  int grid = 0;
  std::uint64_t seed = 0;
};

void cmd_marginal(const MarginalOpts& o) {
  if (o.model.empty() == o.truth.empty()) usage_error("give exactly one of --model or --truth");
  Model m;
  Density d;
  if (!o.model.empty()) {
    m = load_model(o.model);
    d = density_of(m.get());
  } else {
    d = density_of_mixture(o.truth);
  }
  write_marginal(d.get(), o.region, o.integrator, o.seed, o.points, o.grid, o.out);
}

struct SnrOpts {
  std::string model, data, config, out = "-";
  double tau = 0.0;
  long long batch_size = 0, q1 = 256, q2 = 256;
  std::string penalty = "intrinsic";
  std::uint64_t seed = 0;
};

void cmd_snr(const SnrOpts& o) {
  Model m = load_model(o.model);
  Dataset data = load_dataset(o.data);
  std::string train_json;
  if (!o.config.empty()) {
    train_json = read_text(o.config);
  } else {
    train_json = nlohmann::json({{"tau", o.tau}, {"batch_size", o.batch_size}, {"q1", o.q1}, {"q2", o.q2},
                                 {"penalty", o.penalty}, {"seed", o.seed}})
                     .dump();
  }
  double snr[3] = {0, 0, 0};
  check(npmd_model_snr(m.get(), data.get(), train_json.c_str(), snr));
  write_text(o.out, "epoch,snr_a,snr_b,snr_c\n" + std::to_string(npmd_model_epoch(m.get())) + "," + fmt(snr[0]) + "," +
                        fmt(snr[1]) + "," + fmt(snr[2]) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neuropmd: neural-field density estimation on products of circles and spheres"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(npmd_version()));

  SimulateOpts sim;
  auto* simulate = app.add_subcommand("simulate", "Sample a wrapped-normal mixture to a CSV dataset");
  simulate->add_option("--preset", sim.preset, "Named mixture: t2_paper or t4_paper");
  simulate->add_option("--spec", sim.spec, "Mixture JSON file");
  simulate->add_option("--n", sim.n, "Number of points")->required();
  simulate->add_option("--out", sim.out, "Dataset CSV")->required();
  simulate->add_option("--spec-out", sim.spec_out, "Resolved mixture JSON (default: OUT.spec.json)");
  simulate->add_option("--seed", sim.seed, "Random seed")->required();

  TrainOpts tr;
  auto* train = app.add_subcommand("train", "Train a neural field density estimator");
  train->add_option("--config", tr.config, "Run configuration JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", tr.seed, "Global seed")->required();
  train->add_option("--data", tr.data, "Dataset CSV (overrides paths.data)");
  train->add_option("--checkpoint", tr.checkpoint, "Checkpoint output (overrides paths.checkpoint)");
  train->add_option("--history", tr.history, "History CSV output");
  train->add_option("--resume", tr.resume, "Continue from a checkpoint");
  train->add_option("--criteria", tr.criteria, "Per-tau criteria CSV (tau grid mode)");

  TrainOpts st;
  auto* select = app.add_subcommand("select-tau", "Select the penalty strength on a held-out split");
  select->add_option("--config", st.config, "Run configuration JSON with train.tau_grid")->required()->check(CLI::ExistingFile);
  auto* st_seed = select->add_option("--seed", st.seed, "Global seed (defaults to the config seed)");
  select->add_option("--data", st.data, "Dataset CSV");
  select->add_option("--checkpoint", st.checkpoint, "Checkpoint of the selected model");
  select->add_option("--history", st.history, "History CSV of the selected model");
  select->add_option("--criteria", st.criteria, "Per-tau criteria CSV");

  KdeOpts kd;
  auto* kde = app.add_subcommand("fit-kde", "Fit a product von Mises KDE with cross-validated concentration");
  kde->add_option("--data", kd.data, "Dataset CSV")->required();
  kde->add_option("--out", kd.out, "KDE model JSON")->required();
  kde->add_option("--kappas", kd.kappas, "Comma-separated concentration grid");
  kde->add_option("--folds", kd.folds, "Cross-validation folds");
  kde->add_option("--integrator", kd.integrator, "Integrator for the squared norm");
  kde->add_option("--scores", kd.scores, "Per-kappa criterion CSV");
  kde->add_option("--seed", kd.seed, "Global seed");

  TpbOpts tp;
  auto* tpb = app.add_subcommand("fit-tpb", "Fit the tensor-product-basis estimator");
  tpb->add_option("--data", tp.data, "Dataset CSV")->required();
  tpb->add_option("--out", tp.out, "Checkpoint output")->required();
  tpb->add_option("--max-freq", tp.max_freq, "Maximum frequency or degree per marginal");
  tpb->add_option("--config", tp.config, "Train configuration JSON (overrides the flags below)");
  tpb->add_option("--tau", tp.tau, "Penalty strength");
  tpb->add_option("--epochs", tp.epochs, "Epochs");
  tpb->add_option("--schedule", tp.schedule, "fixed:W or cyclic:WMIN:WMAX:PERIOD");
  tpb->add_option("--batch-size", tp.batch_size, "Batch size (0: all data)");
  tpb->add_option("--q1", tp.q1, "Monte Carlo points per step");
  tpb->add_option("--penalty-exponent", tp.penalty_exponent, "Exponent of the eigenvalue sums (1 or 2)");
  tpb->add_option("--history", tp.history, "History CSV output");
  tpb->add_option("--seed", tp.seed, "Global seed");
  auto* tp_init = tpb->add_option("--init-seed", tp.init_seed, "Coefficient initialization seed");

  EvalOpts ev;
  auto* evaluate = app.add_subcommand("evaluate", "Compare fitted models against a ground truth");
  evaluate->add_option("--model", ev.models, "NAME=PATH of a checkpoint or KDE file (repeatable)")->required();
  evaluate->add_option("--truth", ev.truth, "Ground-truth mixture JSON");
  evaluate->add_flag("--truth-uniform", ev.truth_uniform, "Use the uniform density as ground truth");
  evaluate->add_option("--metrics", ev.metrics, "Comma-separated: nise, fr, integral");
  evaluate->add_option("--fr-convention", ev.conventions, "Comma-separated: as_written, inner, geodesic");
  evaluate->add_option("--integrator", ev.integrator, "grid:RES, mc:Q or qmc:Q");
  evaluate->add_option("--seed", ev.seed, "Integrator seed");
  evaluate->add_option("--out", ev.out, "Metrics CSV ('-' for stdout)");
  evaluate->add_flag("--append", ev.append, "Append rows without a header");
  evaluate->add_flag("--compare", ev.compare, "Also emit a table ranked by nISE");
  evaluate->add_option("--ranked", ev.ranked, "Ranked table output ('-' for stdout)");
  evaluate->add_option("--spectrum", ev.spectrum, "Also write NAME_spectrum.csv at this grid size (tori of dimension 2)");
  evaluate->add_option("--quantity", ev.quantity, "Spectrum quantity: density or log_density");
  evaluate->add_option("--marginal", ev.marginal, "Also write NAME_marginal.csv for this region (JSON text or file)");
  evaluate->add_option("--marginal-grid", ev.marginal_grid, "Points on the second marginal");
  evaluate->add_option("--diag-dir", ev.diag_dir, "Directory for spectrum and marginal outputs");

  SpectrumOpts sp;
  auto* spectrum = app.add_subcommand("spectrum", "DC-centred DFT magnitudes on a T^2 grid");
  spectrum->add_option("--model", sp.model, "Checkpoint or KDE file");
  spectrum->add_option("--truth", sp.truth, "Mixture JSON");
  spectrum->add_option("--res", sp.res, "Grid resolution per axis");
  spectrum->add_option("--quantity", sp.quantity, "density or log_density");
  spectrum->add_option("--out", sp.out, "Spectrum CSV");
  spectrum->add_option("--grid-out", sp.grid_out, "Grid values CSV");

  MarginalOpts mg;
  auto* marginal = app.add_subcommand("marginal", "Region-restricted marginal density on a two-factor product");
  marginal->add_option("--model", mg.model, "Checkpoint or KDE file");
  marginal->add_option("--truth", mg.truth, "Mixture JSON");
  marginal->add_option("--region", mg.region, "Region JSON text or file");
  marginal->add_option("--integrator", mg.integrator, "Integrator over the first marginal");
  marginal->add_option("--points", mg.points, "Dataset CSV of points on the second marginal");
  marginal->add_option("--grid", mg.grid, "Evaluate on N points of the second marginal");
  marginal->add_option("--seed", mg.seed, "Integrator seed");
  marginal->add_option("--out", mg.out, "Output CSV");

  SnrOpts sn;
  auto* snr = app.add_subcommand("snr-report", "Gradient signal-to-noise ratios of a field model");
  snr->add_option("--model", sn.model, "Checkpoint")->required();
  snr->add_option("--data", sn.data, "Dataset CSV")->required();
  snr->add_option("--config", sn.config, "Train configuration JSON");
  snr->add_option("--tau", sn.tau, "Penalty strength");
  snr->add_option("--batch-size", sn.batch_size, "Batch size (0: all data)");
  snr->add_option("--q1", sn.q1, "Normalization Monte Carlo points");
  snr->add_option("--q2", sn.q2, "Penalty Monte Carlo points");
  snr->add_option("--penalty", sn.penalty, "intrinsic or extrinsic");
  snr->add_option("--seed", sn.seed, "Seed");
  snr->add_option("--out", sn.out, "Output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) cmd_simulate(sim);
    if (train->parsed()) {
      tr.has_seed = true;
      cmd_train(tr, false);
    }
    if (select->parsed()) {
      st.has_seed = st_seed->count() > 0;
      cmd_train(st, true);
    }
    if (kde->parsed()) cmd_fit_kde(kd);
    if (tpb->parsed()) {
      tp.has_init_seed = tp_init->count() > 0;
      cmd_fit_tpb(tp);
    }
    if (evaluate->parsed()) cmd_evaluate(ev);
    if (spectrum->parsed()) cmd_spectrum(sp);
    if (marginal->parsed()) cmd_marginal(mg);
    if (snr->parsed()) cmd_snr(sn);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
