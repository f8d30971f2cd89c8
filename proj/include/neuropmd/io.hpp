// SPDX-License-Identifier: Apache-2.0
//
// File interchange: dataset CSV, mixture and run-config JSON, model
// checkpoints.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "neuropmd/baselines.hpp"
#include "neuropmd/synthetic.hpp"

namespace neuropmd {

struct Dataset {
  ProductManifold manifold;
  PointSet points;
};

/// Header columns "circle0", "sphere1_x", "sphere1_y", "sphere1_z", ...
std::string dataset_header(const ProductManifold& spec);
ProductManifold manifold_from_header(const std::string& header);

std::string dataset_to_csv(const Dataset& ds);
Dataset dataset_from_csv(const std::string& text);
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

std::string mixture_to_json(const WrappedNormalMixture& mix);
WrappedNormalMixture mixture_from_json(const std::string& text);

std::string manifold_to_json(const ProductManifold& spec);
ProductManifold manifold_from_json(const std::string& text);

/// Everything needed to rebuild a trained model.
struct Checkpoint {
  enum class Kind { neuropmd, tpb };
  Kind kind = Kind::neuropmd;
  NeuralField field;
  FieldParams params;
  std::uint64_t seed = 0;
  int epoch = 0;
  /// TPB only.
  std::vector<int> max_freq;
  int penalty_exponent = 2;
  /// Free-form provenance (training configuration) stored verbatim.
  std::string train_json = "{}";
};

std::string checkpoint_to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

struct KdeFile {
  double kappa = 0.0;
  std::string data_file;
};
std::string kde_to_json(const KdeFile& k);
KdeFile kde_from_json(const std::string& text);

/// Single JSON run configuration. Sub-seeds default to fixed offsets of
/// the global seed (encoding +1, init +2, training +3, folds +5).
struct RunConfig {
  ProductManifold manifold;
  std::uint64_t seed = 0;
  EncodingConfig encoding;
  std::vector<int> hidden;
  Activation activation = Activation::sine;
  std::uint64_t init_seed = 0;
  TrainConfig train;
  std::vector<double> tau_grid;
  std::map<std::string, std::string> paths;
};

/// Missing seeds are filled from `seed` when given; the JSON "seed" field
/// is used otherwise and must then be present.
RunConfig parse_run_config(const std::string& text, std::optional<std::uint64_t> seed = std::nullopt);
std::string run_config_to_json(const RunConfig& cfg);
TrainConfig parse_train_config(const std::string& text);
std::string train_config_to_json(const TrainConfig& cfg);

/// epoch,objective,lr,validation_criterion,snr_a,snr_b,snr_c with empty
/// cells for values that were not computed.
std::string history_to_csv(const std::vector<HistoryRow>& rows);

std::string read_file(const std::string& path);
/// Writes through a temporary file and renames it into place.
void write_file(const std::string& path, const std::string& content);

/// %.17g
std::string format_double(double x);

}  // namespace neuropmd
