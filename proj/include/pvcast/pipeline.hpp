#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pvcast/dataset.hpp"
#include "pvcast/keyvalue.hpp"
#include "pvcast/metrics.hpp"
#include "pvcast/model.hpp"
#include "pvcast/training.hpp"

namespace pvcast {

/// Everything a run needs besides the data: sample geometry, split, model size
/// and optimizer settings. Read from a flat key-value file.
struct PipelineConfig {
  SampleSpec samples;
  SplitFractions fractions;
  std::uint64_t split_seed = 0;
  std::size_t split_block_hours = 168;
  /// Fit min-max constants on training windows only ("train") or on all data ("global").
  std::string normalization = "train";

  /// 0 selects the reference unit count of each family/mode.
  std::size_t units = 32;
  std::size_t depth = 2;
  bool decoder_nwp = false;
  std::uint64_t model_seed = 1;

  TrainConfig train;
  MetricOptions metrics;

  void validate() const;
  KeyValues to_kv() const;
  static PipelineConfig from_kv(const KeyValues& kv);

  ModelConfig model_config(Family family, TargetMode mode) const;
};

/// Aligned data with the three sample splits, normalized per `normalization`.
struct PreparedData {
  AlignedDataset data;
  SampleSpec spec;
  SplitResult splits;
  std::size_t anchors = 0;
};

PreparedData prepare_data(const RawSeries& raw, const PipelineConfig& config);

/// Key-value manifest of a prepared dataset: p_max, normalization constants,
/// split seed and sample counts.
KeyValues dataset_manifest(const PreparedData& prepared, const PipelineConfig& config);

/// Reads `pv.csv` and `nwp.csv` from a data directory. The rated power comes
/// from `p_max` when given, else from the directory's `dataset.txt`.
RawSeries load_data_dir(const std::filesystem::path& dir, std::optional<double> p_max = std::nullopt);

struct TrainedModel {
  std::unique_ptr<Model> model;
  TrainReport report;
};

TrainedModel train_model(Family family, TargetMode mode, const PreparedData& prepared,
                         const PipelineConfig& config, const FitCallbacks& callbacks = {});

/// Metadata stored next to model parameters so a checkpoint can forecast on its own.
KeyValues checkpoint_metadata(const PreparedData& prepared);

/// The eight trainable family/mode pairs in report order.
std::vector<std::pair<Family, TargetMode>> benchmark_models();

}  // namespace pvcast
