#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pvcast/keyvalue.hpp"
#include "pvcast/metrics.hpp"
#include "pvcast/model.hpp"

namespace pvcast {

struct TrainConfig {
  double learning_rate = 0.003;
  double momentum = 0.75;
  std::size_t batch_size = 128;
  std::size_t patience = 15;
  std::size_t max_epochs = 500;
  std::uint64_t seed = 0;
  double epsilon_floor = 1e-9;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;

  void validate() const;
  KeyValues to_kv() const;
  /// Reads the keys of `to_kv`; missing keys keep their defaults.
  static TrainConfig from_kv(const KeyValues& kv);
};

enum class StopReason { patience, max_epochs };

std::string_view stop_reason_name(StopReason r);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_nrmse = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  StopReason stop = StopReason::max_epochs;
  double seconds = 0.0;
  long clipped_steps = 0;

  double best_val_nrmse() const;
  /// Columns epoch,train_loss,val_nrmse.
  std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// sum_t sum_i -P ln(max(F, floor) / max(P, floor)); bins with P = 0 contribute nothing.
double kl_loss(const Forecast& f, std::span<const BinnedDistribution> p, double floor = 1e-9);
/// (1/T) * sum_t (F - E(P))^2.
double mse_loss(const Forecast& f, std::span<const double> p_e);

/// Batch loss on a model output [B x T x width]: KL in pdf mode, MSE in
/// expected mode, averaged over the batch.
Var batch_loss(Var output, const Batch& batch, TargetMode mode, double floor);

struct FitCallbacks {
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mini-batch training with teacher forcing and early stopping on the
/// self-recurrent validation nRMSE. The best epoch's weights are restored.
/// Throws TrainingError when the loss becomes non-finite.
TrainReport fit(Model& model, std::span<const Sample> train, std::span<const Sample> val,
                const TrainConfig& config, const FitCallbacks& callbacks = {});

}  // namespace pvcast
