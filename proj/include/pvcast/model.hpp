#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pvcast/dataset.hpp"
#include "pvcast/distribution.hpp"
#include "pvcast/graph.hpp"
#include "pvcast/keyvalue.hpp"
#include "pvcast/layers.hpp"

namespace pvcast {

enum class Family { persistence, ffnn, lstm, s2s, s2s_attn };
enum class TargetMode { pdf, expected };

std::string_view family_name(Family f);
Family parse_family(std::string_view name);
std::string_view mode_name(TargetMode m);  // "pdf" / "E"
TargetMode parse_mode(std::string_view name);
/// Display name such as "S2S-Attn-pdf" or "Persistence".
std::string model_label(Family f, TargetMode m);

struct ModelConfig {
  Family family = Family::s2s_attn;
  TargetMode mode = TargetMode::pdf;
  std::size_t units = 32;
  std::size_t depth = 2;
  std::size_t input_features = kChannels;
  std::size_t input_steps = 480;
  std::size_t output_steps = 24;
  std::size_t bins = kDefaultBins;
  /// Appends the forecast hour's NWP channels to every decoder input.
  bool decoder_nwp = false;
  std::uint64_t seed = 0;

  bool encoder_decoder() const { return family == Family::s2s || family == Family::s2s_attn; }
  /// Per-step output width: bins in pdf mode, 1 in expected mode.
  std::size_t output_width() const { return mode == TargetMode::pdf ? bins : 1; }
  std::size_t decoder_input_width() const {
    return output_width() + (decoder_nwp ? kNwpChannels : 0);
  }

  void validate() const;
  KeyValues to_kv() const;
  static ModelConfig from_kv(const KeyValues& kv);
};

/// Units per layer used for the reference parameter budgets.
std::size_t reference_units(Family f, TargetMode m);
/// Reference parameter budget (approximate, thousands rounded) for a family/mode.
std::size_t reference_parameter_budget(Family f, TargetMode m);
/// Full-size configuration: 5-day window of 15-minute steps, reference units.
ModelConfig reference_config(Family f, TargetMode m);

/// A 24-step forecast. `expected` is always filled (bin-centre expectation in pdf
/// mode); `pdf` only in pdf mode.
struct Forecast {
  TargetMode mode = TargetMode::pdf;
  std::vector<BinnedDistribution> pdf;
  std::vector<double> expected;

  std::size_t steps() const { return expected.size(); }
};

/// Samples stacked along a leading batch axis.
struct Batch {
  std::size_t size = 0;
  Tensor inputs;          // [B x S x F]
  Tensor last_pdf;        // [B x bins], P(0)
  Tensor last_e;          // [B x 1], E(P(0))
  Tensor history_pdf;     // [B x 24 x bins], P(-23..0)
  Tensor target_pdf;      // [B x T x bins], empty without targets
  Tensor target_e;        // [B x T x 1], empty without targets
  Tensor decoder_nwp;     // [B x T x 5]
  bool has_targets = false;
};

Batch make_batch(std::span<const Sample* const> samples);
Batch make_batch(std::span<const Sample> samples);

enum class DecodeMode { teacher_forcing, self_recurrent };
enum class DecoderInput { observed, model_output };

/// Called once per decoder step with the source of that step's input.
using DecoderHook = std::function<void(std::size_t step, DecoderInput source)>;

class Model {
 public:
  explicit Model(ModelConfig config) : config_(std::move(config)) {}
  virtual ~Model() = default;

  const ModelConfig& config() const { return config_; }

  /// Per-step outputs [B x T x width]: probabilities (pdf) or expected values.
  virtual Var forward(Graph& g, const Batch& batch, DecodeMode mode) = 0;
  virtual void collect(std::vector<NamedParam>& out) = 0;
  virtual std::unique_ptr<Model> clone() const = 0;

  std::vector<NamedParam> parameters();
  std::vector<Tensor*> parameter_tensors();

  void set_decoder_hook(DecoderHook hook) { hook_ = std::move(hook); }

 protected:
  void notify(std::size_t step, DecoderInput source) const {
    if (hook_) hook_(step, source);
  }

  ModelConfig config_;

 private:
  DecoderHook hook_;
};

/// Throws ConfigError for invalid configurations.
std::unique_ptr<Model> build_model(const ModelConfig& config);
std::size_t count_parameters(Model& model);

/// Runs one sample through the model without recording gradients.
Forecast forward(Model& model, const Sample& sample, DecodeMode mode);
/// Batched inference, `batch_size` samples at a time.
std::vector<Forecast> predict(Model& model, std::span<const Sample> samples, DecodeMode mode,
                              std::size_t batch_size = 64);
/// Converts a [B x T x width] output tensor into forecasts.
std::vector<Forecast> to_forecasts(const Tensor& output, TargetMode mode);

/// F(t) = P(t - 24): yesterday's 24 hourly distributions as today's forecast.
Forecast persistence_forecast(std::span<const BinnedDistribution> history);

// --------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::unique_ptr<Model> model;
  KeyValues metadata;  // caller-supplied extras, e.g. normalization constants
};

void save_checkpoint(Model& model, const std::filesystem::path& path,
                     const KeyValues& metadata = {});
/// Throws FormatError on a bad magic, version, checksum, truncation or a
/// parameter set that does not match the stored configuration.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pvcast
