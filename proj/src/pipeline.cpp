#include "pvcast/pipeline.hpp"

#include <cmath>

#include "pvcast/errors.hpp"

namespace pvcast {

void PipelineConfig::validate() const {
  if (samples.window_hours < 24) throw ConfigError("window_hours must be at least 24");
  if (samples.horizon_hours != 24) throw ConfigError("horizon_hours must be 24");
  if (samples.stride_hours == 0) throw ConfigError("stride_hours must be positive");
  if (normalization != "train" && normalization != "global") {
    throw ConfigError("normalization must be 'train' or 'global'");
  }
  if (depth == 0) throw ConfigError("depth must be positive");
  train.validate();
}

KeyValues PipelineConfig::to_kv() const {
  KeyValues kv = train.to_kv();
  kv.set("window_hours", static_cast<std::uint64_t>(samples.window_hours));
  kv.set("horizon_hours", static_cast<std::uint64_t>(samples.horizon_hours));
  kv.set("stride_hours", static_cast<std::uint64_t>(samples.stride_hours));
  kv.set("train_fraction", fractions.train);
  kv.set("val_fraction", fractions.val);
  kv.set("test_fraction", fractions.test);
  kv.set("split_seed", split_seed);
  kv.set("split_block_hours", static_cast<std::uint64_t>(split_block_hours));
  kv.set("normalization", normalization);
  kv.set("units", static_cast<std::uint64_t>(units));
  kv.set("depth", static_cast<std::uint64_t>(depth));
  kv.set("decoder_nwp", decoder_nwp);
  kv.set("model_seed", model_seed);
  kv.set("conventional_nrmse", metrics.conventional_nrmse);
  return kv;
}

PipelineConfig PipelineConfig::from_kv(const KeyValues& kv) {
  PipelineConfig c;
  c.train = TrainConfig::from_kv(kv);
  c.samples.window_hours = kv.get_uint("window_hours", c.samples.window_hours);
  c.samples.horizon_hours = kv.get_uint("horizon_hours", c.samples.horizon_hours);
  c.samples.stride_hours = kv.get_uint("stride_hours", c.samples.stride_hours);
  c.fractions.train = kv.get_double("train_fraction", c.fractions.train);
  c.fractions.val = kv.get_double("val_fraction", c.fractions.val);
  c.fractions.test = kv.get_double("test_fraction", c.fractions.test);
  c.split_seed = kv.get_uint("split_seed", c.split_seed);
  c.split_block_hours = kv.get_uint("split_block_hours", c.split_block_hours);
  c.normalization = kv.get("normalization", c.normalization);
  if (kv.has("units") && kv.get("units") == "reference") {
    c.units = 0;
  } else {
    c.units = kv.get_uint("units", c.units);
  }
  c.depth = kv.get_uint("depth", c.depth);
  c.decoder_nwp = kv.get_bool("decoder_nwp", c.decoder_nwp);
  c.model_seed = kv.get_uint("model_seed", c.model_seed);
  c.metrics.conventional_nrmse = kv.get_bool("conventional_nrmse", c.metrics.conventional_nrmse);
  c.validate();
  return c;
}

ModelConfig PipelineConfig::model_config(Family family, TargetMode mode) const {
  ModelConfig m;
  m.family = family;
  m.mode = mode;
  m.units = units == 0 ? reference_units(family, mode) : units;
  m.depth = depth;
  m.input_features = kChannels;
  m.input_steps = samples.window_hours * kStepsPerHour;
  m.output_steps = samples.horizon_hours;
  m.decoder_nwp = decoder_nwp && (family == Family::s2s || family == Family::s2s_attn);
  m.seed = model_seed;
  return m;
}

PreparedData prepare_data(const RawSeries& raw, const PipelineConfig& config) {
  config.validate();
  PreparedData out;
  out.spec = config.samples;
  out.data = consolidate(raw.pv, raw.nwp);
  const auto anchors = sample_anchors(out.data, out.spec);
  out.anchors = anchors.size();
  if (anchors.empty()) throw DataError("data too short for a single sample");

  const Minutes window = static_cast<Minutes>(out.spec.window_hours) * kMinutesPerHour;
  const Minutes horizon = static_cast<Minutes>(out.spec.horizon_hours) * kMinutesPerHour;
  const SplitPlan plan = plan_split(anchors, window, horizon, config.fractions, config.split_seed,
                                    config.split_block_hours);

  if (config.normalization == "train") {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      if (!plan.kept[i] || plan.labels[i] != SplitLabel::train) continue;
      const auto b = static_cast<std::size_t>((anchors[i] - window - out.data.start) / kStepMinutes);
      const auto e = static_cast<std::size_t>((anchors[i] + horizon - out.data.start) / kStepMinutes);
      ranges.emplace_back(b, e);
    }
    if (ranges.empty()) throw DataError("split left no training samples");
    out.data.norm = fit_normalization(out.data, ranges);
  }

  out.splits.discarded = plan.discarded;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (!plan.kept[i]) continue;
    Sample s = make_sample(out.data, anchors[i], out.spec);
    switch (plan.labels[i]) {
      case SplitLabel::train: out.splits.train.push_back(std::move(s)); break;
      case SplitLabel::val: out.splits.val.push_back(std::move(s)); break;
      case SplitLabel::test: out.splits.test.push_back(std::move(s)); break;
    }
  }
  return out;
}

KeyValues dataset_manifest(const PreparedData& prepared, const PipelineConfig& config) {
  KeyValues kv;
  kv.set("p_max", prepared.data.p_max);
  kv.set("start", format_timestamp(prepared.data.start));
  kv.set("end", format_timestamp(prepared.data.end()));
  kv.set("steps", static_cast<std::uint64_t>(prepared.data.steps()));
  kv.set("normalization", config.normalization);
  prepared.data.norm.store(kv, "norm.");
  kv.set("split_seed", config.split_seed);
  kv.set("split_block_hours", static_cast<std::uint64_t>(config.split_block_hours));
  kv.set("samples.anchors", static_cast<std::uint64_t>(prepared.anchors));
  kv.set("samples.train", static_cast<std::uint64_t>(prepared.splits.train.size()));
  kv.set("samples.val", static_cast<std::uint64_t>(prepared.splits.val.size()));
  kv.set("samples.test", static_cast<std::uint64_t>(prepared.splits.test.size()));
  kv.set("samples.discarded", static_cast<std::uint64_t>(prepared.splits.discarded));
  return kv;
}

RawSeries load_data_dir(const std::filesystem::path& dir, std::optional<double> p_max) {
  if (!p_max) {
    const auto manifest = dir / "dataset.txt";
    if (!std::filesystem::exists(manifest)) {
      throw ConfigError("no p_max given and " + manifest.string() + " not found");
    }
    p_max = KeyValues::load(manifest).get_double("p_max");
  }
  return ingest_csv(dir / "pv.csv", dir / "nwp.csv", *p_max);
}

TrainedModel train_model(Family family, TargetMode mode, const PreparedData& prepared,
                         const PipelineConfig& config, const FitCallbacks& callbacks) {
  if (family == Family::persistence) throw ConfigError("persistence has nothing to train");
  TrainedModel out;
  out.model = build_model(config.model_config(family, mode));
  out.report = fit(*out.model, prepared.splits.train, prepared.splits.val, config.train, callbacks);
  return out;
}

KeyValues checkpoint_metadata(const PreparedData& prepared) {
  KeyValues kv;
  kv.set("p_max", prepared.data.p_max);
  kv.set("window_hours", static_cast<std::uint64_t>(prepared.spec.window_hours));
  kv.set("horizon_hours", static_cast<std::uint64_t>(prepared.spec.horizon_hours));
  prepared.data.norm.store(kv, "norm.");
  return kv;
}

std::vector<std::pair<Family, TargetMode>> benchmark_models() {
  std::vector<std::pair<Family, TargetMode>> out;
  for (Family f : {Family::ffnn, Family::lstm, Family::s2s, Family::s2s_attn}) {
    out.emplace_back(f, TargetMode::expected);
    out.emplace_back(f, TargetMode::pdf);
  }
  return out;
}

}  // namespace pvcast
