#include "pvcast/model.hpp"

#include <algorithm>

#include "pvcast/errors.hpp"

namespace pvcast {

std::string_view family_name(Family f) {
  switch (f) {
    case Family::persistence: return "persistence";
    case Family::ffnn: return "ffnn";
    case Family::lstm: return "lstm";
    case Family::s2s: return "s2s";
    case Family::s2s_attn: return "s2s_attn";
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  for (Family f : {Family::persistence, Family::ffnn, Family::lstm, Family::s2s, Family::s2s_attn}) {
    if (family_name(f) == name) return f;
  }
  throw ConfigError("unknown model family '" + std::string(name) + "'");
}

std::string_view mode_name(TargetMode m) { return m == TargetMode::pdf ? "pdf" : "E"; }

TargetMode parse_mode(std::string_view name) {
  if (name == "pdf") return TargetMode::pdf;
  if (name == "E" || name == "e" || name == "expected") return TargetMode::expected;
  throw ConfigError("unknown target mode '" + std::string(name) + "'");
}

std::string model_label(Family f, TargetMode m) {
  std::string base;
  switch (f) {
    case Family::persistence: return "Persistence";
    case Family::ffnn: base = "FFNN"; break;
    case Family::lstm: base = "LSTM"; break;
    case Family::s2s: base = "S2S"; break;
    case Family::s2s_attn: base = "S2S-Attn"; break;
  }
  return base + "-" + std::string(mode_name(m));
}

void ModelConfig::validate() const {
  if (family == Family::persistence) {
    if (output_steps != 24) throw ConfigError("persistence forecasts exactly 24 steps");
    return;
  }
  if (units == 0 || depth == 0 || input_features == 0 || input_steps == 0 || output_steps == 0 ||
      bins == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (decoder_nwp && !encoder_decoder()) {
    throw ConfigError("decoder NWP inputs only apply to encoder-decoder families");
  }
}

KeyValues ModelConfig::to_kv() const {
  KeyValues kv;
  kv.set("model.family", std::string(family_name(family)));
  kv.set("model.mode", std::string(mode_name(mode)));
  kv.set("model.units", units);
  kv.set("model.depth", depth);
  kv.set("model.input_features", input_features);
  kv.set("model.input_steps", input_steps);
  kv.set("model.output_steps", output_steps);
  kv.set("model.bins", bins);
  kv.set("model.decoder_nwp", decoder_nwp);
  kv.set("model.seed", seed);
  return kv;
}

ModelConfig ModelConfig::from_kv(const KeyValues& kv) {
  ModelConfig c;
  c.family = parse_family(kv.get("model.family"));
  c.mode = parse_mode(kv.get("model.mode"));
  c.units = kv.get_uint("model.units");
  c.depth = kv.get_uint("model.depth");
  c.input_features = kv.get_uint("model.input_features");
  c.input_steps = kv.get_uint("model.input_steps");
  c.output_steps = kv.get_uint("model.output_steps");
  c.bins = kv.get_uint("model.bins");
  c.decoder_nwp = kv.get_bool("model.decoder_nwp");
  c.seed = kv.get_uint("model.seed");
  return c;
}

std::size_t reference_units(Family f, TargetMode m) {
  const bool pdf = m == TargetMode::pdf;
  switch (f) {
    case Family::persistence: return 0;
    case Family::ffnn: return pdf ? 616 : 640;
    case Family::lstm: return 184;
    case Family::s2s: return pdf ? 128 : 132;
    case Family::s2s_attn: return pdf ? 110 : 115;
  }
  return 0;
}

std::size_t reference_parameter_budget(Family f, TargetMode m) {
  const bool pdf = m == TargetMode::pdf;
  switch (f) {
    case Family::persistence: return 0;
    case Family::ffnn: return 428'000;
    case Family::lstm: return pdf ? 434'000 : 425'000;
    case Family::s2s: return pdf ? 431'000 : 425'000;
    case Family::s2s_attn: return pdf ? 423'000 : 441'000;
  }
  return 0;
}

ModelConfig reference_config(Family f, TargetMode m) {
  ModelConfig c;
  c.family = f;
  c.mode = m;
  c.units = reference_units(f, m);
  c.input_steps = 5 * 24 * kStepsPerHour;
  return c;
}

// --------------------------------------------------------------------------

Batch make_batch(std::span<const Sample* const> samples) {
  if (samples.empty()) throw ContractError("empty batch");
  const Sample& first = *samples.front();
  const std::size_t b = samples.size();
  const std::size_t steps = first.input.dim(0);
  const std::size_t features = first.input.dim(1);
  const std::size_t bins = first.history.back().bins();
  const std::size_t horizon = first.decoder_nwp.dim(0);
  Batch batch;
  batch.size = b;
  batch.inputs = Tensor({b, steps, features});
  batch.last_pdf = Tensor({b, bins});
  batch.last_e = Tensor({b, 1});
  batch.history_pdf = Tensor({b, first.history.size(), bins});
  batch.decoder_nwp = Tensor({b, horizon, kNwpChannels});
  batch.has_targets = std::all_of(samples.begin(), samples.end(),
                                  [](const Sample* s) { return s->has_targets(); });
  if (batch.has_targets) {
    batch.target_pdf = Tensor({b, horizon, bins});
    batch.target_e = Tensor({b, horizon, 1});
  }
  for (std::size_t i = 0; i < b; ++i) {
    const Sample& s = *samples[i];
    if (s.input.shape() != first.input.shape() || s.history.size() != first.history.size()) {
      throw ShapeError("samples in a batch must share window and history shapes");
    }
    std::copy(s.input.values().begin(), s.input.values().end(),
              batch.inputs.values().begin() + static_cast<std::ptrdiff_t>(i * steps * features));
    const auto& last = s.history.back();
    std::copy(last.probs().begin(), last.probs().end(),
              batch.last_pdf.values().begin() + static_cast<std::ptrdiff_t>(i * bins));
    batch.last_e[i] = expected_value(last);
    for (std::size_t h = 0; h < s.history.size(); ++h) {
      std::copy(s.history[h].probs().begin(), s.history[h].probs().end(),
                batch.history_pdf.values().begin() +
                    static_cast<std::ptrdiff_t>((i * s.history.size() + h) * bins));
    }
    std::copy(s.decoder_nwp.values().begin(), s.decoder_nwp.values().end(),
              batch.decoder_nwp.values().begin() +
                  static_cast<std::ptrdiff_t>(i * horizon * kNwpChannels));
    if (batch.has_targets) {
      for (std::size_t t = 0; t < horizon; ++t) {
        std::copy(s.target_pdf[t].probs().begin(), s.target_pdf[t].probs().end(),
                  batch.target_pdf.values().begin() +
                      static_cast<std::ptrdiff_t>((i * horizon + t) * bins));
        batch.target_e[i * horizon + t] = s.target_e[t];
      }
    }
  }
  return batch;
}

Batch make_batch(std::span<const Sample> samples) {
  std::vector<const Sample*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_batch(std::span<const Sample* const>(ptrs));
}

std::vector<NamedParam> Model::parameters() {
  std::vector<NamedParam> out;
  collect(out);
  return out;
}

std::vector<Tensor*> Model::parameter_tensors() {
  std::vector<Tensor*> out;
  for (auto& p : parameters()) out.push_back(p.tensor);
  return out;
}

namespace {

void check_input(const ModelConfig& c, const Batch& batch) {
  const Shape& s = batch.inputs.shape();
  if (s.size() != 3 || s[1] != c.input_steps || s[2] != c.input_features) {
    throw ShapeError("model expects inputs [B x " + std::to_string(c.input_steps) + " x " +
                     std::to_string(c.input_features) + "], got " + shape_str(s));
  }
}

/// Softmax for pdf heads; expected-value heads already end in a sigmoid.
Var output_head(Var x, TargetMode mode) { return mode == TargetMode::pdf ? softmax(x) : x; }

Activation head_activation(TargetMode mode) {
  return mode == TargetMode::pdf ? Activation::none : Activation::sigmoid;
}

class PersistenceModel final : public Model {
 public:
  using Model::Model;

  Var forward(Graph& g, const Batch& batch, DecodeMode) override {
    if (config_.mode == TargetMode::pdf) return g.input(batch.history_pdf);
    const std::size_t b = batch.size;
    const std::size_t steps = batch.history_pdf.dim(1);
    const std::size_t bins = batch.history_pdf.dim(2);
    Tensor e({b, steps, 1});
    for (std::size_t i = 0; i < b * steps; ++i) {
      double v = 0.0;
      for (std::size_t k = 0; k < bins; ++k) {
        v += batch.history_pdf[i * bins + k] * (static_cast<double>(k) + 0.5) /
             static_cast<double>(bins);
      }
      e[i] = v;
    }
    return g.input(std::move(e));
  }
  void collect(std::vector<NamedParam>&) override {}
  std::unique_ptr<Model> clone() const override {
    return std::make_unique<PersistenceModel>(*this);
  }
};

/// Dense stack applied per time step, then the temporal transformation.
class FeedForwardModel final : public Model {
 public:
  explicit FeedForwardModel(const ModelConfig& c) : Model(c) {
    Rng rng(c.seed);
    std::size_t in = c.input_features;
    for (std::size_t l = 0; l < c.depth; ++l) {
      layers_.push_back(DenseLayer::create(in, c.units, Activation::tanh, rng));
      in = c.units;
    }
    temporal_ = TemporalTransform::create(c.input_steps, c.output_steps, c.units, c.output_width(),
                                          head_activation(c.mode), rng);
  }

  Var forward(Graph& g, const Batch& batch, DecodeMode) override {
    check_input(config_, batch);
    Var x = g.input(batch.inputs);
    for (auto& layer : layers_) x = dense_forward(g, layer, x);
    return output_head(temporal_transform(g, temporal_, x), config_.mode);
  }

  void collect(std::vector<NamedParam>& out) override {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].collect("dense" + std::to_string(l), out);
    }
    temporal_.collect("temporal", out);
  }
  std::unique_ptr<Model> clone() const override {
    return std::make_unique<FeedForwardModel>(*this);
  }

 private:
  std::vector<DenseLayer> layers_;
  TemporalTransform temporal_;
};

/// Runs stacked LSTM layers over the whole input window. Returns the top
/// layer's per-step outputs and every layer's final state.
struct EncodedSequence {
  std::vector<Var> outputs;
  std::vector<LstmState> final_states;
};

EncodedSequence encode(Graph& g, std::vector<LstmLayer>& layers, Var inputs, std::size_t batch) {
  const std::size_t steps = inputs.shape()[1];
  EncodedSequence enc;
  std::vector<Var> seq;
  seq.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) seq.push_back(take(inputs, 1, t));
  for (auto& layer : layers) {
    BoundLstm bound = bind(g, layer);
    LstmState state = zero_state(g, batch, layer.units);
    for (std::size_t t = 0; t < steps; ++t) {
      state = lstm_step(bound, seq[t], state);
      seq[t] = state.h;
    }
    enc.final_states.push_back(state);
  }
  enc.outputs = std::move(seq);
  return enc;
}

class OneBlockLstmModel final : public Model {
 public:
  explicit OneBlockLstmModel(const ModelConfig& c) : Model(c) {
    Rng rng(c.seed);
    std::size_t in = c.input_features;
    for (std::size_t l = 0; l < c.depth; ++l) {
      layers_.push_back(LstmLayer::create(in, c.units, rng));
      in = c.units;
    }
    temporal_ = TemporalTransform::create(c.input_steps, c.output_steps, c.units, c.output_width(),
                                          head_activation(c.mode), rng);
  }

  Var forward(Graph& g, const Batch& batch, DecodeMode) override {
    check_input(config_, batch);
    EncodedSequence enc = encode(g, layers_, g.input(batch.inputs), batch.size);
    Var hidden = stack(enc.outputs, 1);
    return output_head(temporal_transform(g, temporal_, hidden), config_.mode);
  }

  void collect(std::vector<NamedParam>& out) override {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].collect("lstm" + std::to_string(l), out);
    }
    temporal_.collect("temporal", out);
  }
  std::unique_ptr<Model> clone() const override {
    return std::make_unique<OneBlockLstmModel>(*this);
  }

 private:
  std::vector<LstmLayer> layers_;
  TemporalTransform temporal_;
};

/// Encoder-decoder, optionally with attention ahead of every decoder layer.
///
/// Decoder layer 1 attends with [input, h1] as query and feeds [context, input]
/// to its LSTM; layer j > 1 attends with h_j and feeds [context, output of j-1].
/// Keys and values are the top encoder layer's outputs.
class Seq2SeqModel final : public Model {
 public:
  explicit Seq2SeqModel(const ModelConfig& c) : Model(c), attention_on_(c.family == Family::s2s_attn) {
    Rng rng(c.seed);
    const std::size_t u = c.units;
    std::size_t in = c.input_features;
    for (std::size_t l = 0; l < c.depth; ++l) {
      encoder_.push_back(LstmLayer::create(in, u, rng));
      in = u;
    }
    const std::size_t d_in = c.decoder_input_width();
    for (std::size_t l = 0; l < c.depth; ++l) {
      const std::size_t below = l == 0 ? d_in : u;
      if (attention_on_) {
        const std::size_t query = l == 0 ? d_in + u : u;
        attention_.push_back(AttentionLayer::create_query_only(query, u, rng));
        decoder_.push_back(LstmLayer::create(below + u, u, rng));
      } else {
        decoder_.push_back(LstmLayer::create(below, u, rng));
      }
    }
    head_ = DenseLayer::create(u, c.output_width(), head_activation(c.mode), rng);
  }

  Var forward(Graph& g, const Batch& batch, DecodeMode mode) override {
    check_input(config_, batch);
    const bool teacher = mode == DecodeMode::teacher_forcing;
    if (teacher && !batch.has_targets) {
      throw ContractError("teacher forcing needs targets in the batch");
    }
    const bool pdf = config_.mode == TargetMode::pdf;
    const std::size_t steps = config_.output_steps;
    if (batch.decoder_nwp.dim(1) < steps || (batch.has_targets && batch.target_e.dim(1) < steps)) {
      throw ShapeError("batch horizon shorter than the model's output steps");
    }

    EncodedSequence enc = encode(g, encoder_, g.input(batch.inputs), batch.size);

    std::vector<BoundAttention> attn;
    std::vector<AttentionMemory> memory;
    if (attention_on_) {
      Var keys = stack(enc.outputs, 1);
      for (auto& a : attention_) {
        attn.push_back(bind(g, a));
        memory.push_back(prepare_memory(attn.back(), keys, keys));
      }
    }
    std::vector<BoundLstm> dec;
    for (auto& l : decoder_) dec.push_back(bind(g, l));
    BoundDense head = bind(g, head_);

    std::vector<LstmState> states = enc.final_states;
    Var observed_first = g.input(pdf ? batch.last_pdf : batch.last_e);
    Var targets;
    if (teacher) targets = g.input(pdf ? batch.target_pdf : batch.target_e);
    Var nwp;
    if (config_.decoder_nwp) nwp = g.input(batch.decoder_nwp);

    std::vector<Var> outputs;
    outputs.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      Var prev;
      if (t == 0) {
        prev = observed_first;
        notify(t, DecoderInput::observed);
      } else if (teacher) {
        prev = take(targets, 1, t - 1);
        notify(t, DecoderInput::observed);
      } else {
        prev = outputs.back();
        notify(t, DecoderInput::model_output);
      }
      Var x = config_.decoder_nwp ? concat(prev, take(nwp, 1, t), 1) : prev;

      Var below = x;
      for (std::size_t l = 0; l < dec.size(); ++l) {
        Var in = below;
        if (attention_on_) {
          Var query = l == 0 ? concat(x, states[l].h, 1) : states[l].h;
          const Shape& qs = query.shape();
          Var q3 = reshape(query, {qs[0], 1, qs[1]});
          Var ctx = attend(attn[l], memory[l], q3).context;
          const Shape& cs = ctx.shape();
          in = concat(reshape(ctx, {cs[0], cs[2]}), below, 1);
        }
        states[l] = lstm_step(dec[l], in, states[l]);
        below = states[l].h;
      }
      outputs.push_back(output_head(dense_forward(head, below), config_.mode));
    }
    return stack(outputs, 1);
  }

  void collect(std::vector<NamedParam>& out) override {
    for (std::size_t l = 0; l < encoder_.size(); ++l) {
      encoder_[l].collect("encoder" + std::to_string(l), out);
    }
    for (std::size_t l = 0; l < decoder_.size(); ++l) {
      if (attention_on_) attention_[l].collect("attention" + std::to_string(l), out);
      decoder_[l].collect("decoder" + std::to_string(l), out);
    }
    head_.collect("head", out);
  }
  std::unique_ptr<Model> clone() const override { return std::make_unique<Seq2SeqModel>(*this); }

 private:
  bool attention_on_;
  std::vector<LstmLayer> encoder_;
  std::vector<LstmLayer> decoder_;
  std::vector<AttentionLayer> attention_;
  DenseLayer head_;
};

}  // namespace

std::unique_ptr<Model> build_model(const ModelConfig& config) {
  config.validate();
  switch (config.family) {
    case Family::persistence: return std::make_unique<PersistenceModel>(config);
    case Family::ffnn: return std::make_unique<FeedForwardModel>(config);
    case Family::lstm: return std::make_unique<OneBlockLstmModel>(config);
    case Family::s2s:
    case Family::s2s_attn: return std::make_unique<Seq2SeqModel>(config);
  }
  throw ConfigError("unknown model family");
}

std::size_t count_parameters(Model& model) {
  std::size_t n = 0;
  for (const auto& p : model.parameters()) n += p.tensor->size();
  return n;
}

std::vector<Forecast> to_forecasts(const Tensor& output, TargetMode mode) {
  if (output.rank() != 3) throw ShapeError("forecast tensor must be [B x T x width]");
  const std::size_t b = output.dim(0);
  const std::size_t steps = output.dim(1);
  const std::size_t width = output.dim(2);
  std::vector<Forecast> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    Forecast& f = out[i];
    f.mode = mode;
    for (std::size_t t = 0; t < steps; ++t) {
      const double* row = output.values().data() + (i * steps + t) * width;
      if (mode == TargetMode::pdf) {
        f.pdf.emplace_back(std::vector<double>(row, row + width));
        f.expected.push_back(expected_value(f.pdf.back()));
      } else {
        f.expected.push_back(row[0]);
      }
    }
  }
  return out;
}

Forecast forward(Model& model, const Sample& sample, DecodeMode mode) {
  Graph g(false);
  const Sample* ptr = &sample;
  Batch batch = make_batch(std::span<const Sample* const>(&ptr, 1));
  Var out = model.forward(g, batch, mode);
  return to_forecasts(out.value(), model.config().mode).front();
}

std::vector<Forecast> predict(Model& model, std::span<const Sample> samples, DecodeMode mode,
                              std::size_t batch_size) {
  std::vector<Forecast> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); i += batch_size) {
    const auto chunk = samples.subspan(i, std::min(batch_size, samples.size() - i));
    Graph g(false);
    Batch batch = make_batch(chunk);
    Var y = model.forward(g, batch, mode);
    for (auto& f : to_forecasts(y.value(), model.config().mode)) out.push_back(std::move(f));
  }
  return out;
}

Forecast persistence_forecast(std::span<const BinnedDistribution> history) {
  if (history.size() != 24) {
    throw ContractError("persistence needs exactly 24 hourly distributions, got " +
                        std::to_string(history.size()));
  }
  Forecast f;
  f.mode = TargetMode::pdf;
  for (const auto& d : history) {
    f.pdf.push_back(d);
    f.expected.push_back(expected_value(d));
  }
  return f;
}

}  // namespace pvcast
