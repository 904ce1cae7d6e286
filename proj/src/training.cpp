#include "pvcast/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "pvcast/errors.hpp"
#include "pvcast/optimizer.hpp"

namespace pvcast {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (!(epsilon_floor > 0.0)) throw ConfigError("epsilon_floor must be positive");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be non-negative");
}

KeyValues TrainConfig::to_kv() const {
  KeyValues kv;
  kv.set("learning_rate", learning_rate);
  kv.set("momentum", momentum);
  kv.set("batch_size", static_cast<std::uint64_t>(batch_size));
  kv.set("patience", static_cast<std::uint64_t>(patience));
  kv.set("max_epochs", static_cast<std::uint64_t>(max_epochs));
  kv.set("seed", seed);
  kv.set("epsilon_floor", epsilon_floor);
  kv.set("clip_norm", clip_norm);
  return kv;
}

TrainConfig TrainConfig::from_kv(const KeyValues& kv) {
  TrainConfig c;
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.momentum = kv.get_double("momentum", c.momentum);
  c.batch_size = kv.get_uint("batch_size", c.batch_size);
  c.patience = kv.get_uint("patience", c.patience);
  c.max_epochs = kv.get_uint("max_epochs", c.max_epochs);
  c.seed = kv.get_uint("seed", c.seed);
  c.epsilon_floor = kv.get_double("epsilon_floor", c.epsilon_floor);
  c.clip_norm = kv.get_double("clip_norm", c.clip_norm);
  c.validate();
  return c;
}

std::string_view stop_reason_name(StopReason r) {
  return r == StopReason::patience ? "patience" : "max_epochs";
}

double TrainReport::best_val_nrmse() const {
  if (best_epoch == 0 || best_epoch > epochs.size()) throw ContractError("report has no best epoch");
  return epochs[best_epoch - 1].val_nrmse;
}

std::string TrainReport::csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,val_nrmse\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_nrmse) << '\n';
  }
  return os.str();
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << csv();
}

double kl_loss(const Forecast& f, std::span<const BinnedDistribution> p, double floor) {
  if (f.mode != TargetMode::pdf || f.pdf.size() != p.size()) {
    throw ContractError("KL loss needs pdf forecasts with one distribution per target step");
  }
  if (!(floor > 0.0)) throw ContractError("KL floor must be positive");
  double total = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (f.pdf[t].bins() != p[t].bins()) throw ContractError("KL loss bin count mismatch");
    for (std::size_t i = 0; i < p[t].bins(); ++i) {
      const double pi = p[t][i];
      if (pi > 0.0) {
        total -= pi * (std::log(std::max(f.pdf[t][i], floor)) - std::log(std::max(pi, floor)));
      }
    }
  }
  return total;
}

double mse_loss(const Forecast& f, std::span<const double> p_e) {
  if (f.expected.size() != p_e.size() || p_e.empty()) {
    throw ContractError("MSE loss needs one forecast value per target step");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < p_e.size(); ++t) {
    total += (f.expected[t] - p_e[t]) * (f.expected[t] - p_e[t]);
  }
  return total / static_cast<double>(p_e.size());
}

Var batch_loss(Var output, const Batch& batch, TargetMode mode, double floor) {
  if (!batch.has_targets) throw ContractError("loss needs targets");
  if (mode == TargetMode::pdf) return kl_divergence(output, batch.target_pdf, floor);
  return mean_squared_error(output, batch.target_e);
}

namespace {

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(const std::vector<Tensor*>& params) {
  Snapshot s;
  s.reserve(params.size());
  for (const Tensor* p : params) s.emplace_back(p->values().begin(), p->values().end());
  return s;
}

void restore(const std::vector<Tensor*>& params, const Snapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(s[i].begin(), s[i].end(), params[i]->values().begin());
  }
}

}  // namespace

TrainReport fit(Model& model, std::span<const Sample> train, std::span<const Sample> val,
                const TrainConfig& config, const FitCallbacks& callbacks) {
  config.validate();
  if (train.empty() || val.empty()) throw ContractError("fit needs non-empty train and validation splits");
  const auto params = model.parameter_tensors();
  if (params.empty()) throw ContractError("model has no trainable parameters");
  for (Tensor* p : params) p->set_requires_grad(true);

  const auto started = std::chrono::steady_clock::now();
  const TargetMode mode = model.config().mode;
  SgdNesterov optimizer(params, config.learning_rate, config.momentum);
  optimizer.set_clip_norm(config.clip_norm);
  std::mt19937_64 rng(config.seed);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainReport report;
  Snapshot best;
  double best_nrmse = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const Sample*> chunk;
      chunk.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) chunk.push_back(&train[order[i]]);
      const int batch_index = static_cast<int>(batches);

      double loss_value = 0.0;
      try {
        const Batch batch = make_batch(std::span<const Sample* const>(chunk));
        optimizer.zero_grad();
        Graph g;
        Var out = model.forward(g, batch, DecodeMode::teacher_forcing);
        Var loss = batch_loss(out, batch, mode, config.epsilon_floor);
        loss_value = loss.value()[0];
        if (!std::isfinite(loss_value)) {
          throw TrainingError("non-finite loss", static_cast<int>(epoch), batch_index);
        }
        g.backward(loss);
        optimizer.step();
      } catch (const DomainError& e) {
        throw TrainingError(std::string("numerical failure (") + e.what() + ")",
                            static_cast<int>(epoch), batch_index);
      }
      for (const Tensor* p : params) {
        if (!p->all_finite()) {
          throw TrainingError("non-finite parameters", static_cast<int>(epoch), batch_index);
        }
      }
      loss_sum += loss_value;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    try {
      rec.val_nrmse = mean_nrmse(predict(model, val, DecodeMode::self_recurrent), val);
    } catch (const DomainError& e) {
      throw TrainingError(std::string("numerical failure in validation (") + e.what() + ")",
                          static_cast<int>(epoch), -1);
    }
    report.epochs.push_back(rec);
    if (callbacks.on_epoch) callbacks.on_epoch(rec);

    if (rec.val_nrmse < best_nrmse) {
      best_nrmse = rec.val_nrmse;
      report.best_epoch = epoch;
      best = snapshot(params);
      since_best = 0;
    } else if (++since_best >= config.patience) {
      report.stop = StopReason::patience;
      break;
    }
  }

  restore(params, best);
  report.clipped_steps = optimizer.clipped_steps();
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace pvcast
