#include "pvcast/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <future>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "pvcast/errors.hpp"
#include "pvcast/pipeline.hpp"
#include "pvcast/plot.hpp"

#ifndef PVCAST_VERSION
#define PVCAST_VERSION "0.0.0"
#endif

namespace pvcast {

const char* version_string() { return PVCAST_VERSION; }

namespace {

namespace fs = std::filesystem;

std::string now_utc() {
  const auto now = std::chrono::system_clock::now();
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
  const Minutes minutes = secs / 60;
  std::string s = format_timestamp(minutes);
  char buf[4];
  std::snprintf(buf, sizeof buf, "%02d", static_cast<int>(secs % 60));
  s.replace(s.size() - 3, 2, buf);
  return s;
}

/// Key-value record written next to every command's outputs.
class RunManifest {
 public:
  RunManifest(std::string command, int argc, const char* const* argv) {
    kv_.set("command", std::move(command));
    std::string args;
    for (int i = 1; i < argc; ++i) {
      if (i > 1) args += ' ';
      args += argv[i];
    }
    kv_.set("args", args);
    kv_.set("version", std::string(version_string()));
    kv_.set("started", now_utc());
  }
  KeyValues& kv() { return kv_; }
  void output(const fs::path& p) { outputs_.push_back(p.filename().string()); }
  void write(const fs::path& dir) {
    std::string joined;
    for (const auto& o : outputs_) joined += (joined.empty() ? "" : ",") + o;
    kv_.set("outputs", joined);
    kv_.set("finished", now_utc());
    kv_.save(dir / "manifest.txt");
  }

 private:
  KeyValues kv_;
  std::vector<std::string> outputs_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return PipelineConfig{};
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  try {
    return PipelineConfig::from_kv(KeyValues::load(path));
  } catch (const ParseError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

std::string file_label(const std::string& label) {
  std::string s;
  for (char c : label) s += (c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return s;
}

// --------------------------------------------------------------------------

struct GenDataArgs {
  long days = 0;
  std::uint64_t seed = 0;
  double p_max = 5000.0;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a, RunManifest& manifest, std::ostream& out) {
  if (a.days < 6) throw ConfigError("--days must be at least 6, got " + std::to_string(a.days));
  const RawSeries raw = synth_generate(static_cast<std::size_t>(a.days), a.seed, a.p_max);
  const fs::path dir(a.out);
  ensure_dir(dir);
  write_pv_csv(dir / "pv.csv", raw.pv);
  write_nwp_csv(dir / "nwp.csv", raw.nwp);
  KeyValues ds;
  ds.set("p_max", a.p_max);
  ds.set("days", static_cast<std::int64_t>(a.days));
  ds.set("seed", a.seed);
  ds.set("start", format_timestamp(kSyntheticStart));
  ds.save(dir / "dataset.txt");
  for (const char* f : {"pv.csv", "nwp.csv", "dataset.txt"}) manifest.output(f);
  manifest.kv().set("seed", a.seed);
  manifest.write(dir);
  out << "wrote " << raw.pv.records.size() << " PV rows and " << raw.nwp.records.size()
      << " NWP rows to " << dir.string() << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string model;
  std::string mode = "pdf";
  std::string data;
  std::string config;
  std::string out;
};

int cmd_train(const TrainArgs& a, RunManifest& manifest, std::ostream& out) {
  const Family family = parse_family(a.model);
  const TargetMode mode = parse_mode(a.mode);
  if (family == Family::persistence) throw ConfigError("persistence has nothing to train");
  const PipelineConfig config = load_config(a.config);
  const fs::path dir(a.out);
  ensure_dir(dir);

  const PreparedData prepared = prepare_data(load_data_dir(a.data), config);
  dataset_manifest(prepared, config).save(dir / "dataset.txt");
  config.to_kv().save(dir / "config.txt");

  FitCallbacks cb;
  cb.on_epoch = [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " loss " << format_double(r.train_loss) << " val_nrmse "
        << format_double(r.val_nrmse) << '\n';
  };
  TrainedModel trained = train_model(family, mode, prepared, config, cb);
  save_checkpoint(*trained.model, dir / "model.ckpt", checkpoint_metadata(prepared));
  trained.report.write_csv(dir / "train_report.csv");
  if (trained.report.clipped_steps > 0) {
    out << "gradient clipping engaged on " << trained.report.clipped_steps << " steps\n";
  }
  out << model_label(family, mode) << ": best epoch " << trained.report.best_epoch
      << " val_nrmse " << format_double(trained.report.best_val_nrmse()) << " ("
      << stop_reason_name(trained.report.stop) << ")\n";

  for (const char* f : {"model.ckpt", "train_report.csv", "dataset.txt", "config.txt"}) manifest.output(f);
  manifest.kv().set("config", a.config);
  manifest.kv().set("seed", config.train.seed);
  manifest.kv().set("model_seed", config.model_seed);
  manifest.kv().set("split_seed", config.split_seed);
  manifest.write(dir);
  return kExitOk;
}

struct BenchmarkArgs {
  std::string data;
  std::string config;
  std::string out;
  unsigned jobs = 1;
};

int cmd_benchmark(const BenchmarkArgs& a, RunManifest& manifest, std::ostream& out) {
  const PipelineConfig config = load_config(a.config);
  const fs::path dir(a.out);
  ensure_dir(dir);
  ensure_dir(dir / "plots");
  const PreparedData prepared = prepare_data(load_data_dir(a.data), config);
  if (prepared.splits.val.empty() || prepared.splits.test.empty()) {
    throw DataError("benchmark needs non-empty validation and test splits");
  }
  dataset_manifest(prepared, config).save(dir / "dataset.txt");
  config.to_kv().save(dir / "config.txt");

  const auto variants = benchmark_models();
  std::vector<TrainedModel> trained(variants.size());
  auto train_one = [&](std::size_t i) {
    trained[i] = train_model(variants[i].first, variants[i].second, prepared, config);
  };
  const unsigned jobs = std::max(1u, a.jobs);
  for (std::size_t begin = 0; begin < variants.size(); begin += jobs) {
    std::vector<std::future<void>> running;
    for (std::size_t i = begin; i < std::min(variants.size(), begin + jobs); ++i) {
      running.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async, train_one, i));
    }
    for (auto& f : running) f.get();
    for (std::size_t i = begin; i < std::min(variants.size(), begin + jobs); ++i) {
      out << model_label(variants[i].first, variants[i].second) << ": best epoch "
          << trained[i].report.best_epoch << " of " << trained[i].report.epochs.size() << '\n';
    }
  }

  auto persistence = build_model(ModelConfig{.family = Family::persistence,
                                             .mode = TargetMode::pdf,
                                             .input_steps = config.samples.window_hours * kStepsPerHour});
  std::vector<Model*> models{persistence.get()};
  for (auto& t : trained) models.push_back(t.model.get());

  EvalReport report = evaluate(models, prepared.splits.val, prepared.data.p_max, "val", config.metrics);
  report.append(evaluate(models, prepared.splits.test, prepared.data.p_max, "test", config.metrics));
  write_text(dir / "report.txt", report.text());
  write_text(dir / "report.csv", report.csv());
  out << report.text();

  const Sample& example = prepared.splits.test.front();
  for (Model* m : models) {
    const std::string label = model_label(m->config().family, m->config().mode);
    const Forecast f = forward(*m, example, DecodeMode::self_recurrent);
    write_text(dir / "plots" / (file_label(label) + ".svg"),
               forecast_svg(label + " " + format_timestamp(example.anchor), f, prepared.data.p_max,
                            example.target_e));
  }
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const std::string name = file_label(model_label(variants[i].first, variants[i].second));
    trained[i].report.write_csv(dir / (name + "_train.csv"));
    manifest.output(name + "_train.csv");
  }

  for (const char* f : {"report.txt", "report.csv", "dataset.txt", "config.txt", "plots"}) manifest.output(f);
  manifest.kv().set("config", a.config);
  manifest.kv().set("seed", config.train.seed);
  manifest.kv().set("model_seed", config.model_seed);
  manifest.kv().set("split_seed", config.split_seed);
  manifest.write(dir);
  return kExitOk;
}

struct ForecastArgs {
  std::string checkpoint;
  std::string data;
  std::string at;
  std::string out;
  bool svg = false;
};

int cmd_forecast(const ForecastArgs& a, RunManifest& manifest, std::ostream& out) {
  Minutes anchor = 0;
  try {
    anchor = parse_timestamp(a.at);
  } catch (const ParseError& e) {
    throw ConfigError(std::string("--at: ") + e.what());
  }
  Checkpoint ck = load_checkpoint(a.checkpoint);
  const double p_max = ck.metadata.get_double("p_max");
  SampleSpec spec;
  spec.window_hours = ck.metadata.get_uint("window_hours");
  spec.horizon_hours = ck.metadata.get_uint("horizon_hours");

  const RawSeries raw = load_data_dir(a.data, p_max);
  AlignedDataset data = consolidate(raw.pv, raw.nwp);
  data.norm = Normalization::load(ck.metadata, "norm.");
  const bool observed = anchor + static_cast<Minutes>(spec.horizon_hours) * kMinutesPerHour <= data.end();
  Sample sample;
  try {
    sample = make_sample(data, anchor, spec, observed);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  Model& model = *ck.model;
  if (model.config().decoder_nwp && !observed) {
    throw ConfigError("model needs weather forecasts for the full horizon after --at");
  }
  const Forecast f = forward(model, sample, DecodeMode::self_recurrent);

  const fs::path dir(a.out);
  ensure_dir(dir);
  std::ostringstream csv;
  const bool pdf = f.mode == TargetMode::pdf;
  csv << "hour,expected_w";
  if (pdf) {
    for (std::size_t i = 0; i < f.pdf.front().bins(); ++i) csv << ",p" << i;
  }
  csv << '\n';
  for (std::size_t t = 0; t < f.steps(); ++t) {
    csv << format_timestamp(anchor + static_cast<Minutes>(t) * kMinutesPerHour) << ','
        << format_double(f.expected[t] * p_max);
    if (pdf) {
      for (double p : f.pdf[t].probs()) csv << ',' << format_double(p);
    }
    csv << '\n';
  }
  write_text(dir / "forecast.csv", csv.str());
  manifest.output("forecast.csv");
  if (a.svg) {
    const std::string label = model_label(model.config().family, model.config().mode);
    write_text(dir / "forecast.svg",
               forecast_svg(label + " " + format_timestamp(anchor), f, p_max,
                            observed ? std::span<const double>(sample.target_e) : std::span<const double>()));
    manifest.output("forecast.svg");
  }
  manifest.kv().set("checkpoint", a.checkpoint);
  manifest.kv().set("at", format_timestamp(anchor));
  manifest.write(dir);
  out << "wrote " << f.steps() << "-hour forecast to " << (dir / "forecast.csv").string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Probabilistic day-ahead PV power forecasting"};
  app.set_version_flag("--version", std::string(version_string()));
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a seeded synthetic PV/NWP dataset");
  gen_cmd->add_option("--days", gen.days, "Number of days")->required();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--pmax", gen.p_max, "Rated power in watts");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  train_cmd->add_option("--model", train.model, "ffnn, lstm, s2s or s2s_attn")->required();
  train_cmd->add_option("--mode", train.mode, "pdf or E");
  train_cmd->add_option("--data", train.data, "Data directory")->required();
  train_cmd->add_option("--config", train.config, "Key-value config file");
  train_cmd->add_option("--out", train.out, "Output directory")->required();

  BenchmarkArgs bench;
  auto* bench_cmd = app.add_subcommand("benchmark", "Train all models and compare them to persistence");
  bench_cmd->add_option("--data", bench.data, "Data directory")->required();
  bench_cmd->add_option("--config", bench.config, "Key-value config file");
  bench_cmd->add_option("--out", bench.out, "Output directory")->required();
  bench_cmd->add_option("--jobs", bench.jobs, "Models trained in parallel");

  ForecastArgs fc;
  auto* fc_cmd = app.add_subcommand("forecast", "Forecast the 24 hours after a timestamp");
  fc_cmd->add_option("--checkpoint", fc.checkpoint, "Checkpoint file")->required();
  fc_cmd->add_option("--data", fc.data, "Data directory")->required();
  fc_cmd->add_option("--at", fc.at, "Forecast origin, YYYY-MM-DDTHH:MMZ")->required();
  fc_cmd->add_option("--out", fc.out, "Output directory")->required();
  fc_cmd->add_flag("--svg", fc.svg, "Also write a fan chart");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    RunManifest manifest(name, argc, argv);
    if (name == "gen-data") return cmd_gen_data(gen, manifest, out);
    if (name == "train") return cmd_train(train, manifest, out);
    if (name == "benchmark") return cmd_benchmark(bench, manifest, out);
    return cmd_forecast(fc, manifest, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace pvcast
