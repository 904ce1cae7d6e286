#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "pvcast/errors.hpp"
#include "pvcast/metrics.hpp"
#include "pvcast/model.hpp"
#include "support.hpp"

using namespace pvcast;
using pvcast::test::random_batch;

namespace {

double rel_diff(std::size_t count, std::size_t reference) {
  return std::abs(static_cast<double>(count) - static_cast<double>(reference)) /
         static_cast<double>(reference);
}

ModelConfig micro(Family f, TargetMode m, std::uint64_t seed = 3) {
  ModelConfig c;
  c.family = f;
  c.mode = m;
  c.units = 4;
  c.input_steps = 8;
  c.output_steps = 3;
  c.bins = 5;
  c.seed = seed;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("pvcast_test_" + name);
}

}  // namespace

TEST_CASE("family and mode names round-trip") {
  for (Family f : {Family::persistence, Family::ffnn, Family::lstm, Family::s2s, Family::s2s_attn}) {
    CHECK(parse_family(family_name(f)) == f);
  }
  CHECK(parse_mode("E") == TargetMode::expected);
  CHECK(parse_mode("pdf") == TargetMode::pdf);
  CHECK_THROWS_AS(parse_family("gru"), ConfigError);
  CHECK(model_label(Family::s2s_attn, TargetMode::pdf) == "S2S-Attn-pdf");
  CHECK(model_label(Family::persistence, TargetMode::pdf) == "Persistence");
}

TEST_CASE("reference parameter budgets") {
  SUBCASE("s2s expected at 132 units") {
    auto m = build_model(reference_config(Family::s2s, TargetMode::expected));
    CHECK(m->config().units == 132);
    CHECK(rel_diff(count_parameters(*m), 425'000) <= 0.03);
  }
  SUBCASE("s2s pdf at 128 units") {
    auto m = build_model(reference_config(Family::s2s, TargetMode::pdf));
    CHECK(rel_diff(count_parameters(*m), 431'000) <= 0.03);
  }
  SUBCASE("lstm expected at 184 units, 6 features, 480 steps") {
    auto c = reference_config(Family::lstm, TargetMode::expected);
    CHECK(c.input_features == 6);
    CHECK(c.input_steps == 480);
    CHECK(rel_diff(count_parameters(*build_model(c)), 425'000) <= 0.03);
  }
  SUBCASE("ffnn expected at 640 units") {
    auto m = build_model(reference_config(Family::ffnn, TargetMode::expected));
    CHECK(rel_diff(count_parameters(*m), 428'000) <= 0.03);
  }
  SUBCASE("persistence has no parameters") {
    auto m = build_model(reference_config(Family::persistence, TargetMode::pdf));
    CHECK(count_parameters(*m) == 0);
  }
}

TEST_CASE("analytic parameter counts") {
  // Hand-derived: FFNN-E, 640 units, depth 2.
  const std::size_t u = 640;
  const std::size_t ffnn = (6 * u + u) + (u * u + u) + (480 * 24 + 24) + (u * 1 + 1);
  CHECK(count_parameters(*build_model(reference_config(Family::ffnn, TargetMode::expected))) == ffnn);

  // S2S-pdf, 128 units: encoder, decoder fed by the 50-bin input, softmax head.
  const std::size_t v = 128;
  auto lstm = [](std::size_t in, std::size_t units) { return (in + units) * 4 * units + 4 * units; };
  const std::size_t s2s = lstm(6, v) + lstm(v, v) + lstm(50, v) + lstm(v, v) + v * 50 + 50;
  CHECK(count_parameters(*build_model(reference_config(Family::s2s, TargetMode::pdf))) == s2s);
}

TEST_CASE("invalid configurations") {
  ModelConfig c = micro(Family::ffnn, TargetMode::pdf);
  c.units = 0;
  CHECK_THROWS_AS(build_model(c), ConfigError);
  c = micro(Family::lstm, TargetMode::pdf);
  c.decoder_nwp = true;
  CHECK_THROWS_AS(build_model(c), ConfigError);
}

TEST_CASE("output shapes and distributions for every family") {
  std::mt19937_64 rng(1);
  Batch b = random_batch(3, 8, 6, 3, 5, rng);
  for (Family f : {Family::ffnn, Family::lstm, Family::s2s, Family::s2s_attn}) {
    for (TargetMode m : {TargetMode::pdf, TargetMode::expected}) {
      auto model = build_model(micro(f, m));
      Graph g(false);
      Var y = model->forward(g, b, DecodeMode::self_recurrent);
      CHECK(y.shape() == Shape{3, 3, m == TargetMode::pdf ? 5u : 1u});
      for (const auto& fc : to_forecasts(y.value(), m)) {
        CHECK(fc.steps() == 3);
        for (double e : fc.expected) CHECK((e >= 0.0 && e <= 1.0));
        for (const auto& d : fc.pdf) {
          double s = 0.0;
          for (double p : d.probs()) {
            CHECK(p >= 0.0);
            s += p;
          }
          CHECK(std::abs(s - 1.0) < 1e-9);
        }
      }
    }
  }
}

TEST_CASE("changing input steps keeps the output horizon") {
  std::mt19937_64 rng(2);
  for (Family f : {Family::ffnn, Family::lstm, Family::s2s_attn}) {
    for (std::size_t steps : {8u, 13u}) {
      ModelConfig c = micro(f, TargetMode::pdf);
      c.input_steps = steps;
      c.output_steps = 24;
      Batch b = random_batch(1, steps, 6, 24, 5, rng);
      Graph g(false);
      CHECK(build_model(c)->forward(g, b, DecodeMode::self_recurrent).shape()[1] == 24);
    }
  }
}

TEST_CASE("step one is identical under both decode modes") {
  std::mt19937_64 rng(4);
  Batch b = random_batch(2, 8, 6, 3, 5, rng);
  for (Family f : {Family::s2s, Family::s2s_attn}) {
    for (TargetMode m : {TargetMode::pdf, TargetMode::expected}) {
      auto model = build_model(micro(f, m));
      Graph g1(false), g2(false);
      const Tensor tf = model->forward(g1, b, DecodeMode::teacher_forcing).value();
      const Tensor sr = model->forward(g2, b, DecodeMode::self_recurrent).value();
      const std::size_t width = tf.dim(2);
      for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t k = 0; k < width; ++k) {
          const std::size_t at = i * 3 * width + k;
          CHECK(std::memcmp(&tf.values()[at], &sr.values()[at], sizeof(double)) == 0);
        }
      }
    }
  }
}

TEST_CASE("decoder hook reports input sources") {
  std::mt19937_64 rng(5);
  Batch b = random_batch(1, 8, 6, 3, 5, rng);
  auto model = build_model(micro(Family::s2s_attn, TargetMode::pdf));
  std::vector<DecoderInput> seen;
  model->set_decoder_hook([&](std::size_t, DecoderInput s) { seen.push_back(s); });
  Graph g(false);
  model->forward(g, b, DecodeMode::teacher_forcing);
  CHECK(seen == std::vector<DecoderInput>(3, DecoderInput::observed));
  seen.clear();
  model->forward(g, b, DecodeMode::self_recurrent);
  CHECK(seen == std::vector<DecoderInput>{DecoderInput::observed, DecoderInput::model_output,
                                          DecoderInput::model_output});
}

TEST_CASE("teacher forcing without targets is a contract error") {
  std::mt19937_64 rng(6);
  Batch b = random_batch(1, 8, 6, 3, 5, rng);
  b.has_targets = false;
  auto model = build_model(micro(Family::s2s, TargetMode::pdf));
  Graph g(false);
  CHECK_THROWS_AS(model->forward(g, b, DecodeMode::teacher_forcing), ContractError);
  CHECK_NOTHROW(model->forward(g, b, DecodeMode::self_recurrent));
}

TEST_CASE("seeded forward is deterministic") {
  std::mt19937_64 rng(7);
  Batch b = random_batch(2, 8, 6, 3, 5, rng);
  auto a = build_model(micro(Family::s2s_attn, TargetMode::pdf, 9));
  auto c = build_model(micro(Family::s2s_attn, TargetMode::pdf, 9));
  Graph g1(false), g2(false), g3(false);
  const Tensor y1 = a->forward(g1, b, DecodeMode::self_recurrent).value();
  const Tensor y2 = a->forward(g2, b, DecodeMode::self_recurrent).value();
  const Tensor y3 = c->forward(g3, b, DecodeMode::self_recurrent).value();
  CHECK(bitwise_equal(y1, y2));
  CHECK(bitwise_equal(y1, y3));
}

TEST_CASE("persistence forecast") {
  SUBCASE("constant history") {
    std::vector<BinnedDistribution> h(24, BinnedDistribution::point_mass(50, 7));
    Forecast f = persistence_forecast(h);
    CHECK(f.steps() == 24);
    for (const auto& d : f.pdf) CHECK(d == h.front());
  }
  SUBCASE("periodic signal has zero error") {
    std::vector<BinnedDistribution> h;
    for (int t = 0; t < 24; ++t) h.push_back(BinnedDistribution::point_mass(50, static_cast<std::size_t>(t)));
    Forecast f = persistence_forecast(h);
    std::vector<double> truth;
    for (const auto& d : h) truth.push_back(expected_value(d));
    CHECK(nrmse(f.expected, truth, 1.0) == 0.0);
  }
  SUBCASE("wrong length") {
    std::vector<BinnedDistribution> h(23, BinnedDistribution::uniform(50));
    CHECK_THROWS_AS(persistence_forecast(h), ContractError);
  }
  SUBCASE("model form matches the history") {
    std::mt19937_64 rng(8);
    Batch b = random_batch(2, 8, 6, 24, 50, rng);
    ModelConfig c;
    c.family = Family::persistence;
    auto m = build_model(c);
    Graph g(false);
    CHECK(bitwise_equal(m->forward(g, b, DecodeMode::self_recurrent).value(), b.history_pdf));
  }
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(9);
  Batch b = random_batch(2, 8, 6, 3, 5, rng);
  auto model = build_model(micro(Family::s2s_attn, TargetMode::pdf, 17));
  for (Tensor* t : model->parameter_tensors()) {
    for (auto& v : t->values()) v += 1e-3 * std::sin(v * 1e4);
  }
  KeyValues meta;
  meta.set("p_max", 4000.0);
  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(*model, path, meta);
  Checkpoint ck = load_checkpoint(path);
  CHECK(count_parameters(*ck.model) == count_parameters(*model));
  CHECK(ck.metadata.get_double("p_max") == 4000.0);
  auto p1 = model->parameters();
  auto p2 = ck.model->parameters();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].name == p2[i].name);
    CHECK(bitwise_equal(*p1[i].tensor, *p2[i].tensor));
  }
  Graph g1(false), g2(false);
  CHECK(bitwise_equal(model->forward(g1, b, DecodeMode::self_recurrent).value(),
                      ck.model->forward(g2, b, DecodeMode::self_recurrent).value()));
  std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints are rejected") {
  auto model = build_model(micro(Family::s2s, TargetMode::expected));
  const auto path = temp_path("corrupt.ckpt");
  save_checkpoint(*model, path);
  std::vector<char> bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::vector<char>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
  };
  SUBCASE("header byte") {
    auto bad = bytes;
    bad[30] ^= 0x5a;
    write(bad);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  }
  SUBCASE("magic") {
    auto bad = bytes;
    bad[0] = 'X';
    write(bad);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  }
  SUBCASE("version") {
    auto bad = bytes;
    bad[8] = 2;
    write(bad);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  }
  SUBCASE("truncated") {
    write(std::vector<char>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2)));
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  }
  SUBCASE("missing file") {
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  }
  std::filesystem::remove(path);
}
