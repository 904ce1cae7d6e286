#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pvcast/cli.hpp"
#include "pvcast/keyvalue.hpp"

using namespace pvcast;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pvcast");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / ("pvcast_cli_" + name); }

/// Fresh, empty directory path.
fs::path scratch(const std::string& name) {
  const fs::path dir = tmp(name);
  fs::remove_all(dir);
  return dir;
}

/// Shared 60-day dataset and micro config, created once.
struct Fixture {
  fs::path data = scratch("data60");
  fs::path config = fs::temp_directory_path() / "pvcast_cli_micro.txt";
  Fixture() {
    REQUIRE(cli({"gen-data", "--days", "60", "--seed", "7", "--out", data.string()}).code == 0);
    std::ofstream(config) << "window_hours=24\nunits=4\ndepth=1\nmax_epochs=2\npatience=2\n"
                             "batch_size=16\nseed=5\nmodel_seed=2\n";
  }
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("gen-data") {
  const Fixture& f = fixture();
  SUBCASE("row counts") {
    CHECK(count_lines(f.data / "pv.csv") == 60 * 1440 + 1);
    CHECK(count_lines(f.data / "nwp.csv") == 60 * 24 + 1);
    CHECK(fs::exists(f.data / "manifest.txt"));
    KeyValues m = KeyValues::load(f.data / "manifest.txt");
    CHECK(m.get("command") == "gen-data");
  }
  SUBCASE("same seed gives byte-identical files") {
    const fs::path again = scratch("data60b");
    REQUIRE(cli({"gen-data", "--days", "60", "--seed", "7", "--out", again.string()}).code == 0);
    CHECK(slurp(f.data / "pv.csv") == slurp(again / "pv.csv"));
    CHECK(slurp(f.data / "nwp.csv") == slurp(again / "nwp.csv"));
  }
  SUBCASE("too few days") {
    Run r = cli({"gen-data", "--days", "3", "--out", scratch("short").string()});
    CHECK(r.code == kExitUsage);
    CHECK_FALSE(r.err.empty());
  }
}

TEST_CASE("usage errors") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"train", "--data", "x"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
  Run v = cli({"--version"});
  CHECK(v.code == kExitOk);
  CHECK(v.out.find(version_string()) != std::string::npos);
}

TEST_CASE("train") {
  const Fixture& f = fixture();
  SUBCASE("persistence has nothing to train") {
    Run r = cli({"train", "--model", "persistence", "--data", f.data.string(), "--out",
                 scratch("tp").string()});
    CHECK(r.code == kExitUsage);
  }
  SUBCASE("unknown family") {
    Run r = cli({"train", "--model", "gru", "--data", f.data.string(), "--out", scratch("tg").string()});
    CHECK(r.code == kExitUsage);
  }
  SUBCASE("missing data directory") {
    Run r = cli({"train", "--model", "s2s", "--data", scratch("nodata").string(), "--out",
                 scratch("tn").string()});
    CHECK(r.code == kExitUsage);
  }
  SUBCASE("malformed data is a runtime error") {
    const fs::path bad = scratch("baddata");
    fs::create_directories(bad);
    fs::copy_file(f.data / "nwp.csv", bad / "nwp.csv");
    fs::copy_file(f.data / "dataset.txt", bad / "dataset.txt");
    std::ofstream(bad / "pv.csv") << "timestamp,power_w\n2016-01-01T00:00:00Z,x\n";
    Run r = cli({"train", "--model", "s2s", "--data", bad.string(), "--out", scratch("tb").string()});
    CHECK(r.code == kExitRuntime);
  }
  SUBCASE("micro s2s_attn run is reproducible") {
    std::vector<std::string> reports;
    for (const char* name : {"ta1", "ta2"}) {
      const fs::path out = scratch(name);
      Run r = cli({"train", "--model", "s2s_attn", "--mode", "pdf", "--data", f.data.string(),
                   "--config", f.config.string(), "--out", out.string()});
      INFO(r.err);
      REQUIRE(r.code == kExitOk);
      CHECK(fs::exists(out / "model.ckpt"));
      CHECK(fs::exists(out / "manifest.txt"));
      const auto rows = read_csv(out / "train_report.csv");
      CHECK(rows.size() >= 2);
      CHECK(rows.front() == std::vector<std::string>{"epoch", "train_loss", "val_nrmse"});
      reports.push_back(slurp(out / "train_report.csv"));
    }
    // Loss and validation columns match; nothing time-dependent is in the report.
    CHECK(reports[0] == reports[1]);
    CHECK(slurp(tmp("ta1") / "model.ckpt") == slurp(tmp("ta2") / "model.ckpt"));
  }
}

TEST_CASE("forecast") {
  const Fixture& f = fixture();
  auto train = [&](const char* mode, const char* name) {
    const fs::path out = scratch(name);
    Run r = cli({"train", "--model", "s2s_attn", "--mode", mode, "--data", f.data.string(), "--config",
                 f.config.string(), "--out", out.string()});
    INFO(r.err);
    REQUIRE(r.code == kExitOk);
    return out / "model.ckpt";
  };
  SUBCASE("pdf checkpoint") {
    const fs::path out = scratch("fp");
    Run r = cli({"forecast", "--checkpoint", train("pdf", "fpm").string(), "--data", f.data.string(),
                 "--at", "2016-01-20T06:00Z", "--out", out.string(), "--svg"});
    INFO(r.err);
    REQUIRE(r.code == kExitOk);
    const auto rows = read_csv(out / "forecast.csv");
    REQUIRE(rows.size() == 25);
    CHECK(rows[0][0] == "hour");
    CHECK(rows[0][1] == "expected_w");
    for (std::size_t i = 1; i < rows.size(); ++i) {
      REQUIRE(rows[i].size() == 52);
      double sum = 0.0;
      for (std::size_t k = 2; k < 52; ++k) {
        const double p = std::stod(rows[i][k]);
        CHECK(p >= 0.0);
        sum += p;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
      const double w = std::stod(rows[i][1]);
      CHECK((w >= 0.0 && w <= 5000.0));
    }
    CHECK(slurp(out / "forecast.svg").find("<svg") != std::string::npos);
    CHECK(fs::exists(out / "manifest.txt"));
  }
  SUBCASE("expected-value checkpoint") {
    const fs::path out = scratch("fe");
    Run r = cli({"forecast", "--checkpoint", train("E", "fem").string(), "--data", f.data.string(),
                 "--at", "2016-02-10T00:00Z", "--out", out.string()});
    INFO(r.err);
    REQUIRE(r.code == kExitOk);
    const auto rows = read_csv(out / "forecast.csv");
    REQUIRE(rows.size() == 25);
    for (const auto& row : rows) CHECK(row.size() == 2);
  }
  SUBCASE("insufficient history") {
    Run r = cli({"forecast", "--checkpoint", train("pdf", "fim").string(), "--data", f.data.string(),
                 "--at", "2016-01-01T05:00Z", "--out", scratch("fi").string()});
    CHECK(r.code == kExitUsage);
  }
  SUBCASE("bad timestamp") {
    Run r = cli({"forecast", "--checkpoint", train("pdf", "fbm").string(), "--data", f.data.string(),
                 "--at", "yesterday", "--out", scratch("fb").string()});
    CHECK(r.code == kExitUsage);
  }
  SUBCASE("corrupt checkpoint") {
    const fs::path bad = tmp("bad.ckpt");
    std::ofstream(bad) << "not a checkpoint";
    Run r = cli({"forecast", "--checkpoint", bad.string(), "--data", f.data.string(), "--at",
                 "2016-01-20T06:00Z", "--out", scratch("fc").string()});
    CHECK(r.code == kExitRuntime);
  }
}

TEST_CASE("benchmark") {
  const Fixture& f = fixture();
  const fs::path out = scratch("bench");
  Run r = cli({"benchmark", "--data", f.data.string(), "--config", f.config.string(), "--out",
               out.string(), "--jobs", "4"});
  INFO(r.err);
  REQUIRE(r.code == kExitOk);
  const auto rows = read_csv(out / "report.csv");
  REQUIRE(rows.size() == 1 + 9 * 2);
  std::size_t val = 0, test = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    REQUIRE(row.size() == 8);
    val += row[1] == "val";
    test += row[1] == "test";
    const std::string& model = row[0];
    if (model == "Persistence") {
      CHECK(row[5].empty());
      CHECK(row[6].empty());
    } else if (model.size() > 4 && model.substr(model.size() - 4) == "-pdf") {
      CHECK(row[4] != "-");
      CHECK(row[6] != "-");
    } else {
      CHECK(model.substr(model.size() - 2) == "-E");
      CHECK(row[4] == "-");
      CHECK(row[6] == "-");
    }
  }
  CHECK(val == 9);
  CHECK(test == 9);
  CHECK(fs::exists(out / "report.txt"));
  CHECK(fs::exists(out / "plots" / "s2s_attn_pdf.svg"));
  CHECK(fs::exists(out / "manifest.txt"));
}
