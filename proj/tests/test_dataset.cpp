#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <cstring>

#include "pvcast/dataset.hpp"
#include "pvcast/errors.hpp"

using namespace pvcast;

namespace {

constexpr Minutes kT0 = kSyntheticStart;

/// Minute PV and hourly NWP over `days` from kT0. NWP channels all equal nwp(hour).
RawSeries make_raw(std::size_t days, const std::function<double(std::size_t)>& pv,
                   const std::function<double(std::size_t)>& nwp, double p_max = 1000.0) {
  RawSeries raw;
  raw.pv.p_max = p_max;
  for (std::size_t m = 0; m < days * 1440; ++m) {
    raw.pv.records.push_back({kT0 + static_cast<Minutes>(m), pv(m)});
  }
  for (std::size_t h = 0; h < days * 24; ++h) {
    const double v = nwp(h);
    raw.nwp.records.push_back({kT0 + static_cast<Minutes>(h) * 60, v, v, v, v, v});
  }
  return raw;
}

std::filesystem::path temp_file(const std::string& name, const std::string& body) {
  auto p = std::filesystem::temp_directory_path() / ("pvcast_ds_" + name);
  std::ofstream(p) << body;
  return p;
}

const std::string kNwpBody =
    "timestamp,temp_c,pressure_kpa,ghi_wm2,wind_ms,rh_pct\n"
    "2016-01-01T00:00:00Z,5,101.2,0,3,80\n";

}  // namespace

TEST_CASE("ingest well-formed files") {
  auto pv = temp_file("pv2.csv",
                      "timestamp,power_w\n2016-01-01T00:00:00Z,0\n2016-01-01T00:01:00Z,12.5\n");
  auto nwp = temp_file("nwp1.csv", kNwpBody);
  RawSeries raw = ingest_csv(pv, nwp, 5000.0);
  CHECK(raw.pv.records.size() == 2);
  CHECK(raw.pv.records[1].power_w == 12.5);
  CHECK(raw.pv.records[1].time - raw.pv.records[0].time == 1);
  CHECK(raw.nwp.records.size() == 1);
  CHECK(raw.pv.clipped == 0);
}

TEST_CASE("ingest clips small excursions") {
  auto pv = temp_file("pvneg.csv",
                      "timestamp,power_w\n2016-01-01T00:00:00Z,-3\n2016-01-01T00:01:00Z,5100\n");
  auto nwp = temp_file("nwp1.csv", kNwpBody);
  RawSeries raw = ingest_csv(pv, nwp, 5000.0);
  CHECK(raw.pv.records[0].power_w == 0.0);
  CHECK(raw.pv.records[1].power_w == 5000.0);
  CHECK(raw.pv.clipped == 2);
}

TEST_CASE("ingest errors") {
  auto nwp = temp_file("nwp1.csv", kNwpBody);
  SUBCASE("shuffled timestamps name the first inversion") {
    auto pv = temp_file("pvshuf.csv",
                        "timestamp,power_w\n2016-01-01T00:01:00Z,1\n2016-01-01T00:00:00Z,2\n"
                        "2016-01-01T00:02:00Z,3\n");
    try {
      ingest_csv(pv, nwp, 5000.0);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("large overshoot") {
    auto pv = temp_file("pvover.csv", "timestamp,power_w\n2016-01-01T00:00:00Z,5300\n");
    CHECK_THROWS_AS(ingest_csv(pv, nwp, 5000.0), DataError);
  }
  SUBCASE("malformed row carries its line") {
    auto pv = temp_file("pvbad.csv",
                        "timestamp,power_w\n2016-01-01T00:00:00Z,1\n2016-01-01T00:01:00Z,abc\n");
    try {
      ingest_csv(pv, nwp, 5000.0);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }
  SUBCASE("wrong header") {
    auto pv = temp_file("pvhdr.csv", "time,power\n2016-01-01T00:00:00Z,1\n");
    CHECK_THROWS_AS(ingest_csv(pv, nwp, 5000.0), ParseError);
  }
}

TEST_CASE("csv write and read round trip") {
  RawSeries raw = synth_generate(6, 3, 4000.0);
  auto dir = std::filesystem::temp_directory_path();
  write_pv_csv(dir / "pvcast_ds_rt_pv.csv", raw.pv);
  write_nwp_csv(dir / "pvcast_ds_rt_nwp.csv", raw.nwp);
  RawSeries back = ingest_csv(dir / "pvcast_ds_rt_pv.csv", dir / "pvcast_ds_rt_nwp.csv", 4000.0);
  REQUIRE(back.pv.records.size() == raw.pv.records.size());
  REQUIRE(back.nwp.records.size() == raw.nwp.records.size());
  for (std::size_t i = 0; i < raw.pv.records.size(); i += 997) {
    CHECK(back.pv.records[i].time == raw.pv.records[i].time);
    CHECK(back.pv.records[i].power_w == doctest::Approx(raw.pv.records[i].power_w).epsilon(1e-12));
  }
}

TEST_CASE("consolidate interpolates and averages") {
  SUBCASE("NWP 10 then 14") {
    auto raw = make_raw(6, [](std::size_t) { return 0.0; },
                        [](std::size_t h) { return h % 2 == 0 ? 10.0 : 14.0; });
    AlignedDataset d = consolidate(raw.pv, raw.nwp);
    for (std::size_t s = 0; s <= 4; ++s) {
      CHECK(d.grid[s][0] == doctest::Approx(10.0 + static_cast<double>(s)));
    }
  }
  SUBCASE("constant 100 W") {
    auto raw = make_raw(6, [](std::size_t) { return 100.0; }, [](std::size_t) { return 1.0; });
    AlignedDataset d = consolidate(raw.pv, raw.nwp);
    for (std::size_t s = 0; s < 4; ++s) CHECK(d.grid[s][kPvChannel] == 100.0);
  }
  SUBCASE("alternating 0 and 200 W") {
    auto raw = make_raw(6, [](std::size_t m) { return m % 2 == 0 ? 0.0 : 200.0; },
                        [](std::size_t) { return 1.0; });
    AlignedDataset d = consolidate(raw.pv, raw.nwp);
    // Arithmetic mean of the 15 minutes in the first window: 7 of them are 200 W.
    double mean = 0.0;
    for (std::size_t m = 0; m < 15; ++m) mean += raw.pv.records[m].power_w;
    mean /= 15.0;
    CHECK(d.grid[0][kPvChannel] == doctest::Approx(mean));
    // The 4-window hour average is exactly 100 W.
    double hour = 0.0;
    for (std::size_t s = 0; s < 4; ++s) hour += d.grid[s][kPvChannel];
    CHECK(hour / 4.0 == doctest::Approx(100.0));
  }
  SUBCASE("coverage shorter than six days") {
    auto raw = make_raw(5, [](std::size_t) { return 0.0; }, [](std::size_t) { return 1.0; });
    CHECK_THROWS_AS(consolidate(raw.pv, raw.nwp), DataError);
  }
  SUBCASE("interior PV gap over two hours") {
    auto raw = make_raw(7, [](std::size_t) { return 5.0; }, [](std::size_t) { return 1.0; });
    auto& r = raw.pv.records;
    r.erase(r.begin() + 3000, r.begin() + 3000 + 121);
    CHECK_THROWS_AS(consolidate(raw.pv, raw.nwp), DataError);
  }
  SUBCASE("short PV gap is filled") {
    auto raw = make_raw(7, [](std::size_t) { return 5.0; }, [](std::size_t) { return 1.0; });
    auto& r = raw.pv.records;
    r.erase(r.begin() + 3000, r.begin() + 3000 + 60);
    AlignedDataset d = consolidate(raw.pv, raw.nwp);
    CHECK(d.grid[200][kPvChannel] == doctest::Approx(5.0));
  }
}

TEST_CASE("consolidation conserves energy and builds valid targets") {
  RawSeries raw = synth_generate(8, 21, 5000.0);
  AlignedDataset d = consolidate(raw.pv, raw.nwp);
  const std::size_t offset = static_cast<std::size_t>(d.start - raw.pv.records.front().time);
  for (std::size_t h = 0; h < d.hours(); ++h) {
    double minutes = 0.0;
    for (std::size_t m = 0; m < 60; ++m) minutes += raw.pv.records[offset + h * 60 + m].power_w;
    double grid = 0.0;
    for (std::size_t s = 0; s < 4; ++s) grid += d.grid[h * 4 + s][kPvChannel] * 15.0;
    CHECK(std::abs(grid - minutes) <= 1e-9 * std::max(1.0, minutes));
    const auto p = d.hourly[h].probs();
    CHECK(p.size() == 50);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-12);
    CHECK(std::all_of(p.begin(), p.end(), [](double v) { return v >= 0.0; }));
    // Bin-centre expectation is within half a bin of the hourly mean.
    CHECK(std::abs(expected_value(d.hourly[h]) - minutes / 60.0 / 5000.0) <= 0.01 + 1e-12);
  }
  for (std::size_t c = 0; c < kChannels; ++c) {
    for (std::size_t s = 0; s < d.steps(); s += 37) {
      const double v = d.normalized(s, c);
      CHECK((v >= 0.0 && v <= 1.0));
      CHECK(d.norm.invert(c, v) == doctest::Approx(d.grid[s][c]));
    }
  }
}

TEST_CASE("bin_distribution") {
  const double pmax = 5000.0;
  SUBCASE("all zero") {
    std::vector<double> v(60, 0.0);
    auto d = bin_distribution(v, pmax);
    CHECK(d == BinnedDistribution::point_mass(50, 0));
  }
  SUBCASE("all at rated power land in the last bin") {
    std::vector<double> v(60, pmax);
    CHECK(bin_distribution(v, pmax) == BinnedDistribution::point_mass(50, 49));
  }
  SUBCASE("two clusters") {
    std::vector<double> v(30, 0.01 * pmax);
    v.insert(v.end(), 30, 0.99 * pmax);
    auto d = bin_distribution(v, pmax);
    // Direct histogram: floor(x / width) per value.
    std::vector<double> oracle(50, 0.0);
    for (double x : v) oracle[std::min<std::size_t>(49, static_cast<std::size_t>(x / (pmax / 50)))] += 1.0 / 60.0;
    for (std::size_t k = 0; k < 50; ++k) CHECK(d[k] == doctest::Approx(oracle[k]).epsilon(1e-15));
    CHECK(d[0] == doctest::Approx(0.5));
    CHECK(d[49] == doctest::Approx(0.5));
  }
  SUBCASE("empty input") {
    std::vector<double> v;
    CHECK_THROWS_AS(bin_distribution(v, pmax), ContractError);
  }
  SUBCASE("bin boundary belongs to the upper bin") {
    std::vector<double> v(1, pmax / 50.0);
    CHECK(bin_distribution(v, pmax) == BinnedDistribution::point_mass(50, 1));
  }
}

TEST_CASE("expected_value") {
  CHECK(expected_value(BinnedDistribution::point_mass(50, 0)) == doctest::Approx(0.01));
  CHECK(expected_value(BinnedDistribution::uniform(50)) == doctest::Approx(0.5));
  std::vector<double> p(50, 0.0);
  p[0] = 0.5;
  p[49] = 0.5;
  CHECK(expected_value(BinnedDistribution(p)) == doctest::Approx(0.5 * 0.01 + 0.5 * 0.99));
}

TEST_CASE("invalid distributions are rejected") {
  CHECK_THROWS_AS(BinnedDistribution(std::vector<double>{0.5, 0.6}), ContractError);
  CHECK_THROWS_AS(BinnedDistribution(std::vector<double>{1.5, -0.5}), ContractError);
}

TEST_CASE("sample counts") {
  auto flat = [](std::size_t days) {
    auto raw = make_raw(days, [](std::size_t m) { return static_cast<double>(m % 500); },
                        [](std::size_t h) { return static_cast<double>(h % 7); });
    return consolidate(raw.pv, raw.nwp);
  };
  SampleSpec daily;
  SampleSpec hourly;
  hourly.stride_hours = 1;
  CHECK(make_samples(flat(6), daily).size() == 1);
  AlignedDataset seven = flat(7);
  CHECK(make_samples(seven, daily).size() == 2);
  // Sliding-window enumeration: anchors t with 120 h <= t and t + 24 h <= 168 h.
  std::size_t enumerated = 0;
  for (std::size_t t = 0; t <= 168; ++t) enumerated += (t >= 120 && t + 24 <= 168) ? 1 : 0;
  auto samples = make_samples(seven, hourly);
  CHECK(samples.size() == enumerated);
  CHECK(samples.size() == 25);

  const Sample& s = samples.front();
  CHECK(s.input.shape() == Shape{480, 6});
  CHECK(s.target_pdf.size() == 24);
  CHECK(s.target_e.size() == 24);
  CHECK(s.history.size() == 24);
  CHECK(s.decoder_nwp.shape() == Shape{24, 5});
  CHECK(s.anchor == seven.start + 120 * 60);
  // Targets are the next 24 hours, history the last 24 ending at the anchor hour.
  CHECK(s.target_pdf.front() == seven.hourly[120]);
  CHECK(s.history.back() == seven.hourly[119]);
  CHECK(s.target_e[3] == expected_value(seven.hourly[123]));
  // The input window ends at the anchor.
  CHECK(s.input[479 * 6 + kPvChannel] == seven.normalized(120 * 4 - 1, kPvChannel));
}

TEST_CASE("split") {
  SUBCASE("no overlap possible") {
    std::vector<Minutes> anchors;
    for (int i = 0; i < 40; ++i) anchors.push_back(static_cast<Minutes>(i) * 6 * 1440);
    SplitPlan plan = plan_split(anchors, 120 * 60, 24 * 60, {}, 5);
    CHECK(plan.discarded == 0);
    std::size_t counts[3] = {0, 0, 0};
    for (auto l : plan.labels) ++counts[static_cast<int>(l)];
    CHECK(counts[0] == 28);
    CHECK(counts[1] == 6);
    CHECK(counts[2] == 6);
  }
  SUBCASE("hourly neighbours in different splits") {
    const std::vector<Minutes> anchors = {0, 60};
    SplitFractions half{0.5, 0.5, 0.0};
    bool found = false;
    for (std::uint64_t seed = 0; seed < 20 && !found; ++seed) {
      SplitPlan plan = plan_split(anchors, 120 * 60, 24 * 60, half, seed);
      if (plan.labels[0] == plan.labels[1]) {
        CHECK(plan.discarded == 0);
        continue;
      }
      found = true;
      CHECK(plan.kept[0]);
      CHECK_FALSE(plan.kept[1]);
      CHECK(plan.discarded == 1);
    }
    CHECK(found);
  }
  SUBCASE("determinism and zero cross-split overlap") {
    std::vector<Minutes> anchors;
    for (int i = 0; i < 100; ++i) anchors.push_back(static_cast<Minutes>(i) * 1440);
    const Minutes W = 120 * 60, H = 24 * 60;
    for (std::size_t block : {0u, 168u}) {
      SplitPlan a = plan_split(anchors, W, H, {}, 42, block);
      SplitPlan b = plan_split(anchors, W, H, {}, 42, block);
      CHECK(a.labels == b.labels);
      CHECK(a.kept == b.kept);
      CHECK(a.discarded > 0);
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        for (std::size_t j = 0; j < anchors.size(); ++j) {
          if (i == j || !a.kept[i] || !a.kept[j] || a.labels[i] == a.labels[j]) continue;
          // Span of i against target span of j.
          const bool overlap = anchors[i] - W < anchors[j] + H && anchors[j] < anchors[i] + H;
          CHECK_FALSE(overlap);
        }
      }
    }
  }
  SUBCASE("samples form") {
    RawSeries raw = synth_generate(30, 4, 5000.0);
    SampleSpec spec;
    auto samples = make_samples(consolidate(raw.pv, raw.nwp), spec);
    const std::size_t n = samples.size();
    SplitResult r = split(samples, {}, 9, 0);
    CHECK(r.train.size() + r.val.size() + r.test.size() + r.discarded == n);
    std::set<Minutes> seen;
    for (const auto* part : {&r.train, &r.val, &r.test}) {
      for (const auto& s : *part) CHECK(seen.insert(s.anchor).second);
    }
  }
  SUBCASE("unsorted anchors") {
    const std::vector<Minutes> anchors = {60, 0};
    CHECK_THROWS_AS(plan_split(anchors, 60, 60, {}, 1), ContractError);
  }
}

TEST_CASE("synthetic generator") {
  SUBCASE("fewer than six days") { CHECK_THROWS_AS(synth_generate(5, 1, 5000.0), ConfigError); }
  SUBCASE("night output is exactly zero") {
    for (std::uint64_t seed : {1u, 2u, 99u}) {
      RawSeries raw = synth_generate(10, seed, 5000.0);
      for (const auto& r : raw.pv.records) {
        const Minutes minute_of_day = ((r.time % 1440) + 1440) % 1440;
        // Longest day: sunrise after 03:45, sunset before 20:15 UTC.
        if (minute_of_day < 225 || minute_of_day >= 1215) CHECK(r.power_w == 0.0);
      }
    }
  }
  SUBCASE("same seed gives identical series") {
    RawSeries a = synth_generate(7, 11, 5000.0);
    RawSeries b = synth_generate(7, 11, 5000.0);
    REQUIRE(a.pv.records.size() == b.pv.records.size());
    CHECK(std::equal(a.pv.records.begin(), a.pv.records.end(), b.pv.records.begin(),
                     [](const PvRecord& x, const PvRecord& y) {
                       return x.time == y.time &&
                              std::memcmp(&x.power_w, &y.power_w, sizeof(double)) == 0;
                     }));
    CHECK(std::equal(a.nwp.records.begin(), a.nwp.records.end(), b.nwp.records.begin(),
                     [](const NwpRecord& x, const NwpRecord& y) {
                       return std::memcmp(&x, &y, sizeof(NwpRecord)) == 0;
                     }));
    RawSeries c = synth_generate(7, 12, 5000.0);
    bool differs = false;
    for (std::size_t i = 0; i < a.pv.records.size(); ++i) {
      differs = differs || a.pv.records[i].power_w != c.pv.records[i].power_w;
    }
    CHECK(differs);
  }
  SUBCASE("hourly PV tracks irradiance over 60 days") {
    RawSeries raw = synth_generate(60, 7, 5000.0);
    std::vector<double> pv, ghi;
    for (std::size_t h = 0; h < raw.nwp.records.size(); ++h) {
      double mean = 0.0;
      for (std::size_t m = 0; m < 60; ++m) mean += raw.pv.records[h * 60 + m].power_w;
      pv.push_back(mean / 60.0);
      ghi.push_back(raw.nwp.records[h].ghi_wm2);
    }
    const double n = static_cast<double>(pv.size());
    const double mp = std::accumulate(pv.begin(), pv.end(), 0.0) / n;
    const double mg = std::accumulate(ghi.begin(), ghi.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
      sxy += (pv[i] - mp) * (ghi[i] - mg);
      sxx += (pv[i] - mp) * (pv[i] - mp);
      syy += (ghi[i] - mg) * (ghi[i] - mg);
    }
    const double r = sxy / std::sqrt(sxx * syy);
    MESSAGE("correlation " << r);
    CHECK(r > 0.8);
  }
  SUBCASE("value ranges") {
    RawSeries raw = synth_generate(20, 3, 5000.0);
    for (const auto& r : raw.pv.records) CHECK((r.power_w >= 0.0 && r.power_w <= 5000.0));
    for (const auto& r : raw.nwp.records) {
      CHECK((r.rh_pct >= 0.0 && r.rh_pct <= 100.0));
      CHECK(r.ghi_wm2 >= 0.0);
    }
  }
}
