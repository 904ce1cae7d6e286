#include "pvcast/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

#include "pvcast/errors.hpp"

namespace pvcast {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
}

double parse_field(std::string_view text, std::size_t line, std::string_view column) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ParseError("bad value '" + std::string(text) + "' in column " + std::string(column),
                     line);
  }
  return v;
}

Minutes parse_time_field(std::string_view text, std::size_t line) {
  try {
    return parse_timestamp(text);
  } catch (const ParseError& e) {
    throw ParseError(e.what(), line);
  }
}

/// Reads a CSV with the exact header; calls `row(fields, line_no)` per data row.
template <typename RowFn>
void read_csv(const std::filesystem::path& path, std::string_view header, std::size_t columns,
              RowFn&& row) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!seen_header) {
      if (line != header) {
        throw ParseError(path.filename().string() + ": expected header '" + std::string(header) +
                             "', got '" + line + "'",
                         line_no);
      }
      seen_header = true;
      continue;
    }
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != columns) {
      throw ParseError(path.filename().string() + ": expected " + std::to_string(columns) +
                           " fields, got " + std::to_string(fields.size()),
                       line_no);
    }
    row(fields, line_no);
  }
  if (!seen_header) throw ParseError(path.filename().string() + ": empty file", 1);
}

void check_increasing(Minutes prev, Minutes now, std::size_t line, const std::string& what) {
  if (now <= prev) {
    throw DataError(what + ": timestamps not strictly increasing at line " +
                    std::to_string(line) + " (" + format_timestamp(now) + " after " +
                    format_timestamp(prev) + ")");
  }
}

}  // namespace

RawPvSeries read_pv_csv(const std::filesystem::path& path, double p_max) {
  if (!(p_max > 0.0)) throw ConfigError("p_max must be positive");
  RawPvSeries pv;
  pv.p_max = p_max;
  const double hard_limit = p_max * (1.0 + kPvOvershootTolerance);
  read_csv(path, kPvHeader, 2, [&](const std::vector<std::string_view>& f, std::size_t line) {
    const Minutes t = parse_time_field(f[0], line);
    double w = parse_field(f[1], line, "power_w");
    if (!pv.records.empty()) check_increasing(pv.records.back().time, t, line, "PV");
    if (w > hard_limit) {
      throw DataError("PV reading " + std::string(f[1]) + " W at line " +
                      std::to_string(line) + " exceeds p_max by more than 5%");
    }
    if (w > p_max || w < 0.0) {
      w = std::clamp(w, 0.0, p_max);
      ++pv.clipped;
    }
    pv.records.push_back({t, w});
  });
  return pv;
}

RawNwpSeries read_nwp_csv(const std::filesystem::path& path) {
  RawNwpSeries nwp;
  read_csv(path, kNwpHeader, 6, [&](const std::vector<std::string_view>& f, std::size_t line) {
    NwpRecord r{parse_time_field(f[0], line),   parse_field(f[1], line, "temp_c"),
                parse_field(f[2], line, "pressure_kpa"), parse_field(f[3], line, "ghi_wm2"),
                parse_field(f[4], line, "wind_ms"), parse_field(f[5], line, "rh_pct")};
    if (!nwp.records.empty()) check_increasing(nwp.records.back().time, r.time, line, "NWP");
    if (r.ghi_wm2 < 0.0 || r.rh_pct < 0.0 || r.rh_pct > 100.0) {
      r.ghi_wm2 = std::max(r.ghi_wm2, 0.0);
      r.rh_pct = std::clamp(r.rh_pct, 0.0, 100.0);
      ++nwp.clipped;
    }
    nwp.records.push_back(r);
  });
  return nwp;
}

RawSeries ingest_csv(const std::filesystem::path& pv_path, const std::filesystem::path& nwp_path,
                     double p_max) {
  RawSeries raw{read_pv_csv(pv_path, p_max), read_nwp_csv(nwp_path)};
  if (raw.pv.clipped > 0) {
    std::cerr << "warning: clipped " << raw.pv.clipped << " PV readings into [0, p_max]\n";
  }
  if (raw.nwp.clipped > 0) {
    std::cerr << "warning: clipped " << raw.nwp.clipped << " NWP rows into physical range\n";
  }
  return raw;
}

void write_pv_csv(const std::filesystem::path& path, const RawPvSeries& pv) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << kPvHeader << '\n';
  for (const auto& r : pv.records) {
    out << format_timestamp(r.time) << ',' << format_double(r.power_w) << '\n';
  }
}

void write_nwp_csv(const std::filesystem::path& path, const RawNwpSeries& nwp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << kNwpHeader << '\n';
  for (const auto& r : nwp.records) {
    out << format_timestamp(r.time) << ',' << format_double(r.temp_c) << ','
        << format_double(r.pressure_kpa) << ',' << format_double(r.ghi_wm2) << ','
        << format_double(r.wind_ms) << ',' << format_double(r.rh_pct) << '\n';
  }
}

// --------------------------------------------------------------------------

double Normalization::apply(std::size_t c, double v) const {
  const double range = max[c] - min[c];
  return range > 0.0 ? (v - min[c]) / range : 0.0;
}

double Normalization::invert(std::size_t c, double v) const {
  return min[c] + v * (max[c] - min[c]);
}

void Normalization::store(KeyValues& kv, const std::string& prefix) const {
  for (std::size_t c = 0; c < kChannels; ++c) {
    const std::string name(kChannelNames[c]);
    kv.set(prefix + name + ".min", min[c]);
    kv.set(prefix + name + ".max", max[c]);
  }
}

Normalization Normalization::load(const KeyValues& kv, const std::string& prefix) {
  Normalization n;
  for (std::size_t c = 0; c < kChannels; ++c) {
    const std::string name(kChannelNames[c]);
    n.min[c] = kv.get_double(prefix + name + ".min");
    n.max[c] = kv.get_double(prefix + name + ".max");
  }
  return n;
}

namespace {

Minutes floor_to(Minutes t, Minutes unit) {
  Minutes q = t / unit;
  if (t % unit != 0 && t < 0) --q;
  return q * unit;
}

Minutes ceil_to(Minutes t, Minutes unit) { return -floor_to(-t, unit); }

}  // namespace

AlignedDataset consolidate(const RawPvSeries& pv, const RawNwpSeries& nwp, std::size_t bins) {
  if (pv.records.empty() || nwp.records.empty()) throw DataError("empty PV or NWP series");
  if (!(pv.p_max > 0.0)) throw ConfigError("PV series has no rated power");
  const Minutes start = ceil_to(std::max(pv.records.front().time, nwp.records.front().time),
                                kMinutesPerHour);
  const Minutes end =
      floor_to(std::min(pv.records.back().time + 1, nwp.records.back().time + kMinutesPerHour),
               kMinutesPerHour);
  if (end - start < kMinCoverageMinutes) {
    throw DataError("PV and NWP overlap for " + std::to_string(std::max<Minutes>(end - start, 0)) +
                    " minutes; at least 6 days are required");
  }
  const auto minutes = static_cast<std::size_t>(end - start);

  // One-minute PV on [start, end) with short gaps filled linearly.
  std::vector<double> power(minutes, std::numeric_limits<double>::quiet_NaN());
  for (const auto& r : pv.records) {
    if (r.time >= start && r.time < end) power[static_cast<std::size_t>(r.time - start)] = r.power_w;
  }
  // Values just outside the grid anchor interpolation at its edges.
  auto neighbour = [&](bool before) -> std::optional<PvRecord> {
    if (before) {
      auto it = std::lower_bound(pv.records.begin(), pv.records.end(), start,
                                 [](const PvRecord& r, Minutes t) { return r.time < t; });
      if (it == pv.records.begin()) return std::nullopt;
      return *std::prev(it);
    }
    auto it = std::lower_bound(pv.records.begin(), pv.records.end(), end,
                               [](const PvRecord& r, Minutes t) { return r.time < t; });
    if (it == pv.records.end()) return std::nullopt;
    return *it;
  };
  const auto before = neighbour(true);
  const auto after = neighbour(false);
  std::size_t i = 0;
  while (i < minutes) {
    if (!std::isnan(power[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < minutes && std::isnan(power[j])) ++j;
    // Missing run [i, j). Left anchor at i-1 (or before the grid), right at j.
    Minutes lt;
    double lv;
    if (i > 0) {
      lt = start + static_cast<Minutes>(i) - 1;
      lv = power[i - 1];
    } else if (before) {
      lt = before->time;
      lv = before->power_w;
    } else {
      throw DataError("PV data missing at grid start " + format_timestamp(start));
    }
    Minutes rt;
    double rv;
    if (j < minutes) {
      rt = start + static_cast<Minutes>(j);
      rv = power[j];
    } else if (after) {
      rt = after->time;
      rv = after->power_w;
    } else {
      throw DataError("PV data missing at grid end " + format_timestamp(end));
    }
    if (rt - lt - 1 > kMaxGapMinutes) {
      throw DataError("PV gap of " + std::to_string(rt - lt - 1) + " minutes after " +
                      format_timestamp(lt) + " exceeds 2 hours");
    }
    for (std::size_t k = i; k < j; ++k) {
      const double w = static_cast<double>(start + static_cast<Minutes>(k) - lt) /
                       static_cast<double>(rt - lt);
      power[k] = lv + w * (rv - lv);
    }
    i = j;
  }

  for (std::size_t k = 1; k < nwp.records.size(); ++k) {
    const Minutes gap = nwp.records[k].time - nwp.records[k - 1].time - kMinutesPerHour;
    if (gap > kMaxGapMinutes && nwp.records[k].time > start &&
        nwp.records[k - 1].time < end) {
      throw DataError("NWP gap of " + std::to_string(gap) + " minutes after " +
                      format_timestamp(nwp.records[k - 1].time) + " exceeds 2 hours");
    }
  }

  AlignedDataset data;
  data.start = start;
  data.p_max = pv.p_max;
  const std::size_t steps = minutes / static_cast<std::size_t>(kStepMinutes);
  data.grid.resize(steps);
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    const Minutes t = start + static_cast<Minutes>(s) * kStepMinutes;
    while (cursor + 1 < nwp.records.size() && nwp.records[cursor + 1].time <= t) ++cursor;
    const NwpRecord& a = nwp.records[cursor];
    const NwpRecord& b = nwp.records[std::min(cursor + 1, nwp.records.size() - 1)];
    double w = 0.0;
    if (b.time > a.time && t > a.time) {
      w = std::min(1.0, static_cast<double>(t - a.time) / static_cast<double>(b.time - a.time));
    }
    auto lerp = [w](double x, double y) { return x + w * (y - x); };
    GridRow& row = data.grid[s];
    row[0] = lerp(a.temp_c, b.temp_c);
    row[1] = lerp(a.pressure_kpa, b.pressure_kpa);
    row[2] = lerp(a.ghi_wm2, b.ghi_wm2);
    row[3] = lerp(a.wind_ms, b.wind_ms);
    row[4] = lerp(a.rh_pct, b.rh_pct);
    double total = 0.0;
    for (std::size_t m = 0; m < static_cast<std::size_t>(kStepMinutes); ++m) {
      total += power[s * static_cast<std::size_t>(kStepMinutes) + m];
    }
    row[kPvChannel] = total / static_cast<double>(kStepMinutes);
  }

  const std::size_t hours = minutes / static_cast<std::size_t>(kMinutesPerHour);
  data.hourly.reserve(hours);
  for (std::size_t h = 0; h < hours; ++h) {
    data.hourly.push_back(bin_distribution(
        std::span<const double>(power).subspan(h * 60, 60), pv.p_max, bins));
  }

  const std::pair<std::size_t, std::size_t> all{0, steps};
  data.norm = fit_normalization(data, std::span(&all, 1));
  return data;
}

Normalization fit_normalization(const AlignedDataset& data,
                                std::span<const std::pair<std::size_t, std::size_t>> ranges) {
  Normalization n;
  n.min.fill(std::numeric_limits<double>::infinity());
  n.max.fill(-std::numeric_limits<double>::infinity());
  for (auto [b, e] : ranges) {
    for (std::size_t s = b; s < std::min(e, data.steps()); ++s) {
      for (std::size_t c = 0; c < kChannels; ++c) {
        n.min[c] = std::min(n.min[c], data.grid[s][c]);
        n.max[c] = std::max(n.max[c], data.grid[s][c]);
      }
    }
  }
  for (std::size_t c = 0; c < kChannels; ++c) {
    if (!std::isfinite(n.min[c])) throw ContractError("normalization fitted on no data");
  }
  return n;
}

// --------------------------------------------------------------------------

namespace {

void check_spec(const SampleSpec& spec) {
  if (spec.window_hours < 24) throw ConfigError("window must cover at least 24 hours");
  if (spec.horizon_hours == 0 || spec.stride_hours == 0) {
    throw ConfigError("horizon and stride must be positive");
  }
}

}  // namespace

std::vector<Minutes> sample_anchors(const AlignedDataset& data, const SampleSpec& spec) {
  check_spec(spec);
  std::vector<Minutes> anchors;
  const Minutes window = static_cast<Minutes>(spec.window_hours) * kMinutesPerHour;
  const Minutes horizon = static_cast<Minutes>(spec.horizon_hours) * kMinutesPerHour;
  const Minutes stride = static_cast<Minutes>(spec.stride_hours) * kMinutesPerHour;
  for (Minutes a = data.start + window; a + horizon <= data.end(); a += stride) {
    anchors.push_back(a);
  }
  return anchors;
}

Sample make_sample(const AlignedDataset& data, Minutes anchor, const SampleSpec& spec,
                   bool with_targets) {
  check_spec(spec);
  if ((anchor - data.start) % kMinutesPerHour != 0) {
    throw DataError("anchor " + format_timestamp(anchor) + " is not on the hour");
  }
  const Minutes window = static_cast<Minutes>(spec.window_hours) * kMinutesPerHour;
  const Minutes horizon = static_cast<Minutes>(spec.horizon_hours) * kMinutesPerHour;
  if (anchor - window < data.start || anchor > data.end()) {
    throw DataError("insufficient history for anchor " + format_timestamp(anchor));
  }
  if (with_targets && anchor + horizon > data.end()) {
    throw DataError("no targets after anchor " + format_timestamp(anchor));
  }
  const auto a_step = static_cast<std::size_t>((anchor - data.start) / kStepMinutes);
  const auto a_hour = static_cast<std::size_t>((anchor - data.start) / kMinutesPerHour);
  const std::size_t w_steps = spec.window_hours * kStepsPerHour;

  Sample s;
  s.anchor = anchor;
  s.input = Tensor({w_steps, kChannels});
  for (std::size_t i = 0; i < w_steps; ++i) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      s.input.at({i, c}) = data.normalized(a_step - w_steps + i, c);
    }
  }
  s.history.assign(data.hourly.begin() + static_cast<std::ptrdiff_t>(a_hour - 24),
                   data.hourly.begin() + static_cast<std::ptrdiff_t>(a_hour));
  s.decoder_nwp = Tensor({spec.horizon_hours, kNwpChannels});
  // Weather forecasts for the horizon are used whenever the data reaches that far.
  const bool horizon_known = anchor + horizon <= data.end();
  for (std::size_t t = 0; t < spec.horizon_hours && horizon_known; ++t) {
    if (with_targets) {
      const BinnedDistribution& d = data.hourly[a_hour + t];
      s.target_pdf.push_back(d);
      s.target_e.push_back(expected_value(d));
    }
    for (std::size_t c = 0; c < kNwpChannels; ++c) {
      double m = 0.0;
      for (std::size_t q = 0; q < kStepsPerHour; ++q) {
        m += data.normalized(a_step + t * kStepsPerHour + q, c);
      }
      s.decoder_nwp.at({t, c}) = m / static_cast<double>(kStepsPerHour);
    }
  }
  return s;
}

std::vector<Sample> make_samples(const AlignedDataset& data, const SampleSpec& spec) {
  std::vector<Sample> out;
  for (Minutes a : sample_anchors(data, spec)) out.push_back(make_sample(data, a, spec));
  return out;
}

// --------------------------------------------------------------------------

SplitPlan plan_split(std::span<const Minutes> anchors, Minutes window_minutes,
                     Minutes horizon_minutes, const SplitFractions& fractions, std::uint64_t seed,
                     std::size_t block_hours) {
  SplitPlan plan;
  const std::size_t n = anchors.size();
  if (n == 0) return plan;
  if (!std::is_sorted(anchors.begin(), anchors.end())) {
    throw ContractError("split expects samples in ascending anchor order");
  }
  const double total = fractions.train + fractions.val + fractions.test;
  if (!(total > 0.0) || fractions.train < 0.0 || fractions.val < 0.0 || fractions.test < 0.0) {
    throw ConfigError("split fractions must be non-negative with a positive sum");
  }

  std::vector<std::size_t> block_of(n);
  std::size_t blocks = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (block_hours == 0) {
      block_of[i] = i;
    } else {
      block_of[i] = static_cast<std::size_t>((anchors[i] - anchors[0]) /
                                             (static_cast<Minutes>(block_hours) * 60));
    }
    blocks = std::max(blocks, block_of[i] + 1);
  }
  std::vector<std::size_t> order(blocks);
  for (std::size_t b = 0; b < blocks; ++b) order[b] = b;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train =
      static_cast<std::size_t>(std::llround(static_cast<double>(blocks) * fractions.train / total));
  const auto n_val =
      static_cast<std::size_t>(std::llround(static_cast<double>(blocks) * fractions.val / total));
  std::vector<SplitLabel> block_label(blocks, SplitLabel::test);
  for (std::size_t r = 0; r < blocks; ++r) {
    if (r < n_train) {
      block_label[order[r]] = SplitLabel::train;
    } else if (r < n_train + n_val) {
      block_label[order[r]] = SplitLabel::val;
    }
  }

  plan.labels.resize(n);
  plan.kept.assign(n, false);
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i) {
    plan.labels[i] = block_label[block_of[i]];
    const Minutes ai = anchors[i];
    bool conflict = false;
    for (auto k = kept.rbegin(); k != kept.rend(); ++k) {
      const Minutes ak = anchors[*k];
      if (ai - ak >= window_minutes + horizon_minutes) break;
      if (plan.labels[*k] == plan.labels[i]) continue;
      // span(x) = [a - window, a + horizon), target(x) = [a, a + horizon)
      const bool i_hits_k = ai - window_minutes < ak + horizon_minutes && ak < ai + horizon_minutes;
      const bool k_hits_i = ak - window_minutes < ai + horizon_minutes && ai < ak + horizon_minutes;
      if (i_hits_k || k_hits_i) {
        conflict = true;
        break;
      }
    }
    if (conflict) {
      ++plan.discarded;
    } else {
      plan.kept[i] = true;
      kept.push_back(i);
    }
  }
  return plan;
}

SplitResult split(std::vector<Sample> samples, const SplitFractions& fractions,
                  std::uint64_t seed, std::size_t block_hours) {
  if (samples.empty()) throw ContractError("split needs at least one sample");
  std::vector<Minutes> anchors;
  anchors.reserve(samples.size());
  for (const auto& s : samples) anchors.push_back(s.anchor);
  const Minutes window = static_cast<Minutes>(samples.front().window_steps()) * kStepMinutes;
  const Minutes horizon = static_cast<Minutes>(samples.front().target_pdf.size()) * kMinutesPerHour;
  const SplitPlan plan = plan_split(anchors, window, horizon, fractions, seed, block_hours);
  SplitResult out;
  out.discarded = plan.discarded;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!plan.kept[i]) continue;
    switch (plan.labels[i]) {
      case SplitLabel::train: out.train.push_back(std::move(samples[i])); break;
      case SplitLabel::val: out.val.push_back(std::move(samples[i])); break;
      case SplitLabel::test: out.test.push_back(std::move(samples[i])); break;
    }
  }
  return out;
}

}  // namespace pvcast
