#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pvcast/distribution.hpp"
#include "pvcast/keyvalue.hpp"
#include "pvcast/tensor.hpp"
#include "pvcast/timeutil.hpp"

namespace pvcast {

// --------------------------------------------------------------------------
// Raw streams

struct PvRecord {
  Minutes time;
  double power_w;
};

/// One-minute PV power readings, strictly increasing in time.
struct RawPvSeries {
  std::vector<PvRecord> records;
  double p_max = 0.0;         // rated power, watts
  std::size_t clipped = 0;    // readings clipped into [0, p_max] on ingest
};

struct NwpRecord {
  Minutes time;
  double temp_c;
  double pressure_kpa;
  double ghi_wm2;
  double wind_ms;
  double rh_pct;
};

/// Hourly numerical weather prediction, strictly increasing in time.
struct RawNwpSeries {
  std::vector<NwpRecord> records;
  std::size_t clipped = 0;
};

inline constexpr std::string_view kPvHeader = "timestamp,power_w";
inline constexpr std::string_view kNwpHeader = "timestamp,temp_c,pressure_kpa,ghi_wm2,wind_ms,rh_pct";

/// Readings above p_max by at most this fraction are clipped, larger ones rejected.
inline constexpr double kPvOvershootTolerance = 0.05;

RawPvSeries read_pv_csv(const std::filesystem::path& path, double p_max);
RawNwpSeries read_nwp_csv(const std::filesystem::path& path);

struct RawSeries {
  RawPvSeries pv;
  RawNwpSeries nwp;
};

/// Parses and validates both CSV files. Malformed rows raise ParseError with the
/// line number; time inversions and gross overshoot raise DataError.
RawSeries ingest_csv(const std::filesystem::path& pv_path, const std::filesystem::path& nwp_path,
                     double p_max);

void write_pv_csv(const std::filesystem::path& path, const RawPvSeries& pv);
void write_nwp_csv(const std::filesystem::path& path, const RawNwpSeries& nwp);

// --------------------------------------------------------------------------
// Aligned 15-minute grid

inline constexpr std::size_t kChannels = 6;
inline constexpr std::size_t kNwpChannels = 5;
inline constexpr std::size_t kPvChannel = 5;
inline constexpr Minutes kStepMinutes = 15;
inline constexpr std::size_t kStepsPerHour = 4;
inline constexpr std::array<std::string_view, kChannels> kChannelNames = {
    "temp_c", "pressure_kpa", "ghi_wm2", "wind_ms", "rh_pct", "pv_w"};

/// Per-channel min-max scaling to [0, 1].
struct Normalization {
  std::array<double, kChannels> min{};
  std::array<double, kChannels> max{};

  double apply(std::size_t channel, double v) const;
  double invert(std::size_t channel, double v) const;

  void store(KeyValues& kv, const std::string& prefix = "norm.") const;
  static Normalization load(const KeyValues& kv, const std::string& prefix = "norm.");
};

using GridRow = std::array<double, kChannels>;

struct AlignedDataset {
  Minutes start = 0;                       // hour-aligned
  std::vector<GridRow> grid;               // physical units, one row per 15 minutes
  std::vector<BinnedDistribution> hourly;  // target distribution of each hour from `start`
  Normalization norm;
  double p_max = 0.0;

  std::size_t steps() const { return grid.size(); }
  std::size_t hours() const { return hourly.size(); }
  Minutes end() const { return start + static_cast<Minutes>(grid.size()) * kStepMinutes; }
  double normalized(std::size_t step, std::size_t channel) const {
    return norm.apply(channel, grid[step][channel]);
  }
};

inline constexpr Minutes kMinCoverageMinutes = 6 * kMinutesPerDay;
inline constexpr Minutes kMaxGapMinutes = 120;

/// Resamples onto a common 15-minute grid: NWP linearly interpolated, PV averaged
/// over each interval, hourly targets binned from the one-minute readings, and
/// min-max constants fitted over the whole grid.
AlignedDataset consolidate(const RawPvSeries& pv, const RawNwpSeries& nwp,
                           std::size_t bins = kDefaultBins);

/// Min-max constants over the union of the given [begin, end) step ranges.
Normalization fit_normalization(const AlignedDataset& data,
                                std::span<const std::pair<std::size_t, std::size_t>> ranges);

// --------------------------------------------------------------------------
// Samples

struct SampleSpec {
  std::size_t window_hours = 120;  // input window ending at the anchor
  std::size_t horizon_hours = 24;
  std::size_t stride_hours = 24;
};

struct Sample {
  Minutes anchor = 0;                            // t0, hour-aligned
  Tensor input;                                  // [window steps x 6], normalized
  std::vector<BinnedDistribution> history;       // P(-23..0), oldest first
  std::vector<BinnedDistribution> target_pdf;    // P(1..horizon); empty when unknown
  std::vector<double> target_e;                  // expected values of target_pdf
  Tensor decoder_nwp;                            // [horizon x 5], normalized hour means

  bool has_targets() const { return !target_pdf.empty(); }
  std::size_t window_steps() const { return input.dim(0); }
};

/// Anchors whose input window and horizon both fit in the data.
std::vector<Minutes> sample_anchors(const AlignedDataset& data, const SampleSpec& spec);
/// Builds the sample at `anchor`. Targets are omitted when `with_targets` is false,
/// which only requires the history window. Throws DataError when data is missing.
Sample make_sample(const AlignedDataset& data, Minutes anchor, const SampleSpec& spec,
                   bool with_targets = true);
std::vector<Sample> make_samples(const AlignedDataset& data, const SampleSpec& spec);

// --------------------------------------------------------------------------
// Splits

enum class SplitLabel { train, val, test };

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct SplitPlan {
  std::vector<SplitLabel> labels;  // per anchor, before discards
  std::vector<bool> kept;
  std::size_t discarded = 0;
};

/// Seeded random assignment followed by overlap discard. Anchors are grouped into
/// blocks of `block_hours` of anchor time (0: every anchor is its own block) and
/// whole blocks are shuffled into the splits at the given ratios. A sample whose
/// [t0 - window, t0 + horizon) span overlaps the target span of an earlier kept
/// sample from another split (or vice versa) is discarded; earlier anchors win.
SplitPlan plan_split(std::span<const Minutes> anchors, Minutes window_minutes,
                     Minutes horizon_minutes, const SplitFractions& fractions, std::uint64_t seed,
                     std::size_t block_hours = 0);

struct SplitResult {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
  std::size_t discarded = 0;
};

SplitResult split(std::vector<Sample> samples, const SplitFractions& fractions,
                  std::uint64_t seed, std::size_t block_hours = 0);

// --------------------------------------------------------------------------
// Synthetic data

inline constexpr Minutes kSyntheticStart = 16801LL * kMinutesPerDay;  // 2016-01-01

/// Seeded stand-in for a residential PV site with co-located hourly weather.
/// Throws ConfigError for fewer than six days.
RawSeries synth_generate(std::size_t days, std::uint64_t seed, double p_max);

}  // namespace pvcast
