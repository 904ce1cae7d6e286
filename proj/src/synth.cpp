#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "pvcast/dataset.hpp"
#include "pvcast/errors.hpp"

namespace pvcast {

namespace {

constexpr double kPi = std::numbers::pi;

double round_to(double v, double quantum) { return std::round(v / quantum) * quantum; }

/// Clear-sky output as a fraction of rated power. Solar noon is 12:00 UTC;
/// day length and peak follow a cosine season peaking at day 172.
double clear_sky(Minutes t) {
  const double season = std::cos(2.0 * kPi * (day_of_year(t) - 172.0) / 365.25);
  const double daylight = 12.0 + 4.5 * season;
  const double peak = 0.6 + 0.3 * season;
  const double hour = static_cast<double>(((t % kMinutesPerDay) + kMinutesPerDay) % kMinutesPerDay) / 60.0;
  const double sunrise = 12.0 - daylight / 2.0;
  const double x = (hour - sunrise) / daylight;
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return peak * std::sin(kPi * x);
}

double season_of(Minutes t) {
  return std::cos(2.0 * kPi * (day_of_year(t) - 172.0) / 365.25);
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

RawSeries synth_generate(std::size_t days, std::uint64_t seed, double p_max) {
  if (days < 6) throw ConfigError("synthetic data needs at least 6 days, got " + std::to_string(days));
  if (!(p_max > 0.0)) throw ConfigError("p_max must be positive");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t hours = days * 24;

  // Weather regime: a slow daily AR(1) plus a faster hourly AR(1), squashed into
  // a cloudiness factor in [0.1, 1] (1 = clear sky). The slow part runs one day
  // past the end because pressure leads it by 12 h.
  std::vector<double> daily(days + 2);
  daily[0] = normal(rng);
  for (std::size_t d = 1; d < daily.size(); ++d) {
    daily[d] = 0.3 * daily[d - 1] + std::sqrt(1.0 - 0.3 * 0.3) * normal(rng);
  }
  std::vector<double> drift(hours + 25);
  for (std::size_t h = 0; h < drift.size(); ++h) {
    // Knots at solar noon, so each day's peak carries its own regime value.
    const double day_pos = std::max(0.0, static_cast<double>(h) / 24.0 - 0.5);
    const auto d0 = std::min(static_cast<std::size_t>(day_pos), days);
    const double w = day_pos - static_cast<double>(d0);
    drift[h] = daily[d0] + w * (daily[d0 + 1] - daily[d0]);
  }
  std::vector<double> cloud(hours + 1);
  double fast = normal(rng);
  for (std::size_t h = 0; h <= hours; ++h) {
    fast = 0.85 * fast + std::sqrt(1.0 - 0.85 * 0.85) * normal(rng);
    cloud[h] = 0.1 + 0.9 * logistic(0.8 + 1.8 * drift[h] + 0.6 * fast);
  }

  RawSeries out;
  out.pv.p_max = p_max;
  out.pv.records.reserve(hours * 60);
  double flicker = 0.0;
  for (std::size_t m = 0; m < hours * 60; ++m) {
    const Minutes t = kSyntheticStart + static_cast<Minutes>(m);
    const std::size_t h = m / 60;
    const double frac = static_cast<double>(m % 60) / 60.0;
    const double c = cloud[h] + frac * (cloud[h + 1] - cloud[h]);
    // Broken cloud (intermediate cover) makes minute-scale output flicker.
    flicker = 0.8 * flicker + 0.6 * normal(rng);
    const double noise = normal(rng);
    const double env = clear_sky(t);
    double w = 0.0;
    if (env > 0.0) {
      const double factor = std::clamp(c + 1.6 * c * (1.0 - c) * flicker, 0.1, 1.0);
      w = p_max * (env * factor + 0.003 * noise);
      w = round_to(std::clamp(w, 0.0, p_max), 0.1);
    }
    out.pv.records.push_back({t, w});
  }

  out.nwp.records.reserve(hours);
  double pressure_noise = 0.0;
  for (std::size_t h = 0; h < hours; ++h) {
    const Minutes t = kSyntheticStart + static_cast<Minutes>(h) * kMinutesPerHour;
    const double env = clear_sky(t + 30);
    const double season = season_of(t);
    const double c = cloud[h];
    pressure_noise = 0.9 * pressure_noise + 0.1 * normal(rng);
    NwpRecord r{};
    r.time = t;
    r.ghi_wm2 = round_to(std::max(0.0, 1100.0 * env * c + (env > 0.0 ? 15.0 * normal(rng) : 0.0)), 0.01);
    r.temp_c = round_to(4.0 + 13.0 * season + 9.0 * env * c - 2.5 * (1.0 - c) + 1.0 * normal(rng), 0.01);
    r.pressure_kpa = round_to(101.3 + 0.6 * drift[h + 12] + pressure_noise, 0.01);
    r.wind_ms = round_to(std::max(0.0, 2.5 + 3.0 * (1.0 - c) + 0.8 * normal(rng)), 0.01);
    r.rh_pct = round_to(std::clamp(60.0 + 30.0 * (0.7 - c) - 15.0 * env + 4.0 * normal(rng), 0.0, 100.0), 0.01);
    out.nwp.records.push_back(r);
  }
  return out;
}

}  // namespace pvcast
