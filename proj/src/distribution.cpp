#include "pvcast/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pvcast/errors.hpp"

namespace pvcast {

BinnedDistribution::BinnedDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw ContractError("distribution needs at least one bin");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0)) throw ContractError("distribution has a negative or NaN entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ContractError("distribution sums to " + std::to_string(total) + ", not 1");
  }
}

BinnedDistribution BinnedDistribution::point_mass(std::size_t bins, std::size_t bin) {
  std::vector<double> p(bins, 0.0);
  p.at(bin) = 1.0;
  return BinnedDistribution(std::move(p));
}

BinnedDistribution BinnedDistribution::uniform(std::size_t bins) {
  return BinnedDistribution(std::vector<double>(bins, 1.0 / static_cast<double>(bins)));
}

std::vector<double> BinnedDistribution::cdf() const {
  std::vector<double> c(probs_.size());
  double run = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    run += probs_[i];
    c[i] = run;
  }
  return c;
}

BinnedDistribution bin_distribution(std::span<const double> values, double p_max,
                                    std::size_t bins) {
  if (values.empty()) throw ContractError("bin_distribution needs at least one value");
  if (!(p_max > 0.0)) throw ContractError("bin_distribution needs p_max > 0");
  if (bins == 0) throw ContractError("bin_distribution needs at least one bin");
  std::vector<double> counts(bins, 0.0);
  for (double v : values) {
    const double x = std::clamp(v, 0.0, p_max);
    auto k = static_cast<std::size_t>(std::floor(x / p_max * static_cast<double>(bins)));
    counts[std::min(k, bins - 1)] += 1.0;
  }
  const double n = static_cast<double>(values.size());
  for (auto& c : counts) c /= n;
  return BinnedDistribution(std::move(counts));
}

double expected_value(const BinnedDistribution& d) {
  const auto n = static_cast<double>(d.bins());
  double e = 0.0;
  for (std::size_t i = 0; i < d.bins(); ++i) e += d[i] * (static_cast<double>(i) + 0.5) / n;
  return e;
}

double quantile(const BinnedDistribution& d, double q) {
  q = std::clamp(q, 0.0, 1.0);
  const auto n = static_cast<double>(d.bins());
  double below = 0.0;
  for (std::size_t i = 0; i < d.bins(); ++i) {
    const double p = d[i];
    if (p > 0.0 && below + p >= q) {
      return (static_cast<double>(i) + (q - below) / p) / n;
    }
    below += p;
  }
  return 1.0;
}

}  // namespace pvcast
