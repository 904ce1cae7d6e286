#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pvcast {

inline constexpr std::size_t kDefaultBins = 50;

/// Histogram over [0, P_max] with uniform bins. Entries are non-negative and
/// sum to one (checked to 1e-9 on construction).
class BinnedDistribution {
 public:
  explicit BinnedDistribution(std::vector<double> probs);

  static BinnedDistribution point_mass(std::size_t bins, std::size_t bin);
  static BinnedDistribution uniform(std::size_t bins);

  std::size_t bins() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](std::size_t i) const { return probs_[i]; }

  /// Running sums; the last entry is the total mass.
  std::vector<double> cdf() const;

  friend bool operator==(const BinnedDistribution&, const BinnedDistribution&) = default;

 private:
  std::vector<double> probs_;
};

/// Histogram of `values` (clipped into [0, p_max] first). Bin k covers
/// [k, k+1) * p_max / bins; the last bin is closed above.
BinnedDistribution bin_distribution(std::span<const double> values, double p_max,
                                    std::size_t bins = kDefaultBins);

/// Bin-centre expectation sum_i p_i (i + 0.5) / bins, in [0, 1].
double expected_value(const BinnedDistribution& d);

/// Inverse cdf with linear interpolation inside the bin, normalized to [0, 1].
double quantile(const BinnedDistribution& d, double q);

}  // namespace pvcast
