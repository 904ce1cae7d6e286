#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pvcast/distribution.hpp"
#include "pvcast/model.hpp"

namespace pvcast {

/// (1/(T*p_max)) * sum |F - P|.
double nme(std::span<const double> f, std::span<const double> p, double p_max);

/// Printed form: (1/(T*p_max)) * sqrt(sum (F - P)^2).
/// Conventional form: sqrt(sum (F - P)^2 / T) / p_max.
double nrmse(std::span<const double> f, std::span<const double> p, double p_max,
             bool conventional = false);

/// (1/(bins*T)) * sum_t sum_i (Fcdf - Pcdf)^2.
double crps(std::span<const BinnedDistribution> f, std::span<const BinnedDistribution> p);

/// 1 - model / persistence.
double skill(double model_err, double persistence_err);

struct MetricOptions {
  bool conventional_nrmse = false;
};

/// Per-window nRMSE of expected values, averaged over windows. Forecast and
/// target expected values are fractions of p_max.
double mean_nrmse(std::span<const Forecast> forecasts, std::span<const Sample> samples,
                  const MetricOptions& options = {});

struct EvalRow {
  std::string model;
  std::string split;
  bool reference = false;  // the persistence row
  double nrmse = 0.0;
  double nme = 0.0;
  std::optional<double> crps;      // pdf models only
  std::optional<double> s_nrmse;   // absent for the reference row
  std::optional<double> s_crps;    // pdf, non-reference rows
  std::size_t n_samples = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  const EvalRow* find(const std::string& model, const std::string& split) const;
  void append(const EvalReport& other);
  /// Columns model,split,nrmse,nme,crps,s_nrmse,s_crps,n_samples; blank
  /// skills on the reference row and "-" for undefined CRPS entries.
  std::string csv() const;
  /// Aligned table with one line per model and val/test column pairs.
  std::string text() const;
};

struct LabeledForecasts {
  std::string label;
  TargetMode mode = TargetMode::pdf;
  bool reference = false;
  std::vector<Forecast> forecasts;
};

/// Scores every model on `samples` (metrics per window, then mean) and derives
/// skills against the reference entry. Throws ContractError without one.
EvalReport evaluate_forecasts(std::span<const LabeledForecasts> models,
                              std::span<const Sample> samples, double p_max,
                              const std::string& split, const MetricOptions& options = {});

/// Runs each model self-recurrently and scores it. The persistence family
/// serves as the reference.
EvalReport evaluate(std::span<Model* const> models, std::span<const Sample> samples, double p_max,
                    const std::string& split, const MetricOptions& options = {});

}  // namespace pvcast
