#include "pvcast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "pvcast/errors.hpp"

namespace pvcast {

namespace {

void check_pair(std::span<const double> f, std::span<const double> p, double p_max) {
  if (!(p_max > 0.0)) throw ContractError("p_max must be positive");
  if (f.size() != p.size()) throw ContractError("forecast and truth differ in length");
  if (f.empty()) throw ContractError("empty forecast");
}

}  // namespace

double nme(std::span<const double> f, std::span<const double> p, double p_max) {
  check_pair(f, p, p_max);
  double s = 0.0;
  for (std::size_t t = 0; t < f.size(); ++t) s += std::abs(f[t] - p[t]);
  return s / (static_cast<double>(f.size()) * p_max);
}

double nrmse(std::span<const double> f, std::span<const double> p, double p_max, bool conventional) {
  check_pair(f, p, p_max);
  double s = 0.0;
  for (std::size_t t = 0; t < f.size(); ++t) s += (f[t] - p[t]) * (f[t] - p[t]);
  const double n = static_cast<double>(f.size());
  if (conventional) return std::sqrt(s / n) / p_max;
  return std::sqrt(s) / (n * p_max);
}

double crps(std::span<const BinnedDistribution> f, std::span<const BinnedDistribution> p) {
  if (f.size() != p.size()) throw ContractError("forecast and truth differ in length");
  if (f.empty()) throw ContractError("empty forecast");
  const std::size_t bins = f.front().bins();
  double s = 0.0;
  for (std::size_t t = 0; t < f.size(); ++t) {
    if (f[t].bins() != bins || p[t].bins() != bins) throw ContractError("bin count mismatch");
    double cf = 0.0;
    double cp = 0.0;
    for (std::size_t i = 0; i < bins; ++i) {
      cf += f[t][i];
      cp += p[t][i];
      s += (cf - cp) * (cf - cp);
    }
  }
  return s / (static_cast<double>(bins) * static_cast<double>(f.size()));
}

double skill(double model_err, double persistence_err) {
  if (!(persistence_err > 0.0)) throw ContractError("persistence error must be positive");
  return 1.0 - model_err / persistence_err;
}

double mean_nrmse(std::span<const Forecast> forecasts, std::span<const Sample> samples,
                  const MetricOptions& options) {
  if (forecasts.size() != samples.size() || samples.empty()) {
    throw ContractError("need one forecast per sample");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    total += nrmse(forecasts[i].expected, samples[i].target_e, 1.0, options.conventional_nrmse);
  }
  return total / static_cast<double>(samples.size());
}

const EvalRow* EvalReport::find(const std::string& model, const std::string& split) const {
  for (const auto& r : rows) {
    if (r.model == model && r.split == split) return &r;
  }
  return nullptr;
}

void EvalReport::append(const EvalReport& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string opt(const std::optional<double>& v, const char* absent) {
  return v ? num(*v) : std::string(absent);
}

}  // namespace

std::string EvalReport::csv() const {
  std::ostringstream os;
  os << "model,split,nrmse,nme,crps,s_nrmse,s_crps,n_samples\n";
  for (const auto& r : rows) {
    const char* skill_absent = r.reference ? "" : "-";
    os << r.model << ',' << r.split << ',' << num(r.nrmse) << ',' << num(r.nme) << ','
       << opt(r.crps, "-") << ',' << opt(r.s_nrmse, skill_absent) << ','
       << opt(r.s_crps, skill_absent) << ',' << r.n_samples << '\n';
  }
  return os.str();
}

std::string EvalReport::text() const {
  std::vector<std::string> models;
  std::vector<std::string> splits;
  for (const auto& r : rows) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    if (std::find(splits.begin(), splits.end(), r.split) == splits.end()) splits.push_back(r.split);
  }
  std::size_t name_w = 5;
  for (const auto& m : models) name_w = std::max(name_w, m.size());

  auto cell = [](const std::optional<double>& v) {
    char buf[16];
    if (!v) return std::string("-");
    std::snprintf(buf, sizeof buf, "%.3f", *v);
    return std::string(buf);
  };
  const char* metric_names[] = {"nRMSE", "nME", "CRPS", "S_nRMSE", "S_CRPS"};
  const int col_w = 8;

  std::ostringstream os;
  char buf[64];
  os << std::string(name_w, ' ');
  for (const char* m : metric_names) {
    std::snprintf(buf, sizeof buf, " | %-*s", static_cast<int>(splits.size() * (col_w + 1) - 1), m);
    os << buf;
  }
  os << '\n' << std::string(name_w - 5, ' ') << "Model";
  for (std::size_t k = 0; k < std::size(metric_names); ++k) {
    os << " |";
    for (const auto& s : splits) {
      std::snprintf(buf, sizeof buf, " %*s", col_w, s.c_str());
      os << buf;
    }
  }
  os << '\n';
  for (const auto& m : models) {
    os << m << std::string(name_w - m.size(), ' ');
    for (std::size_t k = 0; k < std::size(metric_names); ++k) {
      os << " |";
      for (const auto& s : splits) {
        const EvalRow* r = find(m, s);
        std::optional<double> v;
        if (r) {
          switch (k) {
            case 0: v = r->nrmse; break;
            case 1: v = r->nme; break;
            case 2: v = r->crps; break;
            case 3: v = r->s_nrmse; break;
            default: v = r->s_crps; break;
          }
        }
        std::snprintf(buf, sizeof buf, " %*s", col_w, cell(v).c_str());
        os << buf;
      }
    }
    os << '\n';
  }
  return os.str();
}

EvalReport evaluate_forecasts(std::span<const LabeledForecasts> models,
                              std::span<const Sample> samples, double p_max,
                              const std::string& split, const MetricOptions& options) {
  if (!(p_max > 0.0)) throw ContractError("p_max must be positive");
  if (samples.empty()) throw ContractError("no samples to evaluate");
  const LabeledForecasts* ref = nullptr;
  for (const auto& m : models) {
    if (m.reference) ref = &m;
  }
  if (!ref) throw ContractError("evaluation needs the persistence reference");

  auto score = [&](const LabeledForecasts& m) {
    if (m.forecasts.size() != samples.size()) {
      throw ContractError(m.label + ": one forecast per sample required");
    }
    EvalRow row;
    row.model = m.label;
    row.split = split;
    row.reference = m.reference;
    row.n_samples = samples.size();
    double sum_nrmse = 0.0;
    double sum_nme = 0.0;
    double sum_crps = 0.0;
    const bool pdf = m.mode == TargetMode::pdf;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Sample& s = samples[i];
      if (!s.has_targets()) throw ContractError("evaluation samples need targets");
      std::vector<double> f(m.forecasts[i].expected);
      std::vector<double> p(s.target_e);
      for (auto& v : f) v *= p_max;
      for (auto& v : p) v *= p_max;
      sum_nrmse += nrmse(f, p, p_max, options.conventional_nrmse);
      sum_nme += nme(f, p, p_max);
      if (pdf) sum_crps += crps(m.forecasts[i].pdf, s.target_pdf);
    }
    const double n = static_cast<double>(samples.size());
    row.nrmse = sum_nrmse / n;
    row.nme = sum_nme / n;
    if (pdf) row.crps = sum_crps / n;
    return row;
  };

  const EvalRow ref_row = score(*ref);
  EvalReport report;
  for (const auto& m : models) {
    EvalRow row = &m == ref ? ref_row : score(m);
    if (!row.reference) {
      row.s_nrmse = skill(row.nrmse, ref_row.nrmse);
      if (row.crps && ref_row.crps) row.s_crps = skill(*row.crps, *ref_row.crps);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

EvalReport evaluate(std::span<Model* const> models, std::span<const Sample> samples, double p_max,
                    const std::string& split, const MetricOptions& options) {
  std::vector<LabeledForecasts> all;
  for (Model* m : models) {
    const ModelConfig& c = m->config();
    LabeledForecasts lf;
    lf.label = model_label(c.family, c.mode);
    lf.mode = c.mode;
    lf.reference = c.family == Family::persistence;
    lf.forecasts = predict(*m, samples, DecodeMode::self_recurrent);
    all.push_back(std::move(lf));
  }
  return evaluate_forecasts(all, samples, p_max, split, options);
}

}  // namespace pvcast
