#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pvcast/graph.hpp"
#include "pvcast/layers.hpp"
#include "pvcast/model.hpp"

namespace pvcast::test {

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// Central differences against backward for every entry of every tensor.
/// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheck grad_check(const std::vector<NamedParam>& params,
                            const std::function<Var(Graph&)>& loss, double h = 1e-5,
                            double floor = 1e-3) {
  for (const auto& p : params) {
    p.tensor->set_requires_grad(true);
    p.tensor->zero_grad();
  }
  {
    Graph g;
    g.backward(loss(g));
  }
  auto eval = [&] {
    Graph g(false);
    return loss(g).value()[0];
  };
  GradCheck out;
  for (const auto& p : params) {
    const std::vector<double> analytic(p.tensor->grad().begin(), p.tensor->grad().end());
    for (std::size_t i = 0; i < p.tensor->size(); ++i) {
      const double saved = (*p.tensor)[i];
      (*p.tensor)[i] = saved + h;
      const double up = eval();
      (*p.tensor)[i] = saved - h;
      const double down = eval();
      (*p.tensor)[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++out.checked;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = p.name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic[i]) +
                    " numeric " + std::to_string(numeric);
      }
    }
  }
  return out;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline std::vector<double> random_simplex(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> p(n);
  double s = 0.0;
  for (auto& v : p) s += (v = u(rng));
  for (auto& v : p) v /= s;
  return p;
}

/// Batch of random normalized inputs and valid target distributions.
inline Batch random_batch(std::size_t batch, std::size_t steps, std::size_t features,
                          std::size_t horizon, std::size_t bins, std::mt19937_64& rng) {
  Batch b;
  b.size = batch;
  b.inputs = random_tensor({batch, steps, features}, rng, 0.0, 1.0);
  b.last_pdf = Tensor({batch, bins});
  b.last_e = Tensor({batch, 1});
  b.history_pdf = Tensor({batch, 24, bins});
  b.target_pdf = Tensor({batch, horizon, bins});
  b.target_e = Tensor({batch, horizon, 1});
  b.decoder_nwp = random_tensor({batch, horizon, 5}, rng, 0.0, 1.0);
  b.has_targets = true;
  auto fill = [&](Tensor& t, std::size_t row, Tensor* e) {
    const auto p = random_simplex(bins, rng);
    double ev = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      t[row * bins + k] = p[k];
      ev += p[k] * (static_cast<double>(k) + 0.5) / static_cast<double>(bins);
    }
    if (e) (*e)[row] = ev;
  };
  for (std::size_t i = 0; i < batch; ++i) {
    fill(b.last_pdf, i, &b.last_e);
    for (std::size_t h = 0; h < 24; ++h) fill(b.history_pdf, i * 24 + h, nullptr);
    for (std::size_t t = 0; t < horizon; ++t) fill(b.target_pdf, i * horizon + t, &b.target_e);
  }
  return b;
}

}  // namespace pvcast::test
