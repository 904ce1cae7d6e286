#include <algorithm>
#include <cmath>
#include <limits>

#include "pvcast/errors.hpp"
#include "pvcast/graph.hpp"

namespace pvcast {

namespace {

Graph& same_graph(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) {
    throw ContractError("operands belong to different graphs");
  }
  return *a.graph;
}

std::size_t product(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t n = 1;
  for (std::size_t i = from; i < to; ++i) n *= s[i];
  return n;
}

bool is_suffix(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA[m x k] += dC[m x n] * B^T
void gemm_nt(const double* dc, const double* b, double* da, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* drow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += drow[j] * brow[j];
      da[i * k + p] += acc;
    }
  }
}

// dB[k x n] += A^T * dC
void gemm_tn(const double* a, const double* dc, double* db, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* drow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* dbrow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * drow[j];
    }
  }
}

enum class Binary { add, sub, mul };

Var binary(Var a, Var b, Binary kind) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!is_suffix(av.shape(), bv.shape())) {
    throw ShapeError("elementwise operands incompatible: " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()));
  }
  const std::size_t inner = bv.size();
  const std::size_t outer = av.size() / inner;
  Tensor out(av.shape());
  auto o = out.values();
  auto x = av.values();
  auto y = bv.values();
  for (std::size_t r = 0; r < outer; ++r) {
    for (std::size_t j = 0; j < inner; ++j) {
      const std::size_t i = r * inner + j;
      switch (kind) {
        case Binary::add: o[i] = x[i] + y[j]; break;
        case Binary::sub: o[i] = x[i] - y[j]; break;
        case Binary::mul: o[i] = x[i] * y[j]; break;
      }
    }
  }
  const OpKind op = kind == Binary::add ? OpKind::add
                    : kind == Binary::sub ? OpKind::sub
                                          : OpKind::mul;
  const std::size_t ia = a.id;
  const std::size_t ib = b.id;
  return g.record(op, {ia, ib}, std::move(out), [=](Graph& gr, std::size_t self) {
    auto gy = gr.grad_buffer(self);
    const auto xa = gr.value(ia).values();
    const auto xb = gr.value(ib).values();
    if (gr.requires_grad(ia)) {
      auto ga = gr.grad_buffer(ia);
      for (std::size_t r = 0; r < outer; ++r) {
        for (std::size_t j = 0; j < inner; ++j) {
          const std::size_t i = r * inner + j;
          ga[i] += kind == Binary::mul ? gy[i] * xb[j] : gy[i];
        }
      }
    }
    if (gr.requires_grad(ib)) {
      auto gb = gr.grad_buffer(ib);
      for (std::size_t r = 0; r < outer; ++r) {
        for (std::size_t j = 0; j < inner; ++j) {
          const std::size_t i = r * inner + j;
          switch (kind) {
            case Binary::add: gb[j] += gy[i]; break;
            case Binary::sub: gb[j] -= gy[i]; break;
            case Binary::mul: gb[j] += gy[i] * xa[i]; break;
          }
        }
      }
    }
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (bv.rank() != 2 || av.shape().back() != bv.dim(0)) {
    throw ShapeError("matmul shape mismatch: " + shape_str(av.shape()) + " x " +
                     shape_str(bv.shape()));
  }
  const std::size_t k = bv.dim(0);
  const std::size_t n = bv.dim(1);
  const std::size_t m = av.size() / k;
  Shape out_shape = av.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  gemm_nn(av.values().data(), bv.values().data(), out.values().data(), m, k, n);
  const std::size_t ia = a.id;
  const std::size_t ib = b.id;
  return g.record(OpKind::matmul, {ia, ib}, std::move(out), [=](Graph& gr, std::size_t self) {
    const double* gy = gr.grad_buffer(self).data();
    if (gr.requires_grad(ia)) {
      gemm_nt(gy, gr.value(ib).values().data(), gr.grad_buffer(ia).data(), m, k, n);
    }
    if (gr.requires_grad(ib)) {
      gemm_tn(gr.value(ia).values().data(), gy, gr.grad_buffer(ib).data(), m, k, n);
    }
  });
}

Var batched_matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(1)) {
    throw ShapeError("batched_matmul shape mismatch: " + shape_str(av.shape()) + " x " +
                     shape_str(bv.shape()));
  }
  const std::size_t batch = av.dim(0);
  const std::size_t m = av.dim(1);
  const std::size_t k = av.dim(2);
  const std::size_t n = bv.dim(2);
  Tensor out({batch, m, n});
  for (std::size_t s = 0; s < batch; ++s) {
    gemm_nn(av.values().data() + s * m * k, bv.values().data() + s * k * n,
            out.values().data() + s * m * n, m, k, n);
  }
  const std::size_t ia = a.id;
  const std::size_t ib = b.id;
  return g.record(OpKind::batched_matmul, {ia, ib}, std::move(out),
                  [=](Graph& gr, std::size_t self) {
                    const double* gy = gr.grad_buffer(self).data();
                    const double* xa = gr.value(ia).values().data();
                    const double* xb = gr.value(ib).values().data();
                    if (gr.requires_grad(ia)) {
                      double* ga = gr.grad_buffer(ia).data();
                      for (std::size_t s = 0; s < batch; ++s) {
                        gemm_nt(gy + s * m * n, xb + s * k * n, ga + s * m * k, m, k, n);
                      }
                    }
                    if (gr.requires_grad(ib)) {
                      double* gb = gr.grad_buffer(ib).data();
                      for (std::size_t s = 0; s < batch; ++s) {
                        gemm_tn(xa + s * m * k, gy + s * m * n, gb + s * k * n, m, k, n);
                      }
                    }
                  });
}

Var transpose(Var x) {
  Graph& g = *x.graph;
  const Tensor& xv = x.value();
  if (xv.rank() < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_str(xv.shape()));
  const std::size_t r = xv.rank();
  const std::size_t rows = xv.dim(r - 2);
  const std::size_t cols = xv.dim(r - 1);
  const std::size_t outer = xv.size() / (rows * cols);
  Shape s = xv.shape();
  std::swap(s[r - 2], s[r - 1]);
  Tensor out(s);
  auto in = xv.values();
  auto o = out.values();
  for (std::size_t b = 0; b < outer; ++b) {
    const std::size_t base = b * rows * cols;
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) o[base + j * rows + i] = in[base + i * cols + j];
    }
  }
  const std::size_t ix = x.id;
  return g.record(OpKind::transpose, {ix}, std::move(out), [=](Graph& gr, std::size_t self) {
    auto gy = gr.grad_buffer(self);
    auto gx = gr.grad_buffer(ix);
    for (std::size_t b = 0; b < outer; ++b) {
      const std::size_t base = b * rows * cols;
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) gx[base + i * cols + j] += gy[base + j * rows + i];
      }
    }
  });
}

Var add(Var a, Var b) { return binary(a, b, Binary::add); }
Var sub(Var a, Var b) { return binary(a, b, Binary::sub); }
Var mul(Var a, Var b) { return binary(a, b, Binary::mul); }

Var scale(Var x, double factor) {
  Graph& g = *x.graph;
  Tensor out = x.value();
  for (auto& v : out.values()) v *= factor;
  const std::size_t ix = x.id;
  return g.record(OpKind::scale, {ix}, std::move(out), [=](Graph& gr, std::size_t self) {
    auto gy = gr.grad_buffer(self);
    auto gx = gr.grad_buffer(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * gy[i];
  });
}

Var sigmoid(Var x) {
  Graph& g = *x.graph;
  Tensor out = x.value();
  for (auto& v : out.values()) {
    // Branching keeps exp() from overflowing for large |v|.
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  const std::size_t ix = x.id;
  return g.record(OpKind::sigmoid, {ix}, std::move(out), [=](Graph& gr, std::size_t self) {
    auto gy = gr.grad_buffer(self);
    auto y = gr.value(self).values();
    auto gx = gr.grad_buffer(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * y[i] * (1.0 - y[i]);
  });
}

Var tanh(Var x) {
  Graph& g = *x.graph;
  Tensor out = x.value();
  for (auto& v : out.values()) v = std::tanh(v);
  const std::size_t ix = x.id;
  return g.record(OpKind::tanh, {ix}, std::move(out), [=](Graph& gr, std::size_t self) {
    auto gy = gr.grad_buffer(self);
    auto y = gr.value(self).values();
    auto gx = gr.grad_buffer(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * (1.0 - y[i] * y[i]);
  });
}

Var softmax(Var x) {
  Graph& g = *x.graph;
  const Tensor& xv = x.value();
  for (double v : xv.values()) {
    if (std::isnan(v)) throw DomainError("softmax input contains NaN");
  }
  const std::size_t n = xv.shape().back();
  const std::size_t rows = xv.size() / n;
  Tensor out(xv.shape());
  auto in = xv.values();
  auto o = out.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * n;
    double* dst = o.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      dst[j] = std::exp(row[j] - mx);
      total += dst[j];
    }
    for (std::size_t j = 0; j < n; ++j) dst[j] /= total;
  }
  const std::size_t ix = x.id;
  return g.record(OpKind::softmax, {ix}, std::move(out), [=](Graph& gr, std::size_t self) {
    auto gy = gr.grad_buffer(self);
    auto y = gr.value(self).values();
    auto gx = gr.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gy[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        gx[r * n + j] += y[r * n + j] * (gy[r * n + j] - dot);
      }
    }
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  Graph& g = *parts.front().graph;
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range for " + shape_str(first));
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    same_graph(parts.front(), p);
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw ShapeError("concat shapes incompatible on axis " + std::to_string(axis) + ": " +
                       shape_str(first) + " and " + shape_str(s));
    }
    ids.push_back(p.id);
    widths.push_back(s[axis] * product(s, axis + 1, s.size()));
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = product(first, 0, axis);
  const std::size_t row = product(out_shape, axis, out_shape.size());
  Tensor out(out_shape);
  auto o = out.values();
  std::size_t col = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto src = parts[p].value().values();
    for (std::size_t r = 0; r < outer; ++r) {
      std::copy_n(src.data() + r * widths[p], widths[p], o.data() + r * row + col);
    }
    col += widths[p];
  }
  return g.record(OpKind::concat, ids, std::move(out), [=](Graph& gr, std::size_t self) {
    auto gy = gr.grad_buffer(self);
    std::size_t c = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (gr.requires_grad(ids[p])) {
        auto gx = gr.grad_buffer(ids[p]);
        for (std::size_t r = 0; r < outer; ++r) {
          for (std::size_t j = 0; j < widths[p]; ++j) gx[r * widths[p] + j] += gy[r * row + c + j];
        }
      }
      c += widths[p];
    }
  });
}

Var concat(Var a, Var b, std::size_t axis) {
  const Var parts[] = {a, b};
  return concat(parts, axis);
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t length) {
  Graph& g = *x.graph;
  const Shape& s = x.shape();
  if (axis >= s.size() || length == 0 || begin + length > s[axis]) {
    throw ShapeError("slice [" + std::to_string(begin) + ", +" + std::to_string(length) +
                     ") out of range on axis " + std::to_string(axis) + " of " + shape_str(s));
  }
  const std::size_t outer = product(s, 0, axis);
  const std::size_t inner = product(s, axis + 1, s.size());
  const std::size_t row = s[axis] * inner;
  const std::size_t width = length * inner;
  const std::size_t off = begin * inner;
  Shape out_shape = s;
  out_shape[axis] = length;
  Tensor out(out_shape);
  auto src = x.value().values();
  auto o = out.values();
  for (std::size_t r = 0; r < outer; ++r) {
    std::copy_n(src.data() + r * row + off, width, o.data() + r * width);
  }
  const std::size_t ix = x.id;
  return g.record(OpKind::slice, {ix}, std::move(out), [=](Graph& gr, std::size_t self) {
    auto gy = gr.grad_buffer(self);
    auto gx = gr.grad_buffer(ix);
    for (std::size_t r = 0; r < outer; ++r) {
      for (std::size_t j = 0; j < width; ++j) gx[r * row + off + j] += gy[r * width + j];
    }
  });
}

Var take(Var x, std::size_t axis, std::size_t index) {
  Shape s = x.shape();
  if (s.size() < 2) throw ShapeError("take needs rank >= 2, got " + shape_str(s));
  Var sliced = slice(x, axis, index, 1);
  s.erase(s.begin() + static_cast<std::ptrdiff_t>(axis));
  return reshape(sliced, s);
}

Var stack(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("stack of zero tensors");
  Shape s = parts.front().shape();
  if (axis > s.size()) throw ShapeError("stack axis out of range for " + shape_str(s));
  for (const Var& p : parts) {
    if (p.shape() != s) {
      throw ShapeError("stack needs equal shapes: " + shape_str(s) + " and " +
                       shape_str(p.shape()));
    }
  }
  // Insert a unit axis into every part, then concatenate along it.
  Shape unit = s;
  unit.insert(unit.begin() + static_cast<std::ptrdiff_t>(axis), 1);
  std::vector<Var> expanded;
  expanded.reserve(parts.size());
  for (const Var& p : parts) expanded.push_back(reshape(p, unit));
  return concat(expanded, axis);
}

Var reshape(Var x, Shape shape) {
  Graph& g = *x.graph;
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t ix = x.id;
  return g.record(OpKind::reshape, {ix}, std::move(out), [=](Graph& gr, std::size_t self) {
    auto gy = gr.grad_buffer(self);
    auto gx = gr.grad_buffer(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
  });
}

Var sum(Var x) {
  Graph& g = *x.graph;
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  const std::size_t ix = x.id;
  return g.record(OpKind::sum, {ix}, Tensor::scalar(total), [=](Graph& gr, std::size_t self) {
    const double gy = gr.grad_buffer(self)[0];
    for (auto& v : gr.grad_buffer(ix)) v += gy;
  });
}

Var kl_divergence(Var forecast, const Tensor& target, double floor) {
  if (!(floor > 0.0)) throw ContractError("KL floor must be positive");
  const Tensor& f = forecast.value();
  if (f.shape() != target.shape()) {
    throw ContractError("KL operands differ in shape: " + shape_str(f.shape()) + " vs " +
                        shape_str(target.shape()));
  }
  const double inv_batch = 1.0 / static_cast<double>(f.dim(0));
  auto fv = f.values();
  auto pv = target.values();
  double total = 0.0;
  for (std::size_t i = 0; i < fv.size(); ++i) {
    if (pv[i] > 0.0) {
      total -= pv[i] * (std::log(std::max(fv[i], floor)) - std::log(std::max(pv[i], floor)));
    }
  }
  std::vector<double> p(pv.begin(), pv.end());
  const std::size_t ix = forecast.id;
  return forecast.graph->record(
      OpKind::kl_divergence, {ix}, Tensor::scalar(total * inv_batch),
      [=, p = std::move(p)](Graph& gr, std::size_t self) {
        const double gy = gr.grad_buffer(self)[0] * inv_batch;
        auto x = gr.value(ix).values();
        auto gx = gr.grad_buffer(ix);
        for (std::size_t i = 0; i < gx.size(); ++i) {
          if (p[i] > 0.0 && x[i] > floor) gx[i] -= gy * p[i] / x[i];
        }
      });
}

Var mean_squared_error(Var forecast, const Tensor& target) {
  const Tensor& f = forecast.value();
  if (f.shape() != target.shape()) {
    throw ContractError("MSE operands differ in shape: " + shape_str(f.shape()) + " vs " +
                        shape_str(target.shape()));
  }
  const double norm = 1.0 / static_cast<double>(f.size());
  auto fv = f.values();
  auto tv = target.values();
  double total = 0.0;
  for (std::size_t i = 0; i < fv.size(); ++i) total += (fv[i] - tv[i]) * (fv[i] - tv[i]);
  std::vector<double> t(tv.begin(), tv.end());
  const std::size_t ix = forecast.id;
  return forecast.graph->record(
      OpKind::mean_squared_error, {ix}, Tensor::scalar(total * norm),
      [=, t = std::move(t)](Graph& gr, std::size_t self) {
        const double gy = gr.grad_buffer(self)[0] * norm;
        auto x = gr.value(ix).values();
        auto gx = gr.grad_buffer(ix);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * gy * (x[i] - t[i]);
      });
}

}  // namespace pvcast
