#include "pvcast/layers.hpp"

#include <cmath>

#include "pvcast/errors.hpp"

namespace pvcast {

void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : t.values()) v = dist(rng);
}

Tensor make_param(Shape shape) {
  Tensor t(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::none: return x;
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return tanh(x);
  }
  return x;
}

// --------------------------------------------------------------------------

DenseLayer DenseLayer::create(std::size_t in, std::size_t out, Activation activation, Rng& rng) {
  DenseLayer d{make_param({in, out}), make_param({out}), activation};
  glorot_uniform(d.weights, in, out, rng);
  return d;
}

void DenseLayer::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".weights", &weights});
  out.push_back({prefix + ".bias", &bias});
}

BoundDense bind(Graph& g, DenseLayer& layer) {
  return {g.param(layer.weights), g.param(layer.bias), layer.activation};
}

Var dense_forward(const BoundDense& layer, Var x) {
  if (x.shape().back() != layer.weights.shape()[0]) {
    throw ShapeError("dense layer expects last axis " +
                     std::to_string(layer.weights.shape()[0]) + ", got " +
                     shape_str(x.shape()));
  }
  return activate(add(matmul(x, layer.weights), layer.bias), layer.activation);
}

Var dense_forward(Graph& g, DenseLayer& layer, Var x) {
  return dense_forward(bind(g, layer), x);
}

// --------------------------------------------------------------------------

LstmLayer LstmLayer::create(std::size_t in, std::size_t units, Rng& rng) {
  LstmLayer l{in, units, make_param({in + units, 4 * units}), make_param({4 * units})};
  glorot_uniform(l.weights, in + units, units, rng);
  for (std::size_t j = units; j < 2 * units; ++j) l.bias[j] = 1.0;
  return l;
}

void LstmLayer::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".weights", &weights});
  out.push_back({prefix + ".bias", &bias});
}

BoundLstm bind(Graph& g, LstmLayer& layer) {
  return {g.param(layer.weights), g.param(layer.bias), layer.input_width, layer.units};
}

LstmState zero_state(Graph& g, std::size_t batch, std::size_t units) {
  return {g.input(Tensor({batch, units})), g.input(Tensor({batch, units}))};
}

LstmState lstm_step(const BoundLstm& layer, Var x, const LstmState& state) {
  const Shape& xs = x.shape();
  if (xs.back() != layer.input_width) {
    throw ShapeError("LSTM input width " + std::to_string(layer.input_width) + " expected, got " +
                     shape_str(xs));
  }
  Shape state_shape = xs;
  state_shape.back() = layer.units;
  if (state.h.shape() != state_shape || state.c.shape() != state_shape) {
    throw ContractError("LSTM state must be " + shape_str(state_shape) + ", got h " +
                        shape_str(state.h.shape()) + " and c " + shape_str(state.c.shape()));
  }
  const std::size_t axis = xs.size() - 1;
  const std::size_t u = layer.units;
  Var z = add(matmul(concat(x, state.h, axis), layer.weights), layer.bias);
  Var i = sigmoid(slice(z, axis, 0, u));
  Var f = sigmoid(slice(z, axis, u, u));
  Var g = tanh(slice(z, axis, 2 * u, u));
  Var o = sigmoid(slice(z, axis, 3 * u, u));
  Var c = add(mul(f, state.c), mul(i, g));
  Var h = mul(o, tanh(c));
  return {h, c};
}

// --------------------------------------------------------------------------

AttentionLayer AttentionLayer::create_full(std::size_t query_width, std::size_t key_width,
                                           std::size_t value_width, std::size_t d, Rng& rng) {
  AttentionLayer a;
  a.projection = AttentionProjection::full;
  a.w_q = DenseLayer::create(query_width, d, Activation::none, rng);
  a.w_k = DenseLayer::create(key_width, d, Activation::none, rng);
  a.w_v = DenseLayer::create(value_width, d, Activation::none, rng);
  return a;
}

AttentionLayer AttentionLayer::create_query_only(std::size_t query_width, std::size_t key_width,
                                                 Rng& rng) {
  AttentionLayer a;
  a.projection = AttentionProjection::query_only;
  a.w_q = DenseLayer::create(query_width, key_width, Activation::none, rng);
  return a;
}

std::size_t AttentionLayer::parameter_count() const {
  std::size_t n = w_q.parameter_count();
  if (w_k) n += w_k->parameter_count();
  if (w_v) n += w_v->parameter_count();
  return n;
}

void AttentionLayer::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  w_q.collect(prefix + ".w_q", out);
  if (w_k) w_k->collect(prefix + ".w_k", out);
  if (w_v) w_v->collect(prefix + ".w_v", out);
}

BoundAttention bind(Graph& g, AttentionLayer& layer) {
  BoundAttention b{layer.projection, bind(g, layer.w_q), std::nullopt, std::nullopt, layer.d_k()};
  if (layer.w_k) b.w_k = bind(g, *layer.w_k);
  if (layer.w_v) b.w_v = bind(g, *layer.w_v);
  return b;
}

AttentionMemory prepare_memory(const BoundAttention& layer, Var keys, Var values) {
  if (keys.shape().size() != 3 || values.shape().size() != 3 ||
      keys.shape()[0] != values.shape()[0] || keys.shape()[1] != values.shape()[1]) {
    throw ShapeError("attention keys and values need matching [batch x steps x width], got " +
                     shape_str(keys.shape()) + " and " + shape_str(values.shape()));
  }
  Var k = layer.w_k ? dense_forward(*layer.w_k, keys) : keys;
  Var v = layer.w_v ? dense_forward(*layer.w_v, values) : values;
  if (k.shape().back() != layer.d_k) {
    throw ShapeError("attention key width " + std::to_string(k.shape().back()) +
                     " does not match query projection width " + std::to_string(layer.d_k));
  }
  return {transpose(k), v};
}

AttentionOutput attend(const BoundAttention& layer, const AttentionMemory& memory, Var queries) {
  if (queries.shape().size() != 3) {
    throw ShapeError("attention queries must be [batch x steps x width], got " +
                     shape_str(queries.shape()));
  }
  Var q = dense_forward(layer.w_q, queries);
  Var score = scale(batched_matmul(q, memory.keys_t),
                    1.0 / std::sqrt(static_cast<double>(layer.d_k)));
  Var weights = softmax(score);
  return {batched_matmul(weights, memory.values), weights};
}

AttentionOutput attention(Graph& g, AttentionLayer& layer, Var q, Var k, Var v) {
  if (k.shape().size() != 2 || v.shape().size() != 2 || q.shape().size() != 2) {
    throw ShapeError("attention expects 2-D q, k, v");
  }
  if (k.shape()[0] != v.shape()[0]) {
    throw ShapeError("attention keys and values differ in step count: " +
                     shape_str(k.shape()) + " vs " + shape_str(v.shape()));
  }
  auto with_batch = [](Var x) {
    return reshape(x, {1, x.shape()[0], x.shape()[1]});
  };
  BoundAttention b = bind(g, layer);
  AttentionMemory mem = prepare_memory(b, with_batch(k), with_batch(v));
  AttentionOutput out = attend(b, mem, with_batch(q));
  const Shape& cs = out.context.shape();
  const Shape& ws = out.weights.shape();
  return {reshape(out.context, {cs[1], cs[2]}), reshape(out.weights, {ws[1], ws[2]})};
}

// --------------------------------------------------------------------------

TemporalTransform TemporalTransform::create(std::size_t in_steps, std::size_t out_steps,
                                            std::size_t in_features, std::size_t out_features,
                                            Activation activation, Rng& rng) {
  TemporalTransform t{make_param({in_steps, out_steps}), make_param({out_steps}),
                      DenseLayer::create(in_features, out_features, activation, rng)};
  glorot_uniform(t.time_weights, in_steps, out_steps, rng);
  return t;
}

void TemporalTransform::collect(const std::string& prefix, std::vector<NamedParam>& out) {
  out.push_back({prefix + ".time_weights", &time_weights});
  out.push_back({prefix + ".time_bias", &time_bias});
  features.collect(prefix + ".features", out);
}

BoundTemporal bind(Graph& g, TemporalTransform& t) {
  return {g.param(t.time_weights), g.param(t.time_bias), bind(g, t.features)};
}

Var temporal_transform(const BoundTemporal& t, Var x) {
  const Shape& s = x.shape();
  const std::size_t in_steps = t.time_weights.shape()[0];
  if (s.size() < 2 || s[s.size() - 2] != in_steps) {
    throw ShapeError("temporal transform expects " + std::to_string(in_steps) +
                     " input steps, got " + shape_str(s));
  }
  // [.. x S x F] -> [.. x F x S] -> [.. x F x out] -> [.. x out x F]
  Var mixed = add(matmul(transpose(x), t.time_weights), t.time_bias);
  return dense_forward(t.features, transpose(mixed));
}

Var temporal_transform(Graph& g, TemporalTransform& t, Var x) {
  return temporal_transform(bind(g, t), x);
}

}  // namespace pvcast
