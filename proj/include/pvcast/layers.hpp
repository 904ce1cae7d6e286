#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pvcast/graph.hpp"
#include "pvcast/tensor.hpp"

namespace pvcast {

using Rng = std::mt19937_64;

struct NamedParam {
  std::string name;
  Tensor* tensor;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng);
/// Trainable tensor of the given shape, zero-filled.
Tensor make_param(Shape shape);

enum class Activation { none, sigmoid, tanh };

Var activate(Var x, Activation a);

// --------------------------------------------------------------------------
// Dense

struct DenseLayer {
  Tensor weights;  // [in x out]
  Tensor bias;     // [out]
  Activation activation = Activation::none;

  static DenseLayer create(std::size_t in, std::size_t out, Activation activation, Rng& rng);

  std::size_t in() const { return weights.dim(0); }
  std::size_t out() const { return weights.dim(1); }
  std::size_t parameter_count() const { return weights.size() + bias.size(); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out);
};

struct BoundDense {
  Var weights;
  Var bias;
  Activation activation;
};

BoundDense bind(Graph& g, DenseLayer& layer);
/// activation(x . W + b), broadcast over the leading axes of x.
Var dense_forward(const BoundDense& layer, Var x);
Var dense_forward(Graph& g, DenseLayer& layer, Var x);

// --------------------------------------------------------------------------
// LSTM

/// Standard LSTM cell. Input and recurrent weights are stored as one
/// [(in + units) x 4*units] matrix with gate blocks ordered input, forget,
/// candidate, output.
struct LstmLayer {
  std::size_t input_width = 0;
  std::size_t units = 0;
  Tensor weights;
  Tensor bias;

  /// Forget-gate bias starts at 1, other biases at 0.
  static LstmLayer create(std::size_t in, std::size_t units, Rng& rng);

  std::size_t parameter_count() const { return weights.size() + bias.size(); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out);
};

struct LstmState {
  Var h;
  Var c;
};

struct BoundLstm {
  Var weights;
  Var bias;
  std::size_t input_width;
  std::size_t units;
};

BoundLstm bind(Graph& g, LstmLayer& layer);
/// Zero state of shape [batch x units].
LstmState zero_state(Graph& g, std::size_t batch, std::size_t units);
/// One time step. `x` is [in] or [batch x in]; the state matches its leading axes.
LstmState lstm_step(const BoundLstm& layer, Var x, const LstmState& state);

// --------------------------------------------------------------------------
// Scaled dot-product attention

enum class AttentionProjection {
  full,        // learned W_Q, W_K and W_V, all of width d
  query_only,  // learned W_Q into the key width; keys and values used as given
};

struct AttentionLayer {
  AttentionProjection projection = AttentionProjection::full;
  DenseLayer w_q;
  std::optional<DenseLayer> w_k;
  std::optional<DenseLayer> w_v;

  static AttentionLayer create_full(std::size_t query_width, std::size_t key_width,
                                    std::size_t value_width, std::size_t d, Rng& rng);
  static AttentionLayer create_query_only(std::size_t query_width, std::size_t key_width,
                                          Rng& rng);

  /// Width of the projected keys, the scaling length in 1/sqrt(d_K).
  std::size_t d_k() const { return w_q.out(); }
  std::size_t parameter_count() const;
  void collect(const std::string& prefix, std::vector<NamedParam>& out);
};

struct BoundAttention {
  AttentionProjection projection;
  BoundDense w_q;
  std::optional<BoundDense> w_k;
  std::optional<BoundDense> w_v;
  std::size_t d_k;
};

/// Keys and values after projection, [batch x Tk x d].
struct AttentionMemory {
  Var keys_t;  // transposed: [batch x d_K x Tk]
  Var values;
};

struct AttentionOutput {
  Var context;  // [batch x Tq x d_v]
  Var weights;  // [batch x Tq x Tk], rows sum to 1
};

BoundAttention bind(Graph& g, AttentionLayer& layer);
/// Projects keys [batch x Tk x dk] and values [batch x Tk x dv] once per sequence.
AttentionMemory prepare_memory(const BoundAttention& layer, Var keys, Var values);
/// softmax((q W_Q)(k W_K)^T / sqrt(d_K)) (v W_V) for queries [batch x Tq x dq].
AttentionOutput attend(const BoundAttention& layer, const AttentionMemory& memory, Var queries);
/// Unbatched convenience: q [Tq x dq], k [Tk x dk], v [Tk x dv] -> [Tq x d].
AttentionOutput attention(Graph& g, AttentionLayer& layer, Var q, Var k, Var v);

// --------------------------------------------------------------------------
// Temporal transformation

/// Linear map across the time axis (in_steps -> out_steps, with bias) followed
/// by a per-step feature projection.
struct TemporalTransform {
  Tensor time_weights;  // [in_steps x out_steps]
  Tensor time_bias;     // [out_steps]
  DenseLayer features;

  static TemporalTransform create(std::size_t in_steps, std::size_t out_steps,
                                  std::size_t in_features, std::size_t out_features,
                                  Activation activation, Rng& rng);

  std::size_t in_steps() const { return time_weights.dim(0); }
  std::size_t out_steps() const { return time_weights.dim(1); }
  std::size_t parameter_count() const {
    return time_weights.size() + time_bias.size() + features.parameter_count();
  }
  void collect(const std::string& prefix, std::vector<NamedParam>& out);
};

struct BoundTemporal {
  Var time_weights;
  Var time_bias;
  BoundDense features;
};

BoundTemporal bind(Graph& g, TemporalTransform& t);
/// x is [in_steps x F] or [batch x in_steps x F]; the result has out_steps steps.
Var temporal_transform(const BoundTemporal& t, Var x);
Var temporal_transform(Graph& g, TemporalTransform& t, Var x);

}  // namespace pvcast
