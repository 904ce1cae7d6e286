#include "pvcast/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pvcast/errors.hpp"

namespace pvcast {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::input: return "input";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::batched_matmul: return "batched_matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh: return "tanh";
    case OpKind::softmax: return "softmax";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::take: return "take";
    case OpKind::stack: return "stack";
    case OpKind::reshape: return "reshape";
    case OpKind::sum: return "sum";
    case OpKind::kl_divergence: return "kl_divergence";
    case OpKind::mean_squared_error: return "mean_squared_error";
  }
  return "unknown";
}

const Tensor& Var::value() const { return graph->value(id); }

std::span<const double> Var::grad() const {
  return graph->node(id).grad;
}

Var Graph::input(Tensor value) {
  Node n{OpKind::input, {}, std::move(value), {}, false, nullptr, nullptr};
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Graph::param(Tensor& parameter) {
  Tensor copy(parameter.shape(), std::vector<double>(parameter.values().begin(),
                                                     parameter.values().end()));
  const bool rg = grad_enabled_ && parameter.requires_grad();
  Node n{OpKind::parameter, {}, std::move(copy), {}, rg, nullptr, rg ? &parameter : nullptr};
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Graph::record(OpKind kind, std::vector<std::size_t> inputs, Tensor value,
                  BackwardFn backward) {
  if (!value.all_finite()) {
    const bool inputs_finite = std::all_of(inputs.begin(), inputs.end(), [&](std::size_t i) {
      return nodes_[i].value.all_finite();
    });
    if (inputs_finite) {
      throw DomainError(std::string(op_name(kind)) + " produced a non-finite value from finite inputs");
    }
  }
  bool rg = false;
  if (grad_enabled_) {
    for (auto i : inputs) rg = rg || nodes_[i].requires_grad;
  }
  Node n{kind, std::move(inputs), std::move(value), {}, rg, rg ? std::move(backward) : nullptr,
         nullptr};
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

std::span<double> Graph::grad_buffer(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw ContractError("loss belongs to a different graph");
  if (nodes_.at(loss.id).value.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_str(nodes_[loss.id].value.shape()));
  }
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss.id)[0] += 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (visit_hook_) visit_hook_(id);
    if (n.parameter) {
      auto pg = n.parameter->grad();
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    } else if (n.backward) {
      n.backward(*this, id);
    }
  }
}

}  // namespace pvcast
