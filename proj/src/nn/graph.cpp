#include "bsim/nn/graph.hpp"

#include "bsim/common.hpp"

namespace bsim::nn {

Var Graph::input(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(int index) {
  if (!store_) throw Error("graph has no parameter store");
  Node n;
  n.value = (*store_)[index].value;
  n.requires_grad = record_;
  n.param = index;
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad(Var v) {
  Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
  return n.grad;
}

Var Graph::push(Tensor value, std::initializer_list<Var> parents, std::function<void(Graph&, Var)> backward) {
  return push(std::move(value), std::vector<Var>(parents), std::move(backward));
}

Var Graph::push(Tensor value, const std::vector<Var>& parents, std::function<void(Graph&, Var)> backward) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (Var p : parents) n.requires_grad = n.requires_grad || nodes_.at(static_cast<std::size_t>(p.id)).requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

void Graph::backward(Var loss) {
  if (!record_) throw Error("backward called on a graph built without a tape");
  if (loss.id < 0 || static_cast<std::size_t>(loss.id) >= nodes_.size()) throw Error("backward: invalid node");
  if (value(loss).size() != 1) throw Error("backward: loss must be a scalar, got " + value(loss).shape_str());
  if (!nodes_[loss.id].requires_grad) throw Error("backward: loss does not depend on any parameter");
  grad(loss).data[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.data.empty()) continue;
    if (n.backward) n.backward(*this, Var{i});
    if (n.param >= 0 && store_) {
      auto& dst = (*store_)[n.param].grad.data;
      const auto& src = nodes_[i].grad.data;
      for (std::size_t k = 0; k < src.size(); ++k) dst[k] += src[k];
    }
  }
}

}  // namespace bsim::nn
