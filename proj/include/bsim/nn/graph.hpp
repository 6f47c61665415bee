#pragma once

#include <functional>
#include <vector>

#include "bsim/nn/tensor.hpp"

namespace bsim::nn {

struct Var {
  int id = -1;
};

/// Reverse-mode tape. Nodes are appended in evaluation order; backward()
/// replays their adjoint closures in reverse.
class Graph {
 public:
  explicit Graph(ParamStore* store = nullptr, bool record = true) : store_(store), record_(record) {}
  /// Inference graph over frozen parameters; records no tape.
  explicit Graph(const ParamStore& store) : store_(const_cast<ParamStore*>(&store)), record_(false) {}

  Var input(Tensor value);
  /// Node mirroring parameter `index` of the attached store.
  Var param(int index);

  const Tensor& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  Tensor& value_mut(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).requires_grad; }
  /// Gradient slot of a node, allocated on first access during backward.
  Tensor& grad(Var v);
  bool has_grad(Var v) const { return !nodes_.at(static_cast<std::size_t>(v.id)).grad.data.empty(); }

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds an op result. `backward` runs only when recording and when some
  /// parent requires a gradient.
  Var push(Tensor value, std::initializer_list<Var> parents, std::function<void(Graph&, Var)> backward);
  Var push(Tensor value, const std::vector<Var>& parents, std::function<void(Graph&, Var)> backward);

  /// Seeds d(loss) = 1 and accumulates into the store's parameter gradients.
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Graph&, Var)> backward;
    bool requires_grad = false;
    int param = -1;
  };
  ParamStore* store_;
  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace bsim::nn
