#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vdst/core/tensor.hpp"

namespace vdst {

// Reverse-mode automatic differentiation over Tensor<S>.
//
// A Var is a shared handle to a value plus (optionally) the node that
// produced it. Backward functions are themselves written in terms of Vars,
// so running them with recording enabled (create_graph) yields gradients
// that are again differentiable — which is what gradient matching (a loss on
// ∇θ) and trajectory matching (a loss through unrolled SGD steps) need.

template <class S>
class Var;

template <class S>
struct Node {
  // Given d(loss)/d(output), produce d(loss)/d(input_i) for each input.
  // Entries may be left undefined for inputs that do not require gradients.
  using Backward = std::function<std::vector<Var<S>>(const Var<S>&)>;

  const char* name;
  std::vector<Var<S>> inputs;
  Backward backward;

  Node(const char* n, std::vector<Var<S>> in, Backward fn)
      : name(n), inputs(std::move(in)), backward(std::move(fn)) {}
};

// Thread-local switch: while off, ops do not record nodes, so forward passes
// over constant data cost no graph memory. grad() flips it on during
// backward-function evaluation when create_graph is requested.
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool f = true;
    return f;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class GradModeGuard {
 public:
  explicit GradModeGuard(bool on) : prev_(GradMode::enabled()) { GradMode::set(on); }
  ~GradModeGuard() { GradMode::set(prev_); }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool prev_;
};

template <class S>
class Var {
 public:
  Var() = default;

  // Leaf (requires_grad) or constant (by default).
  explicit Var(Tensor<S> value, bool requires_grad = false)
      : rec_(std::make_shared<Rec>()) {
    rec_->value = std::move(value);
    rec_->requires_grad = requires_grad;
  }

  static Var constant(Tensor<S> value) { return Var(std::move(value), false); }
  static Var leaf(Tensor<S> value) { return Var(std::move(value), true); }

  bool defined() const { return rec_ != nullptr; }
  bool requires_grad() const { return rec_ && rec_->requires_grad; }

  const Tensor<S>& value() const { return rec_->value; }
  // In-place mutation of a leaf's payload (optimizer updates). Never call on
  // a Var that is part of a live graph you still intend to differentiate.
  Tensor<S>& mutable_value() { return rec_->value; }

  const Shape& shape() const { return rec_->value.shape(); }
  Index size() const { return rec_->value.size(); }

  // Same value, no history.
  Var detached() const { return constant(rec_->value); }

  const std::shared_ptr<Node<S>>& node() const { return rec_->node; }

  // Identity key for graph traversal.
  const void* id() const { return rec_.get(); }

  // Record an op result. Attaches the node only when recording is on and
  // some input actually requires a gradient.
  static Var from_op(const char* name, Tensor<S> value, std::vector<Var> inputs,
                     typename Node<S>::Backward backward) {
    bool needs = false;
    if (GradMode::enabled()) {
      for (const Var& v : inputs)
        if (v.requires_grad()) {
          needs = true;
          break;
        }
    }
    Var out(std::move(value), needs);
    if (needs) {
      out.rec_->node = std::make_shared<Node<S>>(name, std::move(inputs),
                                                 std::move(backward));
    }
    return out;
  }

 private:
  struct Rec {
    Tensor<S> value;
    std::shared_ptr<Node<S>> node;  // null for leaves and constants
    bool requires_grad = false;
  };

  std::shared_ptr<Rec> rec_;
};

// Declared here, defined in ops.hpp (grad() accumulates with it).
template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b);

// Gradients of a scalar root with respect to `wrt`.
//
// With create_graph=false the results are plain values (constants).
// With create_graph=true the backward pass itself records, so each returned
// Var is a differentiable function of whatever influenced it — feed them into
// further ops and call grad() again for higher-order derivatives.
//
// Vars in `wrt` that the root does not reach get zero gradients.
template <class S>
std::vector<Var<S>> grad(const Var<S>& root, const std::vector<Var<S>>& wrt,
                         bool create_graph = false) {
  require_input(root.defined(), "grad: undefined root");
  require_input(root.size() == 1, "grad: root must be a scalar (size-1) Var");

  // Topological order over the recorded subgraph (iterative DFS).
  std::vector<Var<S>> topo;
  {
    std::unordered_set<const void*> visited;
    struct Frame {
      Var<S> var;
      std::size_t next_child;
    };
    std::vector<Frame> stack;
    if (root.requires_grad()) stack.push_back({root, 0});
    if (!stack.empty()) visited.insert(root.id());
    while (!stack.empty()) {
      Frame& f = stack.back();
      const auto& node = f.var.node();
      const std::size_t arity = node ? node->inputs.size() : 0;
      if (f.next_child < arity) {
        const Var<S>& child = node->inputs[f.next_child++];
        if (child.requires_grad() && !visited.count(child.id())) {
          visited.insert(child.id());
          stack.push_back({child, 0});
        }
      } else {
        topo.push_back(f.var);
        stack.pop_back();
      }
    }
  }

  std::unordered_map<const void*, Var<S>> grads;
  if (root.requires_grad())
    grads.emplace(root.id(), Var<S>::constant(Tensor<S>::ones(root.shape())));

  // topo is children-before-parents; sweep parents first.
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const Var<S>& v = *it;
    auto found = grads.find(v.id());
    if (found == grads.end()) continue;
    const Var<S> upstream = found->second;  // copy: inserts below may rehash
    const auto& node = v.node();
    if (!node) continue;

    std::vector<Var<S>> input_grads;
    {
      GradModeGuard guard(create_graph);
      input_grads = node->backward(upstream);
    }
    require_input(input_grads.size() == node->inputs.size(),
                  std::string("grad: op '") + node->name +
                      "' returned wrong number of input gradients");
    for (std::size_t i = 0; i < input_grads.size(); ++i) {
      const Var<S>& in = node->inputs[i];
      Var<S>& g = input_grads[i];
      if (!in.requires_grad() || !g.defined()) continue;
      require_input(g.shape() == in.shape(),
                    std::string("grad: op '") + node->name + "' input " +
                        std::to_string(i) + " gradient shape " +
                        shape_str(g.shape()) + " != value shape " +
                        shape_str(in.shape()));
      auto slot = grads.find(in.id());
      if (slot == grads.end()) {
        grads.emplace(in.id(), g);
      } else {
        GradModeGuard guard(create_graph);
        slot->second = add(slot->second, g);
      }
    }
    // This node's gradient is no longer needed; drop it so big intermediate
    // gradient tensors die as the sweep moves toward the leaves.
    if (v.id() != root.id()) grads.erase(v.id());
  }

  std::vector<Var<S>> out;
  out.reserve(wrt.size());
  for (const Var<S>& w : wrt) {
    require_input(w.defined(), "grad: undefined wrt entry");
    auto f = grads.find(w.id());
    if (f != grads.end())
      out.push_back(f->second);
    else
      out.push_back(Var<S>::constant(Tensor<S>::zeros(w.shape())));
  }
  return out;
}

}  // namespace vdst
