#pragma once

#include <cmath>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "srgan/tensor.hpp"

namespace srgan {

template <typename T>
class Tape;

// A tensor value plus an optional handle into a gradient tape. Untracked vars
// (tape == nullptr) behave as constants.
template <typename T>
struct Var {
  TensorT<T> value;
  Tape<T>* tape = nullptr;
  int node = -1;

  Var() = default;
  Var(TensorT<T> v) : value(std::move(v)) {}  // NOLINT: implicit constant lift
  Var(TensorT<T> v, Tape<T>* t, int n) : value(std::move(v)), tape(t), node(n) {}

  bool tracked() const noexcept { return tape != nullptr; }
  const Shape& shape() const noexcept { return value.shape(); }
};

// Accumulators handed to a backward function. slot(i) is empty when input i
// does not need a gradient, so ops can skip that branch entirely.
template <typename T>
class GradSink {
 public:
  explicit GradSink(std::vector<std::span<T>> slots) : slots_(std::move(slots)) {}
  std::span<T> slot(std::size_t i) const { return slots_.at(i); }
  bool wants(std::size_t i) const { return !slots_.at(i).empty(); }

 private:
  std::vector<std::span<T>> slots_;
};

template <typename T>
using BackwardFn = std::function<void(const TensorT<T>& grad_out, GradSink<T>& sink)>;

// Reverse-mode tape. Nodes are appended in execution order, which is a valid
// topological order; backward() walks them in reverse. Single-owner: one
// training step builds and consumes one tape.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(TensorT<T> value) {
    nodes_.push_back(Node{{}, nullptr, value.shape()});
    return Var<T>(std::move(value), this, static_cast<int>(nodes_.size()) - 1);
  }

  // Records an op result. Untracked inputs are stored as -1 and never receive
  // a gradient slot.
  Var<T> record(TensorT<T> value, std::initializer_list<const Var<T>*> inputs, BackwardFn<T> fn) {
#ifndef NDEBUG
    for (T v : value.data())
      require(std::isfinite(static_cast<double>(v)), ErrorCode::numerical, "non-finite value produced by a recorded op");
#endif
    Node n;
    n.shape = value.shape();
    for (const Var<T>* in : inputs) {
      if (in->tracked()) {
        require(in->tape == this, ErrorCode::invalid_argument, "op mixes vars from different tapes");
        n.inputs.push_back(in->node);
      } else {
        n.inputs.push_back(-1);
      }
    }
    n.fn = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var<T>(std::move(value), this, static_cast<int>(nodes_.size()) - 1);
  }

  void backward(const Var<T>& loss) {
    require(loss.tracked() && loss.tape == this, ErrorCode::invalid_argument, "backward: loss is not on this tape");
    require(loss.value.numel() == 1, ErrorCode::shape_mismatch,
            "backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    grads_.assign(nodes_.size(), {});
    grads_[static_cast<std::size_t>(loss.node)].assign(1, T(1));
    for (int id = loss.node; id >= 0; --id) {
      auto& g = grads_[static_cast<std::size_t>(id)];
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      if (g.empty() || !n.fn) continue;
      std::vector<std::span<T>> slots;
      slots.reserve(n.inputs.size());
      for (int in : n.inputs) {
        if (in < 0) {
          slots.emplace_back();
          continue;
        }
        auto& buf = grads_[static_cast<std::size_t>(in)];
        if (buf.empty()) buf.assign(static_cast<std::size_t>(shape_numel(nodes_[static_cast<std::size_t>(in)].shape)), T(0));
        slots.emplace_back(buf.data(), buf.size());
      }
      GradSink<T> sink(std::move(slots));
      n.fn(TensorT<T>(n.shape, std::move(g)), sink);
      g = {};
    }
    done_ = true;
  }

  // Gradient of the last backward() loss w.r.t. v; zeros when v was not
  // reachable. Only leaf gradients persist: intermediate buffers are released
  // as soon as their node has been processed.
  TensorT<T> grad(const Var<T>& v) const {
    require(done_, ErrorCode::invalid_argument, "grad() before backward()");
    if (!v.tracked()) return TensorT<T>(v.shape(), T(0));
    require(v.tape == this, ErrorCode::invalid_argument, "grad(): var belongs to a different tape");
    const auto& buf = grads_[static_cast<std::size_t>(v.node)];
    if (buf.empty()) return TensorT<T>(v.shape(), T(0));
    return TensorT<T>(v.shape(), buf);
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> inputs;
    BackwardFn<T> fn;
    Shape shape;
  };

  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  bool done_ = false;
};

}  // namespace srgan
