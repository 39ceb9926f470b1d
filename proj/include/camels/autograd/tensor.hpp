#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace camels {

using Shape = std::vector<std::size_t>;

/// Operand shapes do not conform for the requested operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf surfaced at an operation boundary.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {
struct TapeState;
inline constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();
}  // namespace detail

/// Dense row-major tensor of 64-bit reals. Values are immutable once built;
/// a tensor may additionally refer to a node of a live computation record.
class Tensor {
 public:
  Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

  Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
    if (shape_numel(shape_) != values.size()) {
      throw ShapeError("Tensor: shape " + shape_str(shape_) + " needs " +
                       std::to_string(shape_numel(shape_)) + " values, got " +
                       std::to_string(values.size()));
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw NumericError("Tensor: non-finite value in constructor");
    }
    data_ = std::make_shared<const std::vector<double>>(std::move(values));
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, {v}); }
  static Tensor full(Shape shape, double v) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
  }
  static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
  static Tensor vector(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::vector<double> v;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
      if (r.size() != cols) throw ShapeError("Tensor::matrix: ragged rows");
      v.insert(v.end(), r.begin(), r.end());
    }
    return Tensor(Shape{rows.size(), cols}, std::move(v));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t dim() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_->size(); }
  std::size_t extent(std::size_t axis) const {
    if (axis >= shape_.size()) throw ShapeError("Tensor::extent: axis out of range");
    return shape_[axis];
  }

  std::span<const double> values() const noexcept { return {data_->data(), data_->size()}; }
  const double* data() const noexcept { return data_->data(); }

  double item() const {
    if (numel() != 1) throw ShapeError("Tensor::item on shape " + shape_str(shape_));
    return (*data_)[0];
  }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t row, std::size_t col) const { return (*data_)[row * shape_.back() + col]; }

  /// True when the tensor belongs to a computation record that is still alive.
  bool recorded() const noexcept { return node_ != detail::kNoNode && !tape_.expired(); }
  std::size_t node_id() const noexcept { return node_; }

  Tensor detach() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = data_;
    return t;
  }

  bool shares_storage(const Tensor& other) const noexcept { return data_ == other.data_; }

 private:
  friend struct TensorAccess;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  std::weak_ptr<detail::TapeState> tape_;
  std::size_t node_ = detail::kNoNode;
};

namespace detail {

using BackwardFn = std::function<std::vector<Tensor>(
    const std::vector<Tensor>& inputs, const Tensor& output, const Tensor& grad,
    const std::vector<bool>& needs)>;
using RecomputeFn = std::function<Tensor(const std::vector<Tensor>& inputs)>;

struct Node {
  std::string_view op;
  std::vector<Tensor> inputs;
  std::vector<std::size_t> parents;
  Tensor output;
  BackwardFn backward;
  RecomputeFn recompute;
};

// Nodes live in a deque so references stay valid while backward appends.
struct TapeState {
  std::deque<Node> nodes;
  int paused = 0;
  bool recording() const noexcept { return paused == 0; }
};

}  // namespace detail

struct TensorAccess {
  static std::shared_ptr<detail::TapeState> tape(const Tensor& t) {
    return t.node_ == detail::kNoNode ? nullptr : t.tape_.lock();
  }
  static Tensor attach(Tensor t, const std::shared_ptr<detail::TapeState>& tape, std::size_t id) {
    t.tape_ = tape;
    t.node_ = id;
    return t;
  }
  static Tensor wrap(Shape shape, std::shared_ptr<const std::vector<double>> data) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }
};

namespace detail {

inline void check_finite(std::string_view op, const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": produced a non-finite value");
  }
}

/// Builds the result of an operation and, when any operand is recorded on a
/// live, non-paused tape, appends the corresponding node.
inline Tensor finish(std::string_view op, Shape shape, std::vector<double> values,
                     std::vector<Tensor> inputs, BackwardFn backward, RecomputeFn recompute) {
  check_finite(op, values);
  Tensor out = TensorAccess::wrap(std::move(shape),
                                  std::make_shared<const std::vector<double>>(std::move(values)));
  std::shared_ptr<TapeState> tape;
  for (const auto& in : inputs) {
    auto t = TensorAccess::tape(in);
    if (!t) continue;
    if (!tape) {
      tape = std::move(t);
    } else if (t != tape) {
      throw std::logic_error(std::string(op) + ": operands recorded on different tapes");
    }
  }
  if (!tape || !tape->recording()) return out;

  Node node;
  node.op = op;
  node.parents.reserve(inputs.size());
  for (const auto& in : inputs) {
    node.parents.push_back(TensorAccess::tape(in) == tape ? in.node_id() : kNoNode);
  }
  node.inputs = std::move(inputs);
  node.backward = std::move(backward);
  node.recompute = std::move(recompute);
  const std::size_t id = tape->nodes.size();
  out = TensorAccess::attach(std::move(out), tape, id);
  node.output = out;
  tape->nodes.push_back(std::move(node));
  return out;
}

}  // namespace detail

/// Append-only computation record. Node ids are assigned in creation order,
/// so every parent id precedes its children.
class Tape {
 public:
  Tape() : state_(std::make_shared<detail::TapeState>()) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Registers `t` as a leaf of this record and returns the recorded alias.
  Tensor watch(const Tensor& t) {
    detail::Node node;
    node.op = "leaf";
    const std::size_t id = state_->nodes.size();
    Tensor out = TensorAccess::attach(t.detach(), state_, id);
    node.output = out;
    state_->nodes.push_back(std::move(node));
    return out;
  }

  std::size_t size() const noexcept { return state_->nodes.size(); }
  std::string_view op(std::size_t id) const { return state_->nodes.at(id).op; }
  const std::vector<std::size_t>& parents(std::size_t id) const {
    return state_->nodes.at(id).parents;
  }
  const Tensor& value(std::size_t id) const { return state_->nodes.at(id).output; }

  /// Recomputes every node from the leaves and the saved constants.
  std::vector<Tensor> replay() const {
    std::vector<Tensor> values;
    values.reserve(state_->nodes.size());
    for (const auto& node : state_->nodes) {
      if (!node.recompute) {
        values.push_back(node.output.detach());
        continue;
      }
      std::vector<Tensor> ins;
      ins.reserve(node.inputs.size());
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        ins.push_back(node.parents[i] == detail::kNoNode ? node.inputs[i].detach()
                                                         : values[node.parents[i]]);
      }
      values.push_back(node.recompute(ins).detach());
    }
    return values;
  }

  /// Suspends recording while alive.
  class Pause {
   public:
    explicit Pause(std::shared_ptr<detail::TapeState> s) : s_(std::move(s)) {
      if (s_) ++s_->paused;
    }
    ~Pause() {
      if (s_) --s_->paused;
    }
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    std::shared_ptr<detail::TapeState> s_;
  };

  Pause pause() const { return Pause(state_); }

 private:
  std::shared_ptr<detail::TapeState> state_;
};

}  // namespace camels
