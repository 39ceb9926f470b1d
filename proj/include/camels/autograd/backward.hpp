#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "camels/autograd/ops.hpp"

namespace camels {

/// Ordered name -> tensor collection. Serves as a parameter set and as a
/// gradient map (same names, same shapes).
class NamedTensors {
 public:
  void insert(std::string name, Tensor t) {
    if (index_.count(name)) throw std::invalid_argument("NamedTensors: duplicate name " + name);
    index_.emplace(name, tensors_.size());
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(t));
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const Tensor& at(const std::string& name) const { return tensors_[position(name)]; }
  Tensor& at(const std::string& name) { return tensors_[position(name)]; }
  const Tensor& at(std::size_t i) const { return tensors_.at(i); }
  Tensor& at(std::size_t i) { return tensors_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }

  std::size_t position(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("NamedTensors: no entry named " + name);
    return it->second;
  }

  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<Tensor>& tensors() const noexcept { return tensors_; }
  std::size_t size() const noexcept { return tensors_.size(); }
  bool empty() const noexcept { return tensors_.empty(); }

  std::size_t total_numel() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  NamedTensors detached() const {
    NamedTensors out = *this;
    for (auto& t : out.tensors_) t = t.detach();
    return out;
  }

  NamedTensors watched(Tape& tape) const {
    NamedTensors out = *this;
    for (auto& t : out.tensors_) t = tape.watch(t);
    return out;
  }

  NamedTensors zeros_like() const {
    NamedTensors out = *this;
    for (auto& t : out.tensors_) t = Tensor::zeros(t.shape());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

using GradientMap = NamedTensors;

/// Reverse-mode gradients of a scalar `output` with respect to each of `wrt`.
///
/// Entries of `wrt` that the output does not depend on (or that are not in
/// the output's record at all) receive zero gradients. With
/// `build_higher_order` set, the returned gradients are recorded on the same
/// tape and can be differentiated again; otherwise they are detached.
inline std::vector<Tensor> gradients(const Tensor& output, const std::vector<Tensor>& wrt,
                                     bool build_higher_order = false) {
  if (output.numel() != 1) {
    throw ShapeError("backward: output must be a scalar, got shape " + shape_str(output.shape()));
  }
  std::vector<Tensor> result;
  result.reserve(wrt.size());
  auto zeros = [&] {
    result.clear();
    for (const auto& w : wrt) result.push_back(Tensor::zeros(w.shape()));
    return result;
  };

  auto tape = TensorAccess::tape(output);
  if (!tape) return zeros();
  const std::size_t out_id = output.node_id();

  std::size_t lo = out_id + 1;
  for (const auto& w : wrt) {
    if (TensorAccess::tape(w) == tape && w.node_id() <= out_id) lo = std::min(lo, w.node_id());
  }
  if (lo > out_id) return zeros();

  // A node is relevant when some requested tensor lies upstream of it.
  const std::size_t span = out_id - lo + 1;
  std::vector<char> relevant(span, 0);
  for (const auto& w : wrt) {
    if (TensorAccess::tape(w) == tape && w.node_id() <= out_id) relevant[w.node_id() - lo] = 1;
  }
  for (std::size_t id = lo; id <= out_id; ++id) {
    if (relevant[id - lo]) continue;
    for (std::size_t p : tape->nodes[id].parents) {
      if (p != detail::kNoNode && p >= lo && relevant[p - lo]) {
        relevant[id - lo] = 1;
        break;
      }
    }
  }
  if (!relevant[out_id - lo]) return zeros();

  std::vector<char> is_target(span, 0);
  for (const auto& w : wrt) {
    if (TensorAccess::tape(w) == tape && w.node_id() <= out_id) is_target[w.node_id() - lo] = 1;
  }

  std::optional<Tape::Pause> pause;
  if (!build_higher_order) pause.emplace(tape);

  std::vector<std::optional<Tensor>> grads(span);
  grads[out_id - lo] = Tensor::ones(output.shape());
  for (std::size_t id = out_id + 1; id-- > lo;) {
    auto& slot = grads[id - lo];
    if (!slot || !relevant[id - lo]) continue;
    const detail::Node& node = tape->nodes[id];
    if (node.backward) {
      std::vector<bool> needs(node.parents.size());
      bool any = false;
      for (std::size_t i = 0; i < needs.size(); ++i) {
        const std::size_t p = node.parents[i];
        needs[i] = p != detail::kNoNode && p >= lo && relevant[p - lo];
        any = any || needs[i];
      }
      if (any) {
        std::vector<Tensor> gs = node.backward(node.inputs, node.output, *slot, needs);
        for (std::size_t i = 0; i < needs.size(); ++i) {
          if (!needs[i]) continue;
          auto& dst = grads[node.parents[i] - lo];
          dst = dst ? add(*dst, gs[i]) : gs[i];
        }
      }
    }
    if (!is_target[id - lo]) slot.reset();
  }

  for (const auto& w : wrt) {
    if (TensorAccess::tape(w) == tape && w.node_id() <= out_id && grads[w.node_id() - lo]) {
      result.push_back(*grads[w.node_id() - lo]);
    } else {
      result.push_back(Tensor::zeros(w.shape()));
    }
  }
  return result;
}

inline Tensor gradient(const Tensor& output, const Tensor& wrt, bool build_higher_order = false) {
  return gradients(output, {wrt}, build_higher_order).front();
}

/// Gradients for every entry of a parameter set, keyed by the same names.
inline GradientMap backward(const Tensor& output, const NamedTensors& params,
                            bool build_higher_order = false) {
  auto gs = gradients(output, params.tensors(), build_higher_order);
  GradientMap out;
  for (std::size_t i = 0; i < params.size(); ++i) out.insert(params.name(i), std::move(gs[i]));
  return out;
}

inline double squared_norm(const NamedTensors& ts) {
  double s = 0.0;
  for (const auto& t : ts.tensors())
    for (double v : t.values()) s += v * v;
  return s;
}

}  // namespace camels
