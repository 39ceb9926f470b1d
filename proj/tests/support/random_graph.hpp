#pragma once

#include <random>
#include <vector>

#include "camels/autograd/ops.hpp"

namespace camels::testing {

/// A random composition of primitives over a handful of leaf tensors,
/// reproducible from its seed. Used as a gradient-check workload.
class RandomGraph {
 public:
  enum class Step {
    kMatmul, kMatmulT, kBias, kTanh, kSigmoid, kSoftplus, kGelu, kExp, kLog, kPow, kLayerNorm,
    kSoftmax, kLogSoftmax, kMul, kDiv, kSub, kConcat, kSlice, kPad, kGather, kTranspose,
    kCenterRows, kReshape, kBroadcast, kCount
  };
  enum class Head { kWeightedSum, kKl, kPickMean };

  explicit RandomGraph(unsigned seed) : rng_(seed) {
    rows_ = dim(2, 4);
    cols_ = dim(2, 4);
    leaves_.push_back(random({rows_, cols_}));
    std::size_t r = rows_, c = cols_;
    const int n_steps = static_cast<int>(dim(2, 5));
    for (int s = 0; s < n_steps; ++s) {
      auto step = static_cast<Step>(std::uniform_int_distribution<int>(0, int(Step::kCount) - 1)(rng_));
      Plan p{step, leaves_.size(), 0, 0, {}};
      switch (step) {
        case Step::kMatmul: p.a = dim(2, 4); leaves_.push_back(random({c, p.a})); c = p.a; break;
        case Step::kMatmulT: p.a = dim(2, 4); leaves_.push_back(random({p.a, c})); c = p.a; break;
        case Step::kBias: leaves_.push_back(random({c})); break;
        case Step::kLayerNorm:
          leaves_.push_back(random({c}));
          leaves_.push_back(random({c}));
          break;
        case Step::kMul: case Step::kDiv: case Step::kSub: leaves_.push_back(random({r, c})); break;
        case Step::kConcat: p.a = dim(1, 3); leaves_.push_back(random({r, p.a})); c += p.a; break;
        case Step::kSlice:
          if (c < 2) { p.step = Step::kTanh; break; }
          p.b = dim(1, c - 1);
          p.a = dim(0, c - p.b);
          c = p.b;
          break;
        case Step::kPad: p.a = dim(0, 2); p.b = c + p.a + dim(0, 2); c = p.b; break;
        case Step::kGather:
          p.a = dim(1, 4);
          for (std::size_t i = 0; i < p.a; ++i) p.idx.push_back(dim(0, r - 1));
          r = p.a;
          break;
        case Step::kTranspose: std::swap(r, c); break;
        case Step::kReshape: p.a = r; p.b = c; std::swap(r, c); break;
        case Step::kBroadcast: p.a = dim(2, 3); break;
        default: break;
      }
      if (p.step == Step::kBroadcast) {
        // [r, c] -> sum over rows -> broadcast to [p.a, c]
        r = p.a;
      }
      plan_.push_back(p);
    }
    rows_out_ = r;
    cols_out_ = c;
    head_ = static_cast<Head>(std::uniform_int_distribution<int>(0, 2)(rng_));
    head_leaf_ = leaves_.size();
    if (head_ == Head::kWeightedSum) {
      weights_ = random({r, c});
    } else if (head_ == Head::kKl) {
      leaves_.push_back(random({r, c}));
    } else {
      for (std::size_t i = 0; i < r; ++i) cols_pick_.push_back(dim(0, c - 1));
    }
  }

  const std::vector<Tensor>& leaves() const { return leaves_; }

  Tensor evaluate(const std::vector<Tensor>& in) const {
    Tensor x = in[0];
    for (const auto& p : plan_) {
      const std::size_t l = p.leaf;
      switch (p.step) {
        case Step::kMatmul: x = matmul(x, in[l]); break;
        case Step::kMatmulT: x = matmul(x, in[l], false, true); break;
        case Step::kBias: x = add(x, in[l]); break;
        case Step::kTanh: x = tanh(x); break;
        case Step::kSigmoid: x = sigmoid(x); break;
        case Step::kSoftplus: x = softplus(x); break;
        case Step::kGelu: x = gelu(x); break;
        case Step::kExp: x = exp(scale(x, 0.3)); break;
        case Step::kLog: x = log(add_scalar(softplus(x), 0.5)); break;
        case Step::kPow: x = pow_scalar(add_scalar(mul(x, x), 0.5), 1.5); break;
        case Step::kLayerNorm: x = layer_norm(x, in[l], in[l + 1]); break;
        case Step::kSoftmax: x = softmax(x); break;
        case Step::kLogSoftmax: x = log_softmax(x); break;
        case Step::kMul: x = mul(x, in[l]); break;
        case Step::kDiv: x = div(x, add_scalar(softplus(in[l]), 0.5)); break;
        case Step::kSub: x = sub(in[l], x); break;
        case Step::kConcat: x = concat({x, in[l]}, 1); break;
        case Step::kSlice: x = slice(x, 1, p.a, p.b); break;
        case Step::kPad: x = pad(x, 1, p.a, p.b); break;
        case Step::kGather: x = gather_rows(x, p.idx); break;
        case Step::kTranspose: x = transpose(x); break;
        case Step::kCenterRows: x = sub(x, scale(sum_last(x), 0.25)); break;
        case Step::kReshape: x = reshape(x, {p.b, p.a}); break;
        case Step::kBroadcast: x = broadcast_to(sum_to(x, {1, x.extent(1)}), {p.a, x.extent(1)}); break;
        default: break;
      }
    }
    switch (head_) {
      case Head::kWeightedSum: return sum(mul(x, weights_));
      case Head::kKl: return kl_divergence(x, in[head_leaf_], Reduction::kMean);
      case Head::kPickMean: return mean(pick(log_softmax(x), cols_pick_));
    }
    return sum(x);
  }

 private:
  struct Plan {
    Step step;
    std::size_t leaf;
    std::size_t a, b;
    std::vector<std::size_t> idx;
  };

  std::size_t dim(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  Tensor random(Shape s) {
    std::normal_distribution<double> n(0.0, 0.7);
    std::vector<double> v(shape_numel(s));
    for (auto& x : v) x = n(rng_);
    return Tensor(std::move(s), std::move(v));
  }

  std::mt19937 rng_;
  std::size_t rows_ = 0, cols_ = 0, rows_out_ = 0, cols_out_ = 0;
  std::vector<Tensor> leaves_;
  std::vector<Plan> plan_;
  Head head_ = Head::kWeightedSum;
  std::size_t head_leaf_ = 0;
  Tensor weights_;
  std::vector<std::size_t> cols_pick_;
};

}  // namespace camels::testing
