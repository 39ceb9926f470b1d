#pragma once

#include <cmath>
#include <string>

#include "camels/autograd/backward.hpp"

namespace camels {

namespace detail {
inline void require_finite(const std::string& what, const Tensor& t) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw NumericError(what + " is non-finite");
  }
}
}  // namespace detail

/// theta' = theta - lr * g for every parameter that has a gradient entry.
/// With `differentiable` set, recorded inputs stay connected to their tape.
inline NamedTensors sgd_step(const NamedTensors& params, const GradientMap& grads, double lr,
                             bool differentiable = false) {
  NamedTensors out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.name(i);
    const Tensor& p = params.at(i);
    if (!grads.contains(name)) {
      out.insert(name, differentiable ? p : p.detach());
      continue;
    }
    const Tensor& g = grads.at(name);
    detail::require_finite("sgd_step: gradient for " + name, g);
    if (g.shape() != p.shape()) {
      throw ShapeError("sgd_step: gradient for " + name + " has shape " + shape_str(g.shape()) +
                       ", parameter has " + shape_str(p.shape()));
    }
    if (lr == 0.0) {
      out.insert(name, differentiable ? p : p.detach());
    } else if (differentiable) {
      out.insert(name, sub(p, scale(g, lr)));
    } else {
      out.insert(name, sub(p.detach(), scale(g.detach(), lr)));
    }
  }
  return out;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments per parameter plus the step counter.
struct AdamState {
  AdamConfig config;
  NamedTensors m;
  NamedTensors v;
  long step = 0;

  static AdamState fresh(const NamedTensors& params, AdamConfig cfg) {
    return AdamState{cfg, params.zeros_like(), params.zeros_like(), 0};
  }
};

/// One bias-corrected Adam update. Parameters without a gradient entry are
/// treated as having a zero gradient.
inline NamedTensors adam_step(const NamedTensors& params, const GradientMap& grads, AdamState& state) {
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state does not match params");
  const auto& c = state.config;
  const long t = state.step + 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  NamedTensors out, m_out, v_out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.name(i);
    const Tensor& p = params.at(i);
    const Tensor& m = state.m.at(i);
    const Tensor& v = state.v.at(i);
    if (m.shape() != p.shape()) throw ShapeError("adam_step: moment shape mismatch for " + name);
    const bool has_grad = grads.contains(name);
    const Tensor* g = has_grad ? &grads.at(name) : nullptr;
    if (g && g->shape() != p.shape()) throw ShapeError("adam_step: gradient shape mismatch for " + name);
    const std::size_t n = p.numel();
    std::vector<double> pn(n), mn(n), vn(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double gj = g ? (*g)[j] : 0.0;
      mn[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
      vn[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
      const double mhat = mn[j] / bc1;
      const double vhat = vn[j] / bc2;
      pn[j] = p[j] - c.lr * mhat / (std::sqrt(vhat) + c.eps);
      if (!std::isfinite(pn[j]) || !std::isfinite(vn[j])) {
        throw NumericError("adam_step: non-finite update for " + name);
      }
    }
    out.insert(name, Tensor(p.shape(), std::move(pn)));
    m_out.insert(name, Tensor(p.shape(), std::move(mn)));
    v_out.insert(name, Tensor(p.shape(), std::move(vn)));
  }
  state.m = std::move(m_out);
  state.v = std::move(v_out);
  state.step = t;
  return out;
}

}  // namespace camels
