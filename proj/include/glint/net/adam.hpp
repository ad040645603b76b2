// Adam with bias correction. The step actually applied to the weights is
// returned so callers can take its norm.
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "glint/core.hpp"

namespace glint {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  AdamConfig config;
  std::vector<Scalar> m;
  std::vector<Scalar> v;  // running mean of squared gradients
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n, AdamConfig cfg = {}) : config(cfg), m(n, Scalar(0)), v(n, Scalar(0)) {}

  std::size_t size() const { return m.size(); }
};

namespace detail {

template <typename Scalar>
struct AdamCoefficients {
  Scalar b1, b2, one_minus_b1, one_minus_b2, lr, eps, correction1, correction2;
};

template <typename Scalar>
AdamCoefficients<Scalar> adam_coefficients(const AdamConfig& c, std::uint64_t t) {
  const double td = static_cast<double>(t);
  return {static_cast<Scalar>(c.beta1),
          static_cast<Scalar>(c.beta2),
          static_cast<Scalar>(1.0 - c.beta1),
          static_cast<Scalar>(1.0 - c.beta2),
          static_cast<Scalar>(c.lr),
          static_cast<Scalar>(c.eps),
          static_cast<Scalar>(1.0 - std::pow(c.beta1, td)),
          static_cast<Scalar>(1.0 - std::pow(c.beta2, td))};
}

template <typename Scalar>
Scalar adam_delta(const AdamCoefficients<Scalar>& k, Scalar m, Scalar v) {
  const Scalar m_hat = m / k.correction1;
  const Scalar v_hat = v / k.correction2;
  return -k.lr * m_hat / (std::sqrt(v_hat) + k.eps);
}

}  // namespace detail

/// Applies one update in place and returns delta = new - old.
template <typename Scalar>
std::vector<Scalar> adam_step(AdamState<Scalar>& state, std::span<Scalar> params, std::span<const Scalar> grad) {
  if (params.size() != state.size() || grad.size() != state.size())
    throw DimensionError("adam_step: parameter, gradient and moment sizes differ");
  ++state.t;
  const auto k = detail::adam_coefficients<Scalar>(state.config, state.t);
  std::vector<Scalar> delta(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Scalar g = grad[i];
    state.m[i] = k.b1 * state.m[i] + k.one_minus_b1 * g;
    state.v[i] = k.b2 * state.v[i] + k.one_minus_b2 * g * g;
    const Scalar before = params[i];
    params[i] = before + detail::adam_delta(k, state.m[i], state.v[i]);
    delta[i] = params[i] - before;
  }
  return delta;
}

/// Norm of the step Adam would take from the current moments if `grad`
/// were the next gradient. The state is left untouched.
template <typename Scalar>
double step_norm_for_patch(const AdamState<Scalar>& state, std::span<const Scalar> grad) {
  if (grad.size() != state.size()) throw DimensionError("step_norm_for_patch: gradient size differs from moments");
  const auto k = detail::adam_coefficients<Scalar>(state.config, state.t + 1);
  double sum = 0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const Scalar g = grad[i];
    const Scalar m = k.b1 * state.m[i] + k.one_minus_b1 * g;
    const Scalar v = k.b2 * state.v[i] + k.one_minus_b2 * g * g;
    const double d = detail::adam_delta(k, m, v);
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace glint
