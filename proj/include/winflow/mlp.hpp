#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "winflow/rng.hpp"
#include "winflow/util.hpp"

namespace winflow {

enum class Activation { relu, tanh };

// Shape of a dense feed-forward network. Hidden layers use `activation`,
// the output layer is identity.
struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden_dims;
  int output_dim = 1;
  Activation activation = Activation::relu;

  void validate() const {
    if (input_dim < 1 || output_dim < 1)
      throw std::invalid_argument("MlpSpec: dims must be >= 1");
    if (hidden_dims.empty())
      throw std::invalid_argument("MlpSpec: at least one hidden layer required");
    for (int h : hidden_dims)
      if (h < 1) throw std::invalid_argument("MlpSpec: hidden dims must be >= 1");
  }

  // [input, hidden..., output]
  std::vector<int> layer_dims() const {
    std::vector<int> dims;
    dims.reserve(hidden_dims.size() + 2);
    dims.push_back(input_dim);
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(output_dim);
    return dims;
  }

  // Sum over layers of (fan_in + 1) * fan_out.
  std::size_t param_count() const {
    const auto dims = layer_dims();
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
      n += (static_cast<std::size_t>(dims[l]) + 1) * static_cast<std::size_t>(dims[l + 1]);
    return n;
  }

  bool operator==(const MlpSpec&) const = default;
};

// Flat parameter vector for an MlpSpec. Per layer: weights (row-major,
// w[out * fan_in + in]) followed by biases.
struct MlpParams {
  MlpSpec spec;
  std::vector<double> values;
};

inline MlpParams make_zero_params(const MlpSpec& spec) {
  spec.validate();
  return MlpParams{spec, std::vector<double>(spec.param_count(), 0.0)};
}

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
inline MlpParams init_params(const MlpSpec& spec, Rng& rng) {
  MlpParams p = make_zero_params(spec);
  const auto dims = spec.layer_dims();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto fan_in = static_cast<std::size_t>(dims[l]);
    const auto fan_out = static_cast<std::size_t>(dims[l + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < fan_in * fan_out; ++i)
      p.values[off + i] = rng.uniform(-bound, bound);
    off += fan_in * fan_out + fan_out;  // biases stay zero
  }
  return p;
}

namespace detail {

inline void check_params(const MlpParams& p) {
  if (p.values.size() != p.spec.param_count())
    throw std::invalid_argument("MlpParams: length " + std::to_string(p.values.size()) +
                                " does not match spec parameter count " +
                                std::to_string(p.spec.param_count()));
}

inline double activate(double z, Activation a) {
  return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

inline double activate_grad(double pre, Activation a) {
  if (a == Activation::relu) return pre > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(pre);
  return 1.0 - t * t;
}

}  // namespace detail

// Forward intermediates kept for the backward pass.
struct MlpCache {
  std::vector<std::vector<double>> act;  // act[0] = input, act[L] = output
  std::vector<std::vector<double>> pre;  // pre[l] = pre-activation of layer l+1
  const std::vector<double>& output() const { return act.back(); }
};

inline MlpCache mlp_forward_cached(const MlpParams& params, std::span<const double> input) {
  detail::check_params(params);
  const auto dims = params.spec.layer_dims();
  if (input.size() != static_cast<std::size_t>(dims.front()))
    throw std::invalid_argument("mlp_forward: input length " + std::to_string(input.size()) +
                                " != input_dim " + std::to_string(dims.front()));
  MlpCache cache;
  cache.act.resize(dims.size());
  cache.pre.resize(dims.size() - 1);
  cache.act[0].assign(input.begin(), input.end());

  std::size_t off = 0;
  const std::size_t n_layers = dims.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto fan_in = static_cast<std::size_t>(dims[l]);
    const auto fan_out = static_cast<std::size_t>(dims[l + 1]);
    const double* w = params.values.data() + off;
    const double* b = w + fan_in * fan_out;
    const std::vector<double>& x = cache.act[l];

    std::vector<double>& z = cache.pre[l];
    z.resize(fan_out);
    for (std::size_t o = 0; o < fan_out; ++o) {
      double acc = b[o];
      const double* wo = w + o * fan_in;
      for (std::size_t i = 0; i < fan_in; ++i) acc += wo[i] * x[i];
      z[o] = acc;
    }

    std::vector<double>& y = cache.act[l + 1];
    y.resize(fan_out);
    const bool last = (l + 1 == n_layers);
    for (std::size_t o = 0; o < fan_out; ++o)
      y[o] = last ? z[o] : detail::activate(z[o], params.spec.activation);
    off += fan_in * fan_out + fan_out;
  }
  return cache;
}

inline std::vector<double> mlp_forward(const MlpParams& params, std::span<const double> input) {
  return mlp_forward_cached(params, input).output();
}

// Accumulates scale * d(output . upstream)/d(params) into grad_accum.
// Reuses a forward cache so loss code can weight many evaluation sites
// without re-running the forward pass.
inline void mlp_backward_accum(const MlpParams& params, const MlpCache& cache,
                               std::span<const double> upstream, double scale,
                               std::span<double> grad_accum) {
  detail::check_params(params);
  const auto dims = params.spec.layer_dims();
  if (upstream.size() != static_cast<std::size_t>(dims.back()))
    throw std::invalid_argument("mlp_backward: upstream length " +
                                std::to_string(upstream.size()) + " != output_dim " +
                                std::to_string(dims.back()));
  if (grad_accum.size() != params.values.size())
    throw std::invalid_argument("mlp_backward: gradient buffer length mismatch");

  // Parameter offsets per layer.
  const std::size_t n_layers = dims.size() - 1;
  std::vector<std::size_t> offsets(n_layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    offsets[l] = off;
    off += (static_cast<std::size_t>(dims[l]) + 1) * static_cast<std::size_t>(dims[l + 1]);
  }

  std::vector<double> delta(upstream.size());
  for (std::size_t o = 0; o < upstream.size(); ++o) delta[o] = scale * upstream[o];

  for (std::size_t l = n_layers; l-- > 0;) {
    const auto fan_in = static_cast<std::size_t>(dims[l]);
    const auto fan_out = static_cast<std::size_t>(dims[l + 1]);
    const double* w = params.values.data() + offsets[l];
    double* gw = grad_accum.data() + offsets[l];
    double* gb = gw + fan_in * fan_out;
    const std::vector<double>& x = cache.act[l];

    for (std::size_t o = 0; o < fan_out; ++o) {
      const double d = delta[o];
      gb[o] += d;
      double* gwo = gw + o * fan_in;
      for (std::size_t i = 0; i < fan_in; ++i) gwo[i] += d * x[i];
    }
    if (l == 0) break;

    std::vector<double> prev(fan_in, 0.0);
    for (std::size_t o = 0; o < fan_out; ++o) {
      const double d = delta[o];
      const double* wo = w + o * fan_in;
      for (std::size_t i = 0; i < fan_in; ++i) prev[i] += wo[i] * d;
    }
    for (std::size_t i = 0; i < fan_in; ++i)
      prev[i] *= detail::activate_grad(cache.pre[l - 1][i], params.spec.activation);
    delta = std::move(prev);
  }
}

// Gradient of (output . upstream) w.r.t. the flat parameter vector.
inline std::vector<double> mlp_backward(const MlpParams& params, std::span<const double> input,
                                        std::span<const double> upstream) {
  const MlpCache cache = mlp_forward_cached(params, input);
  std::vector<double> grad(params.values.size(), 0.0);
  mlp_backward_accum(params, cache, upstream, 1.0, grad);
  return grad;
}

// Adam optimizer moments for one parameter vector.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState make_adam_state(const MlpParams& params) {
  AdamState s;
  s.m.assign(params.values.size(), 0.0);
  s.v.assign(params.values.size(), 0.0);
  return s;
}

// One Adam update with bias-corrected moments. Aborts on non-finite
// gradient entries.
inline void adam_step(MlpParams& params, AdamState& state, std::span<const double> grad,
                      double lr) {
  detail::check_params(params);
  if (grad.size() != params.values.size())
    throw std::invalid_argument("adam_step: gradient length mismatch");
  if (state.m.size() != params.values.size() || state.v.size() != params.values.size())
    throw std::invalid_argument("adam_step: state length mismatch");
  if (lr <= 0.0) throw std::invalid_argument("adam_step: lr must be > 0");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i]))
      throw numeric_error("adam_step: non-finite gradient at index " + std::to_string(i));

  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params.values[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

}  // namespace winflow
