#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "winflow/env.hpp"
#include "winflow/mlp.hpp"
#include "winflow/retrieval.hpp"
#include "winflow/rng.hpp"

namespace winflow {

// Flow network over (state, action); the scalar output is interpreted as
// a log-flow.
struct FlowNet {
  MlpParams params;

  int input_state_dim() const { return params.spec.input_dim - kActionDim; }
};

inline FlowNet make_flow_net(int state_dim_in, const std::vector<int>& hidden, Activation act,
                             Rng& rng) {
  MlpSpec spec;
  spec.input_dim = state_dim_in + kActionDim;
  spec.hidden_dims = hidden;
  spec.output_dim = 1;
  spec.activation = act;
  return FlowNet{init_params(spec, rng)};
}

struct FlowLossConfig {
  int K = 20;           // actions per state for the in/outflow sums
  double lambda = 4.0;  // reward scaling factor
  double epsilon = 1.0; // log stabilizer
  double mu_action_space = 4.0;  // measure of the [-1,1]^2 action box
  double tau_soft = 1.0;         // softmax temperature for action sampling
  double reward_shift = 0.0;     // optional shift applied to rewards in the outflow term
  int M = 100;                   // candidate actions per environment step

  void validate() const {
    if (K < 1) throw std::invalid_argument("FlowLossConfig: K must be >= 1");
    if (M < 1) throw std::invalid_argument("FlowLossConfig: M must be >= 1");
    if (!(lambda > 0.0)) throw std::invalid_argument("FlowLossConfig: lambda must be > 0");
    if (!(epsilon > 0.0)) throw std::invalid_argument("FlowLossConfig: epsilon must be > 0");
    if (!(tau_soft > 0.0)) throw std::invalid_argument("FlowLossConfig: tau_soft must be > 0");
  }
};

// Floor applied when a log argument in the outflow term is non-positive
// (possible because rewards can be negative).
constexpr double kOutflowFloor = 1e-8;

inline Action uniform_action(Rng& rng) {
  Action a;
  a.values[0] = rng.uniform(-1.0, 1.0);
  a.values[1] = rng.uniform(-1.0, 1.0);
  return a;
}

inline double log_flow(const FlowNet& net, std::span<const double> state, const Action& a) {
  return mlp_forward(net.params, detail::concat_state_action(state, a))[0];
}

namespace detail {

// log(offset + sum_k exp(terms[k])) with overflow guarding, plus the
// derivative w.r.t. each term. When the argument is <= 0 the value is
// clamped to log(kOutflowFloor) and the derivatives vanish.
struct OffsetLogSumExp {
  double value = 0.0;
  bool clamped = false;
  std::vector<double> dterms;
};

inline OffsetLogSumExp offset_log_sum_exp(double offset, std::span<const double> terms) {
  OffsetLogSumExp out;
  out.dterms.assign(terms.size(), 0.0);
  if (terms.empty()) {
    if (offset > 0.0) {
      out.value = std::log(offset);
    } else {
      out.value = std::log(kOutflowFloor);
      out.clamped = true;
    }
    return out;
  }
  const double mx = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  const double lse = mx + std::log(s);
  if (lse < 700.0) {
    const double sum_exp = std::exp(lse);
    const double arg = offset + sum_exp;
    if (arg > 0.0) {
      out.value = std::log(arg);
      const double scale = sum_exp / arg;
      for (std::size_t k = 0; k < terms.size(); ++k)
        out.dterms[k] = std::exp(terms[k] - lse) * scale;
    } else {
      out.value = std::log(kOutflowFloor);
      out.clamped = true;
    }
    return out;
  }
  // Sum dominates; fold the offset in relative terms.
  const double rel = offset * std::exp(-lse);
  if (rel <= -1.0) {
    out.value = std::log(kOutflowFloor);
    out.clamped = true;
    return out;
  }
  out.value = lse + std::log1p(rel);
  for (std::size_t k = 0; k < terms.size(); ++k)
    out.dterms[k] = std::exp(terms[k] - lse) / (1.0 + rel);
  return out;
}

}  // namespace detail

// Softmax distribution over M uniformly sampled candidate actions,
// weighted by their log-flows. Higher flow, higher probability.
struct ActionProbabilityBuffer {
  std::vector<Action> actions;
  std::vector<double> probs;
};

inline ActionProbabilityBuffer action_probability_buffer(const FlowNet& net, const EnvState& s,
                                                         int m, double tau_soft, Rng& rng) {
  if (m < 1) throw std::invalid_argument("action_probability_buffer: M must be >= 1");
  ActionProbabilityBuffer buf;
  buf.actions.reserve(static_cast<std::size_t>(m));
  std::vector<double> flows(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    buf.actions.push_back(uniform_action(rng));
    flows[static_cast<std::size_t>(i)] = log_flow(net, s.values, buf.actions.back());
  }
  const double mx = *std::max_element(flows.begin(), flows.end());
  buf.probs.resize(flows.size());
  double total = 0.0;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    buf.probs[i] = std::exp((flows[i] - mx) / tau_soft);
    total += buf.probs[i];
  }
  for (double& p : buf.probs) p /= total;
  return buf;
}

// Categorical draw from the buffer.
inline Action sample_action(const ActionProbabilityBuffer& buf, Rng& rng) {
  if (buf.actions.empty() || buf.actions.size() != buf.probs.size())
    throw std::invalid_argument("sample_action: invalid buffer");
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < buf.probs.size(); ++i) {
    cum += buf.probs[i];
    if (u < cum) return buf.actions[i];
  }
  return buf.actions.back();
}

// log(eps + sum_k exp(F(G(s, a_k), a_k))). Retrieval outputs are treated
// as constants: no gradient flows into the retrieval network here.
inline double inflow_estimate(const FlowNet& net, const RetrievalNet& retrieval, const EnvState& s,
                              std::span<const Action> actions, const FlowLossConfig& cfg) {
  std::vector<double> terms;
  terms.reserve(actions.size());
  for (const Action& a : actions) {
    const auto parent = predict_parent_values(retrieval, s.values, a);
    terms.push_back(log_flow(net, parent, a));
  }
  return detail::offset_log_sum_exp(cfg.epsilon, terms).value;
}

// log(eps + lambda * r + sum_k exp(F(s, a_k))). For terminal states the
// onward-flow sum is masked out. A non-positive log argument is clamped
// to kOutflowFloor; `clamped` reports the event when provided.
inline double outflow_estimate(const FlowNet& net, const EnvState& s, double r,
                               std::span<const Action> actions, const FlowLossConfig& cfg,
                               bool terminal = false, bool* clamped = nullptr) {
  std::vector<double> terms;
  if (!terminal) {
    terms.reserve(actions.size());
    for (const Action& a : actions) terms.push_back(log_flow(net, s.values, a));
  }
  const double offset = cfg.epsilon + cfg.lambda * (r + cfg.reward_shift);
  const auto res = detail::offset_log_sum_exp(offset, terms);
  if (clamped) *clamped = res.clamped;
  return res.value;
}

// One loss term per sampled transition's state.
struct FlowBatchItem {
  EnvState s;
  double r = 0.0;
  bool terminal = false;
};

struct FlowLossResult {
  double loss = 0.0;
  std::vector<double> grad;
  std::uint64_t clamped_events = 0;
};

// Continuous flow-matching loss: sum over the batch of
// (inflow - outflow)^2 in the log domain, with the gradient w.r.t. the
// flow parameters through both evaluation sites. K actions are sampled
// uniformly per state and shared between the inflow and outflow sums.
inline FlowLossResult flow_matching_loss(const FlowNet& net, const RetrievalNet& retrieval,
                                         std::span<const FlowBatchItem> batch,
                                         const FlowLossConfig& cfg, Rng& rng) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("flow_matching_loss: batch must be non-empty");

  FlowLossResult out;
  out.grad.assign(net.params.values.size(), 0.0);

  const auto k_count = static_cast<std::size_t>(cfg.K);
  std::vector<Action> actions(k_count);
  std::vector<MlpCache> in_caches(k_count);
  std::vector<MlpCache> out_caches(k_count);
  std::vector<double> in_terms(k_count), out_terms(k_count);
  const double upstream_one[1] = {1.0};

  for (const FlowBatchItem& item : batch) {
    for (std::size_t k = 0; k < k_count; ++k) actions[k] = uniform_action(rng);

    for (std::size_t k = 0; k < k_count; ++k) {
      const auto parent = predict_parent_values(retrieval, item.s.values, actions[k]);
      in_caches[k] = mlp_forward_cached(net.params, detail::concat_state_action(parent, actions[k]));
      in_terms[k] = in_caches[k].output()[0];
    }
    const auto inflow = detail::offset_log_sum_exp(cfg.epsilon, in_terms);

    detail::OffsetLogSumExp outflow;
    const double offset = cfg.epsilon + cfg.lambda * (item.r + cfg.reward_shift);
    if (item.terminal) {
      outflow = detail::offset_log_sum_exp(offset, {});
    } else {
      for (std::size_t k = 0; k < k_count; ++k) {
        out_caches[k] =
            mlp_forward_cached(net.params, detail::concat_state_action(item.s.values, actions[k]));
        out_terms[k] = out_caches[k].output()[0];
      }
      outflow = detail::offset_log_sum_exp(offset, out_terms);
    }
    if (outflow.clamped) ++out.clamped_events;

    const double d = inflow.value - outflow.value;
    out.loss += d * d;
    if (d == 0.0) continue;

    for (std::size_t k = 0; k < k_count; ++k)
      if (inflow.dterms[k] != 0.0)
        mlp_backward_accum(net.params, in_caches[k], upstream_one, 2.0 * d * inflow.dterms[k],
                           out.grad);
    if (!item.terminal)
      for (std::size_t k = 0; k < k_count; ++k)
        if (outflow.dterms[k] != 0.0)
          mlp_backward_accum(net.params, out_caches[k], upstream_one, -2.0 * d * outflow.dterms[k],
                             out.grad);
  }

  if (!std::isfinite(out.loss)) {
    std::string dump = "flow_matching_loss: non-finite loss; first state =";
    for (double v : batch.front().s.values) dump += " " + std::to_string(v);
    throw numeric_error(dump);
  }
  return out;
}

}  // namespace winflow
