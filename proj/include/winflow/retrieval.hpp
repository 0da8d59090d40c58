#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "winflow/env.hpp"
#include "winflow/mlp.hpp"
#include "winflow/replay.hpp"
#include "winflow/rng.hpp"

namespace winflow {

// Inverse-dynamics network: predicts the parent state from the current
// state and the action that led to it. Input is (state, action)
// concatenated, output is a raw state-shaped vector (no projection back
// onto the state manifold).
struct RetrievalNet {
  MlpParams params;

  int input_state_dim() const { return params.spec.input_dim - kActionDim; }
};

inline RetrievalNet make_retrieval_net(int state_dim_in, const std::vector<int>& hidden,
                                       Activation act, Rng& rng) {
  MlpSpec spec;
  spec.input_dim = state_dim_in + kActionDim;
  spec.hidden_dims = hidden;
  spec.output_dim = state_dim_in;
  spec.activation = act;
  return RetrievalNet{init_params(spec, rng)};
}

namespace detail {

inline std::vector<double> concat_state_action(std::span<const double> state, const Action& a) {
  std::vector<double> in;
  in.reserve(state.size() + kActionDim);
  in.insert(in.end(), state.begin(), state.end());
  in.push_back(a.values[0]);
  in.push_back(a.values[1]);
  return in;
}

}  // namespace detail

inline std::vector<double> predict_parent_values(const RetrievalNet& net,
                                                 std::span<const double> state, const Action& a) {
  if (state.size() != static_cast<std::size_t>(net.input_state_dim()))
    throw std::invalid_argument("predict_parent: state width does not match network");
  return mlp_forward(net.params, detail::concat_state_action(state, a));
}

inline EnvState predict_parent(const RetrievalNet& net, const EnvState& s, const Action& a_prev) {
  EnvState out;
  out.layout = s.layout;
  out.values = predict_parent_values(net, s.values, a_prev);
  return out;
}

struct RetrievalLossResult {
  double loss = 0.0;
  std::vector<double> grad;
};

// Mean squared parent-prediction error, averaged over batch and state
// dimensions, with its gradient w.r.t. the network parameters.
inline RetrievalLossResult retrieval_loss(const RetrievalNet& net,
                                          std::span<const Transition> batch) {
  if (batch.empty()) throw std::invalid_argument("retrieval_loss: batch must be non-empty");
  const auto n = static_cast<double>(batch.size());
  const auto dim = static_cast<double>(net.params.spec.output_dim);

  RetrievalLossResult out;
  out.grad.assign(net.params.values.size(), 0.0);
  std::vector<double> upstream(net.params.spec.output_dim);
  for (const Transition& tr : batch) {
    const auto input = detail::concat_state_action(tr.s.values, tr.a_prev);
    const MlpCache cache = mlp_forward_cached(net.params, input);
    const std::vector<double>& pred = cache.output();
    if (tr.s_prev.values.size() != pred.size())
      throw std::invalid_argument("retrieval_loss: parent width mismatch");
    for (std::size_t j = 0; j < pred.size(); ++j) {
      const double e = pred[j] - tr.s_prev.values[j];
      out.loss += e * e;
      upstream[j] = 2.0 * e;
    }
    mlp_backward_accum(net.params, cache, upstream, 1.0 / (n * dim), out.grad);
  }
  out.loss /= n * dim;
  return out;
}

struct PretrainResult {
  std::vector<double> epoch_losses;  // mean training loss per epoch
};

// Minibatch Adam over a fixed dataset; the vanilla pre-trained baseline
// path. Epoch order is reshuffled from the given stream.
inline PretrainResult pretrain_retrieval(RetrievalNet& net, std::span<const Transition> dataset,
                                         int epochs, double lr, int batch_size, Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("pretrain_retrieval: dataset is empty");
  if (epochs < 0) throw std::invalid_argument("pretrain_retrieval: epochs must be >= 0");
  AdamState adam = make_adam_state(net.params);
  PretrainResult result;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<Transition> batch;
  for (int e = 0; e < epochs; ++e) {
    // Fisher-Yates on the index array.
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(dataset[order[i]]);
      const RetrievalLossResult r = retrieval_loss(net, batch);
      adam_step(net.params, adam, r.grad, lr);
      epoch_loss += r.loss;
      ++n_batches;
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(n_batches));
  }
  return result;
}

}  // namespace winflow
