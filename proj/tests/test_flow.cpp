#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "winflow/env.hpp"
#include "winflow/flow.hpp"
#include "winflow/retrieval.hpp"
#include "winflow/rng.hpp"

using namespace winflow;

namespace {

EnvState point_state(double x = 0.2, double y = -0.3, double gx = 5.0, double gy = 5.0) {
  EnvState s;
  s.layout = EnvKind::point_sparse;
  s.values = {x, y, gx, gy};
  return s;
}

// Flow net computing exactly c * a0 + d regardless of the state:
// hidden pair relu(a0), relu(-a0) recombined as c*(h0 - h1) + d.
FlowNet linear_in_action_net(double c, double d) {
  MlpSpec spec{6, {2}, 1};
  MlpParams p = make_zero_params(spec);
  p.values[4] = 1.0;        // h0 <- a0
  p.values[6 + 4] = -1.0;   // h1 <- -a0
  p.values[14] = c;         // out <- c*h0
  p.values[15] = -c;        // out <- -c*h1
  p.values[16] = d;         // out bias
  return FlowNet{p};
}

// Flow net with constant output `bias` for every input.
FlowNet constant_net(double bias) {
  MlpParams p = make_zero_params(MlpSpec{6, {4}, 1});
  p.values.back() = bias;
  return FlowNet{p};
}

RetrievalNet random_retrieval(Rng& rng) { return make_retrieval_net(4, {8}, Activation::relu, rng); }

FlowLossConfig cfg_k(int k, double lambda = 4.0, double eps = 1.0) {
  FlowLossConfig c;
  c.K = k;
  c.lambda = lambda;
  c.epsilon = eps;
  return c;
}

}  // namespace

TEST(ActionProbabilityBuffer, EqualFlowsGiveUniformProbs) {
  Rng rng(1);
  const FlowNet net = constant_net(0.7);
  const auto buf = action_probability_buffer(net, point_state(), 10, 1.0, rng);
  ASSERT_EQ(buf.probs.size(), 10u);
  double total = 0.0;
  for (double p : buf.probs) {
    EXPECT_NEAR(p, 0.1, 1e-12);
    total += p;
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(ActionProbabilityBuffer, HandComputedSoftmax) {
  // Replay the stream to learn the two candidate actions, then build a
  // net whose log-flows at those actions are exactly (ln 2, ln 1).
  const std::uint64_t seed = 99;
  Rng rehearse(seed);
  const Action a1 = uniform_action(rehearse);
  const Action a2 = uniform_action(rehearse);
  const double c = std::log(2.0) / (a1.values[0] - a2.values[0]);
  const double d = -c * a2.values[0];
  const FlowNet net = linear_in_action_net(c, d);

  Rng rng(seed);
  const auto buf = action_probability_buffer(net, point_state(), 2, 1.0, rng);
  ASSERT_EQ(buf.probs.size(), 2u);
  EXPECT_NEAR(buf.probs[0], 2.0 / 3.0, 1e-9);
  EXPECT_NEAR(buf.probs[1], 1.0 / 3.0, 1e-9);
}

TEST(ActionProbabilityBuffer, ArgmaxMatchesLogFlowArgmax) {
  Rng init(2);
  Rng rng(3);
  const FlowNet net = make_flow_net(4, {16}, Activation::relu, init);
  const EnvState s = point_state();
  const auto buf = action_probability_buffer(net, s, 100, 1.0, rng);
  std::size_t best_prob = 0, best_flow = 0;
  double bp = -1.0, bf = -1e300;
  for (std::size_t i = 0; i < buf.actions.size(); ++i) {
    if (buf.probs[i] > bp) { bp = buf.probs[i]; best_prob = i; }
    const double f = log_flow(net, s.values, buf.actions[i]);
    if (f > bf) { bf = f; best_flow = i; }
  }
  EXPECT_EQ(best_prob, best_flow);
}

TEST(ActionProbabilityBuffer, ProbsMatchNaiveSoftmaxOracle) {
  Rng init(4);
  const FlowNet net = make_flow_net(4, {12}, Activation::tanh, init);
  const EnvState s = point_state(1.0, 2.0, -3.0, 0.5);
  for (double tau : {0.5, 1.0, 2.0}) {
    Rng rng(5);
    const auto buf = action_probability_buffer(net, s, 32, tau, rng);
    double z = 0.0;
    std::vector<double> naive(buf.actions.size());
    for (std::size_t i = 0; i < buf.actions.size(); ++i) {
      naive[i] = std::exp(log_flow(net, s.values, buf.actions[i]) / tau);
      z += naive[i];
    }
    for (std::size_t i = 0; i < naive.size(); ++i) EXPECT_NEAR(buf.probs[i], naive[i] / z, 1e-9);
  }
}

TEST(ActionProbabilityBuffer, ShiftInvariance) {
  Rng init(6);
  FlowNet net = make_flow_net(4, {12}, Activation::relu, init);
  FlowNet shifted = net;
  shifted.params.values.back() += 13.5;  // output bias shifts every log-flow
  Rng r1(7), r2(7);
  const auto b1 = action_probability_buffer(net, point_state(), 64, 1.0, r1);
  const auto b2 = action_probability_buffer(shifted, point_state(), 64, 1.0, r2);
  for (std::size_t i = 0; i < b1.probs.size(); ++i) EXPECT_NEAR(b1.probs[i], b2.probs[i], 1e-12);
}

TEST(SampleAction, SingleCandidate) {
  ActionProbabilityBuffer buf;
  buf.actions = {Action{{0.3, 0.4}}};
  buf.probs = {1.0};
  Rng rng(8);
  const Action a = sample_action(buf, rng);
  EXPECT_EQ(a.values[0], 0.3);
  EXPECT_EQ(a.values[1], 0.4);
}

TEST(SampleAction, DegenerateProbsPickFirst) {
  ActionProbabilityBuffer buf;
  buf.actions = {Action{{1.0, 0.0}}, Action{{-1.0, 0.0}}};
  buf.probs = {1.0, 0.0};
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_action(buf, rng).values[0], 1.0);
}

TEST(SampleAction, BinomialConcentration) {
  ActionProbabilityBuffer buf;
  buf.actions = {Action{{1.0, 0.0}}, Action{{-1.0, 0.0}}};
  buf.probs = {0.75, 0.25};
  Rng rng(10);
  int first = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i)
    if (sample_action(buf, rng).values[0] == 1.0) ++first;
  EXPECT_NEAR(static_cast<double>(first) / n, 0.75, 0.01);
}

TEST(SampleAction, DeterministicPerSeed) {
  Rng init(11);
  const FlowNet net = make_flow_net(4, {8}, Activation::relu, init);
  Rng ra(12), rb(12);
  const auto buf_a = action_probability_buffer(net, point_state(), 16, 1.0, ra);
  const auto buf_b = action_probability_buffer(net, point_state(), 16, 1.0, rb);
  const Action a = sample_action(buf_a, ra);
  const Action b = sample_action(buf_b, rb);
  EXPECT_EQ(a.values[0], b.values[0]);
  EXPECT_EQ(a.values[1], b.values[1]);
}

TEST(InflowEstimate, HandEvaluatedSingleTerm) {
  // F == 0 everywhere, eps = 1, K = 1 -> log(1 + e^0) = log 2
  Rng rng(13);
  const FlowNet net = constant_net(0.0);
  const RetrievalNet g = random_retrieval(rng);
  const std::vector<Action> actions{Action{{0.2, 0.2}}};
  EXPECT_NEAR(inflow_estimate(net, g, point_state(), actions, cfg_k(1)), std::log(2.0), 1e-12);
}

TEST(InflowEstimate, EpsilonFloorForVanishingFlows) {
  Rng rng(14);
  const FlowNet net = constant_net(-100.0);
  const RetrievalNet g = random_retrieval(rng);
  const std::vector<Action> actions{Action{{0.1, 0.1}}, Action{{-0.5, 0.3}}};
  const double v = inflow_estimate(net, g, point_state(), actions, cfg_k(2));
  EXPECT_GE(v, 0.0);  // floored at log(eps) = 0, never -inf
  EXPECT_LT(v, 1e-10);
}

TEST(InflowEstimate, MatchesNaiveSummation) {
  Rng rng(15);
  const double c = 0.3;
  const FlowNet net = constant_net(c);
  const RetrievalNet g = random_retrieval(rng);
  const std::vector<Action> actions{Action{{0.4, -0.4}}, Action{{0.9, 0.1}}};
  const double naive = std::log(1.0 + 2.0 * std::exp(c));
  EXPECT_NEAR(inflow_estimate(net, g, point_state(), actions, cfg_k(2)), naive, 1e-10);
}

TEST(OutflowEstimate, MirrorsInflowAtZeroReward) {
  const FlowNet net = constant_net(0.0);
  const std::vector<Action> actions{Action{{0.0, 0.0}}};
  EXPECT_NEAR(outflow_estimate(net, point_state(), 0.0, actions, cfg_k(1, 1.0)), std::log(2.0),
              1e-12);
}

TEST(OutflowEstimate, HandEvaluatedWithReward) {
  const FlowNet net = constant_net(0.0);
  const std::vector<Action> actions{Action{{0.0, 0.0}}};
  EXPECT_NEAR(outflow_estimate(net, point_state(), 1.0, actions, cfg_k(1, 1.0)), std::log(3.0),
              1e-12);
}

TEST(OutflowEstimate, ClampsNonPositiveArgument) {
  const FlowNet net = constant_net(-100.0);
  const std::vector<Action> actions{Action{{0.0, 0.0}}};
  bool clamped = false;
  const double v =
      outflow_estimate(net, point_state(), -10.0, actions, cfg_k(1, 1.0), false, &clamped);
  EXPECT_TRUE(clamped);
  EXPECT_NEAR(v, std::log(1e-8), 1e-12);
}

TEST(OutflowEstimate, RewardScalingInvariance) {
  Rng init(16);
  const FlowNet net = make_flow_net(4, {8}, Activation::relu, init);
  const std::vector<Action> actions{Action{{0.2, -0.7}}, Action{{0.5, 0.5}}, Action{{-0.1, 0.9}}};
  for (double r : {0.0, 0.4, 2.5}) {
    for (double scale : {0.5, 2.0, 10.0}) {
      const double base = outflow_estimate(net, point_state(), r, actions, cfg_k(3, 4.0));
      const double scaled =
          outflow_estimate(net, point_state(), r * scale, actions, cfg_k(3, 4.0 / scale));
      EXPECT_NEAR(base, scaled, 1e-12);
    }
  }
}

TEST(OutflowEstimate, TerminalMasksOnwardFlow) {
  const FlowNet net = constant_net(5.0);
  const std::vector<Action> actions{Action{{0.0, 0.0}}, Action{{0.1, 0.1}}};
  const double v = outflow_estimate(net, point_state(), 0.5, actions, cfg_k(2, 2.0), true);
  EXPECT_NEAR(v, std::log(1.0 + 2.0 * 0.5), 1e-12);  // eps + lambda*r only
}

TEST(FlowMatchingLoss, StateBlindNetworkIsFixedPoint) {
  // F depends only on the action, so inflow == outflow exactly whenever
  // lambda * R == 0; the loss and gradient must vanish.
  const FlowNet net = linear_in_action_net(0.8, -0.2);
  Rng rng(17);
  const RetrievalNet g = random_retrieval(rng);
  std::vector<FlowBatchItem> batch;
  for (int i = 0; i < 8; ++i) batch.push_back({point_state(0.1 * i, -0.2 * i, 3.0, 4.0), 0.0, false});
  Rng loss_rng(18);
  const FlowLossResult res = flow_matching_loss(net, g, batch, cfg_k(5), loss_rng);
  EXPECT_LE(res.loss, 1e-12);
  for (double gr : res.grad) EXPECT_LE(std::abs(gr), 1e-12);
}

TEST(FlowMatchingLoss, HandEvaluatedSingleState) {
  // inflow = log 2, outflow = log 3 -> loss = (log 2 - log 3)^2
  const FlowNet net = constant_net(0.0);
  Rng rng(19);
  const RetrievalNet g = random_retrieval(rng);
  const std::vector<FlowBatchItem> batch{{point_state(), 1.0, false}};
  Rng loss_rng(20);
  const FlowLossResult res = flow_matching_loss(net, g, batch, cfg_k(1, 1.0), loss_rng);
  const double want = std::pow(std::log(2.0 / 3.0), 2.0);
  EXPECT_NEAR(res.loss, want, 1e-12);
  EXPECT_NEAR(res.loss, 0.16440, 1e-5);
}

TEST(FlowMatchingLoss, GradientMatchesFiniteDifferences) {
  Rng init(21);
  MlpSpec spec{6, {8}, 1};
  spec.activation = Activation::tanh;
  FlowNet net{init_params(spec, init)};
  RetrievalNet g = make_retrieval_net(4, {8}, Activation::tanh, init);

  std::vector<FlowBatchItem> batch;
  Rng state_rng(22);
  for (int i = 0; i < 3; ++i)
    batch.push_back({point_state(state_rng.uniform(-1, 1), state_rng.uniform(-1, 1),
                                 state_rng.uniform(-1, 1), state_rng.uniform(-1, 1)),
                     state_rng.uniform(0.0, 1.0), i == 2});

  const FlowLossConfig cfg = cfg_k(4);
  const std::uint64_t seed = 4242;
  auto loss_at = [&](const FlowNet& n) {
    Rng r(seed);
    return flow_matching_loss(n, g, batch, cfg, r).loss;
  };
  Rng r0(seed);
  const FlowLossResult res = flow_matching_loss(net, g, batch, cfg, r0);

  const double h = 1e-5;
  for (std::size_t i = 0; i < net.params.values.size(); ++i) {
    FlowNet plus = net, minus = net;
    plus.params.values[i] += h;
    minus.params.values[i] -= h;
    const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
    const double denom = std::max({1.0, std::abs(fd), std::abs(res.grad[i])});
    EXPECT_LE(std::abs(res.grad[i] - fd) / denom, 1e-4)
        << "param " << i << " analytic " << res.grad[i] << " fd " << fd;
  }
}

TEST(FlowMatchingLoss, LogSumExpMatchesNaivePath) {
  Rng init(23);
  const FlowNet net = make_flow_net(4, {8}, Activation::relu, init);
  const RetrievalNet g = make_retrieval_net(4, {8}, Activation::relu, init);
  const EnvState s = point_state(0.3, 0.7, -2.0, 6.0);
  Rng act_rng(24);
  std::vector<Action> actions;
  for (int k = 0; k < 6; ++k) actions.push_back(uniform_action(act_rng));

  const FlowLossConfig cfg = cfg_k(6);
  double naive_in = cfg.epsilon;
  for (const Action& a : actions)
    naive_in += std::exp(log_flow(net, predict_parent_values(g, s.values, a), a));
  EXPECT_NEAR(inflow_estimate(net, g, s, actions, cfg), std::log(naive_in), 1e-10);

  const double r = 0.25;
  double naive_out = cfg.epsilon + cfg.lambda * r;
  for (const Action& a : actions) naive_out += std::exp(log_flow(net, s.values, a));
  EXPECT_NEAR(outflow_estimate(net, s, r, actions, cfg), std::log(naive_out), 1e-10);
}

TEST(FlowMatchingLoss, CountsClampedEvents) {
  const FlowNet net = constant_net(-50.0);
  Rng rng(25);
  const RetrievalNet g = random_retrieval(rng);
  std::vector<FlowBatchItem> batch{{point_state(), -10.0, false}, {point_state(), -5.0, false},
                                   {point_state(), 0.5, false}};
  Rng loss_rng(26);
  const FlowLossResult res = flow_matching_loss(net, g, batch, cfg_k(2, 1.0), loss_rng);
  EXPECT_EQ(res.clamped_events, 2u);
  EXPECT_TRUE(std::isfinite(res.loss));
}

TEST(FlowMatchingLoss, EmptyBatchThrows) {
  const FlowNet net = constant_net(0.0);
  Rng rng(27);
  const RetrievalNet g = random_retrieval(rng);
  Rng loss_rng(28);
  EXPECT_THROW(flow_matching_loss(net, g, {}, cfg_k(1), loss_rng), std::invalid_argument);
}

TEST(FlowLossConfig, Validation) {
  FlowLossConfig c;
  c.K = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = FlowLossConfig{};
  c.lambda = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = FlowLossConfig{};
  c.epsilon = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
