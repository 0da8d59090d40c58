#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "winflow/checkpoint.hpp"
#include "winflow/config.hpp"
#include "winflow/env.hpp"
#include "winflow/flow.hpp"
#include "winflow/metrics.hpp"
#include "winflow/replay.hpp"
#include "winflow/retrieval.hpp"
#include "winflow/rng.hpp"

namespace winflow {

struct RunStats {
  std::int64_t env_steps_warmup = 0;
  std::int64_t env_steps_dual = 0;
  std::uint64_t flow_updates = 0;
  std::uint64_t retrieval_updates = 0;
  std::uint64_t clamped_outflow_events = 0;
  std::uint64_t flow_minibatches = 0;
  std::uint64_t flow_minibatches_with_warmup_tag = 0;
  bool first_flow_minibatch_had_warmup = false;
  std::vector<double> eta_log;        // warm-up lr at each retrieval update
  std::vector<double> flow_loss_log;  // flow-matching loss at each update
};

struct RunState {
  Variant variant = Variant::winflownets;
  FlowNet flow_net;
  AdamState flow_adam;
  RetrievalNet retrieval_net;
  AdamState retrieval_adam;
  ReplayBuffer buffer;                           // shared buffer (flow side for v2)
  std::optional<ReplayBuffer> retrieval_buffer;  // v2 only
  std::int64_t global_step = 0;
  std::int64_t episode = 0;
  Phase phase = Phase::warmup;
  double warmup_eta = 0.0;
  RunStats stats;

  RunState() : buffer(1) {}
};

// Independent random streams so that, e.g., changing the evaluation
// cadence cannot perturb the training trajectory.
struct Streams {
  Rng env;
  Rng warmup_actions;
  Rng dual_actions;
  Rng replay;
  Rng flow_actions;
  Rng init;
  Rng pretrain;
};

inline Streams make_streams(std::uint64_t seed) {
  return Streams{Rng(derive_seed(seed, "env")),          Rng(derive_seed(seed, "warmup-actions")),
                 Rng(derive_seed(seed, "dual-actions")), Rng(derive_seed(seed, "replay")),
                 Rng(derive_seed(seed, "flow-actions")), Rng(derive_seed(seed, "init")),
                 Rng(derive_seed(seed, "pretrain"))};
}

inline RunState init_run_state(const FullConfig& cfg, Streams& streams) {
  RunState st;
  st.variant = cfg.train.variant;
  const int sd = state_dim(cfg.env.kind);
  Rng flow_rng = streams.init.fork("flow");
  Rng retrieval_rng = streams.init.fork("retrieval");
  st.flow_net = make_flow_net(sd, cfg.nets.flow_hidden, cfg.nets.activation, flow_rng);
  st.flow_adam = make_adam_state(st.flow_net.params);
  st.retrieval_net =
      make_retrieval_net(sd, cfg.nets.retrieval_hidden, cfg.nets.activation, retrieval_rng);
  st.retrieval_adam = make_adam_state(st.retrieval_net.params);
  st.buffer = ReplayBuffer(cfg.train.buffer_capacity);
  if (cfg.train.variant == Variant::v2_separate_buffers)
    st.retrieval_buffer = ReplayBuffer(cfg.train.buffer_capacity);
  st.warmup_eta = cfg.train.eta0;
  st.phase = Phase::warmup;
  return st;
}

// Called after every evaluation with the fresh report and run state.
using EvalSink = std::function<void(const EvalReport&, const RunState&)>;

namespace detail {

inline void push_transition(RunState& st, Transition tr) {
  if (st.variant == Variant::v2_separate_buffers) {
    // Warm-up experience feeds only the retrieval network; dual-phase
    // experience feeds both buffers.
    if (tr.phase == Phase::dual) st.buffer.push(tr);
    st.retrieval_buffer->push(std::move(tr));
  } else {
    st.buffer.push(std::move(tr));
  }
}

inline ReplayBuffer& retrieval_source(RunState& st) {
  return st.retrieval_buffer ? *st.retrieval_buffer : st.buffer;
}

inline void retrieval_update(const FullConfig& cfg, RunState& st, Streams& streams, double lr) {
  const auto batch = sample_minibatch(retrieval_source(st),
                                      static_cast<std::size_t>(cfg.train.batch_size), streams.replay);
  const RetrievalLossResult r = retrieval_loss(st.retrieval_net, batch);
  adam_step(st.retrieval_net.params, st.retrieval_adam, r.grad, lr);
  ++st.stats.retrieval_updates;
}

// One uniform-random episode (Warm-Up behavior policy). Returns the number
// of env steps taken; stops early when `remaining` reaches zero.
inline std::int64_t uniform_episode(const FullConfig& cfg, RunState& st, Streams& streams,
                                    std::int64_t remaining, Phase phase,
                                    std::vector<Transition>* collect = nullptr) {
  EnvState s = reset(cfg.env, streams.env);
  const std::int64_t episode_id = st.episode;
  const auto m = static_cast<std::size_t>(cfg.flow.M);
  std::vector<Action> candidates(m);
  std::int64_t taken = 0;
  int t = 0;
  while (taken < remaining) {
    for (std::size_t i = 0; i < m; ++i) candidates[i] = uniform_action(streams.warmup_actions);
    const Action a = candidates[streams.warmup_actions.uniform_index(m)];
    StepResult res = step(s, a, cfg.env, cfg.fault, t);
    Transition tr{s, a, res.reward, res.next_state, episode_id, phase, res.terminal};
    if (collect) collect->push_back(tr);
    push_transition(st, std::move(tr));
    s = std::move(res.next_state);
    t = res.t;
    ++st.global_step;
    ++taken;
    if (res.terminal) break;
  }
  ++st.episode;
  return taken;
}

}  // namespace detail

// Warm-Up phase: uniform-random behavior, retrieval-only updates after
// each episode with a ramping learning rate. The flow network is never
// touched here.
inline void run_warmup(const FullConfig& cfg, RunState& st, Streams& streams) {
  const std::int64_t budget = cfg.train.warmup_steps;
  if (budget > 0) {
    const double eps_lr = (cfg.train.eta_max - cfg.train.eta0) *
                          static_cast<double>(cfg.env.effective_horizon()) /
                          static_cast<double>(budget);
    while (st.stats.env_steps_warmup < budget) {
      st.stats.env_steps_warmup += detail::uniform_episode(
          cfg, st, streams, budget - st.stats.env_steps_warmup, Phase::warmup);
      for (int u = 0; u < cfg.train.warmup_updates_per_episode; ++u) {
        detail::retrieval_update(cfg, st, streams, st.warmup_eta);
        st.stats.eta_log.push_back(st.warmup_eta);
      }
      st.warmup_eta = std::min(st.warmup_eta + eps_lr, cfg.train.eta_max);
    }
  }
  st.phase = Phase::dual;
}

// Uniform-random data collection for the pre-trained baseline: same
// behavior policy as the Warm-Up phase but no network updates.
inline std::vector<Transition> collect_uniform_dataset(const FullConfig& cfg, RunState& st,
                                                       Streams& streams) {
  std::vector<Transition> dataset;
  const std::int64_t budget = cfg.train.warmup_steps;
  dataset.reserve(static_cast<std::size_t>(budget));
  while (st.stats.env_steps_warmup < budget)
    st.stats.env_steps_warmup += detail::uniform_episode(
        cfg, st, streams, budget - st.stats.env_steps_warmup, Phase::warmup, &dataset);
  st.phase = Phase::dual;
  return dataset;
}

// Dual-Training phase: flow-guided action selection, then one flow update
// and one retrieval update per episode from a sampled minibatch. The
// retrieval network stays frozen for the pre-trained baseline variant.
// Evaluations fire at global-step multiples of eval_interval past
// eval_start, using streams independent of the training streams.
inline void run_dual(const FullConfig& cfg, RunState& st, Streams& streams,
                     std::int64_t step_budget, std::int64_t eval_start,
                     const EvalSink& sink = {}) {
  st.phase = Phase::dual;
  const bool freeze_retrieval = st.variant == Variant::cflownets_pretrained;
  const bool shared_minibatch = st.variant != Variant::v2_separate_buffers;
  std::int64_t taken = 0;

  auto maybe_eval = [&]() {
    if (!sink) return;
    if (st.global_step <= eval_start || st.global_step % cfg.train.eval_interval != 0) return;
    const EvalReport rep = evaluate(
        st.flow_net, cfg.env, cfg.fault, cfg.train.eval_episodes, cfg.flow, st.global_step,
        derive_seed(cfg.train.seed, "eval", static_cast<std::uint64_t>(st.global_step)));
    sink(rep, st);
  };

  while (taken < step_budget) {
    EnvState s = reset(cfg.env, streams.env);
    const std::int64_t episode_id = st.episode;
    int t = 0;
    while (taken < step_budget) {
      const auto buf =
          action_probability_buffer(st.flow_net, s, cfg.flow.M, cfg.flow.tau_soft, streams.dual_actions);
      const Action a = sample_action(buf, streams.dual_actions);
      StepResult res = step(s, a, cfg.env, cfg.fault, t);
      detail::push_transition(
          st, Transition{s, a, res.reward, res.next_state, episode_id, Phase::dual, res.terminal});
      s = std::move(res.next_state);
      t = res.t;
      ++st.global_step;
      ++st.stats.env_steps_dual;
      ++taken;
      maybe_eval();
      if (res.terminal) break;
    }
    ++st.episode;

    for (int u = 0; u < cfg.train.updates_per_episode; ++u) {
      const auto batch = sample_minibatch(
          st.buffer, static_cast<std::size_t>(cfg.train.batch_size), streams.replay);
      ++st.stats.flow_minibatches;
      bool has_warmup = false;
      std::vector<FlowBatchItem> items;
      items.reserve(batch.size());
      for (const Transition& tr : batch) {
        has_warmup = has_warmup || tr.phase == Phase::warmup;
        items.push_back(FlowBatchItem{tr.s, tr.r, tr.terminal});
      }
      if (has_warmup) {
        ++st.stats.flow_minibatches_with_warmup_tag;
        if (st.stats.flow_minibatches == 1) st.stats.first_flow_minibatch_had_warmup = true;
      }

      const FlowLossResult fl =
          flow_matching_loss(st.flow_net, st.retrieval_net, items, cfg.flow, streams.flow_actions);
      adam_step(st.flow_net.params, st.flow_adam, fl.grad, cfg.train.lr_flow);
      ++st.stats.flow_updates;
      st.stats.clamped_outflow_events += fl.clamped_events;
      st.stats.flow_loss_log.push_back(fl.loss);

      if (!freeze_retrieval) {
        if (shared_minibatch) {
          const RetrievalLossResult r = retrieval_loss(st.retrieval_net, batch);
          adam_step(st.retrieval_net.params, st.retrieval_adam, r.grad, cfg.train.lr_retrieval);
          ++st.stats.retrieval_updates;
        } else {
          detail::retrieval_update(cfg, st, streams, cfg.train.lr_retrieval);
        }
      }
    }
  }
}

struct RunOutput {
  std::filesystem::path dir;
  std::vector<EvalReport> reports;
  std::optional<RunSummary> summary;
};

namespace detail {

inline RunCheckpoint to_checkpoint(const RunState& st, EnvKind kind, bool include_buffers) {
  RunCheckpoint c;
  c.variant = static_cast<std::uint8_t>(st.variant);
  c.env_kind = kind;
  c.phase = static_cast<std::uint8_t>(st.phase);
  c.global_step = st.global_step;
  c.episode = st.episode;
  c.flow_params = st.flow_net.params;
  c.flow_adam = st.flow_adam;
  c.retrieval_params = st.retrieval_net.params;
  c.retrieval_adam = st.retrieval_adam;
  if (include_buffers) {
    c.buffer = st.buffer;
    c.retrieval_buffer = st.retrieval_buffer;
  }
  return c;
}

class EventLog {
 public:
  explicit EventLog(const std::filesystem::path& path) : f_(path, std::ios::binary) {}
  void line(const std::string& s) {
    f_ << s << '\n';
    f_.flush();
  }

 private:
  std::ofstream f_;
};

}  // namespace detail

// Full run: dispatches the variant, writes the run directory (config
// snapshot, per-eval checkpoints, metrics.csv, summary.csv, events.log),
// and returns the collected reports.
inline RunOutput run_variant(FullConfig cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);

  detail::EventLog events(out_dir / "events.log");

  // The evaluation schedule is fixed by the configured warm-up window so
  // that all variants of one config share eval timesteps.
  const std::int64_t eval_start = cfg.train.warmup_steps;

  if (cfg.train.variant == Variant::v1_no_warmup && cfg.train.warmup_steps > 0) {
    std::cerr << "warning: variant v1_no_warmup has no warm-up phase; forcing warmup_steps "
              << cfg.train.warmup_steps << " -> 0 (evaluation schedule unchanged)\n";
    events.line("warning variant=v1_no_warmup warmup_steps_forced_to=0");
    cfg.train.warmup_steps = 0;
  }

  write_text_file(out_dir / "config.txt", config_snapshot_text(cfg));

  Streams streams = make_streams(cfg.train.seed);
  RunState st = init_run_state(cfg, streams);

  RunOutput out;
  out.dir = out_dir;
  EvalSink sink = [&](const EvalReport& rep, const RunState& state) {
    out.reports.push_back(rep);
    save_run_checkpoint(out_dir / ("checkpoint_" + std::to_string(rep.timestep) + ".bin"),
                        detail::to_checkpoint(state, cfg.env.kind, /*include_buffers=*/false));
    events.line("step=" + std::to_string(rep.timestep) + " eval mean_reward=" +
                format_real(rep.mean_reward) + " clamped_outflow_total=" +
                std::to_string(state.stats.clamped_outflow_events));
  };

  try {
    switch (cfg.train.variant) {
      case Variant::winflownets:
      case Variant::v2_separate_buffers:
        run_warmup(cfg, st, streams);
        run_dual(cfg, st, streams, cfg.train.total_steps - cfg.train.warmup_steps, eval_start, sink);
        break;
      case Variant::v1_no_warmup:
        run_dual(cfg, st, streams, cfg.train.total_steps, eval_start, sink);
        break;
      case Variant::cflownets_pretrained: {
        const std::vector<Transition> dataset = collect_uniform_dataset(cfg, st, streams);
        if (dataset.empty())
          throw config_error("cflownets_pretrained needs warmup_steps > 0 to collect data");
        const auto holdout_size = static_cast<std::size_t>(
            static_cast<double>(dataset.size()) * cfg.train.pretrain_holdout);
        const std::size_t train_size = dataset.size() - holdout_size;
        const std::span<const Transition> train_split(dataset.data(), train_size);
        const std::span<const Transition> holdout(dataset.data() + train_size, holdout_size);
        const PretrainResult pr =
            pretrain_retrieval(st.retrieval_net, train_split, cfg.train.pretrain_epochs,
                               cfg.train.pretrain_lr, cfg.train.batch_size, streams.pretrain);
        std::string line = "pretrain epochs=" + std::to_string(pr.epoch_losses.size());
        if (!pr.epoch_losses.empty())
          line += " final_train_mse=" + format_real(pr.epoch_losses.back());
        if (!holdout.empty())
          line += " holdout_mse=" + format_real(retrieval_loss(st.retrieval_net, holdout).loss);
        events.line(line);
        run_dual(cfg, st, streams, cfg.train.total_steps - cfg.train.warmup_steps, eval_start, sink);
        break;
      }
    }
  } catch (const numeric_error& e) {
    save_run_checkpoint(out_dir / "checkpoint_abort.bin",
                        detail::to_checkpoint(st, cfg.env.kind, /*include_buffers=*/true));
    events.line(std::string("abort numeric_error: ") + e.what());
    emit_metrics(out_dir, out.reports, std::nullopt);
    throw;
  }

  save_run_checkpoint(out_dir / "checkpoint_final.bin",
                      detail::to_checkpoint(st, cfg.env.kind, /*include_buffers=*/true));
  if (out.reports.size() >= 20)
    out.summary = summarize(out.reports, cfg.metrics.window, cfg.metrics.rel_threshold);
  emit_metrics(out_dir, out.reports, out.summary);
  events.line("run_complete steps=" + std::to_string(st.global_step) +
              " warmup_steps=" + std::to_string(st.stats.env_steps_warmup) +
              " dual_steps=" + std::to_string(st.stats.env_steps_dual) +
              " flow_updates=" + std::to_string(st.stats.flow_updates) +
              " retrieval_updates=" + std::to_string(st.stats.retrieval_updates) +
              " clamped_outflow_total=" + std::to_string(st.stats.clamped_outflow_events));
  return out;
}

// Rebuilds a RunState from a checkpoint so training can resume under a
// new fault condition. The checkpoint must carry the replay buffer.
inline RunState restore_run_state(const RunCheckpoint& c, const FullConfig& cfg) {
  if (c.env_kind != cfg.env.kind)
    throw std::invalid_argument("transfer: checkpoint env layout does not match config");
  if (!c.buffer)
    throw std::invalid_argument("transfer: checkpoint has no replay buffer");
  RunState st;
  st.variant = static_cast<Variant>(c.variant);
  st.flow_net = FlowNet{c.flow_params};
  st.flow_adam = c.flow_adam;
  st.retrieval_net = RetrievalNet{c.retrieval_params};
  st.retrieval_adam = c.retrieval_adam;
  st.buffer = *c.buffer;
  st.retrieval_buffer = c.retrieval_buffer;
  if (st.variant == Variant::v2_separate_buffers && !st.retrieval_buffer)
    throw std::invalid_argument("transfer: split-buffer checkpoint is missing a buffer");
  st.global_step = c.global_step;
  st.episode = c.episode;
  st.phase = Phase::dual;
  return st;
}

// Loads a completed run and resumes dual training with the configured
// fault for total_steps additional env steps. No new warm-up runs; the
// transferred buffer is kept unless reset_buffer is set.
inline RunOutput transfer_to_fault(const std::filesystem::path& checkpoint_path, FullConfig cfg,
                                   const std::filesystem::path& out_dir, bool reset_buffer) {
  cfg.train.warmup_steps = 0;  // transfer resumes dual training directly
  cfg.validate();
  const RunCheckpoint c = load_run_checkpoint(checkpoint_path);
  RunState st = restore_run_state(c, cfg);
  cfg.train.variant = st.variant;

  std::filesystem::create_directories(out_dir);
  detail::EventLog events(out_dir / "events.log");
  write_text_file(out_dir / "config.txt", config_snapshot_text(cfg));
  events.line("transfer from=" + checkpoint_path.string() + " fault=" + fault_name(cfg.fault.kind) +
              " reset_buffer=" + (reset_buffer ? std::string("true") : std::string("false")) +
              " start_step=" + std::to_string(st.global_step));
  if (reset_buffer) {
    st.buffer.clear();
    if (st.retrieval_buffer) st.retrieval_buffer->clear();
  }

  Streams streams = make_streams(cfg.train.seed);
  RunOutput out;
  out.dir = out_dir;
  EvalSink sink = [&](const EvalReport& rep, const RunState& state) {
    out.reports.push_back(rep);
    save_run_checkpoint(out_dir / ("checkpoint_" + std::to_string(rep.timestep) + ".bin"),
                        detail::to_checkpoint(state, cfg.env.kind, /*include_buffers=*/false));
    events.line("step=" + std::to_string(rep.timestep) + " eval mean_reward=" +
                format_real(rep.mean_reward) + " clamped_outflow_total=" +
                std::to_string(state.stats.clamped_outflow_events));
  };

  try {
    run_dual(cfg, st, streams, cfg.train.total_steps, /*eval_start=*/st.global_step, sink);
  } catch (const numeric_error& e) {
    save_run_checkpoint(out_dir / "checkpoint_abort.bin",
                        detail::to_checkpoint(st, cfg.env.kind, /*include_buffers=*/true));
    events.line(std::string("abort numeric_error: ") + e.what());
    emit_metrics(out_dir, out.reports, std::nullopt);
    throw;
  }

  save_run_checkpoint(out_dir / "checkpoint_final.bin",
                      detail::to_checkpoint(st, cfg.env.kind, /*include_buffers=*/true));
  if (out.reports.size() >= 20)
    out.summary = summarize(out.reports, cfg.metrics.window, cfg.metrics.rel_threshold);
  emit_metrics(out_dir, out.reports, out.summary);
  events.line("run_complete steps=" + std::to_string(st.global_step) +
              " dual_steps=" + std::to_string(st.stats.env_steps_dual) +
              " clamped_outflow_total=" + std::to_string(st.stats.clamped_outflow_events));
  return out;
}

// Per-step rollout dump: header "t,s0..,a0,a1,r", one row per env step.
inline void dump_rollouts(const std::filesystem::path& path, const FlowNet& net,
                          const EnvConfig& env_cfg, const FaultSpec& fault,
                          const FlowLossConfig& flow_cfg, int episodes, std::uint64_t seed) {
  std::string text = "t";
  for (int i = 0; i < state_dim(env_cfg.kind); ++i) text += ",s" + std::to_string(i);
  text += ",a0,a1,r\n";
  for (int ep = 0; ep < episodes; ++ep) {
    Rng rng(derive_seed(seed, "dump-episode", static_cast<std::uint64_t>(ep)));
    EnvState s = reset(env_cfg, rng);
    const int horizon = env_cfg.effective_horizon();
    for (int t = 0; t < horizon; ++t) {
      const auto buf = action_probability_buffer(net, s, flow_cfg.M, flow_cfg.tau_soft, rng);
      const Action a = sample_action(buf, rng);
      StepResult res = step(s, a, env_cfg, fault, t);
      text += std::to_string(t);
      for (double v : s.values) text += ',' + format_real(v);
      text += ',' + format_real(a.values[0]) + ',' + format_real(a.values[1]) + ',' +
              format_real(res.reward) + '\n';
      s = std::move(res.next_state);
    }
  }
  write_text_file(path, text);
}

}  // namespace winflow
