#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "winflow/env.hpp"
#include "winflow/flow.hpp"
#include "winflow/mlp.hpp"
#include "winflow/util.hpp"

namespace winflow {

enum class Variant { winflownets, v1_no_warmup, v2_separate_buffers, cflownets_pretrained };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::winflownets: return "winflownets";
    case Variant::v1_no_warmup: return "v1_no_warmup";
    case Variant::v2_separate_buffers: return "v2_separate_buffers";
    default: return "cflownets_pretrained";
  }
}

inline Variant parse_variant_name(const std::string& name) {
  if (name == "winflownets") return Variant::winflownets;
  if (name == "v1_no_warmup") return Variant::v1_no_warmup;
  if (name == "v2_separate_buffers") return Variant::v2_separate_buffers;
  if (name == "cflownets_pretrained") return Variant::cflownets_pretrained;
  throw config_error("unknown variant '" + name + "'");
}

struct NetConfig {
  std::vector<int> flow_hidden{256, 256};
  std::vector<int> retrieval_hidden{256, 256};
  Activation activation = Activation::relu;
};

struct MetricsConfig {
  int window = 10;            // stabilization window W
  double rel_threshold = 0.05;
};

struct TrainConfig {
  Variant variant = Variant::winflownets;
  std::uint64_t seed = 0;
  std::int64_t warmup_steps = 100000;
  std::int64_t total_steps = 1000000;
  double eta0 = 1e-4;     // warm-up initial retrieval lr
  double eta_max = 1e-3;  // warm-up lr cap
  double lr_flow = 1e-3;
  double lr_retrieval = 1e-3;
  int batch_size = 256;  // minibatch size N for both losses
  std::int64_t eval_interval = 10000;
  int eval_episodes = 10;
  double gamma = 1.0;  // recorded only; returns are undiscounted
  int updates_per_episode = 1;
  int warmup_updates_per_episode = 1;  // retrieval updates per warm-up episode
  std::size_t buffer_capacity = 100000;
  int pretrain_epochs = 50;
  double pretrain_lr = 1e-3;
  double pretrain_holdout = 0.1;

  void validate() const {
    if (warmup_steps < 0) throw config_error("train.warmup_steps must be >= 0");
    if (total_steps < 0) throw config_error("train.total_steps must be >= 0");
    if (warmup_steps > total_steps)
      throw config_error("train.warmup_steps must not exceed train.total_steps");
    if (!(eta0 > 0.0 && eta_max > 0.0 && lr_flow > 0.0 && lr_retrieval > 0.0 && pretrain_lr > 0.0))
      throw config_error("train: all learning rates must be > 0");
    if (eval_interval < 1) throw config_error("train.eval_interval must be >= 1");
    if (batch_size < 1) throw config_error("train.batch_size must be >= 1");
    if (eval_episodes < 2) throw config_error("train.eval_episodes must be >= 2");
    if (updates_per_episode < 1) throw config_error("train.updates_per_episode must be >= 1");
    if (warmup_updates_per_episode < 1)
      throw config_error("train.warmup_updates_per_episode must be >= 1");
    if (buffer_capacity < 1) throw config_error("train.buffer_capacity must be >= 1");
    if (pretrain_epochs < 0) throw config_error("train.pretrain_epochs must be >= 0");
    if (!(pretrain_holdout >= 0.0 && pretrain_holdout < 1.0))
      throw config_error("train.pretrain_holdout must be in [0, 1)");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw config_error("train.gamma must be in [0, 1]");
  }
};

struct FullConfig {
  EnvConfig env;
  FaultSpec fault;
  NetConfig nets;
  FlowLossConfig flow;
  TrainConfig train;
  MetricsConfig metrics;

  void validate() const {
    env.validate();
    fault.validate();
    flow.validate();
    train.validate();
    if (metrics.window < 2) throw config_error("metrics.window must be >= 2");
    if (!(metrics.rel_threshold > 0.0)) throw config_error("metrics.rel_threshold must be > 0");
    for (int h : nets.flow_hidden)
      if (h < 1) throw config_error("net.flow_hidden entries must be >= 1");
    for (int h : nets.retrieval_hidden)
      if (h < 1) throw config_error("net.retrieval_hidden entries must be >= 1");
    if (nets.flow_hidden.empty() || nets.retrieval_hidden.empty())
      throw config_error("net: at least one hidden layer required");
  }
};

// Small presets sized for laptop-scale runs. The warm-up window is short
// (~400 point-robot episodes), so the retrieval network gets many updates
// per episode and a steeper learning-rate ramp than the full-scale
// defaults.
inline void apply_desk_scale(FullConfig& cfg) {
  cfg.train.warmup_steps = 5000;
  cfg.train.total_steps = 50000;
  cfg.train.eval_interval = 1000;
  cfg.train.batch_size = 64;
  cfg.train.warmup_updates_per_episode = 32;
  cfg.train.eta0 = 8e-4;
  cfg.train.eta_max = 1.1e-3;
  cfg.nets.flow_hidden = {64, 64};
  cfg.nets.retrieval_hidden = {64, 64};
  cfg.flow.M = 50;
  cfg.flow.K = 10;
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw config_error("bad real value for " + key + ": '" + v + "'");
  }
}

inline std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::int64_t x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw config_error("bad integer value for " + key + ": '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error("bad boolean value for " + key + ": '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<int>(parse_int(key, item)));
  }
  if (out.empty()) throw config_error("empty list for " + key);
  return out;
}

}  // namespace detail

// Applies one "section.key = value" assignment. Unknown keys are errors.
inline void apply_config_kv(FullConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  using detail::parse_int_list;

  if (key == "env.kind") { cfg.env.kind = parse_env_name(value); return; }
  if (key == "env.horizon") { cfg.env.horizon = static_cast<int>(parse_int(key, value)); return; }
  if (key == "env.dt") { cfg.env.dt = parse_double(key, value); return; }
  if (key == "env.link0") { cfg.env.link0 = parse_double(key, value); return; }
  if (key == "env.link1") { cfg.env.link1 = parse_double(key, value); return; }
  if (key == "env.torque_gain") { cfg.env.torque_gain = parse_double(key, value); return; }
  if (key == "env.damping") { cfg.env.damping = parse_double(key, value); return; }
  if (key == "env.omega_max") { cfg.env.omega_max = parse_double(key, value); return; }
  if (key == "env.alpha") { cfg.env.alpha = parse_double(key, value); return; }
  if (key == "env.seed") { cfg.env.seed = static_cast<std::uint64_t>(parse_int(key, value)); return; }
  if (key == "env.fault") { cfg.fault = make_fault(parse_fault_name(value)); return; }
  if (key == "fault.torque_scale") { cfg.fault.torque_scale = parse_double(key, value); return; }
  if (key == "fault.joint1_low") { cfg.fault.joint1_low = parse_double(key, value); return; }
  if (key == "fault.joint1_high") { cfg.fault.joint1_high = parse_double(key, value); return; }

  if (key == "net.flow_hidden") { cfg.nets.flow_hidden = parse_int_list(key, value); return; }
  if (key == "net.retrieval_hidden") { cfg.nets.retrieval_hidden = parse_int_list(key, value); return; }
  if (key == "net.activation") {
    if (value == "relu") { cfg.nets.activation = Activation::relu; return; }
    if (value == "tanh") { cfg.nets.activation = Activation::tanh; return; }
    throw config_error("bad net.activation '" + value + "' (expected relu or tanh)");
  }

  if (key == "flow.K") { cfg.flow.K = static_cast<int>(parse_int(key, value)); return; }
  if (key == "flow.M") { cfg.flow.M = static_cast<int>(parse_int(key, value)); return; }
  if (key == "flow.lambda") { cfg.flow.lambda = parse_double(key, value); return; }
  if (key == "flow.epsilon") { cfg.flow.epsilon = parse_double(key, value); return; }
  if (key == "flow.tau_soft") { cfg.flow.tau_soft = parse_double(key, value); return; }
  if (key == "flow.reward_shift") { cfg.flow.reward_shift = parse_double(key, value); return; }

  if (key == "train.variant") { cfg.train.variant = parse_variant_name(value); return; }
  if (key == "train.seed") { cfg.train.seed = static_cast<std::uint64_t>(parse_int(key, value)); return; }
  if (key == "train.warmup_steps") { cfg.train.warmup_steps = parse_int(key, value); return; }
  if (key == "train.total_steps") { cfg.train.total_steps = parse_int(key, value); return; }
  if (key == "train.eta0") { cfg.train.eta0 = parse_double(key, value); return; }
  if (key == "train.eta_max") { cfg.train.eta_max = parse_double(key, value); return; }
  if (key == "train.lr_flow") { cfg.train.lr_flow = parse_double(key, value); return; }
  if (key == "train.lr_retrieval") { cfg.train.lr_retrieval = parse_double(key, value); return; }
  if (key == "train.batch_size") { cfg.train.batch_size = static_cast<int>(parse_int(key, value)); return; }
  if (key == "train.eval_interval") { cfg.train.eval_interval = parse_int(key, value); return; }
  if (key == "train.eval_episodes") { cfg.train.eval_episodes = static_cast<int>(parse_int(key, value)); return; }
  if (key == "train.gamma") { cfg.train.gamma = parse_double(key, value); return; }
  if (key == "train.updates_per_episode") { cfg.train.updates_per_episode = static_cast<int>(parse_int(key, value)); return; }
  if (key == "train.warmup_updates_per_episode") { cfg.train.warmup_updates_per_episode = static_cast<int>(parse_int(key, value)); return; }
  if (key == "train.buffer_capacity") { cfg.train.buffer_capacity = static_cast<std::size_t>(parse_int(key, value)); return; }
  if (key == "train.pretrain_epochs") { cfg.train.pretrain_epochs = static_cast<int>(parse_int(key, value)); return; }
  if (key == "train.pretrain_lr") { cfg.train.pretrain_lr = parse_double(key, value); return; }
  if (key == "train.pretrain_holdout") { cfg.train.pretrain_holdout = parse_double(key, value); return; }

  if (key == "metrics.window") { cfg.metrics.window = static_cast<int>(parse_int(key, value)); return; }
  if (key == "metrics.rel_threshold") { cfg.metrics.rel_threshold = parse_double(key, value); return; }

  throw config_error("unknown config key '" + key + "'");
}

// Flat "key = value" file with '#' comments. env.kind is applied first so
// kind-dependent defaults never override explicit keys.
inline void apply_config_file(FullConfig& cfg, const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw config_error("cannot open config file: " + path.string());
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw config_error(path.string() + ":" + std::to_string(lineno) + ": empty key or value");
    entries.emplace_back(key, value);
  }
  for (const auto& [k, v] : entries)
    if (k == "env.kind") apply_config_kv(cfg, k, v);
  for (const auto& [k, v] : entries)
    if (k != "env.kind") apply_config_kv(cfg, k, v);
}

inline std::string config_snapshot_text(const FullConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  auto list = [](const std::vector<int>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
    return s;
  };
  out << "env.kind = " << env_name(cfg.env.kind) << "\n";
  out << "env.horizon = " << cfg.env.effective_horizon() << "\n";
  out << "env.dt = " << cfg.env.dt << "\n";
  out << "env.link0 = " << cfg.env.link0 << "\n";
  out << "env.link1 = " << cfg.env.link1 << "\n";
  out << "env.torque_gain = " << cfg.env.torque_gain << "\n";
  out << "env.damping = " << cfg.env.damping << "\n";
  out << "env.omega_max = " << cfg.env.omega_max << "\n";
  out << "env.alpha = " << cfg.env.alpha << "\n";
  out << "env.seed = " << cfg.env.seed << "\n";
  out << "env.fault = " << fault_name(cfg.fault.kind) << "\n";
  out << "fault.torque_scale = " << cfg.fault.torque_scale << "\n";
  out << "fault.joint1_low = " << cfg.fault.joint1_low << "\n";
  out << "fault.joint1_high = " << cfg.fault.joint1_high << "\n";
  out << "net.flow_hidden = " << list(cfg.nets.flow_hidden) << "\n";
  out << "net.retrieval_hidden = " << list(cfg.nets.retrieval_hidden) << "\n";
  out << "net.activation = " << (cfg.nets.activation == Activation::relu ? "relu" : "tanh") << "\n";
  out << "flow.K = " << cfg.flow.K << "\n";
  out << "flow.M = " << cfg.flow.M << "\n";
  out << "flow.lambda = " << cfg.flow.lambda << "\n";
  out << "flow.epsilon = " << cfg.flow.epsilon << "\n";
  out << "flow.tau_soft = " << cfg.flow.tau_soft << "\n";
  out << "flow.reward_shift = " << cfg.flow.reward_shift << "\n";
  out << "train.variant = " << variant_name(cfg.train.variant) << "\n";
  out << "train.seed = " << cfg.train.seed << "\n";
  out << "train.warmup_steps = " << cfg.train.warmup_steps << "\n";
  out << "train.total_steps = " << cfg.train.total_steps << "\n";
  out << "train.eta0 = " << cfg.train.eta0 << "\n";
  out << "train.eta_max = " << cfg.train.eta_max << "\n";
  out << "train.lr_flow = " << cfg.train.lr_flow << "\n";
  out << "train.lr_retrieval = " << cfg.train.lr_retrieval << "\n";
  out << "train.batch_size = " << cfg.train.batch_size << "\n";
  out << "train.eval_interval = " << cfg.train.eval_interval << "\n";
  out << "train.eval_episodes = " << cfg.train.eval_episodes << "\n";
  out << "train.gamma = " << cfg.train.gamma << "\n";
  out << "train.updates_per_episode = " << cfg.train.updates_per_episode << "\n";
  out << "train.warmup_updates_per_episode = " << cfg.train.warmup_updates_per_episode << "\n";
  out << "train.buffer_capacity = " << cfg.train.buffer_capacity << "\n";
  out << "train.pretrain_epochs = " << cfg.train.pretrain_epochs << "\n";
  out << "train.pretrain_lr = " << cfg.train.pretrain_lr << "\n";
  out << "train.pretrain_holdout = " << cfg.train.pretrain_holdout << "\n";
  out << "metrics.window = " << cfg.metrics.window << "\n";
  out << "metrics.rel_threshold = " << cfg.metrics.rel_threshold << "\n";
  return out.str();
}

}  // namespace winflow
