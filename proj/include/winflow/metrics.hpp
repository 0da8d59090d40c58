#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "winflow/env.hpp"
#include "winflow/flow.hpp"
#include "winflow/util.hpp"

namespace winflow {

// One evaluation point: mean episode return over n rollouts, population
// std (divisor n), and the 95% CI width 2 * std / sqrt(n).
struct EvalReport {
  std::int64_t timestep = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double ci_width = 0.0;
  int n = 0;
};

struct RunSummary {
  double final_performance_mean = 0.0;
  double final_performance_std = 0.0;
  std::optional<std::int64_t> sample_efficiency_timesteps;  // empty: not stabilized
};

inline double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Population convention (divisor n), matching the CI formula.
inline double population_std(std::span<const double> xs) {
  const double mu = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

inline EvalReport report_from_returns(std::int64_t timestep, std::vector<double> returns) {
  if (returns.size() < 2)
    throw std::invalid_argument("report_from_returns: need at least 2 episode returns");
  // Metrics are computed from the sorted set so that rollout order (or a
  // parallel evaluation schedule) cannot change the result.
  std::sort(returns.begin(), returns.end());
  EvalReport rep;
  rep.timestep = timestep;
  rep.n = static_cast<int>(returns.size());
  rep.mean_reward = mean_of(returns);
  rep.std_reward = population_std(returns);
  rep.ci_width = 2.0 * rep.std_reward / std::sqrt(static_cast<double>(rep.n));
  return rep;
}

// n independent episodes with the stochastic softmax policy. Episode
// streams are derived from `seed` by index, so rollouts are order
// independent and could run concurrently.
inline EvalReport evaluate(const FlowNet& net, const EnvConfig& env_cfg, const FaultSpec& fault,
                           int n, const FlowLossConfig& flow_cfg, std::int64_t timestep,
                           std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("evaluate: need n >= 2 rollouts");
  std::vector<double> returns(static_cast<std::size_t>(n));
  for (int ep = 0; ep < n; ++ep) {
    Rng rng(derive_seed(seed, "eval-episode", static_cast<std::uint64_t>(ep)));
    EnvState s = reset(env_cfg, rng);
    double ret = 0.0;
    const int horizon = env_cfg.effective_horizon();
    for (int t = 0; t < horizon; ++t) {
      const auto buf = action_probability_buffer(net, s, flow_cfg.M, flow_cfg.tau_soft, rng);
      const Action a = sample_action(buf, rng);
      StepResult r = step(s, a, env_cfg, fault, t);
      ret += r.reward;
      s = std::move(r.next_state);
    }
    returns[static_cast<std::size_t>(ep)] = ret;
  }
  return report_from_returns(timestep, std::move(returns));
}

// Statistics over the mean rewards of exactly the last 20 evaluations.
inline std::pair<double, double> final_performance(std::span<const EvalReport> reports) {
  constexpr std::size_t kWindow = 20;
  if (reports.size() < kWindow)
    throw std::invalid_argument("final_performance: need >= 20 reports, have " +
                                std::to_string(reports.size()));
  std::vector<double> tail;
  tail.reserve(kWindow);
  for (std::size_t i = reports.size() - kWindow; i < reports.size(); ++i)
    tail.push_back(reports[i].mean_reward);
  return {mean_of(tail), population_std(tail)};
}

// First timestep whose trailing window of W mean rewards has
// std <= rel_threshold * |mean|; empty when the series never stabilizes.
inline std::optional<std::int64_t> sample_efficiency(std::span<const EvalReport> reports,
                                                     int window = 10,
                                                     double rel_threshold = 0.05) {
  if (window < 2) throw std::invalid_argument("sample_efficiency: window must be >= 2");
  const auto w = static_cast<std::size_t>(window);
  if (reports.size() < w) return std::nullopt;
  std::vector<double> win(w);
  for (std::size_t i = w - 1; i < reports.size(); ++i) {
    for (std::size_t j = 0; j < w; ++j) win[j] = reports[i - w + 1 + j].mean_reward;
    const double mu = mean_of(win);
    if (population_std(win) <= rel_threshold * std::abs(mu)) return reports[i].timestep;
  }
  return std::nullopt;
}

inline RunSummary summarize(std::span<const EvalReport> reports, int window, double rel_threshold) {
  RunSummary s;
  const auto [m, sd] = final_performance(reports);
  s.final_performance_mean = m;
  s.final_performance_std = sd;
  s.sample_efficiency_timesteps = sample_efficiency(reports, window, rel_threshold);
  return s;
}

inline std::string metrics_csv_text(std::span<const EvalReport> reports) {
  std::string out = "timestep,mean_reward,std_reward,ci_width,n\n";
  for (const EvalReport& r : reports) {
    out += std::to_string(r.timestep) + ',' + format_real(r.mean_reward) + ',' +
           format_real(r.std_reward) + ',' + format_real(r.ci_width) + ',' + std::to_string(r.n) +
           '\n';
  }
  return out;
}

inline std::string summary_csv_text(const RunSummary& s) {
  std::string out = "final_performance_mean,final_performance_std,sample_efficiency_timesteps\n";
  out += format_real(s.final_performance_mean) + ',' + format_real(s.final_performance_std) + ',';
  out += s.sample_efficiency_timesteps ? std::to_string(*s.sample_efficiency_timesteps)
                                       : std::string("not-stabilized");
  out += '\n';
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

// metrics.csv always; summary.csv when a summary is computable.
inline void emit_metrics(const std::filesystem::path& run_dir, std::span<const EvalReport> reports,
                         const std::optional<RunSummary>& summary) {
  write_text_file(run_dir / "metrics.csv", metrics_csv_text(reports));
  if (summary) write_text_file(run_dir / "summary.csv", summary_csv_text(*summary));
}

// Round-trip reader for metrics.csv.
inline std::vector<EvalReport> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "timestep,mean_reward,std_reward,ci_width,n")
    throw std::runtime_error("metrics.csv: unexpected header in " + path.string());
  std::vector<EvalReport> reports;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    EvalReport r;
    std::getline(ss, field, ',');
    r.timestep = std::stoll(field);
    std::getline(ss, field, ',');
    r.mean_reward = std::stod(field);
    std::getline(ss, field, ',');
    r.std_reward = std::stod(field);
    std::getline(ss, field, ',');
    r.ci_width = std::stod(field);
    std::getline(ss, field, ',');
    r.n = std::stoi(field);
    reports.push_back(r);
  }
  return reports;
}

}  // namespace winflow
