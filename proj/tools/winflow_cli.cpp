// winflow: train / transfer / ablate / eval / inspect for the flow-network
// co-training library.
//
// Exit codes: 0 success, 2 config or usage error, 3 numeric abort.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "winflow/winflow.hpp"

namespace fs = std::filesystem;
using namespace winflow;

namespace {

struct CommonFlags {
  std::string config_path;
  std::int64_t seed = -1;
  std::string env_name;
  std::string fault;
  std::string variant;
  std::string out_dir = "runs";
  bool desk_scale = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "config file (key = value lines)");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--env", f.env_name, "environment: reacher2 | point_sparse");
  cmd->add_option("--fault", f.fault, "fault: none | ad | rom");
  cmd->add_option("--variant", f.variant,
                  "winflownets | v1_no_warmup | v2_separate_buffers | cflownets_pretrained");
  cmd->add_option("--out", f.out_dir, "output directory");
  cmd->add_flag("--desk-scale", f.desk_scale, "apply the small laptop-scale presets");
}

// defaults -> desk presets -> config file -> explicit flags
FullConfig build_config(const CommonFlags& f) {
  FullConfig cfg;
  if (f.desk_scale) apply_desk_scale(cfg);
  if (!f.config_path.empty()) apply_config_file(cfg, f.config_path);
  if (!f.env_name.empty()) cfg.env.kind = parse_env_name(f.env_name);
  if (!f.fault.empty()) cfg.fault = make_fault(parse_fault_name(f.fault));
  if (!f.variant.empty()) cfg.train.variant = parse_variant_name(f.variant);
  if (f.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(f.seed);
  cfg.validate();
  return cfg;
}

void print_run_result(const RunOutput& out) {
  std::cout << "run directory: " << out.dir.string() << "\n";
  std::cout << "evaluations: " << out.reports.size() << "\n";
  if (out.summary) {
    std::cout << "final_performance: " << format_real(out.summary->final_performance_mean)
              << " +/- " << format_real(out.summary->final_performance_std) << "\n";
    std::cout << "sample_efficiency: "
              << (out.summary->sample_efficiency_timesteps
                      ? std::to_string(*out.summary->sample_efficiency_timesteps)
                      : std::string("not-stabilized"))
              << "\n";
  }
}

int cmd_train(const CommonFlags& f) {
  const FullConfig cfg = build_config(f);
  const RunOutput out = run_variant(cfg, f.out_dir);
  print_run_result(out);
  return 0;
}

int cmd_transfer(const CommonFlags& f, const std::string& checkpoint, bool reset_buffer) {
  const FullConfig cfg = build_config(f);
  const RunOutput out = transfer_to_fault(checkpoint, cfg, f.out_dir, reset_buffer);
  print_run_result(out);
  return 0;
}

int cmd_ablate(const CommonFlags& f) {
  const FullConfig base = build_config(f);
  for (Variant v : {Variant::winflownets, Variant::v1_no_warmup, Variant::v2_separate_buffers,
                    Variant::cflownets_pretrained}) {
    FullConfig cfg = base;
    cfg.train.variant = v;
    const fs::path dir = fs::path(f.out_dir) / variant_name(v);
    std::cout << "=== " << variant_name(v) << " (seed " << cfg.train.seed << ") ===\n";
    print_run_result(run_variant(cfg, dir));
  }
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& checkpoint, int episodes,
             const std::string& dump_path) {
  const FullConfig cfg = build_config(f);
  const RunCheckpoint c = load_run_checkpoint(checkpoint);
  if (c.env_kind != cfg.env.kind)
    throw config_error("checkpoint env layout does not match --env");
  const FlowNet net{c.flow_params};
  const EvalReport rep =
      evaluate(net, cfg.env, cfg.fault, episodes, cfg.flow, c.global_step,
               derive_seed(cfg.train.seed, "eval-cli"));
  std::cout << "timestep=" << rep.timestep << " mean_reward=" << format_real(rep.mean_reward)
            << " std_reward=" << format_real(rep.std_reward)
            << " ci_width=" << format_real(rep.ci_width) << " n=" << rep.n << "\n";
  if (!dump_path.empty()) {
    dump_rollouts(dump_path, net, cfg.env, cfg.fault, cfg.flow, episodes,
                  derive_seed(cfg.train.seed, "dump-cli"));
    std::cout << "trajectories: " << dump_path << "\n";
  }
  return 0;
}

int cmd_inspect(const std::string& checkpoint) {
  try {
    const RunCheckpoint c = load_run_checkpoint(checkpoint);
    std::cout << "kind: run checkpoint\n";
    std::cout << "variant: " << variant_name(static_cast<Variant>(c.variant)) << "\n";
    std::cout << "env: " << env_name(c.env_kind) << "\n";
    std::cout << "phase: " << (c.phase == 0 ? "warmup" : "dual") << "\n";
    std::cout << "global_step: " << c.global_step << "\n";
    std::cout << "episode: " << c.episode << "\n";
    std::cout << "flow params: " << c.flow_params.values.size()
              << " (adam t=" << c.flow_adam.t << ")\n";
    std::cout << "retrieval params: " << c.retrieval_params.values.size()
              << " (adam t=" << c.retrieval_adam.t << ")\n";
    auto describe = [](const char* name, const ReplayBuffer& b) {
      std::size_t warmup_tagged = 0, terminal = 0;
      for (std::size_t i = 0; i < b.size(); ++i) {
        if (b.at(i).phase == Phase::warmup) ++warmup_tagged;
        if (b.at(i).terminal) ++terminal;
      }
      std::cout << name << ": size=" << b.size() << " capacity=" << b.capacity()
                << " warmup_tagged=" << warmup_tagged << " dual_tagged="
                << (b.size() - warmup_tagged) << " terminal=" << terminal << "\n";
    };
    if (c.buffer) describe("buffer", *c.buffer);
    else std::cout << "buffer: none (evaluation checkpoint)\n";
    if (c.retrieval_buffer) describe("retrieval_buffer", *c.retrieval_buffer);
    return 0;
  } catch (const std::invalid_argument&) {
    // fall through: maybe a bare net checkpoint
  }
  const NetCheckpoint n = load_net_checkpoint(checkpoint);
  std::cout << "kind: net checkpoint\n";
  std::cout << "input_dim: " << n.params.spec.input_dim << "\n";
  std::cout << "hidden:";
  for (int h : n.params.spec.hidden_dims) std::cout << " " << h;
  std::cout << "\noutput_dim: " << n.params.spec.output_dim << "\n";
  std::cout << "params: " << n.params.values.size() << " (adam t=" << n.adam.t << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flow-network co-training: warm-up, dual training, fault transfer"};
  app.require_subcommand(1);

  CommonFlags train_flags, transfer_flags, ablate_flags, eval_flags;
  std::string transfer_checkpoint, eval_checkpoint, inspect_checkpoint, dump_path;
  bool reset_buffer = false;
  int eval_episodes = 10;

  CLI::App* train = app.add_subcommand("train", "train one variant");
  add_common(train, train_flags);

  CLI::App* transfer = app.add_subcommand("transfer", "resume a checkpoint under a fault");
  add_common(transfer, transfer_flags);
  transfer->add_option("--checkpoint", transfer_checkpoint, "run checkpoint with buffer")
      ->required();
  transfer->add_flag("--reset-buffer", reset_buffer, "clear the transferred replay buffer");

  CLI::App* ablate = app.add_subcommand("ablate", "run all four variants with a shared seed");
  add_common(ablate, ablate_flags);

  CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint");
  add_common(eval_cmd, eval_flags);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "run checkpoint")->required();
  eval_cmd->add_option("--episodes", eval_episodes, "rollouts (default 10)");
  eval_cmd->add_option("--dump", dump_path, "write per-step trajectory CSV here");

  CLI::App* inspect = app.add_subcommand("inspect", "print checkpoint stats");
  inspect->add_option("--checkpoint", inspect_checkpoint, "checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(train_flags);
    if (transfer->parsed()) return cmd_transfer(transfer_flags, transfer_checkpoint, reset_buffer);
    if (ablate->parsed()) return cmd_ablate(ablate_flags);
    if (eval_cmd->parsed()) return cmd_eval(eval_flags, eval_checkpoint, eval_episodes, dump_path);
    if (inspect->parsed()) return cmd_inspect(inspect_checkpoint);
  } catch (const numeric_error& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return 3;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
