// flipit: run, train and sweep desk-scale FlipIt experiments from JSON
// configs. Exit codes: 0 success, 1 validation error, 2 runtime failure.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "flipit/harness.hpp"

namespace {

using namespace flipit;

struct GlobalArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> format;
  int jobs = 1;
};

ExperimentConfig load_with_overrides(const GlobalArgs& args) {
  ExperimentConfig cfg = ExperimentConfig::load(args.config_path);
  if (args.seed) cfg.base_seed = *args.seed;
  if (args.out_dir) cfg.out.dir = *args.out_dir;
  if (args.format) {
    if (*args.format == "csv")
      cfg.out.format = OutputFormat::Csv;
    else if (*args.format == "json")
      cfg.out.format = OutputFormat::Json;
    else
      throw ConfigError({"--format: expected 'csv' or 'json'"});
  }
  return cfg;
}

void print_converged(const RunSummary& summary) {
  for (std::size_t a = 0; a < summary.strategies.size(); ++a)
    std::printf("agent %zu (%s): converged score/iter %.6f, flips/iter %.6f, ownership %.4f\n", a,
                summary.strategies[a].c_str(), summary.converged_per_iter[a],
                summary.converged_flip_rate[a], summary.converged_ownership[a]);
  std::printf("converged window: games [%lld, %lld), wall %.1fs\n", summary.converged_from,
              summary.converged_from + static_cast<long long>(summary.games.size()) -
                  summary.converged_from,
              summary.wall_seconds);
}

int cmd_run(const GlobalArgs& args) {
  ExperimentConfig cfg = load_with_overrides(args);
  auto agents = make_agents(cfg, derive_seed(cfg.base_seed, 0));
  std::vector<FlipEvent> trace;
  const std::uint64_t game_seed = derive_seed(derive_seed(derive_seed(cfg.base_seed, 0), 1), 0);
  GameResult result = run_game(cfg.game, agents, game_seed, &trace);
  const auto path = write_trace_file(trace, result, cfg.agent_tokens, cfg.out.dir);
  for (std::size_t a = 0; a < cfg.agent_tokens.size(); ++a)
    std::printf("agent %zu (%s): score %.6f (%.6f/iter), flips %lld, ownership %.4f\n", a,
                cfg.agent_tokens[a].c_str(), result.agents[a].score, result.score_per_iteration[a],
                result.agents[a].flips, result.agents[a].ownership_fraction);
  std::printf("trace: %s\n", path.string().c_str());
  return 0;
}

int cmd_train(const GlobalArgs& args) {
  ExperimentConfig cfg = load_with_overrides(args);
  std::string checkpoint;
  const RunSummary summary = run_training(cfg, &checkpoint);
  write_run_files(summary, cfg, 0, cfg.out.dir, checkpoint);
  print_converged(summary);
  std::printf("results: %s\n", cfg.out.dir.c_str());
  return 0;
}

int cmd_greedy_bench(const GlobalArgs& args) {
  ExperimentConfig cfg = load_with_overrides(args);
  bool has_greedy = false;
  for (const auto& token : cfg.agent_tokens)
    if (parse_strategy(token).kind == StrategySpec::Kind::Greedy) has_greedy = true;
  if (!has_greedy) throw ConfigError({"agents: greedy-bench expects at least one greedy agent"});
  const RunSummary summary = run_bench(cfg);
  write_run_files(summary, cfg, 0, cfg.out.dir);
  print_converged(summary);
  std::printf("results: %s\n", cfg.out.dir.c_str());
  return 0;
}

int cmd_sweep(const GlobalArgs& args) {
  ExperimentConfig cfg = load_with_overrides(args);
  const auto cells = run_sweep(cfg, args.jobs);
  write_sweep_files(cells, cfg, cfg.out.dir);
  for (const auto& cell : cells) {
    std::printf("cell %zu:", cell.index);
    for (const auto& [param, value] : cell.params) std::printf(" %s=%g", param.c_str(), value);
    std::size_t adaptive = 0;
    for (std::size_t a = 0; a < cell.summary.strategies.size(); ++a)
      if (parse_strategy(cell.summary.strategies[a]).kind == StrategySpec::Kind::Dqn) adaptive = a;
    std::printf(" -> %s %.6f/iter\n", cell.summary.strategies[adaptive].c_str(),
                cell.summary.converged_per_iter[adaptive]);
  }
  std::printf("results: %s\n", cfg.out.dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale FlipIt laboratory: games, strategies and Q-learning runs"};
  app.require_subcommand(1);

  GlobalArgs args;
  const auto add_common = [&](CLI::App* sub, bool with_jobs = false) {
    sub->add_option("--config", args.config_path, "JSON experiment config")->required();
    sub->add_option("--seed", args.seed, "override base_seed");
    sub->add_option("--out", args.out_dir, "override the output directory");
    sub->add_option("--format", args.format, "override the output format (csv|json)");
    if (with_jobs) sub->add_option("--jobs", args.jobs, "parallel sweep cells");
  };
  auto* run = app.add_subcommand("run", "play one game and dump its full timeline");
  auto* train = app.add_subcommand("train", "train the dqn agent across n_games");
  auto* sweep = app.add_subcommand("sweep", "run every cell of the configured sweep");
  auto* bench = app.add_subcommand("greedy-bench", "benchmark greedy against its opponent");
  add_common(run);
  add_common(train);
  add_common(sweep, true);
  add_common(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(args);
    if (*train) return cmd_train(args);
    if (*sweep) return cmd_sweep(args);
    return cmd_greedy_bench(args);
  } catch (const flipit::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
