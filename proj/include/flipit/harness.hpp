#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flipit/agents.hpp"
#include "flipit/engine.hpp"
#include "flipit/learner.hpp"
#include "flipit/strategies.hpp"

namespace flipit {

// ---- strategy grammar -------------------------------------------------------
//   periodic:50 | periodic_rp:50 | exponential:0.05 | greedy:<renewal-token>
//   | dqn | random
// Tokens are case-insensitive; "random" opponents are resolved per cell from
// the configured combined move rate.
struct StrategySpec {
  enum class Kind { Renewal, Greedy, Dqn, Random };
  Kind kind = Kind::Renewal;
  std::optional<RenewalSpec> renewal;           // Kind::Renewal
  std::optional<RenewalSpec> greedy_opponent;   // Kind::Greedy
  std::string token;                            // normalized echo
};

StrategySpec parse_strategy(std::string_view token);  // throws ConfigError naming the bad token

enum class OutputFormat { Csv, Json };

struct OutputConfig {
  std::string dir = "results";
  OutputFormat format = OutputFormat::Csv;
};

struct SweepAxis {
  std::string param;  // periodic_period | exponential_rate | move_rate | n_agents
  std::vector<double> values;
};

struct ExperimentConfig {
  GameConfig game;
  std::vector<std::string> agent_tokens;
  TrainConfig train;
  long long n_games = 1;
  std::uint64_t base_seed = 1;
  double random_move_rate = 0.0;  // combined move rate shared by "random" opponents
  int window = 100;               // moving-average window, in games
  double tail_fraction = 0.2;     // converged mean uses this final fraction of games
  OutputConfig out;
  std::vector<SweepAxis> sweep;

  void validate() const;  // throws ConfigError with every issue and its field path
  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig from_json_text(const std::string& text,
                                         const std::string& origin = "<memory>");
  std::string to_json_text() const;  // canonical (sorted keys); input to config_hash
  std::string config_hash() const;
};

struct GameResult {
  long long game_index = 0;
  long long realized_length = 0;
  std::vector<AgentTotals> agents;
  std::vector<double> score_per_iteration;
};

struct RunSummary {
  std::vector<std::string> strategies;
  std::vector<GameResult> games;
  // moving_average_*[agent][k] covers games [k, k + window)
  std::vector<std::vector<double>> moving_average_score;
  std::vector<std::vector<double>> moving_average_per_iter;
  std::vector<double> converged_score;      // per agent, mean per game over the tail
  std::vector<double> converged_per_iter;   // per agent
  std::vector<double> converged_flip_rate;  // per agent, flips per iteration
  std::vector<double> converged_ownership;  // per agent
  long long floor_game = 0;      // first game starting with epsilon at its floor
  long long converged_from = 0;  // first game inside the converged tail
  int window = 100;
  double tail_fraction = 0.2;
  double wall_seconds = 0.0;  // informational only, never written to result files
};

// Agents for one run, in agent-id order. cell_seed feeds every per-agent
// stream, the learner init and the resolution of "random" opponents.
std::vector<std::unique_ptr<Agent>> make_agents(const ExperimentConfig& cfg,
                                                std::uint64_t cell_seed);

// One game driven end to end: renewal agents flip on their schedules,
// adaptive agents act on their knowledge, last-move feedback is delivered
// only at own-flip instants. Deterministic in (config, agents, seed).
GameResult run_game(const GameConfig& game_cfg, std::vector<std::unique_ptr<Agent>>& agents,
                    std::uint64_t game_seed, std::vector<FlipEvent>* trace = nullptr);

// n_games sequential games with persistent agents; per-game seeds derive from
// (base_seed, cell_index, game index).
RunSummary run_games(const ExperimentConfig& cfg, std::vector<std::unique_ptr<Agent>>& agents,
                     std::uint64_t cell_index = 0);

// Training run: requires exactly one dqn agent; optionally hands back the
// checkpoint text of the trained learner.
RunSummary run_training(const ExperimentConfig& cfg, std::string* checkpoint_text = nullptr);

// Benchmark run for non-learning agents (greedy vs renewal and the like).
RunSummary run_bench(const ExperimentConfig& cfg);

// Moving averages plus the converged tail over per-game results.
// floor_game: first game with exploration already at its floor (0 when no
// learner is present); the tail covers the final tail_fraction of the games
// from floor_game on.
RunSummary summarize(std::vector<GameResult> games, std::vector<std::string> strategies,
                     int window, double tail_fraction, long long floor_game = 0);

struct SweepCell {
  std::size_t index = 0;
  std::map<std::string, double> params;
  ExperimentConfig config;
  RunSummary summary;
  std::string checkpoint_text;
};

// Per-cell configs from the cartesian product of the sweep axes, in
// row-major declaration order. Cell seeds derive from (base_seed, index), so
// cells are independent and order-insensitive.
std::vector<SweepCell> expand_sweep(const ExperimentConfig& cfg);
std::vector<SweepCell> run_sweep(const ExperimentConfig& cfg, int jobs = 1);

// ---- deterministic result files ----------------------------------------------
// All writers emit byte-identical files for identical (config, seed) runs.
std::filesystem::path write_run_files(const RunSummary& summary, const ExperimentConfig& cfg,
                                      std::uint64_t cell_index,
                                      const std::filesystem::path& dir,
                                      const std::string& checkpoint_text = "");
std::filesystem::path write_trace_file(const std::vector<FlipEvent>& events,
                                       const GameResult& result,
                                       const std::vector<std::string>& strategies,
                                       const std::filesystem::path& dir);
std::filesystem::path write_sweep_files(const std::vector<SweepCell>& cells,
                                        const ExperimentConfig& cfg,
                                        const std::filesystem::path& dir);

}  // namespace flipit
