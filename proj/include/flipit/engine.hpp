#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "flipit/rng.hpp"

namespace flipit {

using AgentId = int;

// The defender is always agent 0 and owns the resource at the start.
inline constexpr AgentId kDefender = 0;

enum class Action : int { NoFlip = 0, Flip = 1 };

// What an agent learns when it flips: nothing, the opponents' last flip
// times, or the complete flip history.
enum class Feedback { NonAdaptive, LastMove, FullHistory };

struct FixedHorizon {
  long long length = 500;  // iterations, >= 1
};

// Unknown stopping: the end time is drawn once per game from a geometric
// distribution with per-iteration stop probability in (0,1).
struct GeometricStop {
  double stop_prob = 0.01;
};

using Horizon = std::variant<FixedHorizon, GeometricStop>;

// Validation failure carrying one message per offending field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

struct GameConfig {
  int n_agents = 2;
  std::vector<double> reward_per_iteration;  // R_i, score units per owned iteration
  std::vector<double> flip_cost;             // C_i, score units per flip
  Horizon horizon = FixedHorizon{};
  std::vector<Feedback> feedback;
  std::vector<AgentId> tie_priority;  // permutation of agent ids, defender first
  std::uint64_t seed = 0;

  // All agents share one reward and one cost; feedback defaults to NonAdaptive.
  static GameConfig uniform(int n_agents, double reward, double cost, Horizon horizon);

  void validate() const;  // throws ConfigError listing every bad field
};

struct FlipEvent {
  AgentId agent = 0;
  long long time = 0;
  bool operator==(const FlipEvent&) const = default;
};

// One agent's belief about the game. The engine hands these out only at the
// agent's own flip instants; between flips the belief goes stale.
struct Knowledge {
  AgentId agent = 0;
  long long t = 0;  // iteration the snapshot was taken at (post-step)
  std::optional<long long> own_last_flip;
  // Indexed by agent id; the agent's own slot mirrors own_last_flip.
  // nullopt means "never flipped as far as this agent knows".
  std::vector<std::optional<long long>> last_known_flip;
  std::vector<FlipEvent> events;  // FullHistory observers only
};

struct StepOutcome {
  long long t = 0;              // iteration the rewards belong to
  std::vector<double> rewards;  // ownership reward minus flip cost, per agent
  bool game_over = false;
};

struct AgentTotals {
  double score = 0.0;
  long long flips = 0;
  double ownership_fraction = 0.0;
};

// Deterministic n-player FlipIt state machine in discrete time. One instance
// is strictly sequential; distinct instances share nothing.
class Game {
 public:
  // Validates the config and, for GeometricStop, draws the realized end time
  // once from rng_seed. Agents never see the realized end.
  Game(GameConfig config, std::uint64_t rng_seed);
  explicit Game(GameConfig config);  // draws from config.seed

  // Applies one simultaneous action profile. The reward for agent i is
  //   R_i * [i owned at t-1] - C_i * [i flips at t]
  // with the defender as owner at t = -1. Flips then take effect and the new
  // owner is the flipping agent highest in tie_priority, if any flipped.
  StepOutcome step(const std::vector<Action>& actions);

  // Feedback released to `agent`, legal only right after a step in which it
  // flipped. LastMove reveals every agent's true last flip time as of now;
  // FullHistory additionally reveals the whole event list.
  Knowledge observe(AgentId agent) const;

  bool over() const { return t_ >= realized_end_; }
  long long now() const { return t_; }
  AgentId owner() const { return owner_; }
  long long realized_end() const { return realized_end_; }
  const GameConfig& config() const { return config_; }
  const std::vector<FlipEvent>& history() const { return history_; }
  std::optional<long long> last_flip(AgentId agent) const;
  const std::vector<double>& accumulated_scores() const { return accumulated_; }
  long long owned_iterations(AgentId agent) const;

  // Totals per agent; legal only once the game is over. Ownership fractions
  // sum to 1 across agents.
  std::vector<AgentTotals> final_scores() const;

 private:
  GameConfig config_;
  long long t_ = 0;
  AgentId owner_ = kDefender;
  long long realized_end_ = 0;
  std::vector<FlipEvent> history_;
  std::vector<std::optional<long long>> last_flip_;
  std::vector<long long> flips_;
  std::vector<double> accumulated_;
  std::vector<long long> owned_;
  std::vector<char> flipped_last_step_;
};

}  // namespace flipit
