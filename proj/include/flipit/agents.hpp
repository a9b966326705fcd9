#pragma once

#include <memory>
#include <optional>
#include <string>

#include "flipit/engine.hpp"
#include "flipit/learner.hpp"
#include "flipit/strategies.hpp"

namespace flipit {

// A player in the per-iteration loop. act() is called once per iteration for
// every agent, then post_step() with the applied outcome; an agent may query
// game.observe() there, but only at its own flip instants.
class Agent {
 public:
  virtual ~Agent() = default;
  virtual void begin_game(const Game& game, Rng& rng) = 0;
  virtual Action act(long long t, Rng& rng) = 0;
  virtual void post_step(const StepOutcome& outcome, const Game& game, Rng& rng) = 0;
  virtual Feedback feedback_mode() const = 0;
  virtual const std::string& token() const = 0;  // strategy grammar echo
};

// Non-adaptive renewal player: flips whenever its sampled schedule says so,
// never looks at the game.
class RenewalAgent final : public Agent {
 public:
  RenewalAgent(AgentId id, RenewalSpec spec, std::string token);
  void begin_game(const Game& game, Rng& rng) override;
  Action act(long long t, Rng& rng) override;
  void post_step(const StepOutcome&, const Game&, Rng&) override {}
  Feedback feedback_mode() const override { return Feedback::NonAdaptive; }
  const std::string& token() const override { return token_; }

 private:
  AgentId id_;
  RenewalProcess process_;
  std::string token_;
  long long next_flip_ = 0;
};

// Last-move player that re-plans at its own flip instants: flips, observes
// the time delta since the opponent's last move, and schedules the next flip
// at the delay maximizing its local benefit.
class GreedyAgent final : public Agent {
 public:
  GreedyAgent(AgentId id, AgentId opponent, GreedySpec spec, std::string token);
  void begin_game(const Game& game, Rng& rng) override;
  Action act(long long t, Rng& rng) override;
  void post_step(const StepOutcome& outcome, const Game& game, Rng& rng) override;
  Feedback feedback_mode() const override { return Feedback::LastMove; }
  const std::string& token() const override { return token_; }
  const GreedySpec& spec() const { return spec_; }

 private:
  void replan(long long t);

  AgentId id_;
  AgentId opponent_;
  GreedySpec spec_;
  std::string token_;
  std::optional<long long> next_flip_;
  std::optional<long long> opp_last_known_;
  bool flipped_ = false;
};

// Deep Q-learning player. The learner (net, replay buffer, exploration
// schedule) persists across games; per-game knowledge resets with the game.
class DqnAgent final : public Agent {
 public:
  DqnAgent(AgentId id, int n_agents, const TrainConfig& cfg, std::uint64_t seed,
           std::string token = "dqn");
  void begin_game(const Game& game, Rng& rng) override;
  Action act(long long t, Rng& rng) override;
  void post_step(const StepOutcome& outcome, const Game& game, Rng& rng) override;
  Feedback feedback_mode() const override { return Feedback::LastMove; }
  const std::string& token() const override { return token_; }

  QLearner& learner() { return learner_; }
  const QLearner& learner() const { return learner_; }
  void set_training(bool on) { training_ = on; }

 private:
  FeatureVec features(long long t) const;

  AgentId id_;
  int n_agents_;
  QLearner learner_;
  std::string token_;
  bool training_ = true;
  long long realized_end_ = 0;
  Knowledge knowledge_;
  FeatureVec pending_state_;
  int pending_action_ = 0;
  int steps_since_train_ = 0;
};

}  // namespace flipit
