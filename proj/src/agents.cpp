#include "flipit/agents.hpp"

#include <cassert>

namespace flipit {

RenewalAgent::RenewalAgent(AgentId id, RenewalSpec spec, std::string token)
    : id_(id), process_(spec), token_(std::move(token)) {}

void RenewalAgent::begin_game(const Game&, Rng& rng) {
  next_flip_ = process_.first_flip_time(rng);
}

Action RenewalAgent::act(long long t, Rng& rng) {
  if (t != next_flip_) return Action::NoFlip;
  next_flip_ += process_.next_flip_delay(rng);
  return Action::Flip;
}

GreedyAgent::GreedyAgent(AgentId id, AgentId opponent, GreedySpec spec, std::string token)
    : id_(id), opponent_(opponent), spec_(std::move(spec)), token_(std::move(token)) {}

void GreedyAgent::begin_game(const Game&, Rng&) {
  next_flip_.reset();
  opp_last_known_.reset();
  flipped_ = false;
  replan(0);
}

void GreedyAgent::replan(long long t) {
  // An opponent that was never seen flipping counts as having flipped at 0.
  const long long delta = t - opp_last_known_.value_or(0);
  const auto move = greedy_next_move(spec_, delta);
  if (const auto* z = std::get_if<long long>(&move))
    next_flip_ = t + *z;
  else
    next_flip_.reset();  // nothing profitable; re-evaluated as time passes
}

Action GreedyAgent::act(long long t, Rng&) {
  if (!next_flip_) replan(t);
  flipped_ = next_flip_ && t >= *next_flip_;
  return flipped_ ? Action::Flip : Action::NoFlip;
}

void GreedyAgent::post_step(const StepOutcome& outcome, const Game& game, Rng&) {
  if (!flipped_) return;
  const Knowledge k = game.observe(id_);
  opp_last_known_ = k.last_known_flip[static_cast<std::size_t>(opponent_)];
  replan(outcome.t);
}

DqnAgent::DqnAgent(AgentId id, int n_agents, const TrainConfig& cfg, std::uint64_t seed,
                   std::string token)
    : id_(id),
      n_agents_(n_agents),
      learner_(feature_count(n_agents, cfg.features), cfg, seed),
      token_(std::move(token)) {
  knowledge_.agent = id;
}

void DqnAgent::begin_game(const Game& game, Rng&) {
  realized_end_ = game.realized_end();
  knowledge_.t = 0;
  knowledge_.own_last_flip.reset();
  knowledge_.last_known_flip.assign(static_cast<std::size_t>(n_agents_), std::nullopt);
  steps_since_train_ = 0;
}

FeatureVec DqnAgent::features(long long t) const {
  Knowledge k = knowledge_;
  k.t = t;
  return encode_state(k, learner_.config().features, realized_end_);
}

Action DqnAgent::act(long long t, Rng& rng) {
  pending_state_ = features(t);
  pending_action_ = training_ ? learner_.act(pending_state_, rng)
                              : (learner_.q_values(pending_state_)[1] > learner_.q_values(pending_state_)[0] ? 1 : 0);
  return pending_action_ == 1 ? Action::Flip : Action::NoFlip;
}

void DqnAgent::post_step(const StepOutcome& outcome, const Game& game, Rng&) {
  if (pending_action_ == 1) {
    const Knowledge fresh = game.observe(id_);
    knowledge_.own_last_flip = fresh.own_last_flip;
    knowledge_.last_known_flip = fresh.last_known_flip;
  }
  Transition tr;
  tr.state = pending_state_;
  tr.next_state = features(outcome.t + 1);
  tr.action = pending_action_;
  tr.reward = outcome.rewards[static_cast<std::size_t>(id_)];
  tr.terminal = outcome.game_over;
  learner_.record(std::move(tr));
  if (training_ && ++steps_since_train_ >= learner_.config().train_period) {
    steps_since_train_ = 0;
    learner_.train_step();
  }
}

}  // namespace flipit
