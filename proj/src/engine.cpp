#include "flipit/engine.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace flipit {

namespace {

std::string join_issues(const std::vector<std::string>& issues) {
  std::ostringstream out;
  out << "invalid config:";
  for (const auto& issue : issues) out << "\n  - " << issue;
  return out.str();
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> issues)
    : std::runtime_error(join_issues(issues)), issues_(std::move(issues)) {}

GameConfig GameConfig::uniform(int n_agents, double reward, double cost, Horizon horizon) {
  GameConfig cfg;
  cfg.n_agents = n_agents;
  cfg.reward_per_iteration.assign(static_cast<std::size_t>(n_agents), reward);
  cfg.flip_cost.assign(static_cast<std::size_t>(n_agents), cost);
  cfg.horizon = horizon;
  cfg.feedback.assign(static_cast<std::size_t>(n_agents), Feedback::NonAdaptive);
  cfg.tie_priority.resize(static_cast<std::size_t>(n_agents));
  std::iota(cfg.tie_priority.begin(), cfg.tie_priority.end(), 0);
  return cfg;
}

void GameConfig::validate() const {
  std::vector<std::string> issues;
  const auto n = static_cast<std::size_t>(n_agents);
  if (n_agents < 2) issues.push_back("n_agents: need at least 2 agents, got " + std::to_string(n_agents));
  if (reward_per_iteration.size() != n)
    issues.push_back("reward_per_iteration: expected one entry per agent");
  if (flip_cost.size() != n) issues.push_back("flip_cost: expected one entry per agent");
  for (std::size_t i = 0; i < reward_per_iteration.size(); ++i) {
    const double r = reward_per_iteration[i];
    if (!(r >= 0.0) || !std::isfinite(r))
      issues.push_back("reward_per_iteration[" + std::to_string(i) + "]: must be finite and >= 0");
  }
  for (std::size_t i = 0; i < flip_cost.size(); ++i) {
    const double c = flip_cost[i];
    if (!(c >= 0.0) || !std::isfinite(c))
      issues.push_back("flip_cost[" + std::to_string(i) + "]: must be finite and >= 0");
  }
  if (const auto* fixed = std::get_if<FixedHorizon>(&horizon)) {
    if (fixed->length < 1) issues.push_back("horizon.length: fixed horizon must be >= 1");
  } else {
    const double p = std::get<GeometricStop>(horizon).stop_prob;
    if (!(p > 0.0 && p < 1.0))
      issues.push_back("horizon.stop_prob: must lie strictly inside (0,1)");
  }
  if (feedback.size() != n) issues.push_back("feedback: expected one entry per agent");
  if (tie_priority.size() != n) {
    issues.push_back("tie_priority: expected a permutation of all agent ids");
  } else {
    std::vector<char> seen(n, 0);
    bool valid = true;
    for (AgentId a : tie_priority) {
      if (a < 0 || a >= n_agents || seen[static_cast<std::size_t>(a)]) {
        valid = false;
        break;
      }
      seen[static_cast<std::size_t>(a)] = 1;
    }
    if (!valid) issues.push_back("tie_priority: must be a permutation of all agent ids");
    else if (tie_priority.front() != kDefender)
      issues.push_back("tie_priority: the defender (agent 0) must come first");
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

Game::Game(GameConfig config, std::uint64_t rng_seed) : config_(std::move(config)) {
  config_.validate();
  const auto n = static_cast<std::size_t>(config_.n_agents);
  last_flip_.assign(n, std::nullopt);
  flips_.assign(n, 0);
  accumulated_.assign(n, 0.0);
  owned_.assign(n, 0);
  flipped_last_step_.assign(n, 0);
  if (const auto* fixed = std::get_if<FixedHorizon>(&config_.horizon)) {
    realized_end_ = fixed->length;
  } else {
    Rng rng(rng_seed);
    realized_end_ = rng.geometric1(std::get<GeometricStop>(config_.horizon).stop_prob);
  }
}

Game::Game(GameConfig config) : Game(config, config.seed) {}

StepOutcome Game::step(const std::vector<Action>& actions) {
  if (over()) throw std::logic_error("step: game is over (t == realized end)");
  if (actions.size() != static_cast<std::size_t>(config_.n_agents))
    throw std::invalid_argument("step: expected one action per agent");

  StepOutcome out;
  out.t = t_;
  out.rewards.resize(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const bool owned_prev = owner_ == static_cast<AgentId>(i);
    const bool flips = actions[i] == Action::Flip;
    out.rewards[i] = config_.reward_per_iteration[i] * (owned_prev ? 1.0 : 0.0) -
                     config_.flip_cost[i] * (flips ? 1.0 : 0.0);
    accumulated_[i] += out.rewards[i];
    flipped_last_step_[i] = flips ? 1 : 0;
    if (flips) {
      history_.push_back({static_cast<AgentId>(i), t_});
      last_flip_[i] = t_;
      ++flips_[i];
    }
  }
  // Simultaneous flips go to the flipper highest in tie_priority.
  for (AgentId a : config_.tie_priority) {
    if (actions[static_cast<std::size_t>(a)] == Action::Flip) {
      owner_ = a;
      break;
    }
  }
  ++owned_[static_cast<std::size_t>(owner_)];
  ++t_;
  out.game_over = over();
  return out;
}

Knowledge Game::observe(AgentId agent) const {
  if (agent < 0 || agent >= config_.n_agents) throw std::invalid_argument("observe: unknown agent id");
  const auto idx = static_cast<std::size_t>(agent);
  if (config_.feedback[idx] == Feedback::NonAdaptive)
    throw std::logic_error("observe: agent " + std::to_string(agent) + " is non-adaptive and receives no feedback");
  if (t_ == 0 || !flipped_last_step_[idx])
    throw std::logic_error("observe: feedback is released only at agent " + std::to_string(agent) +
                           "'s own flip instants");
  Knowledge k;
  k.agent = agent;
  k.t = t_;
  k.own_last_flip = last_flip_[idx];
  k.last_known_flip = last_flip_;
  if (config_.feedback[idx] == Feedback::FullHistory) k.events = history_;
  return k;
}

std::optional<long long> Game::last_flip(AgentId agent) const {
  return last_flip_.at(static_cast<std::size_t>(agent));
}

long long Game::owned_iterations(AgentId agent) const {
  return owned_.at(static_cast<std::size_t>(agent));
}

std::vector<AgentTotals> Game::final_scores() const {
  if (!over()) throw std::logic_error("final_scores: game is not over yet");
  std::vector<AgentTotals> totals(accumulated_.size());
  for (std::size_t i = 0; i < totals.size(); ++i) {
    totals[i].score = accumulated_[i];
    totals[i].flips = flips_[i];
    totals[i].ownership_fraction = static_cast<double>(owned_[i]) / static_cast<double>(realized_end_);
  }
  return totals;
}

}  // namespace flipit
