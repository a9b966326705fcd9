#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "flipit/engine.hpp"
#include "flipit/rng.hpp"

namespace flipit {

// Deterministic spacing: flips every `period` iterations starting at t = 0.
struct Periodic {
  long long period = 1;
};

// Same spacing, but the first flip lands at a phase drawn once per game
// uniformly from {0, ..., period-1}.
struct PeriodicRandomPhase {
  long long period = 1;
};

// Memoryless spacing: gaps are geometric on {1, 2, ...} with success
// probability `rate`, so the expected gap is exactly 1/rate.
struct Exponential {
  double rate = 0.05;
};

using RenewalSpec = std::variant<Periodic, PeriodicRandomPhase, Exponential>;

void validate(const RenewalSpec& spec);    // throws ConfigError
double expected_gap(const RenewalSpec& spec);

// Stateful renewal stream for one game. first_flip_time() yields the phase
// (the first arrival); next_flip_delay() the i.i.d. gaps between renewals.
class RenewalProcess {
 public:
  explicit RenewalProcess(RenewalSpec spec);
  long long first_flip_time(Rng& rng);
  long long next_flip_delay(Rng& rng);
  const RenewalSpec& spec() const { return spec_; }

 private:
  RenewalSpec spec_;
};

// Probability mass over inter-flip gaps; mass[k] is P(gap == k+1), so the
// support is {1, ..., mass.size()}.
struct GapPmf {
  std::vector<double> mass;

  long long support_max() const { return static_cast<long long>(mass.size()); }
  double at(long long gap) const {
    return gap >= 1 && gap <= support_max() ? mass[static_cast<std::size_t>(gap - 1)] : 0.0;
  }
  double total() const;
  double mean() const;
  long long quantile(double q) const;  // smallest gap with CDF >= q
  void normalize();

  // Gap distribution implied by a renewal spec. Exponential tails are cut
  // where less than tail_mass remains, then renormalized.
  static GapPmf from_spec(const RenewalSpec& spec, double tail_mass = 1e-6);
};

// The opponent is overdue: f0 leaves no mass beyond delta.
struct Overdue {};

// Distribution of the time until the opponent's next flip, given that its
// last flip was delta iterations ago: g(s) = f0(delta + s) / P(gap > delta).
std::variant<GapPmf, Overdue> conditional_remaining_pmf(const GapPmf& f0, long long delta);

struct GreedySpec {
  GapPmf opponent_gaps;       // f0, the opponent's inter-flip distribution
  long long horizon_cap = 0;  // z_max; 0 means "derive from f0" (4x its 0.999 quantile)
  double reward = 1.0;
  double flip_cost = 4.0;
  bool has_tie_priority = true;

  long long z_max() const;
};

// Expected benefit per iteration of flipping now and again z iterations
// later: (R * E[owned time in the window] - C) / z, where owned time is
// min(s, z) and an opponent flip at exactly z costs the boundary iteration
// when the agent lacks tie priority.
double greedy_local_benefit(const GreedySpec& spec, const GapPmf& remaining, long long z);

struct NoProfitableFlip {};

// argmax of the local benefit over z in [1, z_max], ties resolved toward the
// largest z. An overdue opponent short-circuits to z = 1 (flip imminent);
// an everywhere-negative benefit comes back as NoProfitableFlip and the
// caller may wait a step and re-evaluate.
std::variant<long long, NoProfitableFlip> greedy_next_move(const GreedySpec& spec, long long delta);

}  // namespace flipit
