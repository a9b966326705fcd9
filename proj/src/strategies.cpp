#include "flipit/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace flipit {

void validate(const RenewalSpec& spec) {
  std::vector<std::string> issues;
  if (const auto* p = std::get_if<Periodic>(&spec)) {
    if (p->period < 1) issues.push_back("periodic.period: must be an integer >= 1");
  } else if (const auto* prp = std::get_if<PeriodicRandomPhase>(&spec)) {
    if (prp->period < 1) issues.push_back("periodic_rp.period: must be an integer >= 1");
  } else {
    const double rate = std::get<Exponential>(spec).rate;
    // A discrete-time rate above 1 cannot be realized with gaps >= 1.
    if (!(rate > 0.0 && rate <= 1.0) || !std::isfinite(rate))
      issues.push_back("exponential.rate: must lie in (0, 1]");
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

double expected_gap(const RenewalSpec& spec) {
  if (const auto* p = std::get_if<Periodic>(&spec)) return static_cast<double>(p->period);
  if (const auto* prp = std::get_if<PeriodicRandomPhase>(&spec)) return static_cast<double>(prp->period);
  return 1.0 / std::get<Exponential>(spec).rate;
}

RenewalProcess::RenewalProcess(RenewalSpec spec) : spec_(spec) { validate(spec_); }

long long RenewalProcess::first_flip_time(Rng& rng) {
  if (std::holds_alternative<Periodic>(spec_)) return 0;
  if (const auto* prp = std::get_if<PeriodicRandomPhase>(&spec_))
    return rng.uniform_int(0, prp->period);
  return rng.geometric1(std::get<Exponential>(spec_).rate);
}

long long RenewalProcess::next_flip_delay(Rng& rng) {
  if (const auto* p = std::get_if<Periodic>(&spec_)) return p->period;
  if (const auto* prp = std::get_if<PeriodicRandomPhase>(&spec_)) return prp->period;
  return rng.geometric1(std::get<Exponential>(spec_).rate);
}

double GapPmf::total() const { return std::accumulate(mass.begin(), mass.end(), 0.0); }

double GapPmf::mean() const {
  double m = 0.0;
  for (std::size_t k = 0; k < mass.size(); ++k) m += static_cast<double>(k + 1) * mass[k];
  return m;
}

long long GapPmf::quantile(double q) const {
  double cdf = 0.0;
  for (std::size_t k = 0; k < mass.size(); ++k) {
    cdf += mass[k];
    if (cdf >= q) return static_cast<long long>(k + 1);
  }
  return support_max();
}

void GapPmf::normalize() {
  const double t = total();
  if (t <= 0.0) throw std::invalid_argument("GapPmf: cannot normalize zero mass");
  for (double& m : mass) m /= t;
}

GapPmf GapPmf::from_spec(const RenewalSpec& spec, double tail_mass) {
  validate(spec);
  GapPmf pmf;
  if (const auto* p = std::get_if<Periodic>(&spec)) {
    pmf.mass.assign(static_cast<std::size_t>(p->period), 0.0);
    pmf.mass.back() = 1.0;
    return pmf;
  }
  if (const auto* prp = std::get_if<PeriodicRandomPhase>(&spec)) {
    // The phase shifts flip times, not the gaps between them.
    pmf.mass.assign(static_cast<std::size_t>(prp->period), 0.0);
    pmf.mass.back() = 1.0;
    return pmf;
  }
  const double rate = std::get<Exponential>(spec).rate;
  if (rate >= 1.0) {
    pmf.mass = {1.0};
    return pmf;
  }
  const auto support = static_cast<std::size_t>(
      std::max(1.0, std::ceil(std::log(tail_mass) / std::log1p(-rate))));
  pmf.mass.resize(support);
  double survive = 1.0;
  for (std::size_t k = 0; k < support; ++k) {
    pmf.mass[k] = rate * survive;
    survive *= 1.0 - rate;
  }
  pmf.normalize();
  return pmf;
}

std::variant<GapPmf, Overdue> conditional_remaining_pmf(const GapPmf& f0, long long delta) {
  if (delta < 0) throw std::invalid_argument("conditional_remaining_pmf: delta must be >= 0");
  if (delta >= f0.support_max()) return Overdue{};
  double tail = 0.0;
  for (long long u = delta + 1; u <= f0.support_max(); ++u) tail += f0.at(u);
  if (tail <= 0.0) return Overdue{};
  GapPmf g;
  g.mass.resize(static_cast<std::size_t>(f0.support_max() - delta));
  for (std::size_t s = 0; s < g.mass.size(); ++s)
    g.mass[s] = f0.at(delta + static_cast<long long>(s) + 1) / tail;
  return g;
}

long long GreedySpec::z_max() const {
  if (horizon_cap > 0) return horizon_cap;
  return 4 * opponent_gaps.quantile(0.999);
}

double greedy_local_benefit(const GreedySpec& spec, const GapPmf& remaining, long long z) {
  if (z < 1) throw std::invalid_argument("greedy_local_benefit: z must be >= 1");
  // E[min(s, z)] = sum_{k=1..z} P(s >= k)
  double expected_owned = 0.0;
  double tail = 1.0;  // P(s >= k), starting at k = 1
  for (long long k = 1; k <= z; ++k) {
    expected_owned += tail;
    tail -= remaining.at(k);
    if (tail < 0.0) tail = 0.0;
  }
  if (!spec.has_tie_priority) expected_owned -= remaining.at(z);
  return (spec.reward * expected_owned - spec.flip_cost) / static_cast<double>(z);
}

std::variant<long long, NoProfitableFlip> greedy_next_move(const GreedySpec& spec, long long delta) {
  const auto conditional = conditional_remaining_pmf(spec.opponent_gaps, delta);
  if (std::holds_alternative<Overdue>(conditional)) return 1LL;  // flip is imminent
  const GapPmf& g = std::get<GapPmf>(conditional);

  const long long cap = spec.z_max();
  long long best_z = 1;
  double best_benefit = -std::numeric_limits<double>::infinity();
  double expected_owned = 0.0;
  double tail = 1.0;
  for (long long z = 1; z <= cap; ++z) {
    expected_owned += tail;
    tail -= g.at(z);
    if (tail < 0.0) tail = 0.0;
    const double owned = expected_owned - (spec.has_tie_priority ? 0.0 : g.at(z));
    const double benefit = (spec.reward * owned - spec.flip_cost) / static_cast<double>(z);
    if (benefit >= best_benefit) {  // ties go to the largest z
      best_benefit = benefit;
      best_z = z;
    }
  }
  if (best_benefit < 0.0) return NoProfitableFlip{};
  return best_z;
}

}  // namespace flipit
