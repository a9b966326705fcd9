#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

// Small statistics kit for the test suites: moments, chi-square and
// Kolmogorov-Smirnov checks against reference distributions.
namespace teststat {

inline double mean(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  return m / static_cast<double>(xs.size());
}

inline double sample_variance(const std::vector<double>& xs) {
  const double m = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return acc / static_cast<double>(xs.size() - 1);
}

inline double standard_error(const std::vector<double>& xs) {
  return std::sqrt(sample_variance(xs) / static_cast<double>(xs.size()));
}

// Upper 0.99 quantile of chi-square: exact table for small df,
// Wilson-Hilferty beyond it.
inline double chi2_quantile_99(int df) {
  static const double table[] = {6.635, 9.210, 11.345, 13.277, 15.086,
                                 16.812, 18.475, 20.090, 21.666, 23.209};
  if (df < 1) throw std::invalid_argument("chi2_quantile_99: df must be >= 1");
  if (df <= 10) return table[df - 1];
  const double z99 = 2.3263478740408408;
  const double a = 2.0 / (9.0 * df);
  const double c = 1.0 - a + z99 * std::sqrt(a);
  return df * c * c * c;
}

// Pearson statistic for observed counts against equal expected counts.
inline double chi2_uniform_stat(const std::vector<long long>& counts, double total) {
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0.0;
  for (long long c : counts) {
    const double d = static_cast<double>(c) - expected;
    stat += d * d / expected;
  }
  return stat;
}

// true = consistent with uniform at the 1% level
inline bool chi2_uniform_ok(const std::vector<long long>& counts) {
  double total = 0.0;
  for (long long c : counts) total += static_cast<double>(c);
  return chi2_uniform_stat(counts, total) <= chi2_quantile_99(static_cast<int>(counts.size()) - 1);
}

// Exact discrete KS statistic against the uniform distribution on
// {0, ..., n_values-1}. The asymptotic critical value is conservative for
// discrete supports.
inline bool ks_uniform_discrete_ok(std::vector<long long> samples, long long n_values) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d_max = 0.0;
  std::size_t i = 0;
  for (long long v = 0; v < n_values; ++v) {
    while (i < samples.size() && samples[i] <= v) ++i;
    const double empirical = static_cast<double>(i) / n;
    const double reference = static_cast<double>(v + 1) / static_cast<double>(n_values);
    d_max = std::max(d_max, std::abs(empirical - reference));
  }
  const double critical_1pct = 1.6276 / std::sqrt(n);
  return d_max <= critical_1pct;
}

// Chi-square independence test on lag-1 pairs, binned by empirical quartiles.
// true = no evidence against independence at the 1% level (df = 9).
inline bool lag1_independence_ok(const std::vector<double>& xs) {
  std::vector<double> sorted = xs;
  std::sort(sorted.begin(), sorted.end());
  const auto quartile = [&](double q) { return sorted[static_cast<std::size_t>(q * (sorted.size() - 1))]; };
  const double q1 = quartile(0.25), q2 = quartile(0.5), q3 = quartile(0.75);
  const auto bin = [&](double x) { return x <= q1 ? 0 : x <= q2 ? 1 : x <= q3 ? 2 : 3; };

  double counts[4][4] = {};
  double row[4] = {}, col[4] = {};
  const std::size_t pairs = xs.size() - 1;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const int a = bin(xs[i]), b = bin(xs[i + 1]);
    counts[a][b] += 1.0;
    row[a] += 1.0;
    col[b] += 1.0;
  }
  double stat = 0.0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      const double expected = row[a] * col[b] / static_cast<double>(pairs);
      if (expected < 1e-9) continue;
      const double d = counts[a][b] - expected;
      stat += d * d / expected;
    }
  return stat <= chi2_quantile_99(9);
}

}  // namespace teststat
