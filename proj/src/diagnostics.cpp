#include "nmsynth/diagnostics.hpp"

#include <cmath>
#include <stdexcept>

namespace nmsynth {

double sample_mean(std::span<const float> xs) {
  double s = 0.0;
  for (float x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_variance(std::span<const float> xs) {
  double m = sample_mean(xs);
  double s = 0.0;
  for (float x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

std::optional<double> gelman_rubin(const std::vector<std::span<const float>>& chains) {
  const std::size_t m = chains.size();
  if (m < 2) throw std::invalid_argument("gelman_rubin needs at least 2 chains");
  const std::size_t n = chains[0].size();
  if (n < 10) throw std::invalid_argument("gelman_rubin needs at least 10 retained draws per chain");
  for (const auto& c : chains)
    if (c.size() != n) throw std::invalid_argument("gelman_rubin: chains must have equal length");

  double w = 0.0;  // mean within-chain variance
  std::vector<double> means(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = sample_mean(chains[c]);
    w += sample_variance(chains[c]);
  }
  w /= static_cast<double>(m);
  if (!(w > 0.0)) return std::nullopt;

  double grand = 0.0;
  for (double mu : means) grand += mu;
  grand /= static_cast<double>(m);
  double b_over_n = 0.0;  // variance of chain means
  for (double mu : means) b_over_n += (mu - grand) * (mu - grand);
  b_over_n /= static_cast<double>(m - 1);

  double nn = static_cast<double>(n);
  double var_hat = (nn - 1.0) / nn * w + b_over_n * (1.0 + 1.0 / static_cast<double>(m));
  return std::sqrt(var_hat / w);
}

std::optional<double> effective_sample_size(std::span<const float> chain) {
  const std::size_t n = chain.size();
  if (n < 4) throw std::invalid_argument("effective_sample_size needs at least 4 draws");
  const double mean = sample_mean(chain);
  // Lazy autocovariance so the scan stops as soon as the sequence turns.
  auto acov = [&](std::size_t t) {
    double s = 0.0;
    for (std::size_t i = 0; i + t < n; ++i) s += (chain[i] - mean) * (chain[i + t] - mean);
    return s / static_cast<double>(n);
  };
  const double c0 = acov(0);
  if (!(c0 > 0.0)) return std::nullopt;

  // Geyer initial positive sequence: accumulate Gamma_t = rho_{2t} + rho_{2t+1}
  // while positive; integrated autocorrelation time = -1 + 2 * sum Gamma_t.
  double sum_pairs = 0.0;
  const std::size_t max_lag = n / 2;
  for (std::size_t t = 0; t + 1 <= max_lag; t += 2) {
    double pair = (acov(t) + acov(t + 1)) / c0;
    if (pair <= 0.0) break;
    sum_pairs += pair;
  }
  double act = -1.0 + 2.0 * sum_pairs;
  if (act < 1.0) act = 1.0;
  return static_cast<double>(n) / act;
}

std::optional<double> effective_sample_size(const std::vector<std::span<const float>>& chains) {
  double total = 0.0;
  bool any = false;
  for (const auto& c : chains) {
    auto ess = effective_sample_size(c);
    if (ess) {
      total += *ess;
      any = true;
    }
  }
  if (!any) return std::nullopt;
  return total;
}

}  // namespace nmsynth
