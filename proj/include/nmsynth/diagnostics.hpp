#pragma once

#include <optional>
#include <span>
#include <vector>

namespace nmsynth {

// Classical Gelman-Rubin potential scale reduction over >= 2 chains of equal
// length. Returns nullopt when the statistic is not computable (zero
// within-chain variance). Values near 1 indicate between/within agreement.
std::optional<double> gelman_rubin(const std::vector<std::span<const float>>& chains);

// Effective sample size across chains via Geyer's initial-positive-sequence
// autocorrelation estimator, summed over chains. nullopt for constant chains.
std::optional<double> effective_sample_size(const std::vector<std::span<const float>>& chains);

// Single-chain convenience overloads.
std::optional<double> effective_sample_size(std::span<const float> chain);

double sample_mean(std::span<const float> xs);
double sample_variance(std::span<const float> xs);  // n-1 denominator

}  // namespace nmsynth
