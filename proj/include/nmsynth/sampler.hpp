#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nmsynth/kernel.hpp"

namespace nmsynth {

struct SamplerSettings {
  int n_chains = 2;
  long n_iterations = 100000;
  long burn_in = 40000;
  long thin = 1;
  std::uint64_t seed = 1;
  long adapt_window = 50;       // adaptation batch length; adaptation stops at burn-in
  double target_accept = 0.44;  // optimal-scaling target for one-dimensional updates
  int n_threads = 0;            // 0: NMSYNTH_THREADS env var, else one thread per chain
  bool verbose = false;

  long retained() const { return (n_iterations - burn_in) / thin; }
  void validate() const;
};

// Per-chain, per-parameter retained draws plus the bookkeeping needed to
// audit a run: acceptance rates, adapted step sizes (frozen at burn-in),
// seed and settings provenance.
class PosteriorSamples {
public:
  PosteriorSamples() = default;
  PosteriorSamples(std::vector<std::string> names, SamplerSettings settings);

  std::size_t n_params() const { return names_.size(); }
  std::size_t n_chains() const { return static_cast<std::size_t>(settings_.n_chains); }
  std::size_t retained() const { return static_cast<std::size_t>(settings_.retained()); }
  const std::vector<std::string>& names() const { return names_; }
  const SamplerSettings& settings() const { return settings_; }
  int index_of(const std::string& name) const;

  std::span<const float> chain_param(std::size_t chain, std::size_t param) const;
  std::vector<std::span<const float>> chain_spans(std::size_t param) const;
  // All chains concatenated, as doubles.
  std::vector<double> merged(std::size_t param) const;

  double acceptance_rate(std::size_t chain, std::size_t param) const {
    return acceptance_[chain][param];
  }
  double step_at_burnin(std::size_t chain, std::size_t param) const {
    return step_at_burnin_[chain][param];
  }
  double step_final(std::size_t chain, std::size_t param) const { return step_final_[chain][param]; }

  // chain,iteration,<parameter...> rows; param_subset empty = all parameters.
  void export_csv(const std::string& path, const std::vector<std::size_t>& param_subset = {}) const;

  // sampler internals
  float* chain_data(std::size_t chain) { return draws_[chain].data(); }
  void set_ledger(std::size_t chain, std::vector<double> accept, std::vector<double> step_burnin,
                  std::vector<double> step_final);

private:
  std::vector<std::string> names_;
  SamplerSettings settings_;
  std::vector<std::vector<float>> draws_;  // [chain][param * retained + t]
  std::vector<std::vector<double>> acceptance_;
  std::vector<std::vector<double>> step_at_burnin_;
  std::vector<std::vector<double>> step_final_;
};

// Adaptive Metropolis-within-Gibbs: continuous parameters move one at a time
// by Gaussian random walks on an unconstrained scale (logit transforms with
// Jacobian corrections for interval supports), step sizes adapted toward the
// target acceptance rate during burn-in only; binary indicators are drawn
// exactly from their two-point full conditionals. Chains use independent RNG
// streams derived from the master seed and may run in parallel; results are
// bit-identical for identical (kernel, settings).
PosteriorSamples run_chains(const PosteriorKernel& kernel, const SamplerSettings& settings);

}  // namespace nmsynth
