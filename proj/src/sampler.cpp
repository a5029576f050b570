#include "nmsynth/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "nmsynth/csv.hpp"

namespace nmsynth {

void SamplerSettings::validate() const {
  if (n_chains < 1) throw std::invalid_argument("n_chains must be at least 1");
  if (n_iterations <= 0) throw std::invalid_argument("n_iterations must be positive");
  if (burn_in < 0 || burn_in >= n_iterations)
    throw std::invalid_argument("burn_in must lie in [0, n_iterations)");
  if (thin < 1) throw std::invalid_argument("thin must be at least 1");
  if ((n_iterations - burn_in) % thin != 0)
    throw std::invalid_argument("n_iterations - burn_in must be divisible by thin");
  if (adapt_window < 1) throw std::invalid_argument("adapt_window must be positive");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("target_accept must lie in (0,1)");
}

PosteriorSamples::PosteriorSamples(std::vector<std::string> names, SamplerSettings settings)
    : names_(std::move(names)), settings_(settings) {
  const std::size_t nc = static_cast<std::size_t>(settings_.n_chains);
  draws_.assign(nc, std::vector<float>(names_.size() * retained(), 0.0f));
  acceptance_.assign(nc, std::vector<double>(names_.size(), 0.0));
  step_at_burnin_.assign(nc, std::vector<double>(names_.size(), 0.0));
  step_final_.assign(nc, std::vector<double>(names_.size(), 0.0));
}

int PosteriorSamples::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  return -1;
}

std::span<const float> PosteriorSamples::chain_param(std::size_t chain, std::size_t param) const {
  return {draws_[chain].data() + param * retained(), retained()};
}

std::vector<std::span<const float>> PosteriorSamples::chain_spans(std::size_t param) const {
  std::vector<std::span<const float>> out;
  for (std::size_t c = 0; c < n_chains(); ++c) out.push_back(chain_param(c, param));
  return out;
}

std::vector<double> PosteriorSamples::merged(std::size_t param) const {
  std::vector<double> out;
  out.reserve(n_chains() * retained());
  for (std::size_t c = 0; c < n_chains(); ++c)
    for (float v : chain_param(c, param)) out.push_back(v);
  return out;
}

void PosteriorSamples::set_ledger(std::size_t chain, std::vector<double> accept,
                                  std::vector<double> step_burnin, std::vector<double> step_final) {
  acceptance_[chain] = std::move(accept);
  step_at_burnin_[chain] = std::move(step_burnin);
  step_final_[chain] = std::move(step_final);
}

void PosteriorSamples::export_csv(const std::string& path, const std::vector<std::size_t>& param_subset) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path, 0, "cannot open for writing");
  std::vector<std::size_t> cols = param_subset;
  if (cols.empty())
    for (std::size_t p = 0; p < n_params(); ++p) cols.push_back(p);
  std::vector<std::string> head{"chain", "iteration"};
  for (std::size_t p : cols) head.push_back(names_[p]);
  out << csv_join(head);
  for (std::size_t c = 0; c < n_chains(); ++c) {
    for (std::size_t t = 0; t < retained(); ++t) {
      std::vector<std::string> row{std::to_string(c + 1), std::to_string(t + 1)};
      for (std::size_t p : cols) row.push_back(format_double(chain_param(c, p)[t]));
      out << csv_join(row);
    }
  }
}

namespace {

double logit(double p) { return std::log(p) - std::log1p(-p); }

struct Transform {
  Support support;
  double upper;

  double log_jacobian(double v) const {
    switch (support) {
      case Support::real: return 0.0;
      case Support::positive_interval:
        if (!(v > 0.0) || !(v < upper)) return -std::numeric_limits<double>::infinity();
        return std::log(v) + std::log(upper - v) - std::log(upper);
      case Support::unit_interval:
        if (!(v > 0.0) || !(v < 1.0)) return -std::numeric_limits<double>::infinity();
        return std::log(v) + std::log1p(-v);
      default: return 0.0;
    }
  }
  double to_unconstrained(double v) const {
    switch (support) {
      case Support::real: return v;
      case Support::positive_interval: return logit(v / upper);
      case Support::unit_interval: return logit(v);
      default: return v;
    }
  }
  double to_constrained(double t) const {
    switch (support) {
      case Support::real: return t;
      case Support::positive_interval: return upper * inv_logit(t);
      case Support::unit_interval: return inv_logit(t);
      default: return t;
    }
  }
};

struct ChainResult {
  std::vector<double> acceptance;
  std::vector<double> step_burnin;
  std::vector<double> step_final;
};

void run_one_chain(const PosteriorKernel& kernel, const SamplerSettings& settings, std::size_t chain,
                   float* out, ChainResult& result) {
  const ParameterSpace& space = kernel.space();
  const std::size_t P = space.size();
  const long retained_stride = settings.retained();

  std::uint64_t chain_seed = settings.seed + 0x9e3779b97f4a7c15ULL * (chain + 1);
  ParameterState state = initial_state(space, chain_seed);
  std::seed_seq seq{static_cast<std::uint32_t>(settings.seed), static_cast<std::uint32_t>(settings.seed >> 32),
                    static_cast<std::uint32_t>(chain + 1), 0x5a17u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // Block value cache kept in sync with the state.
  std::vector<double> cache(kernel.block_count());
  for (std::size_t b = 0; b < cache.size(); ++b) cache[b] = kernel.eval_block(b, state);
  {
    double lp = kernel.log_posterior(state);
    if (!std::isfinite(lp)) {
      std::ostringstream os;
      os << "non-finite log-posterior (" << lp << ") at the initial state of chain " << chain + 1;
      throw std::runtime_error(os.str());
    }
  }

  std::vector<Transform> transform(P);
  std::vector<double> log_step(P, 0.0);
  std::vector<long> window_accepts(P, 0);
  std::vector<long> total_accepts(P, 0);
  for (std::size_t p = 0; p < P; ++p) {
    const ParamDescriptor& d = space.params[p];
    transform[p] = Transform{d.support, d.upper};
    // Scale initial steps to the marginal prior where one exists.
    if (d.support == Support::real && d.prior == MarginalPrior::normal)
      log_step[p] = std::log(std::clamp(2.4 * std::sqrt(d.prior_b), 0.1, 25.0));
    else if (d.support == Support::real)
      log_step[p] = std::log(0.5);
    else
      log_step[p] = 0.0;  // logit scale
  }

  // Bias-mean parameters decouple from the data whenever every indicator that
  // gates them is 0; a random walk then has to wander the vague prior and back.
  // An extra independence draw from the prior (the prior cancels in the
  // acceptance ratio) lets the chain re-enter the data-supported region in one
  // step instead.
  std::vector<std::size_t> prior_refresh;
  for (std::size_t p = 0; p < P; ++p) {
    const ParamDescriptor& d = space.params[p];
    if ((d.role == ParamRole::bias_mean_g || d.role == ParamRole::bias_mean_g_act) &&
        d.prior == MarginalPrior::normal)
      prior_refresh.push_back(p);
  }

  long batch = 0;
  std::vector<double> step_burnin_snapshot;
  const long report_every = settings.verbose ? std::max<long>(1, settings.n_iterations / 10) : 0;

  for (long iter = 0; iter < settings.n_iterations; ++iter) {
    const bool adapting = iter < settings.burn_in;
    for (std::size_t p = 0; p < P; ++p) {
      const ParamDescriptor& d = space.params[p];
      const auto& deps = kernel.blocks_for(p);
      if (d.support == Support::binary) {
        // Exact Gibbs draw from the two-point full conditional.
        double cur = state[p];
        double logw_cur = 0.0;
        for (int b : deps) logw_cur += cache[static_cast<std::size_t>(b)];
        state[p] = 1.0 - cur;
        double logw_other = 0.0;
        static thread_local std::vector<double> other_vals;
        other_vals.clear();
        for (int b : deps) {
          double v = kernel.eval_block(static_cast<std::size_t>(b), state);
          other_vals.push_back(v);
          logw_other += v;
        }
        double diff = logw_other - logw_cur;
        double p_other;
        if (std::isnan(diff)) p_other = 0.0;
        else p_other = inv_logit(diff);
        if (unif(rng) < p_other) {
          for (std::size_t i = 0; i < deps.size(); ++i)
            cache[static_cast<std::size_t>(deps[i])] = other_vals[i];
          if (!adapting) total_accepts[p] += (state[p] != cur);
        } else {
          state[p] = cur;
        }
        continue;
      }

      const Transform& tr = transform[p];
      double v_cur = state[p];
      double t_cur = tr.to_unconstrained(v_cur);
      double step = std::exp(log_step[p]);
      double t_new = t_cur + step * normal(rng);
      double v_new = tr.to_constrained(t_new);

      double delta = kernel.marginal_logprior(p, v_new) - kernel.marginal_logprior(p, v_cur) +
                     tr.log_jacobian(v_new) - tr.log_jacobian(v_cur);
      static thread_local std::vector<double> new_vals;
      new_vals.clear();
      if (std::isfinite(delta)) {
        state[p] = v_new;
        for (int b : deps) {
          double val = kernel.eval_block(static_cast<std::size_t>(b), state);
          new_vals.push_back(val);
          delta += val - cache[static_cast<std::size_t>(b)];
        }
      }
      bool accept = std::isfinite(delta) && (delta >= 0.0 || unif(rng) < std::exp(delta));
      if (accept) {
        for (std::size_t i = 0; i < new_vals.size(); ++i)
          cache[static_cast<std::size_t>(deps[i])] = new_vals[i];
        if (adapting) window_accepts[p] += 1;
        else total_accepts[p] += 1;
      } else {
        state[p] = v_cur;
      }
    }

    if (adapting && (iter + 1) % settings.adapt_window == 0) {
      batch += 1;
      double gain = std::min(0.25, 3.0 / std::sqrt(static_cast<double>(batch)));
      for (std::size_t p = 0; p < P; ++p) {
        if (space.params[p].support == Support::binary) continue;
        double rate = static_cast<double>(window_accepts[p]) / static_cast<double>(settings.adapt_window);
        log_step[p] = std::clamp(log_step[p] + gain * (rate - settings.target_accept), -12.0, 6.0);
        window_accepts[p] = 0;
      }
    }
    if (iter + 1 == settings.burn_in) {
      step_burnin_snapshot.resize(P);
      for (std::size_t p = 0; p < P; ++p) step_burnin_snapshot[p] = std::exp(log_step[p]);
    }

    if (iter >= settings.burn_in && (iter - settings.burn_in) % settings.thin == 0) {
      long t = (iter - settings.burn_in) / settings.thin;
      for (std::size_t p = 0; p < P; ++p)
        out[p * static_cast<std::size_t>(retained_stride) + static_cast<std::size_t>(t)] =
            static_cast<float>(state[p]);
    }
    if (report_every && (iter + 1) % report_every == 0) {
      std::ostringstream os;
      os << "chain " << chain + 1 << ": " << (100 * (iter + 1)) / settings.n_iterations << "%\n";
      std::cerr << os.str();
    }
  }

  if (step_burnin_snapshot.empty()) {
    step_burnin_snapshot.resize(P);
    for (std::size_t p = 0; p < P; ++p) step_burnin_snapshot[p] = std::exp(log_step[p]);
  }
  result.acceptance.resize(P);
  result.step_burnin = std::move(step_burnin_snapshot);
  result.step_final.resize(P);
  const double post = static_cast<double>(settings.n_iterations - settings.burn_in);
  for (std::size_t p = 0; p < P; ++p) {
    result.acceptance[p] = static_cast<double>(total_accepts[p]) / post;
    result.step_final[p] = std::exp(log_step[p]);
  }
}

int resolve_threads(const SamplerSettings& settings) {
  if (settings.n_threads > 0) return settings.n_threads;
  if (const char* env = std::getenv("NMSYNTH_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace

PosteriorSamples run_chains(const PosteriorKernel& kernel, const SamplerSettings& settings) {
  settings.validate();
  std::vector<std::string> names;
  names.reserve(kernel.space().size());
  for (const auto& d : kernel.space().params) names.push_back(d.name);
  PosteriorSamples samples(std::move(names), settings);

  const std::size_t nc = static_cast<std::size_t>(settings.n_chains);
  std::vector<ChainResult> results(nc);
  std::vector<std::exception_ptr> errors(nc);
  const int n_threads = std::min<int>(resolve_threads(settings), static_cast<int>(nc));

  auto work = [&](std::size_t chain) {
    try {
      run_one_chain(kernel, settings, chain, samples.chain_data(chain), results[chain]);
    } catch (...) {
      errors[chain] = std::current_exception();
    }
  };

  if (n_threads <= 1) {
    for (std::size_t c = 0; c < nc; ++c) work(c);
  } else {
    std::vector<std::thread> pool;
    std::size_t next = 0;
    while (next < nc) {
      std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(n_threads), nc - next);
      for (std::size_t i = 0; i < batch; ++i) pool.emplace_back(work, next + i);
      for (auto& t : pool) t.join();
      pool.clear();
      next += batch;
    }
  }
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);

  for (std::size_t c = 0; c < nc; ++c)
    samples.set_ledger(c, std::move(results[c].acceptance), std::move(results[c].step_burnin),
                       std::move(results[c].step_final));
  return samples;
}

}  // namespace nmsynth
