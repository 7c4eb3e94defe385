#ifndef SEROMRP_SAMPLER_HPP
#define SEROMRP_SAMPLER_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "seromrp/types.hpp"

// Hamiltonian Monte Carlo over an unconstrained parameter space with
// dual-averaging step-size adaptation and a diagonal mass matrix estimated
// during warmup.  Trajectories use a fixed integration path length with a
// jittered leapfrog step count (uniform over [0.8L, 1.2L]) instead of
// dynamic trajectory termination: simpler to verify, and adequate for the
// posteriors in this project.
namespace seromrp {

struct SamplerConfig {
  int chains = 4;
  int warmup = 1000;
  int draws = 1000;
  std::uint64_t seed = 0;
  double target_accept = 0.8;
  int max_leapfrog_steps = 1024;
  // Target integration time per trajectory; the base step count is
  // round(path_length / step_size), clamped to [1, max_leapfrog_steps].
  double path_length = 1.5;
  // Initial positions are drawn uniformly from [-init_radius, init_radius].
  double init_radius = 2.0;
  // Worker threads for running chains in parallel; 0 means one per chain up
  // to the hardware concurrency.  Results do not depend on this value.
  int threads = 0;

  void validate() const;
};

struct ChainStats {
  double accept_rate = 0.0;
  int divergences = 0;
  double step_size = 0.0;
};

// Post-warmup draws, one matrix per chain (rows = draws, cols = parameters),
// already mapped to the constrained scale when a constrain function was
// supplied to run().
struct Draws {
  std::vector<std::string> param_names;
  std::vector<Matrix> chains;
  std::vector<ChainStats> stats;

  int n_chains() const { return static_cast<int>(chains.size()); }
  Eigen::Index n_draws() const { return chains.empty() ? 0 : chains.front().rows(); }
  Eigen::Index dim() const { return chains.empty() ? 0 : chains.front().cols(); }
  int total_divergences() const;

  // Index of a named parameter; throws std::out_of_range if absent.
  Eigen::Index index_of(std::string_view name) const;

  // All chains stacked row-wise in chain order.
  Matrix stacked() const;
  Vector stacked_column(Eigen::Index j) const;
};

// Log density and gradient of the target, evaluated jointly.  Must write a
// gradient of the same dimension as the input and be safe for concurrent
// read-only use.  Non-finite regions should return -inf with a zero gradient.
using LogDensityGradient = std::function<double(const Vector&, Vector&)>;

// Optional map from the unconstrained sample space to the reported scale.
using ConstrainFn = std::function<Vector(const Vector&)>;

// Runs cfg.chains independent chains and merges them by chain index, so the
// result is a deterministic function of (target, dim, cfg) regardless of
// thread count.  Throws std::runtime_error if no finite starting point is
// found after 100 jittered initializations.
Draws run(const LogDensityGradient& logpost_grad, int dim, const SamplerConfig& cfg,
          const ConstrainFn& constrain = {});

}  // namespace seromrp

#endif  // SEROMRP_SAMPLER_HPP
