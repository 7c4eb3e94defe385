#ifndef SEROMRP_DIAGNOSTICS_HPP
#define SEROMRP_DIAGNOSTICS_HPP

#include <string>
#include <vector>

#include "seromrp/sampler.hpp"
#include "seromrp/types.hpp"

// Convergence diagnostics for multi-chain MCMC output: split-R-hat and
// rank-normalized bulk effective sample size.  Zero-variance parameters are
// degenerate for both estimators and are reported as NaN rather than as a
// spuriously perfect value.
namespace seromrp {

struct Diagnostics {
  std::vector<std::string> param_names;
  Vector rhat;      // NaN flags a degenerate (zero-variance) parameter
  Vector ess_bulk;  // NaN flags a degenerate parameter
  int divergences = 0;

  // Worst finite R-hat / smallest finite ESS; NaN if every entry is degenerate.
  double max_rhat() const;
  double min_ess_bulk() const;
  bool any_degenerate() const;
};

// Each chain is split in half (middle draw dropped when odd) before computing
// either statistic, so slow trends within a chain inflate R-hat.
double split_rhat(const std::vector<Vector>& chain_values);

// Bulk ESS: draws are replaced by normal quantiles of their pooled fractional
// ranks, then combined-chain autocorrelations are summed with Geyer's initial
// monotone positive-sequence truncation.  Capped at the total draw count.
double ess_bulk(const std::vector<Vector>& chain_values);

// Per-parameter diagnostics over all chains.  Requires at least 2 chains of
// at least 100 draws each; throws std::invalid_argument otherwise.
Diagnostics diagnostics(const Draws& draws);

}  // namespace seromrp

#endif  // SEROMRP_DIAGNOSTICS_HPP
