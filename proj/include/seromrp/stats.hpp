#ifndef SEROMRP_STATS_HPP
#define SEROMRP_STATS_HPP

// Small scalar statistics kernels shared across modules. Everything here is
// deterministic and allocation-free.

#include <cstdint>
#include <random>

#include "seromrp/types.hpp"

namespace seromrp::stats {

double norm_logpdf(double x, double mu, double sigma);
double norm_pdf(double x, double mu, double sigma);
double norm_cdf(double x);

// Inverse of the standard normal CDF, accurate to ~1e-15 over (0, 1).
double norm_quantile(double p);

// log of the binomial coefficient C(n, k) via lgamma.
double lchoose(double n, double k);

// log P(Y = y) for Y ~ Binomial(n, p), binomial coefficient included.
// The degenerate n = 0 case returns 0.
double binomial_logpmf(double y, double n, double p);

// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
double gamma_q(double a, double x);

// Upper tail P(X > x) for X ~ chi-squared with k degrees of freedom.
double chi2_sf(double x, double k);

// Type-7 quantile (linear interpolation between order statistics) of a
// sorted vector; p in [0, 1].
double quantile_sorted(const Vector& sorted, double p);

// splitmix64 step, used to derive independent RNG streams from (seed, index).
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

double beta_sample(std::mt19937_64& rng, double a, double b);

}  // namespace seromrp::stats

#endif
