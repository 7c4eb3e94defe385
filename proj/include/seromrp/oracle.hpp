#ifndef SEROMRP_ORACLE_HPP
#define SEROMRP_ORACLE_HPP

// Independent reference computations used to validate the model and sampler:
// conjugate closed forms, brute-force grid posteriors and finite-difference
// gradients. Nothing in here shares code with the implementation paths it
// checks.

#include <array>
#include <functional>
#include <span>

#include "seromrp/domain.hpp"
#include "seromrp/types.hpp"

namespace seromrp::oracle {

struct BetaParams {
  double a = 1.0;
  double b = 1.0;
  double mean() const { return a / (a + b); }
  double sd() const;
};

// Posterior of a probability under Beta(prior_a, prior_b) after observing the
// given binomial studies: a' = a + sum(positives), b' = b + sum(misses).
BetaParams conjugate_beta_posterior(std::span<const PriorStudy> studies,
                                    double prior_a, double prior_b);

// Uniform 1-D grid of log-density evaluations over [lo, hi].
struct Grid1D {
  double lo = 0.0;
  double hi = 1.0;
  int n = 2001;
  Vector log_density;

  static Grid1D evaluate(const std::function<double(double)>& logpost, double lo,
                         double hi, int n = 2001);
  double step() const { return (hi - lo) / (n - 1); }
  double point(int i) const { return lo + step() * i; }
};

struct Grid2D {
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{1.0, 1.0};
  std::array<int, 2> n{2001, 2001};
  Matrix log_density;  // n[0] x n[1]

  static Grid2D evaluate(const std::function<double(double, double)>& logpost,
                         std::array<double, 2> lo, std::array<double, 2> hi,
                         std::array<int, 2> n = {2001, 2001});
  double step(int axis) const { return (hi[axis] - lo[axis]) / (n[axis] - 1); }
  double point(int axis, int i) const { return lo[axis] + step(axis) * i; }
};

struct Moments1D {
  double mean = 0.0;
  double sd = 0.0;
};

struct Moments2D {
  std::array<double, 2> mean{};
  std::array<double, 2> sd{};
};

// Trapezoid-normalized posterior moments. Throws when the whole grid is
// -inf or when more than 1% of the normalized mass sits in the outermost two
// grid cells of any axis (bounds too tight to trust).
Moments1D grid_posterior_moments(const Grid1D& grid);
Moments2D grid_posterior_moments(const Grid2D& grid);

// Central finite differences per coordinate. Throws if any neighbor
// evaluation is non-finite.
Vector finite_diff_gradient(const std::function<double(const Vector&)>& f,
                            const Vector& x, double h = 1e-5);

// Relative-error metric used by the gradient checks: |a-b| / max(1, |a|).
double gradient_rel_error(const Vector& analytic, const Vector& numeric);

}  // namespace seromrp::oracle

#endif
