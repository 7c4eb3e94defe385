#include "seromrp/oracle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace seromrp::oracle {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kEdgeMassLimit = 0.01;
}  // namespace

double BetaParams::sd() const {
  const double s = a + b;
  return std::sqrt(a * b / (s * s * (s + 1.0)));
}

BetaParams conjugate_beta_posterior(std::span<const PriorStudy> studies,
                                    double prior_a, double prior_b) {
  if (prior_a <= 0.0 || prior_b <= 0.0)
    throw std::invalid_argument("conjugate_beta_posterior: prior parameters must be positive");
  BetaParams post{prior_a, prior_b};
  for (const PriorStudy& s : studies) {
    validate_prior_study(s);
    post.a += static_cast<double>(s.positives);
    post.b += static_cast<double>(s.total - s.positives);
  }
  return post;
}

Grid1D Grid1D::evaluate(const std::function<double(double)>& logpost, double lo,
                        double hi, int n) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
    throw std::invalid_argument("Grid1D: bounds must be finite with lo < hi");
  if (n < 4) throw std::invalid_argument("Grid1D: need at least 4 points");
  Grid1D g;
  g.lo = lo;
  g.hi = hi;
  g.n = n;
  g.log_density.resize(n);
  for (int i = 0; i < n; ++i) g.log_density[i] = logpost(g.point(i));
  return g;
}

Grid2D Grid2D::evaluate(const std::function<double(double, double)>& logpost,
                        std::array<double, 2> lo, std::array<double, 2> hi,
                        std::array<int, 2> n) {
  for (int a = 0; a < 2; ++a) {
    if (!(lo[a] < hi[a]) || !std::isfinite(lo[a]) || !std::isfinite(hi[a]))
      throw std::invalid_argument("Grid2D: bounds must be finite with lo < hi");
    if (n[a] < 4) throw std::invalid_argument("Grid2D: need at least 4 points per axis");
  }
  Grid2D g;
  g.lo = lo;
  g.hi = hi;
  g.n = n;
  g.log_density.resize(n[0], n[1]);
  for (int i = 0; i < n[0]; ++i)
    for (int j = 0; j < n[1]; ++j) g.log_density(i, j) = logpost(g.point(0, i), g.point(1, j));
  return g;
}

namespace {

// Normalized trapezoid point masses: w_i * exp(logf_i - max) / Z.
Vector normalized_weights_1d(const Vector& log_density, double step) {
  const double mx = log_density.maxCoeff();
  if (!std::isfinite(mx))
    throw std::runtime_error("grid_posterior_moments: log-density is -inf everywhere");
  const int n = static_cast<int>(log_density.size());
  Vector w(n);
  for (int i = 0; i < n; ++i) {
    const double trap = (i == 0 || i == n - 1) ? 0.5 * step : step;
    const double f = log_density[i] - mx;
    w[i] = f == kNegInf ? 0.0 : trap * std::exp(f);
  }
  const double z = w.sum();
  if (!(z > 0.0)) throw std::runtime_error("grid_posterior_moments: zero total mass");
  return w / z;
}

void check_edge_mass_1d(const Vector& w) {
  const int n = static_cast<int>(w.size());
  const double edge = w[0] + w[1] + w[n - 2] + w[n - 1];
  if (edge > kEdgeMassLimit)
    throw std::runtime_error(
        "grid_posterior_moments: more than 1% of posterior mass in the outermost "
        "grid cells; widen the bounds");
}

}  // namespace

Moments1D grid_posterior_moments(const Grid1D& grid) {
  const Vector w = normalized_weights_1d(grid.log_density, grid.step());
  check_edge_mass_1d(w);
  double mean = 0.0;
  for (int i = 0; i < grid.n; ++i) mean += w[i] * grid.point(i);
  double var = 0.0;
  for (int i = 0; i < grid.n; ++i) {
    const double d = grid.point(i) - mean;
    var += w[i] * d * d;
  }
  return {mean, std::sqrt(var)};
}

Moments2D grid_posterior_moments(const Grid2D& grid) {
  const double mx = grid.log_density.maxCoeff();
  if (!std::isfinite(mx))
    throw std::runtime_error("grid_posterior_moments: log-density is -inf everywhere");
  Matrix w(grid.n[0], grid.n[1]);
  for (int i = 0; i < grid.n[0]; ++i) {
    const double ti = (i == 0 || i == grid.n[0] - 1) ? 0.5 : 1.0;
    for (int j = 0; j < grid.n[1]; ++j) {
      const double tj = (j == 0 || j == grid.n[1] - 1) ? 0.5 : 1.0;
      const double f = grid.log_density(i, j) - mx;
      w(i, j) = f == kNegInf ? 0.0 : ti * tj * std::exp(f);
    }
  }
  const double z = w.sum();
  if (!(z > 0.0)) throw std::runtime_error("grid_posterior_moments: zero total mass");
  w /= z;

  const Vector margin0 = w.rowwise().sum();
  const Vector margin1 = w.colwise().sum().transpose();
  for (const Vector* m : {&margin0, &margin1}) check_edge_mass_1d(*m);

  Moments2D out;
  for (int axis = 0; axis < 2; ++axis) {
    const Vector& margin = axis == 0 ? margin0 : margin1;
    double mean = 0.0;
    for (int i = 0; i < grid.n[axis]; ++i) mean += margin[i] * grid.point(axis, i);
    double var = 0.0;
    for (int i = 0; i < grid.n[axis]; ++i) {
      const double d = grid.point(axis, i) - mean;
      var += margin[i] * d * d;
    }
    out.mean[axis] = mean;
    out.sd[axis] = std::sqrt(var);
  }
  return out;
}

Vector finite_diff_gradient(const std::function<double(const Vector&)>& f,
                            const Vector& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_gradient: h must be positive");
  const Eigen::Index d = x.size();
  Vector grad(d);
  Vector xp = x;
  for (Eigen::Index i = 0; i < d; ++i) {
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_diff_gradient: non-finite evaluation near x");
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double gradient_rel_error(const Vector& analytic, const Vector& numeric) {
  if (analytic.size() != numeric.size())
    throw std::invalid_argument("gradient_rel_error: size mismatch");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace seromrp::oracle
