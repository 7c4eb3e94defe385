#include "seromrp/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "seromrp/stats.hpp"

namespace seromrp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Vector> split_chains(const std::vector<Vector>& chains) {
  std::vector<Vector> out;
  out.reserve(2 * chains.size());
  for (const Vector& c : chains) {
    const Eigen::Index half = c.size() / 2;
    out.push_back(c.head(half));
    out.push_back(c.tail(half));
  }
  return out;
}

struct PooledVariance {
  double within = 0.0;    // W: mean within-chain variance
  double var_plus = 0.0;  // (n-1)/n * W + B/n
  bool degenerate = true;
};

PooledVariance pooled_variance(const std::vector<Vector>& chains) {
  PooledVariance pv;
  const double m = static_cast<double>(chains.size());
  const double n = static_cast<double>(chains.front().size());
  if (m < 2.0 || n < 2.0) return pv;

  Vector means(chains.size());
  double w = 0.0;
  for (std::size_t j = 0; j < chains.size(); ++j) {
    means[static_cast<Eigen::Index>(j)] = chains[j].mean();
    const double mu = means[static_cast<Eigen::Index>(j)];
    w += (chains[j].array() - mu).square().sum() / (n - 1.0);
  }
  w /= m;
  const double grand = means.mean();
  const double b = n / (m - 1.0) * (means.array() - grand).square().sum();

  pv.within = w;
  pv.var_plus = (n - 1.0) / n * w + b / n;
  pv.degenerate = !(w > 0.0) || !std::isfinite(w) || !std::isfinite(pv.var_plus);
  return pv;
}

// Replace pooled values by normal quantiles of their fractional ranks
// ((r - 3/8) / (S + 1/4)), averaging ranks over ties.
std::vector<Vector> rank_normalize(const std::vector<Vector>& chains) {
  std::size_t total = 0;
  for (const Vector& c : chains) total += static_cast<std::size_t>(c.size());

  struct Entry {
    double value;
    std::size_t chain;
    Eigen::Index pos;
  };
  std::vector<Entry> entries;
  entries.reserve(total);
  for (std::size_t j = 0; j < chains.size(); ++j)
    for (Eigen::Index i = 0; i < chains[j].size(); ++i)
      entries.push_back({chains[j][i], j, i});
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.value < b.value; });

  std::vector<Vector> out(chains.size());
  for (std::size_t j = 0; j < chains.size(); ++j) out[j].resize(chains[j].size());

  const double s = static_cast<double>(total);
  std::size_t i = 0;
  while (i < entries.size()) {
    std::size_t k = i;
    while (k + 1 < entries.size() && entries[k + 1].value == entries[i].value) ++k;
    // Average 1-based rank across the tie run [i, k].
    const double rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(k + 1));
    const double z = stats::norm_quantile((rank - 0.375) / (s + 0.25));
    for (std::size_t t = i; t <= k; ++t) out[entries[t].chain][entries[t].pos] = z;
    i = k + 1;
  }
  return out;
}

// Mean across chains of the lag-t autocovariance (biased, divisor n).
double mean_autocov(const std::vector<Vector>& chains, const Vector& means, int lag) {
  double acc = 0.0;
  for (std::size_t j = 0; j < chains.size(); ++j) {
    const Vector& c = chains[j];
    const double mu = means[static_cast<Eigen::Index>(j)];
    const Eigen::Index n = c.size();
    double g = 0.0;
    for (Eigen::Index i = 0; i + lag < n; ++i) g += (c[i] - mu) * (c[i + lag] - mu);
    acc += g / static_cast<double>(n);
  }
  return acc / static_cast<double>(chains.size());
}

}  // namespace

double split_rhat(const std::vector<Vector>& chain_values) {
  if (chain_values.size() < 2)
    throw std::invalid_argument("split_rhat: need at least 2 chains");
  const Eigen::Index n = chain_values.front().size();
  for (const Vector& c : chain_values)
    if (c.size() != n) throw std::invalid_argument("split_rhat: unequal chain lengths");
  if (n < 4) throw std::invalid_argument("split_rhat: chains too short to split");

  const auto halves = split_chains(chain_values);
  const PooledVariance pv = pooled_variance(halves);
  if (pv.degenerate) return kNaN;
  return std::sqrt(pv.var_plus / pv.within);
}

double ess_bulk(const std::vector<Vector>& chain_values) {
  if (chain_values.size() < 2)
    throw std::invalid_argument("ess_bulk: need at least 2 chains");
  const Eigen::Index len = chain_values.front().size();
  for (const Vector& c : chain_values)
    if (c.size() != len) throw std::invalid_argument("ess_bulk: unequal chain lengths");
  if (len < 4) throw std::invalid_argument("ess_bulk: chains too short to split");

  const auto z = rank_normalize(split_chains(chain_values));
  const PooledVariance pv = pooled_variance(z);
  if (pv.degenerate) return kNaN;

  Vector means(z.size());
  for (std::size_t j = 0; j < z.size(); ++j)
    means[static_cast<Eigen::Index>(j)] = z[j].mean();

  const Eigen::Index n = z.front().size();
  const double total = static_cast<double>(z.size()) * static_cast<double>(n);

  // Geyer's initial monotone positive sequence over paired autocorrelations,
  // with lags evaluated lazily so well-mixed chains stop after a few terms.
  double tau = 0.0;  // accumulates 2 * sum of pair sums; tau_final = tau - 1
  double prev_pair = std::numeric_limits<double>::infinity();
  for (int lag = 0; lag + 1 < n; lag += 2) {
    const double rho_even =
        lag == 0 ? 1.0 : 1.0 - (pv.within - mean_autocov(z, means, lag)) / pv.var_plus;
    const double rho_odd =
        1.0 - (pv.within - mean_autocov(z, means, lag + 1)) / pv.var_plus;
    double pair = rho_even + rho_odd;
    if (!std::isfinite(pair) || pair <= 0.0) break;
    pair = std::min(pair, prev_pair);  // enforce monotone non-increasing
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau -= 1.0;  // rho_0 = 1 was counted twice inside the first pair
  if (!(tau > 0.0)) return kNaN;
  return std::min(total / tau, total);
}

double Diagnostics::max_rhat() const {
  double worst = kNaN;
  for (Eigen::Index i = 0; i < rhat.size(); ++i)
    if (std::isfinite(rhat[i]) && !(worst >= rhat[i])) worst = rhat[i];
  return worst;
}

double Diagnostics::min_ess_bulk() const {
  double worst = kNaN;
  for (Eigen::Index i = 0; i < ess_bulk.size(); ++i)
    if (std::isfinite(ess_bulk[i]) && !(worst <= ess_bulk[i])) worst = ess_bulk[i];
  return worst;
}

bool Diagnostics::any_degenerate() const {
  for (Eigen::Index i = 0; i < rhat.size(); ++i)
    if (!std::isfinite(rhat[i])) return true;
  return false;
}

Diagnostics diagnostics(const Draws& draws) {
  if (draws.n_chains() < 2)
    throw std::invalid_argument("diagnostics: need at least 2 chains");
  if (draws.n_draws() < 100)
    throw std::invalid_argument("diagnostics: need at least 100 draws per chain");

  Diagnostics out;
  out.param_names = draws.param_names;
  out.divergences = draws.total_divergences();
  out.rhat.resize(draws.dim());
  out.ess_bulk.resize(draws.dim());

  std::vector<Vector> column(static_cast<std::size_t>(draws.n_chains()));
  for (Eigen::Index j = 0; j < draws.dim(); ++j) {
    for (int c = 0; c < draws.n_chains(); ++c)
      column[static_cast<std::size_t>(c)] = draws.chains[static_cast<std::size_t>(c)].col(j);
    out.rhat[j] = split_rhat(column);
    out.ess_bulk[j] = ess_bulk(column);
  }
  return out;
}

}  // namespace seromrp
