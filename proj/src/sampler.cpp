#include "seromrp/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>

#include "seromrp/stats.hpp"

namespace seromrp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kDivergenceThreshold = 1000.0;

// Dual averaging after Nesterov, with the constants commonly used for HMC
// step-size adaptation (target log step size mu = log(10 * eps0)).
struct DualAveraging {
  double mu = 0.0;
  double log_eps = 0.0;
  double log_eps_bar = 0.0;
  double h_bar = 0.0;
  double counter = 0.0;
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;

  void restart(double eps) {
    mu = std::log(10.0 * eps);
    log_eps = std::log(eps);
    log_eps_bar = std::log(eps);
    h_bar = 0.0;
    counter = 0.0;
  }

  void update(double adapt_stat, double target) {
    counter += 1.0;
    const double frac = 1.0 / (counter + kT0);
    h_bar = (1.0 - frac) * h_bar + frac * (target - adapt_stat);
    log_eps = mu - std::sqrt(counter) / kGamma * h_bar;
    const double w = std::pow(counter, -kKappa);
    log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
  }

  double current() const { return std::exp(log_eps); }
  double smoothed() const { return std::exp(log_eps_bar); }
};

// Running mean/variance accumulator (Welford).
struct RunningVariance {
  double n = 0.0;
  Vector mean;
  Vector m2;

  explicit RunningVariance(Eigen::Index dim)
      : mean(Vector::Zero(dim)), m2(Vector::Zero(dim)) {}

  void reset() {
    n = 0.0;
    mean.setZero();
    m2.setZero();
  }

  void add(const Vector& x) {
    n += 1.0;
    const Vector delta = x - mean;
    mean += delta / n;
    m2 += delta.cwiseProduct(x - mean);
  }

  // Sample variance regularized toward unit scale, as is standard for
  // warmup-based mass-matrix estimates from few samples.
  Vector regularized_variance() const {
    Vector var = m2 / (n - 1.0);
    const double shrink = n / (n + 5.0);
    return shrink * var + (1.0 - shrink) * 1e-3 * Vector::Ones(var.size());
  }
};

struct ChainResult {
  Matrix draws;
  ChainStats stats;
};

class ChainRunner {
 public:
  ChainRunner(const LogDensityGradient& target, int dim, const SamplerConfig& cfg,
              const ConstrainFn& constrain, int chain_index)
      : target_(target),
        constrain_(constrain),
        cfg_(cfg),
        dim_(dim),
        rng_(stats::derive_seed(cfg.seed, static_cast<std::uint64_t>(chain_index))),
        q_(dim),
        grad_(dim),
        inv_mass_(Vector::Ones(dim)) {}

  ChainResult run() {
    initialize();
    warmup();
    return sample();
  }

 private:
  double eval(const Vector& q, Vector& grad) {
    const double lp = target_(q, grad);
    if (grad.size() != dim_)
      throw std::runtime_error("sampler: target gradient dimension mismatch");
    return lp;
  }

  void initialize() {
    std::uniform_real_distribution<double> jitter(-cfg_.init_radius, cfg_.init_radius);
    for (int attempt = 0; attempt < 100; ++attempt) {
      for (int i = 0; i < dim_; ++i) q_[i] = jitter(rng_);
      logp_ = eval(q_, grad_);
      if (std::isfinite(logp_)) return;
    }
    throw std::runtime_error(
        "sampler: log posterior not finite after 100 jittered initializations");
  }

  Vector sample_momentum() {
    Vector p(dim_);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < dim_; ++i) p[i] = normal(rng_) / std::sqrt(inv_mass_[i]);
    return p;
  }

  double kinetic(const Vector& p) const {
    return 0.5 * p.cwiseProduct(p).dot(inv_mass_);
  }

  // One proposal: leapfrog for a jittered number of steps.  Returns the
  // acceptance statistic in [0, 1]; 0 for divergent trajectories.
  double transition(double eps, bool* accepted, bool* divergent) {
    *accepted = false;
    *divergent = false;

    const double base = cfg_.path_length / eps;
    const int center = static_cast<int>(
        std::clamp(std::llround(base), 1LL, static_cast<long long>(cfg_.max_leapfrog_steps)));
    const int lo = std::max(1, static_cast<int>(std::floor(0.8 * center)));
    const int hi = std::max(
        lo, std::min(cfg_.max_leapfrog_steps, static_cast<int>(std::ceil(1.2 * center))));
    const int steps = std::uniform_int_distribution<int>(lo, hi)(rng_);

    Vector p = sample_momentum();
    const double h0 = -logp_ + kinetic(p);

    Vector q_new = q_;
    Vector grad_new = grad_;
    double logp_new = logp_;
    bool finite = true;
    for (int s = 0; s < steps; ++s) {
      p += 0.5 * eps * grad_new;
      q_new += eps * inv_mass_.cwiseProduct(p);
      logp_new = eval(q_new, grad_new);
      if (!std::isfinite(logp_new)) {
        finite = false;
        break;
      }
      p += 0.5 * eps * grad_new;
    }

    const double energy_error = finite ? (-logp_new + kinetic(p)) - h0
                                       : std::numeric_limits<double>::infinity();
    if (!std::isfinite(energy_error) || energy_error > kDivergenceThreshold) {
      *divergent = true;
      return 0.0;
    }

    const double accept_prob = std::min(1.0, std::exp(-energy_error));
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < accept_prob) {
      q_ = std::move(q_new);
      grad_ = std::move(grad_new);
      logp_ = logp_new;
      *accepted = true;
    }
    return accept_prob;
  }

  // Doubles/halves an initial guess until the one-step acceptance probability
  // crosses 1/2, the usual cheap heuristic for a reasonable starting step.
  double find_initial_step() {
    double eps = 0.1;
    Vector p = sample_momentum();
    const double h0 = -logp_ + kinetic(p);

    auto one_step_accept = [&](double step) {
      Vector pp = p;
      Vector q = q_;
      Vector g = grad_;
      pp += 0.5 * step * g;
      q += step * inv_mass_.cwiseProduct(pp);
      Vector g2(dim_);
      const double lp = eval(q, g2);
      if (!std::isfinite(lp)) return kNegInf;
      pp += 0.5 * step * g2;
      return -(-lp + kinetic(pp)) + h0;  // log acceptance ratio
    };

    double log_a = one_step_accept(eps);
    const double dir = log_a > std::log(0.5) ? 1.0 : -1.0;
    for (int i = 0; i < 100; ++i) {
      if (dir > 0 ? log_a <= std::log(0.5) : log_a > std::log(0.5)) break;
      eps *= dir > 0 ? 2.0 : 0.5;
      if (eps > 1e7 || eps < 1e-10) break;
      log_a = one_step_accept(eps);
    }
    return eps;
  }

  void warmup() {
    const int w1 = static_cast<int>(0.15 * cfg_.warmup);
    const int w3 = static_cast<int>(0.10 * cfg_.warmup);
    const int w2 = cfg_.warmup - w1 - w3;

    da_.restart(find_initial_step());
    RunningVariance acc(dim_);

    // Mass-matrix sub-windows inside the middle window double in length; the
    // last one absorbs the remainder so every iteration belongs to a window.
    int window = std::min(w2, 25);

    int in_window = 0;
    for (int iter = 0; iter < cfg_.warmup; ++iter) {
      bool accepted = false;
      bool divergent = false;
      const double stat = transition(da_.current(), &accepted, &divergent);
      da_.update(stat, cfg_.target_accept);

      const bool in_middle = iter >= w1 && iter < w1 + w2;
      if (!in_middle) continue;

      acc.add(q_);
      ++in_window;
      const int remaining = w1 + w2 - 1 - iter;
      if (in_window >= window && remaining > 0 && acc.n >= 2.0) {
        inv_mass_ = acc.regularized_variance();
        acc.reset();
        in_window = 0;
        window = std::min(remaining, window * 2);
        if (remaining - window < window) window = remaining;  // absorb the tail
        da_.restart(da_.smoothed());
      } else if (remaining == 0 && acc.n >= 2.0) {
        inv_mass_ = acc.regularized_variance();
        da_.restart(da_.smoothed());
      }
    }
    step_size_ = cfg_.warmup > 0 ? da_.smoothed() : da_.current();
  }

  ChainResult sample() {
    ChainResult result;
    result.stats.step_size = step_size_;

    Vector first = constrain_ ? constrain_(q_) : q_;
    result.draws.resize(cfg_.draws, first.size());

    int accepted_count = 0;
    for (int d = 0; d < cfg_.draws; ++d) {
      bool accepted = false;
      bool divergent = false;
      transition(step_size_, &accepted, &divergent);
      if (accepted) ++accepted_count;
      if (divergent) ++result.stats.divergences;
      result.draws.row(d) = (constrain_ ? constrain_(q_) : q_).transpose();
    }
    result.stats.accept_rate =
        cfg_.draws > 0 ? static_cast<double>(accepted_count) / cfg_.draws : 0.0;
    return result;
  }

  const LogDensityGradient& target_;
  const ConstrainFn& constrain_;
  const SamplerConfig& cfg_;
  int dim_;
  std::mt19937_64 rng_;
  Vector q_;
  Vector grad_;
  Vector inv_mass_;
  double logp_ = kNegInf;
  double step_size_ = 0.0;
  DualAveraging da_;
};

}  // namespace

void SamplerConfig::validate() const {
  if (chains < 1) throw std::invalid_argument("SamplerConfig: chains must be positive");
  if (warmup < 1) throw std::invalid_argument("SamplerConfig: warmup must be positive");
  if (draws < 1) throw std::invalid_argument("SamplerConfig: draws must be positive");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("SamplerConfig: target_accept must lie in (0, 1)");
  if (max_leapfrog_steps < 1)
    throw std::invalid_argument("SamplerConfig: max_leapfrog_steps must be positive");
  if (!(path_length > 0.0))
    throw std::invalid_argument("SamplerConfig: path_length must be positive");
  if (!(init_radius > 0.0))
    throw std::invalid_argument("SamplerConfig: init_radius must be positive");
  if (threads < 0) throw std::invalid_argument("SamplerConfig: threads must be >= 0");
}

int Draws::total_divergences() const {
  int total = 0;
  for (const ChainStats& s : stats) total += s.divergences;
  return total;
}

Eigen::Index Draws::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < param_names.size(); ++i)
    if (param_names[i] == name) return static_cast<Eigen::Index>(i);
  throw std::out_of_range("Draws: no parameter named '" + std::string(name) + "'");
}

Matrix Draws::stacked() const {
  Matrix out(n_draws() * n_chains(), dim());
  Eigen::Index row = 0;
  for (const Matrix& c : chains) {
    out.middleRows(row, c.rows()) = c;
    row += c.rows();
  }
  return out;
}

Vector Draws::stacked_column(Eigen::Index j) const {
  Vector out(n_draws() * n_chains());
  Eigen::Index row = 0;
  for (const Matrix& c : chains) {
    out.segment(row, c.rows()) = c.col(j);
    row += c.rows();
  }
  return out;
}

Draws run(const LogDensityGradient& logpost_grad, int dim, const SamplerConfig& cfg,
          const ConstrainFn& constrain) {
  cfg.validate();
  if (dim < 1) throw std::invalid_argument("sampler: dimension must be positive");
  if (!logpost_grad) throw std::invalid_argument("sampler: null target function");

  std::vector<ChainResult> results(static_cast<std::size_t>(cfg.chains));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (;;) {
      const int c = next.fetch_add(1);
      if (c >= cfg.chains) return;
      try {
        ChainRunner runner(logpost_grad, dim, cfg, constrain, c);
        results[static_cast<std::size_t>(c)] = runner.run();
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  int n_workers = cfg.threads > 0 ? cfg.threads
                                  : static_cast<int>(std::thread::hardware_concurrency());
  n_workers = std::clamp(n_workers, 1, cfg.chains);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  Draws out;
  out.chains.reserve(results.size());
  out.stats.reserve(results.size());
  for (ChainResult& r : results) {
    out.chains.push_back(std::move(r.draws));
    out.stats.push_back(r.stats);
  }
  out.param_names.reserve(static_cast<std::size_t>(out.dim()));
  for (Eigen::Index j = 0; j < out.dim(); ++j)
    out.param_names.push_back("p" + std::to_string(j));
  return out;
}

}  // namespace seromrp
