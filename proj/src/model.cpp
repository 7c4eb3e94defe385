#include "seromrp/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "seromrp/stats.hpp"

namespace seromrp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2 = 0.69314718055994530942;

double inv_logit(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(inv_logit(x)) without overflow for large |x|.
double log_inv_logit(double x) {
  if (x > 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double clamp_prob(double p) {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

struct MisclassValues {
  double delta;
  double gamma;
};

MisclassValues fixed_misclass(const ModelSpec& spec) {
  const auto& f = std::get<FixedMisclass>(spec.misclass);
  return {f.delta, f.gamma};
}

}  // namespace

void ModelSpec::validate() const {
  if (n_weeks < 1) throw std::invalid_argument("ModelSpec: n_weeks must be positive");
  if (prior_scale_demo <= 0.0 || prior_scale_time <= 0.0 || prior_scale_age_time <= 0.0)
    throw std::invalid_argument("ModelSpec: prior scales must be positive");
  if (const auto* f = std::get_if<FixedMisclass>(&misclass)) {
    if (!(f->delta > 0.0 && f->delta <= 1.0) || !(f->gamma > 0.0 && f->gamma <= 1.0))
      throw std::invalid_argument("ModelSpec: fixed delta/gamma must lie in (0, 1]");
  } else {
    const auto& est = std::get<EstimatedMisclass>(misclass);
    for (const PriorStudy& s : est.priors.sensitivity_studies) validate_prior_study(s);
    for (const PriorStudy& s : est.priors.specificity_studies) validate_prior_study(s);
  }
}

ParamLayout ParamLayout::from_spec(const ModelSpec& spec) {
  spec.validate();
  ParamLayout l;
  l.n_weeks = spec.n_weeks;
  l.n_inter = spec.n_interactions();
  l.beta1 = 0;
  l.beta2 = 1;
  l.age = 2;
  l.race = l.age + kNumAge;
  l.county = l.race + kNumRace;
  l.time = l.county + kNumCounty;
  l.inter = l.time + l.n_weeks;
  l.lsig_age = l.inter + l.n_inter;
  l.lsig_race = l.lsig_age + 1;
  l.lsig_county = l.lsig_race + 1;
  l.lsig_time = l.lsig_county + 1;
  l.lsig_inter = l.lsig_time + 1;
  l.dim = l.lsig_inter + 1;
  if (spec.estimates_misclass()) {
    l.logit_delta = l.dim++;
    l.logit_gamma = l.dim++;
  }
  return l;
}

int ParamLayout::interaction_offset(int age_index, int sex_index, int week,
                                    ModelKind kind) const {
  return kind == ModelKind::PcrEq1 ? age_index * kNumSex + sex_index
                                   : age_index * n_weeks + week;
}

std::vector<std::string> ParamLayout::param_names(const ModelSpec& spec) const {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(dim));
  names.emplace_back("beta1");
  names.emplace_back("beta2");
  auto block = [&](const char* base, int count) {
    for (int i = 0; i < count; ++i) names.push_back(std::string(base) + "_" + std::to_string(i));
  };
  block("beta_age", kNumAge);
  block("beta_race", kNumRace);
  block("beta_county", kNumCounty);
  block("beta_time", n_weeks);
  block(spec.kind == ModelKind::PcrEq1 ? "beta_age_sex" : "beta_age_time", n_inter);
  names.emplace_back("sigma_age");
  names.emplace_back("sigma_race");
  names.emplace_back("sigma_county");
  names.emplace_back("sigma_time");
  names.emplace_back("sigma_inter");
  if (logit_delta >= 0) {
    names.emplace_back("delta");
    names.emplace_back("gamma");
  }
  return names;
}

ParamVector::ParamVector(Vector v, const ModelSpec& spec) : values(std::move(v)) {
  const ParamLayout l = ParamLayout::from_spec(spec);
  if (values.size() != l.dim)
    throw std::invalid_argument("ParamVector: expected dimension " + std::to_string(l.dim) +
                                ", got " + std::to_string(values.size()));
}

void Dataset::add(const Covariates& c, WeekIndex w, bool positive) {
  cell.push_back(static_cast<std::int32_t>(cell_index(c)));
  week.push_back(w.value);
  y.push_back(positive ? 1 : 0);
}

double true_prevalence(double eta) { return inv_logit(eta); }

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("logit: p outside (0, 1)");
  return std::log(p) - std::log1p(-p);
}

double observed_prob(double pi, double delta, double gamma) {
  return pi * delta + (1.0 - pi) * (1.0 - gamma);
}

namespace {

double sex_contrast(Sex s) { return s == Sex::Male ? 0.5 : -0.5; }

double eta_unconstrained(const Vector& q, const ParamLayout& l, const Covariates& c,
                         int week, ModelKind kind) {
  const int a = static_cast<int>(c.age);
  const int inter =
      l.interaction_offset(a, static_cast<int>(c.sex), week, kind);
  return q[l.beta1] + q[l.beta2] * sex_contrast(c.sex) +
         std::exp(q[l.lsig_age]) * q[l.age + a] +
         std::exp(q[l.lsig_race]) * q[l.race + static_cast<int>(c.race)] +
         std::exp(q[l.lsig_county]) * q[l.county + static_cast<int>(c.county)] +
         std::exp(q[l.lsig_time]) * q[l.time + week] +
         std::exp(q[l.lsig_inter]) * q[l.inter + inter];
}

void check_week(int week, const ModelSpec& spec) {
  if (week < 0 || week >= spec.n_weeks)
    throw std::out_of_range("week index " + std::to_string(week) +
                            " outside fitted window of " + std::to_string(spec.n_weeks) +
                            " weeks");
}

}  // namespace

double linear_predictor(const ParamVector& p, const Covariates& c, WeekIndex w,
                        const ModelSpec& spec) {
  check_week(w.value, spec);
  return eta_unconstrained(p.values, ParamLayout::from_spec(spec), c, w.value, spec.kind);
}

Vector constrain(const ParamVector& p, const ModelSpec& spec) {
  const ParamLayout l = ParamLayout::from_spec(spec);
  const Vector& q = p.values;
  Vector out = q;
  const double sa = std::exp(q[l.lsig_age]);
  const double sr = std::exp(q[l.lsig_race]);
  const double sc = std::exp(q[l.lsig_county]);
  const double st = std::exp(q[l.lsig_time]);
  const double sx = std::exp(q[l.lsig_inter]);
  out.segment(l.age, kNumAge) *= sa;
  out.segment(l.race, kNumRace) *= sr;
  out.segment(l.county, kNumCounty) *= sc;
  out.segment(l.time, l.n_weeks) *= st;
  out.segment(l.inter, l.n_inter) *= sx;
  out[l.lsig_age] = sa;
  out[l.lsig_race] = sr;
  out[l.lsig_county] = sc;
  out[l.lsig_time] = st;
  out[l.lsig_inter] = sx;
  if (l.logit_delta >= 0) {
    out[l.logit_delta] = inv_logit(q[l.logit_delta]);
    out[l.logit_gamma] = inv_logit(q[l.logit_gamma]);
  }
  return out;
}

double linear_predictor_constrained(const Vector& coeffs, const Covariates& c,
                                    WeekIndex w, const ModelSpec& spec) {
  const ParamLayout l = ParamLayout::from_spec(spec);
  if (coeffs.size() != l.dim)
    throw std::invalid_argument("linear_predictor_constrained: dimension mismatch");
  check_week(w.value, spec);
  const int a = static_cast<int>(c.age);
  const int inter = l.interaction_offset(a, static_cast<int>(c.sex), w.value, spec.kind);
  return coeffs[l.beta1] + coeffs[l.beta2] * sex_contrast(c.sex) + coeffs[l.age + a] +
         coeffs[l.race + static_cast<int>(c.race)] +
         coeffs[l.county + static_cast<int>(c.county)] + coeffs[l.time + w.value] +
         coeffs[l.inter + inter];
}

double misclass_study_loglik(double delta, double gamma, const MisclassPriorData& data) {
  double ll = 0.0;
  for (const PriorStudy& s : data.sensitivity_studies) {
    validate_prior_study(s);
    ll += stats::binomial_logpmf(static_cast<double>(s.positives),
                                 static_cast<double>(s.total), delta);
  }
  for (const PriorStudy& s : data.specificity_studies) {
    validate_prior_study(s);
    ll += stats::binomial_logpmf(static_cast<double>(s.positives),
                                 static_cast<double>(s.total), gamma);
  }
  return ll;
}

double log_likelihood(const ParamVector& p, const Dataset& d, const ModelSpec& spec) {
  if (d.size() == 0) throw std::invalid_argument("log_likelihood: empty dataset");
  const ParamLayout l = ParamLayout::from_spec(spec);
  const Vector& q = p.values;

  MisclassValues mc{};
  if (spec.estimates_misclass()) {
    mc.delta = inv_logit(q[l.logit_delta]);
    mc.gamma = inv_logit(q[l.logit_gamma]);
  } else {
    mc = fixed_misclass(spec);
  }

  double ll = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    check_week(d.week[i], spec);
    const Covariates c = covariates_at(d.cell[i]);
    const double eta = eta_unconstrained(q, l, c, d.week[i], spec.kind);
    if (!std::isfinite(eta)) return kNegInf;
    const double pr = clamp_prob(observed_prob(inv_logit(eta), mc.delta, mc.gamma));
    ll += d.y[i] ? std::log(pr) : std::log1p(-pr);
  }
  if (spec.estimates_misclass()) {
    ll += misclass_study_loglik(mc.delta, mc.gamma,
                                std::get<EstimatedMisclass>(spec.misclass).priors);
  }
  return std::isfinite(ll) ? ll : kNegInf;
}

double log_prior(const ParamVector& p, const ModelSpec& spec) {
  const ParamLayout l = ParamLayout::from_spec(spec);
  const Vector& q = p.values;

  double lp = stats::norm_logpdf(q[l.beta1], 0.0, spec.prior_scale_demo) +
              stats::norm_logpdf(q[l.beta2], 0.0, spec.prior_scale_demo);

  // Non-centered raw effects are standard normal.
  auto raw_block = [&](int offset, int count) {
    for (int i = 0; i < count; ++i) lp += stats::norm_logpdf(q[offset + i], 0.0, 1.0);
  };
  raw_block(l.age, kNumAge);
  raw_block(l.race, kNumRace);
  raw_block(l.county, kNumCounty);
  raw_block(l.time, l.n_weeks);
  raw_block(l.inter, l.n_inter);

  // Half-normal on sigma, evaluated at sigma = exp(lambda), plus the
  // log-Jacobian lambda of the log transform.
  auto half_normal = [&](int offset, double scale) {
    const double lambda = q[offset];
    const double sigma = std::exp(lambda);
    lp += kLog2 + stats::norm_logpdf(sigma, 0.0, scale) + lambda;
  };
  half_normal(l.lsig_age, spec.prior_scale_demo);
  half_normal(l.lsig_race, spec.prior_scale_demo);
  half_normal(l.lsig_county, spec.prior_scale_demo);
  half_normal(l.lsig_time, spec.prior_scale_time);
  half_normal(l.lsig_inter, spec.interaction_scale());

  // Uniform prior on delta and gamma; only the logit Jacobians remain.
  if (l.logit_delta >= 0) {
    for (const int off : {l.logit_delta, l.logit_gamma}) {
      const double u = q[off];
      lp += log_inv_logit(u) + log_inv_logit(-u);
    }
  }
  return std::isfinite(lp) ? lp : kNegInf;
}

LogPosteriorTarget::LogPosteriorTarget(const Dataset& d, const ModelSpec& spec)
    : spec_(spec), layout_(ParamLayout::from_spec(spec)) {
  if (d.size() == 0) throw std::invalid_argument("LogPosteriorTarget: empty dataset");
  // (cell, week) -> (trials, positives); binomial sufficient statistics.
  std::map<std::pair<std::int32_t, std::int32_t>, std::pair<double, double>> agg;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.week[i] < 0 || d.week[i] >= spec.n_weeks)
      throw std::invalid_argument("LogPosteriorTarget: row week " +
                                  std::to_string(d.week[i]) +
                                  " outside the model's " +
                                  std::to_string(spec.n_weeks) + "-week window");
    if (d.cell[i] < 0 || d.cell[i] >= kNumCells)
      throw std::invalid_argument("LogPosteriorTarget: cell index outside [0, 60)");
    auto& slot = agg[{d.cell[i], d.week[i]}];
    slot.first += 1.0;
    slot.second += d.y[i] ? 1.0 : 0.0;
  }
  groups_.reserve(agg.size());
  for (const auto& [key, counts] : agg)
    groups_.push_back(Group{key.first, key.second, counts.first, counts.second});
}

double LogPosteriorTarget::value(const Vector& q) const {
  Vector unused;
  return value_and_grad(q, unused);
}

double LogPosteriorTarget::value_and_grad(const Vector& q, Vector& grad) const {
  const ParamLayout& l = layout_;
  if (q.size() != l.dim)
    throw std::invalid_argument("LogPosteriorTarget: dimension mismatch");
  grad = Vector::Zero(l.dim);

  const double sig_age = std::exp(q[l.lsig_age]);
  const double sig_race = std::exp(q[l.lsig_race]);
  const double sig_county = std::exp(q[l.lsig_county]);
  const double sig_time = std::exp(q[l.lsig_time]);
  const double sig_inter = std::exp(q[l.lsig_inter]);

  MisclassValues mc{};
  if (spec_.estimates_misclass()) {
    mc.delta = inv_logit(q[l.logit_delta]);
    mc.gamma = inv_logit(q[l.logit_gamma]);
  } else {
    mc = fixed_misclass(spec_);
  }

  double lp = 0.0;
  double d_delta = 0.0;
  double d_gamma = 0.0;

  for (const Group& g : groups_) {
    const Covariates c = covariates_at(g.cell);
    const int a = static_cast<int>(c.age);
    const int r = static_cast<int>(c.race);
    const int co = static_cast<int>(c.county);
    const int s = static_cast<int>(c.sex);
    const int x = l.interaction_offset(a, s, g.week, spec_.kind);
    const double m = sex_contrast(c.sex);

    const double eta = q[l.beta1] + q[l.beta2] * m + sig_age * q[l.age + a] +
                       sig_race * q[l.race + r] + sig_county * q[l.county + co] +
                       sig_time * q[l.time + g.week] + sig_inter * q[l.inter + x];
    if (!std::isfinite(eta)) {
      grad.setZero();
      return kNegInf;
    }
    const double pi = inv_logit(eta);
    const double pr = clamp_prob(observed_prob(pi, mc.delta, mc.gamma));
    lp += g.positives * std::log(pr) + (g.trials - g.positives) * std::log1p(-pr);

    const double dl_dp = g.positives / pr - (g.trials - g.positives) / (1.0 - pr);
    const double dl_deta = dl_dp * (mc.delta + mc.gamma - 1.0) * pi * (1.0 - pi);

    grad[l.beta1] += dl_deta;
    grad[l.beta2] += m * dl_deta;
    grad[l.age + a] += sig_age * dl_deta;
    grad[l.race + r] += sig_race * dl_deta;
    grad[l.county + co] += sig_county * dl_deta;
    grad[l.time + g.week] += sig_time * dl_deta;
    grad[l.inter + x] += sig_inter * dl_deta;
    grad[l.lsig_age] += sig_age * q[l.age + a] * dl_deta;
    grad[l.lsig_race] += sig_race * q[l.race + r] * dl_deta;
    grad[l.lsig_county] += sig_county * q[l.county + co] * dl_deta;
    grad[l.lsig_time] += sig_time * q[l.time + g.week] * dl_deta;
    grad[l.lsig_inter] += sig_inter * q[l.inter + x] * dl_deta;
    if (l.logit_delta >= 0) {
      d_delta += dl_dp * pi;
      d_gamma += dl_dp * (pi - 1.0);
    }
  }

  if (spec_.estimates_misclass()) {
    const MisclassPriorData& priors = std::get<EstimatedMisclass>(spec_.misclass).priors;
    for (const PriorStudy& st : priors.sensitivity_studies) {
      if (st.total == 0) continue;
      const double yy = static_cast<double>(st.positives);
      const double nn = static_cast<double>(st.total);
      lp += stats::binomial_logpmf(yy, nn, mc.delta);
      d_delta += yy / mc.delta - (nn - yy) / (1.0 - mc.delta);
    }
    for (const PriorStudy& st : priors.specificity_studies) {
      if (st.total == 0) continue;
      const double yy = static_cast<double>(st.positives);
      const double nn = static_cast<double>(st.total);
      lp += stats::binomial_logpmf(yy, nn, mc.gamma);
      d_gamma += yy / mc.gamma - (nn - yy) / (1.0 - mc.gamma);
    }
    // Chain through the logit transform; the (1 - 2p) term is the gradient of
    // the Jacobian that realizes the uniform prior on the probability scale.
    const double ud = q[l.logit_delta];
    const double ug = q[l.logit_gamma];
    grad[l.logit_delta] = d_delta * mc.delta * (1.0 - mc.delta) + (1.0 - 2.0 * mc.delta);
    grad[l.logit_gamma] = d_gamma * mc.gamma * (1.0 - mc.gamma) + (1.0 - 2.0 * mc.gamma);
    lp += log_inv_logit(ud) + log_inv_logit(-ud) + log_inv_logit(ug) + log_inv_logit(-ug);
  }

  // Priors on the regression block.
  const double s0 = spec_.prior_scale_demo;
  lp += stats::norm_logpdf(q[l.beta1], 0.0, s0) + stats::norm_logpdf(q[l.beta2], 0.0, s0);
  grad[l.beta1] -= q[l.beta1] / (s0 * s0);
  grad[l.beta2] -= q[l.beta2] / (s0 * s0);

  auto raw_block = [&](int offset, int count) {
    for (int i = 0; i < count; ++i) {
      lp += stats::norm_logpdf(q[offset + i], 0.0, 1.0);
      grad[offset + i] -= q[offset + i];
    }
  };
  raw_block(l.age, kNumAge);
  raw_block(l.race, kNumRace);
  raw_block(l.county, kNumCounty);
  raw_block(l.time, l.n_weeks);
  raw_block(l.inter, l.n_inter);

  auto half_normal = [&](int offset, double sigma, double scale) {
    lp += kLog2 + stats::norm_logpdf(sigma, 0.0, scale) + q[offset];
    grad[offset] += 1.0 - sigma * sigma / (scale * scale);
  };
  half_normal(l.lsig_age, sig_age, s0);
  half_normal(l.lsig_race, sig_race, s0);
  half_normal(l.lsig_county, sig_county, s0);
  half_normal(l.lsig_time, sig_time, spec_.prior_scale_time);
  half_normal(l.lsig_inter, sig_inter, spec_.interaction_scale());

  if (!std::isfinite(lp)) {
    grad.setZero();
    return kNegInf;
  }
  return lp;
}

std::pair<double, Vector> log_posterior_and_grad(const ParamVector& p, const Dataset& d,
                                                 const ModelSpec& spec) {
  LogPosteriorTarget target(d, spec);
  Vector grad;
  const double value = target.value_and_grad(p.values, grad);
  return {value, std::move(grad)};
}

}  // namespace seromrp
