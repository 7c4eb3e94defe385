#include "seromrp/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "seromrp/oracle.hpp"
#include "seromrp/poststrat.hpp"
#include "seromrp/stats.hpp"

namespace seromrp {

namespace {

// Table-building shares; margins are normalized before use so the listed
// percentages need not sum exactly to one.
struct MarginShares {
  std::int64_t total;
  std::array<double, kNumSex> sex;
  std::array<double, kNumAge> age;
  std::array<double, kNumRace> race;
  std::array<double, kNumCounty> county;
};

template <std::size_t N>
std::array<double, N> normalized(std::array<double, N> a) {
  double sum = 0.0;
  for (const double v : a) sum += v;
  for (double& v : a) v /= sum;
  return a;
}

PoststratTable build_table(PopulationLabel label, const MarginShares& s) {
  const auto sex = normalized(s.sex);
  const auto age = normalized(s.age);
  const auto race = normalized(s.race);
  const auto county = normalized(s.county);

  std::array<std::int64_t, kNumCells> counts{};
  for (int j = 0; j < kNumCells; ++j) {
    const Covariates c = covariates_at(j);
    const double share = sex[static_cast<std::size_t>(c.sex)] *
                         age[static_cast<std::size_t>(c.age)] *
                         race[static_cast<std::size_t>(c.race)] *
                         county[static_cast<std::size_t>(c.county)];
    counts[static_cast<std::size_t>(j)] =
        std::llround(static_cast<double>(s.total) * share);
  }
  return PoststratTable(label, counts);
}

Date offset_date(Date base, int days) {
  return Date{std::chrono::sys_days(base) + std::chrono::days(days)};
}

AssayKind assay_for(ModelKind kind, Date anchor) {
  if (kind == ModelKind::PcrEq1) return AssayKind::Pcr;
  return std::chrono::sys_days(anchor) >= std::chrono::sys_days(kDefaultIggSplitDate)
             ? AssayKind::IggNS
             : AssayKind::IggN;
}

}  // namespace

double MarginBias::weight(const Covariates& c) const {
  return sex[static_cast<std::size_t>(c.sex)] * age[static_cast<std::size_t>(c.age)] *
         race[static_cast<std::size_t>(c.race)] *
         county[static_cast<std::size_t>(c.county)];
}

void MarginBias::validate() const {
  auto positive = [](const auto& arr) {
    return std::all_of(arr.begin(), arr.end(),
                       [](double w) { return w > 0.0 && std::isfinite(w); });
  };
  if (!positive(sex) || !positive(age) || !positive(race) || !positive(county))
    throw std::invalid_argument("MarginBias: weights must be positive and finite");
}

MarginBias hospital_style_bias() {
  // Ratios of the default hospital margin shares to the community's: the
  // tested stream oversamples the elderly, women, and Lake County.
  MarginBias b;
  b.sex = {57.0 / 51.0, 43.0 / 49.0};
  b.age = {8.7 / 24.0, 12.0 / 21.0, 30.0 / 40.0, 20.0 / 9.0, 29.0 / 6.6};
  b.race = {19.0 / 19.0, 65.0 / 69.0, 16.0 / 12.0};
  b.county = {88.0 / 74.0, 12.0 / 26.0};
  return b;
}

PoststratTable default_community_table() {
  return build_table(PopulationLabel::Community,
                     MarginShares{654890,
                                  {51.0, 49.0},
                                  {24.0, 21.0, 40.0, 9.0, 6.6},
                                  {19.0, 69.0, 12.0},
                                  {74.0, 26.0}});
}

PoststratTable default_hospital_table() {
  return build_table(PopulationLabel::Hospital,
                     MarginShares{35838,
                                  {57.0, 43.0},
                                  {8.7, 12.0, 30.0, 20.0, 29.0},
                                  {19.0, 65.0, 16.0},
                                  {88.0, 12.0}});
}

void TruthConfig::validate() const {
  if (n_weeks < 1) throw std::invalid_argument("TruthConfig: n_weeks must be positive");
  if (tests_per_week < 1)
    throw std::invalid_argument("TruthConfig: tests_per_week must be positive");
  if (!(true_delta > 0.0 && true_delta <= 1.0) ||
      !(true_gamma > 0.0 && true_gamma <= 1.0))
    throw std::invalid_argument("TruthConfig: delta/gamma must lie in (0, 1]");
  bias.validate();
  if (true_params) {
    const ModelSpec spec{kind, n_weeks};
    const ParamLayout layout = ParamLayout::from_spec(spec);
    if (true_params->size() != layout.dim)
      throw std::invalid_argument("TruthConfig: true_params has wrong dimension");
  }
}

Vector draw_regression_truth(const ModelSpec& spec, std::mt19937_64& rng) {
  if (spec.estimates_misclass())
    throw std::invalid_argument(
        "draw_regression_truth: expects a fixed-misclassification spec");
  const ParamLayout l = ParamLayout::from_spec(spec);
  std::normal_distribution<double> unit(0.0, 1.0);

  Vector q(l.dim);
  q[l.beta1] = spec.prior_scale_demo * unit(rng);
  q[l.beta2] = spec.prior_scale_demo * unit(rng);
  for (int i = 0; i < kNumAge; ++i) q[l.age + i] = unit(rng);
  for (int i = 0; i < kNumRace; ++i) q[l.race + i] = unit(rng);
  for (int i = 0; i < kNumCounty; ++i) q[l.county + i] = unit(rng);
  for (int i = 0; i < l.n_weeks; ++i) q[l.time + i] = unit(rng);
  for (int i = 0; i < l.n_inter; ++i) q[l.inter + i] = unit(rng);
  auto half_normal_log = [&](double scale) {
    return std::log(scale * std::abs(unit(rng)));
  };
  q[l.lsig_age] = half_normal_log(spec.prior_scale_demo);
  q[l.lsig_race] = half_normal_log(spec.prior_scale_demo);
  q[l.lsig_county] = half_normal_log(spec.prior_scale_demo);
  q[l.lsig_time] = half_normal_log(spec.prior_scale_time);
  q[l.lsig_inter] = half_normal_log(spec.interaction_scale());
  return q;
}

SimOutput generate(const TruthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(stats::derive_seed(cfg.seed, 0x51u));

  ModelSpec truth_spec{cfg.kind, cfg.n_weeks};
  truth_spec.misclass = FixedMisclass{cfg.true_delta, cfg.true_gamma};

  SimOutput out{.records = {},
                .community = default_community_table(),
                .hospital = default_hospital_table(),
                .true_community_prevalence = {},
                .true_hospital_prevalence = {},
                .true_params = {},
                .true_delta = cfg.true_delta,
                .true_gamma = cfg.true_gamma,
                .truth_spec = truth_spec};
  out.true_params =
      cfg.true_params ? *cfg.true_params : draw_regression_truth(truth_spec, rng);
  const Vector coeffs = constrain(ParamVector(out.true_params, truth_spec), truth_spec);

  // Sampling frame: community counts skewed by the bias weights.
  std::array<double, kNumCells> frame{};
  double frame_total = 0.0;
  for (int j = 0; j < kNumCells; ++j) {
    frame[static_cast<std::size_t>(j)] =
        static_cast<double>(out.community.count(j)) * cfg.bias.weight(covariates_at(j));
    frame_total += frame[static_cast<std::size_t>(j)];
  }
  if (!(frame_total > 0.0))
    throw std::invalid_argument("generate: sampling frame has zero total weight");
  std::discrete_distribution<int> cell_dist(frame.begin(), frame.end());

  // Per-(cell, week) observed positivity under the true parameters.
  Matrix p_obs(kNumCells, cfg.n_weeks);
  for (int j = 0; j < kNumCells; ++j) {
    const Covariates c = covariates_at(j);
    for (int w = 0; w < cfg.n_weeks; ++w) {
      const double pi = true_prevalence(
          linear_predictor_constrained(coeffs, c, WeekIndex{w}, truth_spec));
      p_obs(j, w) = observed_prob(pi, cfg.true_delta, cfg.true_gamma);
    }
  }

  const AssayKind assay = assay_for(cfg.kind, cfg.anchor);
  std::uniform_int_distribution<int> day_of_week(0, 6);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  out.records.reserve(static_cast<std::size_t>(cfg.n_weeks) *
                      static_cast<std::size_t>(cfg.tests_per_week));
  for (int w = 0; w < cfg.n_weeks; ++w) {
    for (int t = 0; t < cfg.tests_per_week; ++t) {
      const int j = cell_dist(rng);
      TestRecord rec;
      rec.date = offset_date(cfg.anchor, 7 * w + day_of_week(rng));
      rec.covariates = covariates_at(j);
      rec.assay = assay;
      rec.result = unif(rng) < p_obs(j, w) ? 1 : 0;
      out.records.push_back(rec);
    }
  }

  out.true_community_prevalence.reserve(static_cast<std::size_t>(cfg.n_weeks));
  out.true_hospital_prevalence.reserve(static_cast<std::size_t>(cfg.n_weeks));
  for (int w = 0; w < cfg.n_weeks; ++w) {
    out.true_community_prevalence.push_back(weighted_cell_prevalence(
        coeffs, truth_spec, WeekIndex{w}, out.community.counts()));
    out.true_hospital_prevalence.push_back(weighted_cell_prevalence(
        coeffs, truth_spec, WeekIndex{w}, out.hospital.counts()));
  }
  return out;
}

const SbcParamReport& SbcReport::param(const std::string& name) const {
  for (const SbcParamReport& p : params)
    if (p.name == name) return p;
  throw std::out_of_range("SbcReport: no tracked parameter named '" + name + "'");
}

SbcReport sbc_run(int n_replications, const ModelSpec& spec, const SbcConfig& cfg) {
  if (n_replications < 1)
    throw std::invalid_argument("sbc_run: n_replications must be positive");
  spec.validate();
  if (cfg.thinned_draws < 1 || cfg.bins < 2)
    throw std::invalid_argument("sbc_run: invalid thinning/bin configuration");

  ModelSpec fit_spec = spec;
  fit_spec.n_weeks = cfg.truth.n_weeks;
  if (cfg.fit_misclass_override) fit_spec.misclass = *cfg.fit_misclass_override;
  fit_spec.validate();

  // Conjugate Beta posteriors implied by the fitted model's study data; the
  // conditional prior of delta/gamma given those studies.
  std::optional<oracle::BetaParams> delta_prior;
  std::optional<oracle::BetaParams> gamma_prior;
  if (fit_spec.estimates_misclass()) {
    const auto& priors = std::get<EstimatedMisclass>(fit_spec.misclass).priors;
    delta_prior = oracle::conjugate_beta_posterior(priors.sensitivity_studies, 1.0, 1.0);
    gamma_prior = oracle::conjugate_beta_posterior(priors.specificity_studies, 1.0, 1.0);
  }

  std::vector<std::string> tracked = {"beta1", "sigma_time"};
  if (fit_spec.estimates_misclass()) {
    tracked.emplace_back("delta");
    tracked.emplace_back("gamma");
  }
  tracked.emplace_back("pi_avg_w0");

  const int n_ranks = cfg.thinned_draws + 1;
  SbcReport report;
  report.n_rank_values = n_ranks;
  for (const std::string& name : tracked)
    report.params.push_back(
        SbcParamReport{name, std::vector<int>(static_cast<std::size_t>(cfg.bins), 0),
                       0.0, 0.0});

  ModelSpec truth_spec{spec.kind, cfg.truth.n_weeks, spec.prior_scale_demo,
                       spec.prior_scale_time, spec.prior_scale_age_time,
                       FixedMisclass{1.0, 1.0}};
  const ParamLayout truth_layout = ParamLayout::from_spec(truth_spec);
  const PoststratTable community = default_community_table();

  for (int rep = 0; rep < n_replications; ++rep) {
    const std::uint64_t base = stats::derive_seed(cfg.truth.seed, 3u * rep);
    std::mt19937_64 truth_rng(base);

    TruthConfig tc = cfg.truth;
    tc.kind = spec.kind;
    tc.seed = stats::derive_seed(cfg.truth.seed, 3u * rep + 1u);
    tc.true_params = draw_regression_truth(truth_spec, truth_rng);
    if (cfg.truth_misclass_override) {
      tc.true_delta = cfg.truth_misclass_override->first;
      tc.true_gamma = cfg.truth_misclass_override->second;
    } else if (delta_prior) {
      tc.true_delta = stats::beta_sample(truth_rng, delta_prior->a, delta_prior->b);
      tc.true_gamma = stats::beta_sample(truth_rng, gamma_prior->a, gamma_prior->b);
    } else {
      const auto& fixed = std::get<FixedMisclass>(fit_spec.misclass);
      tc.true_delta = fixed.delta;
      tc.true_gamma = fixed.gamma;
    }

    const SimOutput sim = generate(tc);
    const DatasetWindow window = build_dataset(sim.records, spec.kind, tc.anchor);

    SamplerConfig sampler_cfg = cfg.sampler;
    sampler_cfg.seed = stats::derive_seed(cfg.truth.seed, 3u * rep + 2u);
    const FitResult fit = fit_model(window.data, fit_spec, sampler_cfg);

    const double worst_rhat = fit.diag.max_rhat();
    if (std::isfinite(worst_rhat) && worst_rhat > cfg.rhat_exclusion) {
      ++report.excluded;
      continue;
    }
    ++report.replications;

    auto record_rank = [&](SbcParamReport& pr, double truth, const Vector& posterior) {
      const Eigen::Index total = posterior.size();
      int rank = 0;
      for (int i = 0; i < cfg.thinned_draws; ++i) {
        const Eigen::Index idx = static_cast<Eigen::Index>(
            (static_cast<double>(i) + 0.5) * static_cast<double>(total) /
            static_cast<double>(cfg.thinned_draws));
        if (posterior[idx] < truth) ++rank;
      }
      const int bin = std::min(cfg.bins - 1, rank * cfg.bins / n_ranks);
      ++pr.rank_counts[static_cast<std::size_t>(bin)];
    };

    for (SbcParamReport& pr : report.params) {
      if (pr.name == "pi_avg_w0") {
        record_rank(pr, sim.true_community_prevalence.front(),
                    poststrat_draws(fit.draws, fit_spec, WeekIndex{0},
                                    community.counts()));
      } else if (pr.name == "delta") {
        record_rank(pr, tc.true_delta,
                    fit.draws.stacked_column(fit.draws.index_of("delta")));
      } else if (pr.name == "gamma") {
        record_rank(pr, tc.true_gamma,
                    fit.draws.stacked_column(fit.draws.index_of("gamma")));
      } else if (pr.name == "sigma_time") {
        record_rank(pr, std::exp((*tc.true_params)[truth_layout.lsig_time]),
                    fit.draws.stacked_column(fit.draws.index_of("sigma_time")));
      } else {
        record_rank(pr, (*tc.true_params)[truth_layout.beta1],
                    fit.draws.stacked_column(fit.draws.index_of("beta1")));
      }
    }
  }

  if (report.replications > 0) {
    const double expected =
        static_cast<double>(report.replications) / static_cast<double>(cfg.bins);
    for (SbcParamReport& pr : report.params) {
      double chi2 = 0.0;
      for (const int o : pr.rank_counts) {
        const double d = static_cast<double>(o) - expected;
        chi2 += d * d / expected;
      }
      pr.chi2 = chi2;
      pr.p_value = stats::chi2_sf(chi2, static_cast<double>(cfg.bins - 1));
    }
  }
  return report;
}

}  // namespace seromrp
