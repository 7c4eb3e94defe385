#include "seromrp/simulate.hpp"

#include <chrono>
#include <cmath>
#include <set>

#include "doctest.h"
#include "seromrp/poststrat.hpp"

using namespace seromrp;

TEST_CASE("default tables echo the documented population mix") {
  const PoststratTable community = default_community_table();
  const PoststratTable hospital = default_hospital_table();
  CHECK(community.label() == PopulationLabel::Community);
  CHECK(hospital.label() == PopulationLabel::Hospital);
  CHECK(community.total() > 600000);
  CHECK(hospital.total() > 30000);

  // Female share 51% community, 57% hospital (within rounding).
  auto share = [](const PoststratTable& t, auto pred) {
    std::int64_t num = 0;
    for (int j = 0; j < kNumCells; ++j)
      if (pred(covariates_at(j))) num += t.count(j);
    return static_cast<double>(num) / static_cast<double>(t.total());
  };
  const auto female = [](const Covariates& c) { return c.sex == Sex::Female; };
  const auto lake = [](const Covariates& c) { return c.county == County::Lake; };
  CHECK(share(community, female) == doctest::Approx(0.51).epsilon(0.01));
  CHECK(share(hospital, female) == doctest::Approx(0.57).epsilon(0.01));
  CHECK(share(community, lake) == doctest::Approx(0.74).epsilon(0.01));
  CHECK(share(hospital, lake) == doctest::Approx(0.88).epsilon(0.01));
}

TEST_CASE("config validation") {
  TruthConfig ok;
  CHECK_NOTHROW(ok.validate());

  TruthConfig bad = ok;
  bad.true_delta = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.n_weeks = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.tests_per_week = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.bias.age[2] = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.true_params = Vector::Zero(3);  // wrong dimension
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("generation is deterministic in the seed") {
  TruthConfig cfg;
  cfg.seed = 314;
  cfg.n_weeks = 3;
  cfg.tests_per_week = 200;
  const SimOutput a = generate(cfg);
  const SimOutput b = generate(cfg);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].date == b.records[i].date);
    CHECK(a.records[i].covariates == b.records[i].covariates);
    CHECK(a.records[i].result == b.records[i].result);
  }
  CHECK(a.true_params == b.true_params);
  CHECK(a.true_community_prevalence == b.true_community_prevalence);

  cfg.seed = 315;
  const SimOutput c = generate(cfg);
  bool any_diff = c.records.size() != a.records.size();
  for (std::size_t i = 0; !any_diff && i < a.records.size(); ++i) {
    any_diff = !(a.records[i].covariates == c.records[i].covariates) ||
               a.records[i].result != c.records[i].result;
  }
  CHECK(any_diff);
}

TEST_CASE("record stream shape") {
  TruthConfig cfg;
  cfg.seed = 9;
  cfg.n_weeks = 4;
  cfg.tests_per_week = 150;
  const SimOutput out = generate(cfg);
  CHECK(out.records.size() == 600);
  CHECK(out.true_community_prevalence.size() == 4);
  CHECK(out.true_hospital_prevalence.size() == 4);
  CHECK(out.true_delta == 0.7);
  CHECK(out.true_gamma == 0.995);

  const auto anchor_day = std::chrono::sys_days(cfg.anchor);
  for (const TestRecord& r : out.records) {
    CHECK(r.assay == AssayKind::Pcr);
    const auto day = std::chrono::sys_days(r.date);
    CHECK(day >= anchor_day);
    CHECK(day < anchor_day + std::chrono::days(7 * 4));
  }
}

TEST_CASE("perfect assay with zero prevalence yields all-negative results") {
  TruthConfig cfg;
  cfg.seed = 10;
  cfg.n_weeks = 2;
  cfg.tests_per_week = 2000;
  cfg.true_delta = 1.0;
  cfg.true_gamma = 1.0;
  ModelSpec truth_spec{ModelKind::PcrEq1, cfg.n_weeks};
  truth_spec.misclass = FixedMisclass{1.0, 1.0};
  Vector params = Vector::Zero(ParamLayout::from_spec(truth_spec).dim);
  params[0] = -40.0;  // prevalence ~ 4e-18 everywhere
  cfg.true_params = params;

  const SimOutput out = generate(cfg);
  for (const TestRecord& r : out.records) CHECK(r.result == 0);
  for (double p : out.true_community_prevalence) CHECK(p < 1e-15);
}

TEST_CASE("unbiased sampling converges to the table mix") {
  TruthConfig cfg;
  cfg.seed = 77;
  cfg.n_weeks = 1;
  cfg.tests_per_week = 50000;
  cfg.bias = MarginBias{};  // all weights 1
  const SimOutput out = generate(cfg);

  std::array<std::int64_t, kNumCells> observed{};
  for (const TestRecord& r : out.records) observed[cell_index(r.covariates)]++;

  double chi2 = 0.0;
  const double n = static_cast<double>(out.records.size());
  for (int j = 0; j < kNumCells; ++j) {
    const double expected = n * static_cast<double>(out.community.count(j)) /
                            static_cast<double>(out.community.total());
    REQUIRE(expected > 5.0);
    const double diff = observed[j] - expected;
    chi2 += diff * diff / expected;
  }
  // 99.9th percentile of chi-squared with 59 dof is ~98.3.
  CHECK(chi2 < 98.3);
}

TEST_CASE("hospital-style bias skews the sampled demographics") {
  TruthConfig cfg;
  cfg.seed = 78;
  cfg.n_weeks = 1;
  cfg.tests_per_week = 50000;
  const SimOutput out = generate(cfg);

  auto sample_share = [&](auto pred) {
    std::int64_t num = 0;
    for (const TestRecord& r : out.records)
      if (pred(r.covariates)) num++;
    return static_cast<double>(num) / static_cast<double>(out.records.size());
  };
  auto table_share = [&](auto pred) {
    std::int64_t num = 0;
    for (int j = 0; j < kNumCells; ++j)
      if (pred(covariates_at(j))) num += out.community.count(j);
    return static_cast<double>(num) / static_cast<double>(out.community.total());
  };

  const auto elderly = [](const Covariates& c) {
    return c.age == AgeGroup::A65_74 || c.age == AgeGroup::A75plus;
  };
  const auto female = [](const Covariates& c) { return c.sex == Sex::Female; };
  const auto lake = [](const Covariates& c) { return c.county == County::Lake; };
  CHECK(sample_share(elderly) > 2.0 * table_share(elderly));
  CHECK(sample_share(female) > table_share(female));
  CHECK(sample_share(lake) > table_share(lake));
}

TEST_CASE("stored truth series equals poststratification of the true parameters") {
  TruthConfig cfg;
  cfg.seed = 81;
  cfg.n_weeks = 5;
  cfg.tests_per_week = 50;
  const SimOutput out = generate(cfg);

  const Vector coeffs =
      constrain(ParamVector(out.true_params, out.truth_spec), out.truth_spec);
  for (int w = 0; w < cfg.n_weeks; ++w) {
    const double community = weighted_cell_prevalence(
        coeffs, out.truth_spec, WeekIndex{w}, out.community.counts());
    const double hospital = weighted_cell_prevalence(
        coeffs, out.truth_spec, WeekIndex{w}, out.hospital.counts());
    // Bit-identical: the simulator uses the same arithmetic path.
    CHECK(out.true_community_prevalence[w] == community);
    CHECK(out.true_hospital_prevalence[w] == hospital);
  }
}

TEST_CASE("IgG scenarios label records by the anchor date") {
  TruthConfig cfg;
  cfg.seed = 83;
  cfg.kind = ModelKind::IggEq2;
  cfg.n_weeks = 2;
  cfg.tests_per_week = 20;

  cfg.anchor = make_date(2020, 7, 1);  // before the N/S split
  const SimOutput early = generate(cfg);
  for (const TestRecord& r : early.records) CHECK(r.assay == AssayKind::IggN);

  cfg.anchor = make_date(2021, 3, 1);  // after the split
  const SimOutput late = generate(cfg);
  for (const TestRecord& r : late.records) CHECK(r.assay == AssayKind::IggNS);
}

TEST_CASE("prior draws cover the regression truth coordinates") {
  ModelSpec spec{ModelKind::PcrEq1, 4};
  spec.misclass = FixedMisclass{0.7, 0.995};
  std::mt19937_64 rng(55);
  const Vector draw = draw_regression_truth(spec, rng);
  CHECK(draw.size() == ParamLayout::from_spec(spec).dim);
  const Vector another = draw_regression_truth(spec, rng);
  CHECK(draw != another);

  ModelSpec est = spec;
  est.misclass = EstimatedMisclass{{{{70, 100}}, {{368, 371}}}};
  CHECK_THROWS_AS((void)draw_regression_truth(est, rng), std::invalid_argument);
}

TEST_CASE("sbc rejects empty runs and reports tracked parameters") {
  ModelSpec spec{ModelKind::PcrEq1, 2};
  spec.misclass = EstimatedMisclass{{{{70, 100}, {78, 85}}, {{368, 371}}}};
  SbcConfig cfg;
  cfg.truth.n_weeks = 2;
  cfg.truth.tests_per_week = 60;
  cfg.sampler.chains = 2;
  cfg.sampler.warmup = 250;
  cfg.sampler.draws = 150;
  cfg.sampler.seed = 4;

  CHECK_THROWS_AS((void)sbc_run(0, spec, cfg), std::invalid_argument);

  const SbcReport report = sbc_run(2, spec, cfg);
  // replications counts the kept cycles; exclusions are tallied separately.
  CHECK(report.replications + report.excluded == 2);
  CHECK(report.n_rank_values == 100);
  CHECK(report.excluded >= 0);
  CHECK(report.excluded <= 2);

  for (const char* name : {"beta1", "sigma_time", "delta", "gamma", "pi_avg_w0"}) {
    const SbcParamReport& p = report.param(name);
    CHECK(static_cast<int>(p.rank_counts.size()) == cfg.bins);
    int total = 0;
    for (int c : p.rank_counts) total += c;
    CHECK(total == report.replications);
  }
  CHECK_THROWS_AS((void)report.param("nope"), std::out_of_range);

  // A fixed-misclassification fit tracks no delta/gamma ranks.
  SbcConfig fixed_cfg = cfg;
  fixed_cfg.fit_misclass_override = FixedMisclass{1.0, 1.0};
  fixed_cfg.truth_misclass_override = {{1.0, 1.0}};
  const SbcReport fixed_report = sbc_run(1, spec, fixed_cfg);
  CHECK_THROWS_AS((void)fixed_report.param("delta"), std::out_of_range);
  CHECK_NOTHROW((void)fixed_report.param("beta1"));
}
