#ifndef SEROMRP_SIMULATE_HPP
#define SEROMRP_SIMULATE_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "seromrp/domain.hpp"
#include "seromrp/fit.hpp"
#include "seromrp/model.hpp"
#include "seromrp/sampler.hpp"
#include "seromrp/types.hpp"

// Ground-truth synthetic data: a community population, a demographically
// biased hospital testing stream drawn from it, latent weekly prevalence on
// the model's own cell structure, and assay noise.  The substrate for
// parameter-recovery and simulation-based calibration tests.
namespace seromrp {

// Multiplicative sampling-bias weights, one factor per margin level.  A
// record's cell is drawn with probability proportional to
// community_count(cell) * weight(cell), so weights != 1 skew the tested
// sample away from the community mix.
struct MarginBias {
  std::array<double, kNumSex> sex{1.0, 1.0};
  std::array<double, kNumAge> age{1.0, 1.0, 1.0, 1.0, 1.0};
  std::array<double, kNumRace> race{1.0, 1.0, 1.0};
  std::array<double, kNumCounty> county{1.0, 1.0};

  double weight(const Covariates& c) const;
  void validate() const;
};

// Bias weights shaped like the real hospital stream's demographic skew
// (oversampled elderly, female, Lake County patients).
MarginBias hospital_style_bias();

// Synthetic default populations echoing the studied region's proportions
// (community: 51% female, 24% under 18, 74% Lake County, ...).  Invented
// scenario defaults, not census data.
PoststratTable default_community_table();
PoststratTable default_hospital_table();

struct TruthConfig {
  std::uint64_t seed = 0;
  ModelKind kind = ModelKind::PcrEq1;
  int n_weeks = 10;
  int tests_per_week = 500;
  // Assay noise applied when generating outcomes.
  double true_delta = 0.7;
  double true_gamma = 0.995;
  // Explicit unconstrained regression parameters (layout of a fixed-misclass
  // spec for `kind`/`n_weeks`); when absent, drawn from the model priors.
  std::optional<Vector> true_params;
  MarginBias bias = hospital_style_bias();
  Date anchor = kDefaultPcrAnchorDate;

  void validate() const;
};

struct SimOutput {
  std::vector<TestRecord> records;
  PoststratTable community;
  PoststratTable hospital;
  // Weekly population prevalence implied by true_params, computed through
  // the same poststratification arithmetic the estimator uses.
  std::vector<double> true_community_prevalence;
  std::vector<double> true_hospital_prevalence;
  Vector true_params;  // unconstrained, fixed-misclass layout
  double true_delta = 0.0;
  double true_gamma = 0.0;
  // Spec under which true_params is interpreted (misclass fixed at truth).
  ModelSpec truth_spec;
};

// Draws every unconstrained coordinate of a fixed-misclass model from its
// prior (betas normal, raw effects standard normal, log-sigmas from
// half-normal draws).
Vector draw_regression_truth(const ModelSpec& spec, std::mt19937_64& rng);

SimOutput generate(const TruthConfig& cfg);

// --- Simulation-based calibration -----------------------------------------
//
// Each replication draws truth from the priors, simulates a dataset, fits it,
// and records where the truth ranks within thinned posterior draws.  For a
// correctly coded pipeline the ranks are uniform.  When the fitted model
// estimates delta/gamma against fixed study data, their truths are drawn from
// the conjugate Beta posterior those studies imply — exactly the conditional
// prior given the study outcomes, so rank uniformity still holds.

struct SbcConfig {
  TruthConfig truth;
  SamplerConfig sampler;
  // Replaces the fitted model's misclassification handling (negative-control
  // hook: fit with Fixed(1,1) while generating at other values).
  std::optional<MisclassModel> fit_misclass_override;
  // Forces the generating delta/gamma instead of conjugate draws.
  std::optional<std::pair<double, double>> truth_misclass_override;
  int thinned_draws = 99;  // ranks take values 0..thinned_draws
  int bins = 20;
  double rhat_exclusion = 1.05;
};

struct SbcParamReport {
  std::string name;
  std::vector<int> rank_counts;  // one entry per bin
  double chi2 = 0.0;
  double p_value = 0.0;
};

struct SbcReport {
  int replications = 0;
  int excluded = 0;  // replications dropped for R-hat above the threshold
  int n_rank_values = 0;
  std::vector<SbcParamReport> params;

  const SbcParamReport& param(const std::string& name) const;
};

// Runs `n_replications` draw/simulate/fit cycles under `spec` and reports
// rank-uniformity chi-square statistics for beta1, sigma_time, delta/gamma
// (when estimated by the fit), and week-0 community prevalence.
SbcReport sbc_run(int n_replications, const ModelSpec& spec, const SbcConfig& cfg);

}  // namespace seromrp

#endif  // SEROMRP_SIMULATE_HPP
