#ifndef SEROMRP_MODEL_HPP
#define SEROMRP_MODEL_HPP

// Hierarchical logistic prevalence models with misclassification adjustment:
// log posterior, analytic gradient, and the unconstrained <-> constrained
// parameter transforms.
//
// Two regression structures are supported. Both share an intercept, a +-0.5
// sex contrast and exchangeable varying effects for age, race, county and
// week; they differ in the interaction block:
//   PcrEq1: age x sex interaction (10 coefficients)
//   IggEq2: age x week interaction (5 * n_weeks coefficients)
//
// Varying effects are parameterized non-centered: the sampled coordinate is a
// standard-normal raw effect and the coefficient is sigma * raw. Scales are
// sampled as log(sigma) and assay sensitivity/specificity as logit(delta),
// logit(gamma); all transform Jacobians are included in the log prior so the
// posterior is correct on the unconstrained scale.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "seromrp/domain.hpp"
#include "seromrp/types.hpp"

namespace seromrp {

enum class ModelKind : std::uint8_t { PcrEq1 = 0, IggEq2 = 1 };

struct FixedMisclass {
  double delta = 1.0;  // sensitivity
  double gamma = 1.0;  // specificity
};

struct EstimatedMisclass {
  MisclassPriorData priors;
};

using MisclassModel = std::variant<FixedMisclass, EstimatedMisclass>;

struct ModelSpec {
  ModelKind kind = ModelKind::PcrEq1;
  int n_weeks = 1;
  double prior_scale_demo = 2.5;      // age, race, county (and age x sex) scales
  double prior_scale_time = 5.0;      // week-effect scale
  double prior_scale_age_time = 1.0;  // age x week scale (IggEq2 only)
  MisclassModel misclass = FixedMisclass{};

  bool estimates_misclass() const {
    return std::holds_alternative<EstimatedMisclass>(misclass);
  }
  int n_interactions() const {
    return kind == ModelKind::PcrEq1 ? kNumAge * kNumSex : kNumAge * n_weeks;
  }
  double interaction_scale() const {
    return kind == ModelKind::PcrEq1 ? prior_scale_demo : prior_scale_age_time;
  }
  void validate() const;  // throws on non-positive sizes or bad fixed probabilities
};

// Offsets of the named blocks inside the packed parameter vector. The same
// layout is used for the unconstrained vector (raw effects, log sigmas,
// logit delta/gamma) and for constrained draws (coefficients, sigmas, delta,
// gamma).
struct ParamLayout {
  int beta1 = 0;
  int beta2 = 1;
  int age = 2;
  int race = 0;
  int county = 0;
  int time = 0;
  int inter = 0;
  int lsig_age = 0;
  int lsig_race = 0;
  int lsig_county = 0;
  int lsig_time = 0;
  int lsig_inter = 0;
  int logit_delta = -1;  // -1 when misclassification is fixed
  int logit_gamma = -1;
  int n_weeks = 0;
  int n_inter = 0;
  int dim = 0;

  static ParamLayout from_spec(const ModelSpec& spec);

  // Column names for constrained draws, in layout order.
  std::vector<std::string> param_names(const ModelSpec& spec) const;

  int interaction_offset(int age_index, int sex_index, int week,
                         ModelKind kind) const;
};

// One point of the unconstrained parameter space; construction checks the
// dimension implied by the spec.
struct ParamVector {
  ParamVector(Vector values, const ModelSpec& spec);
  Vector values;
};

// Rows of (cell, week, outcome) for one assay. Weeks are validated against
// the model's n_weeks when a likelihood is built, not here.
struct Dataset {
  std::vector<std::int32_t> cell;
  std::vector<std::int32_t> week;
  std::vector<std::uint8_t> y;
  AssayKind assay = AssayKind::Pcr;

  std::size_t size() const { return y.size(); }
  void add(const Covariates& c, WeekIndex w, bool positive);
};

// Inverse logit; maps the linear predictor to prevalence in (0, 1).
double true_prevalence(double eta);
double logit(double p);

// P(test positive) = pi * delta + (1 - pi) * (1 - gamma).
double observed_prob(double pi, double delta, double gamma);

// Test-positivity probabilities are clamped to
// [kProbClamp, 1 - kProbClamp] before logs are taken.
inline constexpr double kProbClamp = 1e-12;

double linear_predictor(const ParamVector& p, const Covariates& c, WeekIndex w,
                        const ModelSpec& spec);

// Map an unconstrained vector to the constrained scale: coefficients
// (sigma * raw), positive sigmas, delta/gamma probabilities.
Vector constrain(const ParamVector& p, const ModelSpec& spec);

// Linear predictor from a constrained row (as stored in Draws).
double linear_predictor_constrained(const Vector& coeffs, const Covariates& c,
                                    WeekIndex w, const ModelSpec& spec);

// Binomial log-likelihood of the assay-validation studies at given
// sensitivity/specificity; binomial coefficients retained.
double misclass_study_loglik(double delta, double gamma,
                             const MisclassPriorData& data);

double log_likelihood(const ParamVector& p, const Dataset& d, const ModelSpec& spec);
double log_prior(const ParamVector& p, const ModelSpec& spec);

std::pair<double, Vector> log_posterior_and_grad(const ParamVector& p,
                                                 const Dataset& d,
                                                 const ModelSpec& spec);

// Prebuilt evaluation path for samplers: aggregates the dataset into
// (cell, week) sufficient statistics once, then evaluates the log posterior
// and gradient without touching individual rows. Pure and safe for
// concurrent use.
class LogPosteriorTarget {
 public:
  LogPosteriorTarget(const Dataset& d, const ModelSpec& spec);

  int dim() const { return layout_.dim; }
  const ParamLayout& layout() const { return layout_; }
  const ModelSpec& spec() const { return spec_; }

  double value(const Vector& q) const;
  // Returns the log posterior and fills grad (resized to dim). Non-finite
  // intermediates yield -inf with a zero gradient, never NaN.
  double value_and_grad(const Vector& q, Vector& grad) const;

 private:
  struct Group {
    std::int32_t cell;
    std::int32_t week;
    double trials;
    double positives;
  };

  ModelSpec spec_;
  ParamLayout layout_;
  std::vector<Group> groups_;
};

}  // namespace seromrp

#endif
