#ifndef SEROMRP_POSTSTRAT_HPP
#define SEROMRP_POSTSTRAT_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seromrp/domain.hpp"
#include "seromrp/model.hpp"
#include "seromrp/sampler.hpp"
#include "seromrp/types.hpp"

// Poststratification: reweights posterior cell prevalences by population
// counts to produce community- or hospital-level weekly prevalence, subgroup
// tables, and the natural-vs-vaccine immunity decomposition.
//
// Cell prevalence is the TRUE prevalence inv_logit(eta), never the observed
// test-positivity: misclassification is a measurement artifact and the
// estimand is the corrected prevalence.
namespace seromrp {

struct DistSummary {
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q25 = 0.0;
  double q50 = 0.0;
  double q75 = 0.0;
  double q975 = 0.0;
};

// Mean/SD/quantiles of a vector of posterior draws.
DistSummary summarize(const Vector& values);

struct PrevalenceSeries {
  PopulationLabel population = PopulationLabel::Community;
  AssayKind assay = AssayKind::Pcr;
  std::vector<DistSummary> weeks;
};

enum class Margin { Overall, Sex, Race, Age };

std::string margin_name(Margin m);

struct ImmunityDecomposition {
  DistSummary natural_lower_bound;
  double vaccination_rate = 0.0;
  // Draws where the vaccination rate met or exceeded total prevalence and the
  // difference was clamped to zero.
  int clamped_draws = 0;
  int total_draws = 0;
};

struct SubgroupRow {
  Margin margin = Margin::Overall;
  std::string level;           // e.g. "overall", "female", "a65_74"
  std::int64_t level_total = 0;
  bool empty = false;          // zero population count: no estimate possible
  DistSummary estimate;        // meaningless when empty
  // Filled when an external vaccination rate is supplied for this row.
  std::optional<ImmunityDecomposition> immunity;
};

struct SubgroupTable {
  WeekIndex week{0};
  std::int64_t table_total = 0;
  std::vector<SubgroupRow> rows;
};

// Zeroes every cell outside the given margin level (level indexes the
// margin's enum; ignored for Overall).
std::array<std::int64_t, kNumCells> margin_level_counts(
    const std::array<std::int64_t, kNumCells>& counts, Margin margin, int level);

// Count-weighted mean of cell prevalences for one constrained coefficient
// vector: sum_j (N_j / total) * inv_logit(eta_j).  A zero count excludes a
// cell, identically to deleting it; weights are exact IEEE quotients, so
// scaling every count by a constant leaves the result bit-identical.  Shared
// by the posterior path and the simulator's ground-truth series so the two
// agree exactly.  Throws std::invalid_argument if all counts are zero.
double weighted_cell_prevalence(const Vector& coeffs, const ModelSpec& spec,
                                WeekIndex w,
                                const std::array<std::int64_t, kNumCells>& counts);

// weighted_cell_prevalence applied to every posterior draw.
Vector poststrat_draws(const Draws& draws, const ModelSpec& spec, WeekIndex w,
                       const std::array<std::int64_t, kNumCells>& counts);

// Population-weighted prevalence distribution at one week.
DistSummary poststratify_week(const Draws& draws, const PoststratTable& table,
                              WeekIndex w, const ModelSpec& spec);

// poststratify_week mapped over every fitted week.
PrevalenceSeries weekly_series(const Draws& draws, const PoststratTable& table,
                               const ModelSpec& spec, AssayKind assay);

// Poststratification restricted to each requested margin's levels.  Rows with
// zero population count are flagged empty rather than reported as zero.
SubgroupTable subgroup_estimates(const Draws& draws, const PoststratTable& table,
                                 WeekIndex w, const ModelSpec& spec,
                                 const std::vector<Margin>& margins);

// Lower bound on naturally acquired immunity: per-draw max(0, prev - rate).
// The rate is an external point estimate; no uncertainty is attached to it.
ImmunityDecomposition decompose_immunity(const Vector& total_prev_draws,
                                         double vaccination_rate);

}  // namespace seromrp

#endif  // SEROMRP_POSTSTRAT_HPP
