#ifndef SEROMRP_FIT_HPP
#define SEROMRP_FIT_HPP

#include <optional>
#include <span>
#include <vector>

#include "seromrp/diagnostics.hpp"
#include "seromrp/domain.hpp"
#include "seromrp/model.hpp"
#include "seromrp/sampler.hpp"

// Dataset assembly from raw records and the end-to-end model fit (posterior
// sampling plus convergence diagnostics).
namespace seromrp {

struct DatasetWindow {
  Dataset data;
  Date anchor;
  int n_weeks = 0;
};

// Keeps the records matching `kind`'s assays (PCR, or IgG N / IgG N-S for the
// IgG model) and bins dates into 7-day weeks counted from `anchor`.  When no
// anchor is given the earliest kept record date is used.  Throws on records
// dated before an explicit anchor, on IgG N-S records dated before the
// configured split date, and when no record matches.
DatasetWindow build_dataset(std::span<const TestRecord> records, ModelKind kind,
                            std::optional<Date> anchor = std::nullopt,
                            Date igg_split = kDefaultIggSplitDate);

struct FitResult {
  ModelSpec spec;
  Draws draws;
  Diagnostics diag;
};

// Samples the posterior of `spec` given `data` and attaches diagnostics.
// Draw matrices are on the constrained scale (named coefficients, sigmas,
// delta/gamma when estimated).
FitResult fit_model(const Dataset& data, const ModelSpec& spec,
                    const SamplerConfig& cfg);

}  // namespace seromrp

#endif  // SEROMRP_FIT_HPP
