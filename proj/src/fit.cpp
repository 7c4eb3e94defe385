#include "seromrp/fit.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace seromrp {

namespace {

bool assay_matches(AssayKind record, ModelKind kind) {
  if (kind == ModelKind::PcrEq1) return record == AssayKind::Pcr;
  return record == AssayKind::IggN || record == AssayKind::IggNS;
}

}  // namespace

DatasetWindow build_dataset(std::span<const TestRecord> records, ModelKind kind,
                            std::optional<Date> anchor, Date igg_split) {
  std::vector<const TestRecord*> kept;
  kept.reserve(records.size());
  bool any_ns = false;
  for (const TestRecord& r : records) {
    if (!assay_matches(r.assay, kind)) continue;
    if (r.assay == AssayKind::IggNS) {
      any_ns = true;
      if (std::chrono::sys_days(r.date) < std::chrono::sys_days(igg_split))
        throw std::invalid_argument(
            "build_dataset: IgG N-S record dated " + format_date(r.date) +
            " precedes the assay split date " + format_date(igg_split));
    }
    kept.push_back(&r);
  }
  if (kept.empty())
    throw std::invalid_argument("build_dataset: no records match the model's assays");

  Date start = anchor.value_or(kept.front()->date);
  if (!anchor) {
    for (const TestRecord* r : kept)
      if (std::chrono::sys_days(r->date) < std::chrono::sys_days(start)) start = r->date;
  }

  DatasetWindow out;
  out.anchor = start;
  out.data.assay = kind == ModelKind::PcrEq1 ? AssayKind::Pcr
                   : any_ns                  ? AssayKind::IggNS
                                             : AssayKind::IggN;
  int max_week = 0;
  for (const TestRecord* r : kept) {
    WeekIndex w{0};
    try {
      w = week_of(r->date, start);
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("build_dataset: record dated " + format_date(r->date) +
                                  " precedes the anchor date " + format_date(start));
    }
    max_week = std::max(max_week, w.value);
    out.data.add(r->covariates, w, r->result != 0);
  }
  out.n_weeks = max_week + 1;
  return out;
}

FitResult fit_model(const Dataset& data, const ModelSpec& spec,
                    const SamplerConfig& cfg) {
  spec.validate();
  const LogPosteriorTarget target(data, spec);
  const ParamLayout layout = target.layout();

  LogDensityGradient logpost = [&target](const Vector& q, Vector& grad) {
    return target.value_and_grad(q, grad);
  };
  ConstrainFn to_constrained = [&spec](const Vector& q) {
    return constrain(ParamVector(q, spec), spec);
  };

  FitResult result;
  result.spec = spec;
  result.draws = run(logpost, layout.dim, cfg, to_constrained);
  result.draws.param_names = layout.param_names(spec);
  result.diag = diagnostics(result.draws);
  return result;
}

}  // namespace seromrp
