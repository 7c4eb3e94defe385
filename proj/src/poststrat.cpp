#include "seromrp/poststrat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "seromrp/stats.hpp"

namespace seromrp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

DistSummary nan_summary() {
  return DistSummary{kNaN, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN};
}

}  // namespace

std::array<std::int64_t, kNumCells> margin_level_counts(
    const std::array<std::int64_t, kNumCells>& counts, Margin margin, int level) {
  std::array<std::int64_t, kNumCells> out{};
  for (int j = 0; j < kNumCells; ++j) {
    const Covariates c = covariates_at(j);
    const bool keep = margin == Margin::Overall ||
                      (margin == Margin::Sex && static_cast<int>(c.sex) == level) ||
                      (margin == Margin::Race && static_cast<int>(c.race) == level) ||
                      (margin == Margin::Age && static_cast<int>(c.age) == level);
    if (keep) out[static_cast<std::size_t>(j)] = counts[static_cast<std::size_t>(j)];
  }
  return out;
}

DistSummary summarize(const Vector& values) {
  if (values.size() == 0) throw std::invalid_argument("summarize: empty draw vector");
  Vector sorted = values;
  std::sort(sorted.data(), sorted.data() + sorted.size());

  // A constant vector has an exact summary; the accumulated mean would be a
  // few ulps off the constant and leak into the sd.
  if (sorted[0] == sorted[sorted.size() - 1]) {
    const double v = sorted[0];
    return DistSummary{v, 0.0, v, v, v, v, v};
  }

  DistSummary s;
  s.mean = values.mean();
  const double n = static_cast<double>(values.size());
  s.sd = n > 1.0 ? std::sqrt((values.array() - s.mean).square().sum() / (n - 1.0)) : 0.0;
  s.q025 = stats::quantile_sorted(sorted, 0.025);
  s.q25 = stats::quantile_sorted(sorted, 0.25);
  s.q50 = stats::quantile_sorted(sorted, 0.50);
  s.q75 = stats::quantile_sorted(sorted, 0.75);
  s.q975 = stats::quantile_sorted(sorted, 0.975);
  return s;
}

std::string margin_name(Margin m) {
  switch (m) {
    case Margin::Overall: return "overall";
    case Margin::Sex: return "sex";
    case Margin::Race: return "race";
    case Margin::Age: return "age";
  }
  throw std::invalid_argument("margin_name: unknown margin");
}

double weighted_cell_prevalence(const Vector& coeffs, const ModelSpec& spec,
                                WeekIndex w,
                                const std::array<std::int64_t, kNumCells>& counts) {
  std::int64_t total = 0;
  for (const std::int64_t n : counts) {
    if (n < 0)
      throw std::invalid_argument("weighted_cell_prevalence: negative cell count");
    total += n;
  }
  if (total == 0)
    throw std::invalid_argument("weighted_cell_prevalence: all cell counts zero");

  double acc = 0.0;
  for (int j = 0; j < kNumCells; ++j) {
    const std::int64_t n = counts[static_cast<std::size_t>(j)];
    if (n == 0) continue;
    // Exact IEEE quotient: bit-stable under integer scaling of all counts.
    const double weight = static_cast<double>(n) / static_cast<double>(total);
    const double eta = linear_predictor_constrained(coeffs, covariates_at(j), w, spec);
    acc += weight * true_prevalence(eta);
  }
  return acc;
}

Vector poststrat_draws(const Draws& draws, const ModelSpec& spec, WeekIndex w,
                       const std::array<std::int64_t, kNumCells>& counts) {
  const ParamLayout layout = ParamLayout::from_spec(spec);
  if (draws.dim() != layout.dim)
    throw std::invalid_argument("poststrat_draws: draws do not match model spec");
  if (w.value < 0 || w.value >= spec.n_weeks)
    throw std::out_of_range("poststrat_draws: week outside fitted window");

  Vector out(draws.n_draws() * draws.n_chains());
  Eigen::Index row = 0;
  for (const Matrix& chain : draws.chains)
    for (Eigen::Index d = 0; d < chain.rows(); ++d, ++row)
      out[row] = weighted_cell_prevalence(chain.row(d).transpose(), spec, w, counts);
  return out;
}

DistSummary poststratify_week(const Draws& draws, const PoststratTable& table,
                              WeekIndex w, const ModelSpec& spec) {
  return summarize(poststrat_draws(draws, spec, w, table.counts()));
}

PrevalenceSeries weekly_series(const Draws& draws, const PoststratTable& table,
                               const ModelSpec& spec, AssayKind assay) {
  PrevalenceSeries series;
  series.population = table.label();
  series.assay = assay;
  series.weeks.reserve(static_cast<std::size_t>(spec.n_weeks));
  for (int w = 0; w < spec.n_weeks; ++w)
    series.weeks.push_back(poststratify_week(draws, table, WeekIndex{w}, spec));
  return series;
}

SubgroupTable subgroup_estimates(const Draws& draws, const PoststratTable& table,
                                 WeekIndex w, const ModelSpec& spec,
                                 const std::vector<Margin>& margins) {
  SubgroupTable out;
  out.week = w;
  out.table_total = table.total();

  auto add_row = [&](Margin margin, const std::string& level, int level_index) {
    const auto masked = margin_level_counts(table.counts(), margin, level_index);
    SubgroupRow row;
    row.margin = margin;
    row.level = level;
    for (const std::int64_t n : masked) row.level_total += n;
    if (row.level_total == 0) {
      row.empty = true;
      row.estimate = nan_summary();
    } else {
      row.estimate = summarize(poststrat_draws(draws, spec, w, masked));
    }
    out.rows.push_back(std::move(row));
  };

  for (const Margin m : margins) {
    switch (m) {
      case Margin::Overall:
        add_row(m, "overall", 0);
        break;
      case Margin::Sex:
        for (int i = 0; i < kNumSex; ++i)
          add_row(m, std::string(to_token(static_cast<Sex>(i))), i);
        break;
      case Margin::Race:
        for (int i = 0; i < kNumRace; ++i)
          add_row(m, std::string(to_token(static_cast<Race>(i))), i);
        break;
      case Margin::Age:
        for (int i = 0; i < kNumAge; ++i)
          add_row(m, std::string(to_token(static_cast<AgeGroup>(i))), i);
        break;
    }
  }
  return out;
}

ImmunityDecomposition decompose_immunity(const Vector& total_prev_draws,
                                         double vaccination_rate) {
  if (!(vaccination_rate >= 0.0 && vaccination_rate <= 1.0))
    throw std::invalid_argument("decompose_immunity: vaccination rate outside [0, 1]");

  ImmunityDecomposition out;
  out.vaccination_rate = vaccination_rate;
  out.total_draws = static_cast<int>(total_prev_draws.size());

  Vector natural(total_prev_draws.size());
  for (Eigen::Index i = 0; i < total_prev_draws.size(); ++i) {
    const double diff = total_prev_draws[i] - vaccination_rate;
    // Clamped means the rate met or exceeded the draw's total prevalence.
    if (diff <= 0.0) {
      natural[i] = 0.0;
      ++out.clamped_draws;
    } else {
      natural[i] = diff;
    }
  }
  out.natural_lower_bound = summarize(natural);
  return out;
}

}  // namespace seromrp
