#ifndef SEROMRP_DOMAIN_HPP
#define SEROMRP_DOMAIN_HPP

// Core vocabulary shared by every other module: demographic covariates, test
// records, poststratification cells, week indexing and assay prior data.
// All types here are immutable value types and safe to share across threads.

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace seromrp {

enum class Sex : std::uint8_t { Female = 0, Male = 1 };
enum class AgeGroup : std::uint8_t {
  A0_17 = 0,
  A18_34 = 1,
  A35_64 = 2,
  A65_74 = 3,
  A75plus = 4
};
enum class Race : std::uint8_t { Black = 0, White = 1, Other = 2 };
enum class County : std::uint8_t { Lake = 0, Porter = 1 };
enum class AssayKind : std::uint8_t { Pcr = 0, IggN = 1, IggNS = 2 };
enum class PopulationLabel : std::uint8_t { Hospital = 0, Community = 1 };

inline constexpr int kNumSex = 2;
inline constexpr int kNumAge = 5;
inline constexpr int kNumRace = 3;
inline constexpr int kNumCounty = 2;
inline constexpr int kNumCells = kNumSex * kNumAge * kNumRace * kNumCounty;

// One combination of the adjustment variables. The enumeration order that
// fixes cell indices is sex (slowest), then age, then race, then county
// (fastest); see cell_index / covariates_at.
struct Covariates {
  Sex sex = Sex::Female;
  AgeGroup age = AgeGroup::A0_17;
  Race race = Race::Black;
  County county = County::Lake;

  friend bool operator==(const Covariates&, const Covariates&) = default;
};

// Bijection between the 60 Covariates values and [0, 60).
int cell_index(const Covariates& c);
Covariates covariates_at(int index);

using Date = std::chrono::year_month_day;

Date make_date(int year, unsigned month, unsigned day);

// Strict ISO-8601 calendar date (YYYY-MM-DD). Returns nullopt on anything
// else, including out-of-range day-of-month.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(const Date& d);

// Records with this assay are only valid on/after the configured split date;
// this constant is the default when no split is configured.
inline const Date kDefaultIggSplitDate = make_date(2021, 2, 16);
inline const Date kDefaultPcrAnchorDate = make_date(2020, 5, 1);

// 0-based 7-day bin relative to an anchor date.
struct WeekIndex {
  std::int32_t value = 0;
  friend auto operator<=>(const WeekIndex&, const WeekIndex&) = default;
};

// floor((date - anchor) / 7 days). Throws std::invalid_argument when date
// precedes the anchor.
WeekIndex week_of(const Date& date, const Date& anchor);

struct TestRecord {
  Date date{};
  Covariates covariates{};
  AssayKind assay = AssayKind::Pcr;
  std::uint8_t result = 0;  // 1 = positive
};

struct PoststratCell {
  Covariates covariates{};
  std::int64_t count = 0;
};

// Population counts for all 60 cells of one target population. Construction
// enforces that every cell appears exactly once and that the total is
// positive; duplicates and missing cells are hard errors.
class PoststratTable {
 public:
  PoststratTable(PopulationLabel label, std::span<const PoststratCell> cells);
  // Counts already in cell-index order.
  PoststratTable(PopulationLabel label, std::array<std::int64_t, kNumCells> counts);

  PopulationLabel label() const { return label_; }
  std::int64_t count(int cell) const { return counts_[static_cast<std::size_t>(cell)]; }
  const std::array<std::int64_t, kNumCells>& counts() const { return counts_; }
  std::int64_t total() const { return total_; }

 private:
  PopulationLabel label_;
  std::array<std::int64_t, kNumCells> counts_{};
  std::int64_t total_ = 0;
};

// One previous assay-validation study: `positives` positive calls out of
// `total` tests on subjects of known status. 0/0 is allowed and contributes
// nothing to any likelihood.
struct PriorStudy {
  std::int64_t positives = 0;
  std::int64_t total = 0;
};

struct MisclassPriorData {
  std::vector<PriorStudy> sensitivity_studies;
  std::vector<PriorStudy> specificity_studies;
};

void validate_prior_study(const PriorStudy& s);

// Token tables used by the file formats; all labels are exact lowercase.
std::string_view to_token(Sex v);
std::string_view to_token(AgeGroup v);
std::string_view to_token(Race v);
std::string_view to_token(County v);
std::string_view to_token(AssayKind v);
std::string_view to_token(PopulationLabel v);

std::optional<Sex> parse_sex(std::string_view token);
std::optional<AgeGroup> parse_age_group(std::string_view token);
std::optional<Race> parse_race(std::string_view token);
std::optional<County> parse_county(std::string_view token);
std::optional<AssayKind> parse_assay(std::string_view token);
std::optional<PopulationLabel> parse_population(std::string_view token);

std::string describe(const Covariates& c);

}  // namespace seromrp

#endif
