#include "seromrp/domain.hpp"

#include <charconv>
#include <stdexcept>

namespace seromrp {

int cell_index(const Covariates& c) {
  return ((static_cast<int>(c.sex) * kNumAge + static_cast<int>(c.age)) * kNumRace +
          static_cast<int>(c.race)) *
             kNumCounty +
         static_cast<int>(c.county);
}

Covariates covariates_at(int index) {
  if (index < 0 || index >= kNumCells)
    throw std::out_of_range("covariates_at: cell index outside [0, 60)");
  Covariates c;
  c.county = static_cast<County>(index % kNumCounty);
  index /= kNumCounty;
  c.race = static_cast<Race>(index % kNumRace);
  index /= kNumRace;
  c.age = static_cast<AgeGroup>(index % kNumAge);
  index /= kNumAge;
  c.sex = static_cast<Sex>(index);
  return c;
}

Date make_date(int year, unsigned month, unsigned day) {
  using namespace std::chrono;
  const year_month_day d = std::chrono::year{year} / month / day;
  if (!d.ok()) throw std::invalid_argument("make_date: invalid calendar date");
  return d;
}

std::optional<Date> parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0, d = 0;
  auto num = [](std::string_view s, auto& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
  };
  if (!num(text.substr(0, 4), y) || !num(text.substr(5, 2), m) || !num(text.substr(8, 2), d))
    return std::nullopt;
  const Date date = std::chrono::year{y} / m / d;
  if (!date.ok()) return std::nullopt;
  return date;
}

std::string format_date(const Date& d) {
  char buf[16];
  const int y = static_cast<int>(d.year());
  const unsigned m = static_cast<unsigned>(d.month());
  const unsigned dd = static_cast<unsigned>(d.day());
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", y, m, dd);
  return buf;
}

WeekIndex week_of(const Date& date, const Date& anchor) {
  using std::chrono::sys_days;
  const auto days = (sys_days{date} - sys_days{anchor}).count();
  if (days < 0)
    throw std::invalid_argument("week_of: date " + format_date(date) +
                                " precedes anchor " + format_date(anchor));
  return WeekIndex{static_cast<std::int32_t>(days / 7)};
}

PoststratTable::PoststratTable(PopulationLabel label,
                               std::span<const PoststratCell> cells)
    : label_(label) {
  std::array<bool, kNumCells> seen{};
  for (const PoststratCell& cell : cells) {
    if (cell.count < 0)
      throw std::invalid_argument("poststrat cell " + describe(cell.covariates) +
                                  " has negative count");
    const int j = cell_index(cell.covariates);
    if (seen[static_cast<std::size_t>(j)])
      throw std::invalid_argument("duplicate poststrat cell " + describe(cell.covariates));
    seen[static_cast<std::size_t>(j)] = true;
    counts_[static_cast<std::size_t>(j)] = cell.count;
  }
  for (int j = 0; j < kNumCells; ++j) {
    if (!seen[static_cast<std::size_t>(j)])
      throw std::invalid_argument("missing poststrat cell " + describe(covariates_at(j)));
  }
  for (const std::int64_t n : counts_) total_ += n;
  if (total_ <= 0) throw std::invalid_argument("poststrat table has zero total count");
}

PoststratTable::PoststratTable(PopulationLabel label,
                               std::array<std::int64_t, kNumCells> counts)
    : label_(label), counts_(counts) {
  for (int j = 0; j < kNumCells; ++j) {
    if (counts_[static_cast<std::size_t>(j)] < 0)
      throw std::invalid_argument("poststrat cell " + describe(covariates_at(j)) +
                                  " has negative count");
    total_ += counts_[static_cast<std::size_t>(j)];
  }
  if (total_ <= 0) throw std::invalid_argument("poststrat table has zero total count");
}

void validate_prior_study(const PriorStudy& s) {
  if (s.positives < 0 || s.total < 0)
    throw std::invalid_argument("prior study has negative counts");
  if (s.positives > s.total)
    throw std::invalid_argument("prior study has positives > total");
}

namespace {
constexpr std::string_view kSexTokens[] = {"female", "male"};
constexpr std::string_view kAgeTokens[] = {"a0_17", "a18_34", "a35_64", "a65_74", "a75plus"};
constexpr std::string_view kRaceTokens[] = {"black", "white", "other"};
constexpr std::string_view kCountyTokens[] = {"lake", "porter"};
constexpr std::string_view kAssayTokens[] = {"pcr", "igg_n", "igg_ns"};
constexpr std::string_view kPopulationTokens[] = {"hospital", "community"};

template <typename E, std::size_t N>
std::optional<E> parse_token(const std::string_view (&table)[N], std::string_view token) {
  for (std::size_t i = 0; i < N; ++i)
    if (table[i] == token) return static_cast<E>(i);
  return std::nullopt;
}
}  // namespace

std::string_view to_token(Sex v) { return kSexTokens[static_cast<int>(v)]; }
std::string_view to_token(AgeGroup v) { return kAgeTokens[static_cast<int>(v)]; }
std::string_view to_token(Race v) { return kRaceTokens[static_cast<int>(v)]; }
std::string_view to_token(County v) { return kCountyTokens[static_cast<int>(v)]; }
std::string_view to_token(AssayKind v) { return kAssayTokens[static_cast<int>(v)]; }
std::string_view to_token(PopulationLabel v) { return kPopulationTokens[static_cast<int>(v)]; }

std::optional<Sex> parse_sex(std::string_view t) { return parse_token<Sex>(kSexTokens, t); }
std::optional<AgeGroup> parse_age_group(std::string_view t) {
  return parse_token<AgeGroup>(kAgeTokens, t);
}
std::optional<Race> parse_race(std::string_view t) { return parse_token<Race>(kRaceTokens, t); }
std::optional<County> parse_county(std::string_view t) {
  return parse_token<County>(kCountyTokens, t);
}
std::optional<AssayKind> parse_assay(std::string_view t) {
  return parse_token<AssayKind>(kAssayTokens, t);
}
std::optional<PopulationLabel> parse_population(std::string_view t) {
  return parse_token<PopulationLabel>(kPopulationTokens, t);
}

std::string describe(const Covariates& c) {
  std::string out;
  out += to_token(c.sex);
  out += '/';
  out += to_token(c.age);
  out += '/';
  out += to_token(c.race);
  out += '/';
  out += to_token(c.county);
  return out;
}

}  // namespace seromrp
