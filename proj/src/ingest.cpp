#include "seromrp/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include "json.hpp"

namespace seromrp {

namespace {

using nlohmann::json;

constexpr std::string_view kRecordsHeader = "date,sex,age_group,race,county,assay,result";
constexpr std::string_view kPoststratHeader = "sex,age_group,race,county,count";
constexpr std::string_view kVaccinationHeader = "margin,level,rate";
constexpr std::string_view kSeriesHeader =
    "week,population,assay,mean,sd,q025,q25,q50,q75,q975";
constexpr std::string_view kSubgroupsHeader =
    "week,margin,level,count,empty,mean,sd,q025,q25,q50,q75,q975,"
    "vaccination_rate,natural_mean,natural_sd,clamped_draws";
constexpr std::string_view kManifestFormat = "seromrp-fit-v1";

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

void expect_header(std::ifstream& in, std::string_view expected,
                   const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error(path.string() + ": empty file, expected header '" +
                             std::string(expected) + "'");
  if (strip_cr(line) != expected)
    throw std::runtime_error(path.string() + ": bad header '" + strip_cr(line) +
                             "', expected '" + std::string(expected) + "'");
}

std::optional<std::int64_t> parse_int64(std::string_view text) {
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::optional<double> parse_double(std::string_view text) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::optional<Margin> margin_from_token(std::string_view token) {
  if (token == "overall") return Margin::Overall;
  if (token == "sex") return Margin::Sex;
  if (token == "race") return Margin::Race;
  if (token == "age") return Margin::Age;
  return std::nullopt;
}

// Infers the margin a level token belongs to ("female" -> sex, ...).
std::optional<Margin> margin_of_level(std::string_view level) {
  if (level == "overall") return Margin::Overall;
  if (parse_sex(level)) return Margin::Sex;
  if (parse_race(level)) return Margin::Race;
  if (parse_age_group(level)) return Margin::Age;
  return std::nullopt;
}

bool level_in_margin(Margin margin, std::string_view level) {
  const auto inferred = margin_of_level(level);
  return inferred && *inferred == margin;
}

json misclass_to_json(const MisclassPriorData& data) {
  json j;
  j["sensitivity"] = json::array();
  for (const PriorStudy& s : data.sensitivity_studies)
    j["sensitivity"].push_back({s.positives, s.total});
  j["specificity"] = json::array();
  for (const PriorStudy& s : data.specificity_studies)
    j["specificity"].push_back({s.positives, s.total});
  return j;
}

std::vector<PriorStudy> studies_from_json(const json& arr, const std::string& what) {
  if (!arr.is_array()) throw std::runtime_error("priors: '" + what + "' must be an array");
  std::vector<PriorStudy> out;
  out.reserve(arr.size());
  for (const json& entry : arr) {
    if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number_integer() ||
        !entry[1].is_number_integer())
      throw std::runtime_error("priors: each '" + what +
                               "' entry must be [positives, total]");
    PriorStudy s{entry[0].get<std::int64_t>(), entry[1].get<std::int64_t>()};
    validate_prior_study(s);
    out.push_back(s);
  }
  return out;
}

json model_to_json(const ModelSpec& spec) {
  json j;
  j["kind"] = spec.kind == ModelKind::PcrEq1 ? "pcr_eq1" : "igg_eq2";
  j["n_weeks"] = spec.n_weeks;
  j["prior_scale_demo"] = spec.prior_scale_demo;
  j["prior_scale_time"] = spec.prior_scale_time;
  j["prior_scale_age_time"] = spec.prior_scale_age_time;
  if (const auto* fixed = std::get_if<FixedMisclass>(&spec.misclass)) {
    j["misclass"] = {{"type", "fixed"}, {"delta", fixed->delta}, {"gamma", fixed->gamma}};
  } else {
    json m = misclass_to_json(std::get<EstimatedMisclass>(spec.misclass).priors);
    m["type"] = "estimated";
    j["misclass"] = std::move(m);
  }
  return j;
}

ModelSpec model_from_json(const json& j) {
  ModelSpec spec;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "pcr_eq1") {
    spec.kind = ModelKind::PcrEq1;
  } else if (kind == "igg_eq2") {
    spec.kind = ModelKind::IggEq2;
  } else {
    throw std::runtime_error("manifest: unknown model kind '" + kind + "'");
  }
  spec.n_weeks = j.at("n_weeks").get<int>();
  spec.prior_scale_demo = j.at("prior_scale_demo").get<double>();
  spec.prior_scale_time = j.at("prior_scale_time").get<double>();
  spec.prior_scale_age_time = j.at("prior_scale_age_time").get<double>();
  const json& m = j.at("misclass");
  const std::string type = m.at("type").get<std::string>();
  if (type == "fixed") {
    spec.misclass =
        FixedMisclass{m.at("delta").get<double>(), m.at("gamma").get<double>()};
  } else if (type == "estimated") {
    MisclassPriorData priors;
    priors.sensitivity_studies = studies_from_json(m.at("sensitivity"), "sensitivity");
    priors.specificity_studies = studies_from_json(m.at("specificity"), "specificity");
    spec.misclass = EstimatedMisclass{std::move(priors)};
  } else {
    throw std::runtime_error("manifest: unknown misclass type '" + type + "'");
  }
  spec.validate();
  return spec;
}

double json_double(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 14695981039346656037ull;
  for (const char c : text) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 1099511628211ull;
  }
  return hash;
}

DistSummary summary_from_fields(const std::vector<std::optional<double>>& v) {
  return DistSummary{*v[0], *v[1], *v[2], *v[3], *v[4], *v[5], *v[6]};
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

RecordParseResult read_test_records(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  expect_header(in, kRecordsHeader, path);

  RecordParseResult out;
  std::string raw;
  int line_no = 1;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = strip_cr(raw);
    auto reject = [&](const std::string& message) {
      out.issues.push_back(ParseIssue{line_no, message});
    };
    if (line.empty()) {
      reject("empty line");
      continue;
    }
    const std::vector<std::string> f = split_csv(line);
    if (f.size() != 7) {
      reject("expected 7 fields, got " + std::to_string(f.size()));
      continue;
    }
    const std::optional<Date> date = parse_date(f[0]);
    if (!date) {
      reject("malformed date '" + f[0] + "' (expected YYYY-MM-DD)");
      continue;
    }
    const std::optional<Sex> sex = parse_sex(f[1]);
    if (!sex) {
      reject("unknown sex '" + f[1] + "'");
      continue;
    }
    const std::optional<AgeGroup> age = parse_age_group(f[2]);
    if (!age) {
      reject("unknown age_group '" + f[2] + "'");
      continue;
    }
    const std::optional<Race> race = parse_race(f[3]);
    if (!race) {
      reject("unknown race '" + f[3] + "'");
      continue;
    }
    const std::optional<County> county = parse_county(f[4]);
    if (!county) {
      if (f[4] == "cook") {
        reject("county 'cook' is not modeled; map South Cook County records to "
               "'lake' before ingestion");
      } else {
        reject("unknown county '" + f[4] + "'");
      }
      continue;
    }
    const std::optional<AssayKind> assay = parse_assay(f[5]);
    if (!assay) {
      reject("unknown assay '" + f[5] + "'");
      continue;
    }
    if (f[6] != "0" && f[6] != "1") {
      reject("result must be 0 or 1, got '" + f[6] + "'");
      continue;
    }
    TestRecord rec;
    rec.date = *date;
    rec.covariates = Covariates{*sex, *age, *race, *county};
    rec.assay = *assay;
    rec.result = f[6] == "1" ? 1 : 0;
    out.records.push_back(rec);
  }
  return out;
}

void write_test_records(std::span<const TestRecord> records,
                        const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << kRecordsHeader << '\n';
  for (const TestRecord& r : records) {
    out << format_date(r.date) << ',' << to_token(r.covariates.sex) << ','
        << to_token(r.covariates.age) << ',' << to_token(r.covariates.race) << ','
        << to_token(r.covariates.county) << ',' << to_token(r.assay) << ','
        << static_cast<int>(r.result) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

PoststratTable read_poststrat(const std::filesystem::path& path, PopulationLabel label) {
  std::ifstream in = open_input(path);
  expect_header(in, kPoststratHeader, path);

  std::vector<PoststratCell> cells;
  cells.reserve(kNumCells);
  std::string raw;
  int line_no = 1;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = strip_cr(raw);
    if (line.empty()) continue;
    auto fail = [&](const std::string& message) -> std::runtime_error {
      return std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " +
                                message);
    };
    const std::vector<std::string> f = split_csv(line);
    if (f.size() != 5) throw fail("expected 5 fields, got " + std::to_string(f.size()));
    const auto sex = parse_sex(f[0]);
    const auto age = parse_age_group(f[1]);
    const auto race = parse_race(f[2]);
    const auto county = parse_county(f[3]);
    if (!sex || !age || !race || !county)
      throw fail("unknown category in row '" + line + "'");
    const auto count = parse_int64(f[4]);
    if (!count) throw fail("malformed count '" + f[4] + "'");
    cells.push_back(PoststratCell{Covariates{*sex, *age, *race, *county}, *count});
  }
  try {
    return PoststratTable(label, cells);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_poststrat(const PoststratTable& table, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << kPoststratHeader << '\n';
  for (int j = 0; j < kNumCells; ++j) {
    const Covariates c = covariates_at(j);
    out << to_token(c.sex) << ',' << to_token(c.age) << ',' << to_token(c.race) << ','
        << to_token(c.county) << ',' << table.count(j) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

MisclassPriorData read_misclass_priors(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": invalid JSON: " + e.what());
  }
  if (!j.is_object() || !j.contains("sensitivity") || !j.contains("specificity"))
    throw std::runtime_error(path.string() +
                             ": expected {\"sensitivity\": [...], \"specificity\": [...]}");
  MisclassPriorData data;
  data.sensitivity_studies = studies_from_json(j["sensitivity"], "sensitivity");
  data.specificity_studies = studies_from_json(j["specificity"], "specificity");
  return data;
}

void write_misclass_priors(const MisclassPriorData& data,
                           const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << misclass_to_json(data).dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

MisclassPriorData default_pcr_misclass_priors() {
  MisclassPriorData data;
  data.sensitivity_studies = {{70, 100}, {78, 85}, {27, 37}, {25, 35}};
  data.specificity_studies = {{0, 0},       {368, 371}, {30, 30},   {70, 70},
                              {1102, 1102}, {300, 300}, {311, 311}, {500, 500},
                              {198, 200},   {99, 99},   {29, 31},   {146, 150},
                              {105, 108},   {50, 52}};
  return data;
}

std::vector<VaccinationRate> read_vaccination(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  expect_header(in, kVaccinationHeader, path);

  std::vector<VaccinationRate> out;
  std::string raw;
  int line_no = 1;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = strip_cr(raw);
    if (line.empty()) continue;
    auto fail = [&](const std::string& message) -> std::runtime_error {
      return std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " +
                                message);
    };
    const std::vector<std::string> f = split_csv(line);
    if (f.size() != 3) throw fail("expected 3 fields, got " + std::to_string(f.size()));
    const auto margin = margin_from_token(f[0]);
    if (!margin) throw fail("unknown margin '" + f[0] + "'");
    if (!level_in_margin(*margin, f[1]))
      throw fail("level '" + f[1] + "' does not belong to margin '" + f[0] + "'");
    const auto rate = parse_double(f[2]);
    if (!rate || !(*rate >= 0.0 && *rate <= 1.0))
      throw fail("rate '" + f[2] + "' must be a number in [0, 1]");
    out.push_back(VaccinationRate{*margin, f[1], *rate});
  }
  return out;
}

std::vector<VaccinationRate> parse_vaccination_inline(const std::string& text) {
  std::vector<VaccinationRate> out;
  for (const std::string& part : split_csv(text)) {
    const std::size_t eq = part.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("vaccination: expected level=rate, got '" + part + "'");
    const std::string level = part.substr(0, eq);
    const std::optional<Margin> margin = margin_of_level(level);
    if (!margin)
      throw std::runtime_error("vaccination: unknown level token '" + level + "'");
    const auto rate = parse_double(std::string_view(part).substr(eq + 1));
    if (!rate || !(*rate >= 0.0 && *rate <= 1.0))
      throw std::runtime_error("vaccination: rate for '" + level +
                               "' must be a number in [0, 1]");
    out.push_back(VaccinationRate{*margin, level, *rate});
  }
  return out;
}

void write_series(const PrevalenceSeries& series, const std::filesystem::path& path,
                  ReportFormat format) {
  std::ofstream out = open_output(path);
  if (format == ReportFormat::Csv) {
    out << kSeriesHeader << '\n';
    for (std::size_t w = 0; w < series.weeks.size(); ++w) {
      const DistSummary& s = series.weeks[w];
      out << w << ',' << to_token(series.population) << ',' << to_token(series.assay)
          << ',' << format_double(s.mean) << ',' << format_double(s.sd) << ','
          << format_double(s.q025) << ',' << format_double(s.q25) << ','
          << format_double(s.q50) << ',' << format_double(s.q75) << ','
          << format_double(s.q975) << '\n';
    }
  } else {
    json j;
    j["population"] = std::string(to_token(series.population));
    j["assay"] = std::string(to_token(series.assay));
    j["weeks"] = json::array();
    for (std::size_t w = 0; w < series.weeks.size(); ++w) {
      const DistSummary& s = series.weeks[w];
      j["weeks"].push_back({{"week", w},
                            {"mean", s.mean},
                            {"sd", s.sd},
                            {"q025", s.q025},
                            {"q25", s.q25},
                            {"q50", s.q50},
                            {"q75", s.q75},
                            {"q975", s.q975}});
    }
    out << j.dump(2) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

PrevalenceSeries read_series(const std::filesystem::path& path, ReportFormat format) {
  PrevalenceSeries series;
  if (format == ReportFormat::Csv) {
    std::ifstream in = open_input(path);
    expect_header(in, kSeriesHeader, path);
    std::string raw;
    int line_no = 1;
    while (std::getline(in, raw)) {
      ++line_no;
      const std::string line = strip_cr(raw);
      if (line.empty()) continue;
      auto fail = [&](const std::string& message) -> std::runtime_error {
        return std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " +
                                  message);
      };
      const std::vector<std::string> f = split_csv(line);
      if (f.size() != 10)
        throw fail("expected 10 fields, got " + std::to_string(f.size()));
      const auto week = parse_int64(f[0]);
      if (!week || *week != static_cast<std::int64_t>(series.weeks.size()))
        throw fail("weeks must be contiguous from 0");
      const auto population = parse_population(f[1]);
      const auto assay = parse_assay(f[2]);
      if (!population || !assay) throw fail("unknown population/assay token");
      series.population = *population;
      series.assay = *assay;
      std::vector<std::optional<double>> v;
      for (int i = 3; i < 10; ++i) v.push_back(parse_double(f[static_cast<std::size_t>(i)]));
      if (std::any_of(v.begin(), v.end(), [](const auto& d) { return !d; }))
        throw fail("malformed numeric field");
      series.weeks.push_back(summary_from_fields(v));
    }
  } else {
    std::ifstream in = open_input(path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(path.string() + ": invalid JSON: " + e.what());
    }
    const auto population = parse_population(j.at("population").get<std::string>());
    const auto assay = parse_assay(j.at("assay").get<std::string>());
    if (!population || !assay)
      throw std::runtime_error(path.string() + ": unknown population/assay token");
    series.population = *population;
    series.assay = *assay;
    for (const json& wk : j.at("weeks")) {
      DistSummary s;
      s.mean = json_double(wk.at("mean"));
      s.sd = json_double(wk.at("sd"));
      s.q025 = json_double(wk.at("q025"));
      s.q25 = json_double(wk.at("q25"));
      s.q50 = json_double(wk.at("q50"));
      s.q75 = json_double(wk.at("q75"));
      s.q975 = json_double(wk.at("q975"));
      series.weeks.push_back(s);
    }
  }
  return series;
}

void write_subgroups(const SubgroupTable& table, const std::filesystem::path& path,
                     ReportFormat format) {
  std::ofstream out = open_output(path);
  if (format == ReportFormat::Csv) {
    out << kSubgroupsHeader << '\n';
    for (const SubgroupRow& row : table.rows) {
      out << table.week.value << ',' << margin_name(row.margin) << ',' << row.level
          << ',' << row.level_total << ',' << (row.empty ? 1 : 0) << ',';
      if (row.empty) {
        out << ",,,,,,";
      } else {
        const DistSummary& s = row.estimate;
        out << format_double(s.mean) << ',' << format_double(s.sd) << ','
            << format_double(s.q025) << ',' << format_double(s.q25) << ','
            << format_double(s.q50) << ',' << format_double(s.q75) << ','
            << format_double(s.q975);
      }
      out << ',';
      if (row.immunity) {
        out << format_double(row.immunity->vaccination_rate) << ','
            << format_double(row.immunity->natural_lower_bound.mean) << ','
            << format_double(row.immunity->natural_lower_bound.sd) << ','
            << row.immunity->clamped_draws;
      } else {
        out << ",,,";
      }
      out << '\n';
    }
  } else {
    json j;
    j["week"] = table.week.value;
    j["table_total"] = table.table_total;
    j["rows"] = json::array();
    for (const SubgroupRow& row : table.rows) {
      json r;
      r["margin"] = margin_name(row.margin);
      r["level"] = row.level;
      r["count"] = row.level_total;
      r["empty"] = row.empty;
      if (!row.empty) {
        r["estimate"] = {{"mean", row.estimate.mean},   {"sd", row.estimate.sd},
                         {"q025", row.estimate.q025},   {"q25", row.estimate.q25},
                         {"q50", row.estimate.q50},     {"q75", row.estimate.q75},
                         {"q975", row.estimate.q975}};
      }
      if (row.immunity) {
        r["vaccination_rate"] = row.immunity->vaccination_rate;
        r["natural_lower_bound"] = {
            {"mean", row.immunity->natural_lower_bound.mean},
            {"sd", row.immunity->natural_lower_bound.sd},
            {"clamped_draws", row.immunity->clamped_draws},
            {"total_draws", row.immunity->total_draws}};
      }
      j["rows"].push_back(std::move(r));
    }
    out << j.dump(2) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string spec_hash(const ModelSpec& spec) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(model_to_json(spec).dump())));
  return std::string("fnv1a64:") + buf;
}

void write_fit_dir(const FitArtifacts& fit, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  json manifest;
  manifest["format"] = std::string(kManifestFormat);
  manifest["model"] = model_to_json(fit.spec);
  manifest["spec_hash"] = spec_hash(fit.spec);
  manifest["anchor"] = format_date(fit.anchor);
  manifest["assay"] = std::string(to_token(fit.assay));
  manifest["sampler"] = {{"chains", fit.sampler.chains},
                         {"warmup", fit.sampler.warmup},
                         {"draws", fit.sampler.draws},
                         {"seed", fit.sampler.seed},
                         {"target_accept", fit.sampler.target_accept},
                         {"max_leapfrog_steps", fit.sampler.max_leapfrog_steps},
                         {"path_length", fit.sampler.path_length},
                         {"init_radius", fit.sampler.init_radius}};
  json diag;
  diag["divergences"] = fit.diag.divergences;
  diag["parameters"] = json::array();
  for (std::size_t i = 0; i < fit.diag.param_names.size(); ++i) {
    diag["parameters"].push_back(
        {{"name", fit.diag.param_names[i]},
         {"rhat", fit.diag.rhat[static_cast<Eigen::Index>(i)]},
         {"ess_bulk", fit.diag.ess_bulk[static_cast<Eigen::Index>(i)]}});
  }
  manifest["diagnostics"] = std::move(diag);
  manifest["chains"] = json::array();
  for (const ChainStats& s : fit.draws.stats) {
    manifest["chains"].push_back({{"accept_rate", s.accept_rate},
                                  {"divergences", s.divergences},
                                  {"step_size", s.step_size}});
  }

  {
    std::ofstream out = open_output(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + (dir / "manifest.json").string());
  }

  std::ofstream out = open_output(dir / "draws.csv");
  out << "chain,draw";
  for (const std::string& name : fit.draws.param_names) out << ',' << name;
  out << '\n';
  for (int c = 0; c < fit.draws.n_chains(); ++c) {
    const Matrix& m = fit.draws.chains[static_cast<std::size_t>(c)];
    for (Eigen::Index d = 0; d < m.rows(); ++d) {
      out << c << ',' << d;
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << format_double(m(d, j));
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + (dir / "draws.csv").string());
}

FitArtifacts read_fit_dir(const std::filesystem::path& dir) {
  json manifest;
  {
    std::ifstream in = open_input(dir / "manifest.json");
    try {
      manifest = json::parse(in);
    } catch (const json::parse_error& e) {
      throw std::runtime_error((dir / "manifest.json").string() + ": invalid JSON: " +
                               e.what());
    }
  }
  if (manifest.value("format", "") != kManifestFormat)
    throw std::runtime_error(dir.string() + ": unrecognized fit manifest format");

  FitArtifacts fit;
  fit.spec = model_from_json(manifest.at("model"));
  if (manifest.at("spec_hash").get<std::string>() != spec_hash(fit.spec))
    throw std::runtime_error(dir.string() +
                             ": manifest spec hash does not match its model block");
  const auto anchor = parse_date(manifest.at("anchor").get<std::string>());
  if (!anchor) throw std::runtime_error(dir.string() + ": malformed anchor date");
  fit.anchor = *anchor;
  const auto assay = parse_assay(manifest.at("assay").get<std::string>());
  if (!assay) throw std::runtime_error(dir.string() + ": unknown assay token");
  fit.assay = *assay;

  const json& sampler = manifest.at("sampler");
  fit.sampler.chains = sampler.at("chains").get<int>();
  fit.sampler.warmup = sampler.at("warmup").get<int>();
  fit.sampler.draws = sampler.at("draws").get<int>();
  fit.sampler.seed = sampler.at("seed").get<std::uint64_t>();
  fit.sampler.target_accept = sampler.at("target_accept").get<double>();
  fit.sampler.max_leapfrog_steps = sampler.at("max_leapfrog_steps").get<int>();
  fit.sampler.path_length = sampler.at("path_length").get<double>();
  fit.sampler.init_radius = sampler.at("init_radius").get<double>();

  const json& diag = manifest.at("diagnostics");
  fit.diag.divergences = diag.at("divergences").get<int>();
  const json& params = diag.at("parameters");
  fit.diag.rhat.resize(static_cast<Eigen::Index>(params.size()));
  fit.diag.ess_bulk.resize(static_cast<Eigen::Index>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    fit.diag.param_names.push_back(params[i].at("name").get<std::string>());
    fit.diag.rhat[static_cast<Eigen::Index>(i)] = json_double(params[i].at("rhat"));
    fit.diag.ess_bulk[static_cast<Eigen::Index>(i)] =
        json_double(params[i].at("ess_bulk"));
  }
  for (const json& c : manifest.at("chains")) {
    fit.draws.stats.push_back(ChainStats{c.at("accept_rate").get<double>(),
                                         c.at("divergences").get<int>(),
                                         c.at("step_size").get<double>()});
  }

  // draws.csv: chain,draw,<param names>; rows chain-major with contiguous
  // 0-based draw indices.
  std::ifstream in = open_input(dir / "draws.csv");
  std::string raw;
  if (!std::getline(in, raw))
    throw std::runtime_error((dir / "draws.csv").string() + ": empty file");
  const std::vector<std::string> header = split_csv(strip_cr(raw));
  if (header.size() < 3 || header[0] != "chain" || header[1] != "draw")
    throw std::runtime_error((dir / "draws.csv").string() + ": bad header");
  fit.draws.param_names.assign(header.begin() + 2, header.end());
  const std::size_t dim = fit.draws.param_names.size();

  std::vector<std::vector<double>> flat;  // per chain, row-major values
  int line_no = 1;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = strip_cr(raw);
    if (line.empty()) continue;
    auto fail = [&](const std::string& message) -> std::runtime_error {
      return std::runtime_error((dir / "draws.csv").string() + ":" +
                                std::to_string(line_no) + ": " + message);
    };
    const std::vector<std::string> f = split_csv(line);
    if (f.size() != dim + 2)
      throw fail("expected " + std::to_string(dim + 2) + " fields");
    const auto chain = parse_int64(f[0]);
    if (!chain || *chain < 0 || *chain > static_cast<std::int64_t>(flat.size()))
      throw fail("chain indices must be contiguous from 0");
    if (*chain == static_cast<std::int64_t>(flat.size())) flat.emplace_back();
    auto& dest = flat[static_cast<std::size_t>(*chain)];
    const auto draw = parse_int64(f[1]);
    if (!draw || *draw != static_cast<std::int64_t>(dest.size() / dim))
      throw fail("draw indices must be contiguous from 0");
    for (std::size_t j = 0; j < dim; ++j) {
      const auto v = parse_double(f[j + 2]);
      if (!v) throw fail("malformed value '" + f[j + 2] + "'");
      dest.push_back(*v);
    }
  }
  if (flat.empty())
    throw std::runtime_error((dir / "draws.csv").string() + ": no draws");
  const std::size_t rows = flat.front().size() / dim;
  for (const auto& chain : flat)
    if (chain.size() != rows * dim)
      throw std::runtime_error((dir / "draws.csv").string() +
                               ": chains have unequal draw counts");
  for (const auto& chain : flat) {
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    for (std::size_t d = 0; d < rows; ++d)
      for (std::size_t j = 0; j < dim; ++j)
        m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) =
            chain[d * dim + j];
    fit.draws.chains.push_back(std::move(m));
  }
  if (fit.draws.stats.size() != fit.draws.chains.size())
    throw std::runtime_error(dir.string() +
                             ": manifest chain stats do not match draws.csv chains");
  return fit;
}

}  // namespace seromrp
