#ifndef SEROMRP_INGEST_HPP
#define SEROMRP_INGEST_HPP

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seromrp/diagnostics.hpp"
#include "seromrp/domain.hpp"
#include "seromrp/model.hpp"
#include "seromrp/poststrat.hpp"
#include "seromrp/sampler.hpp"

// File formats (all CSV files use exact lowercase headers, UTF-8, LF):
//   records      date,sex,age_group,race,county,assay,result
//   poststrat    sex,age_group,race,county,count
//   vaccination  margin,level,rate
//   priors       JSON {"sensitivity":[[70,100],...],"specificity":[[0,0],...]}
// Doubles are written as shortest round-trip decimal strings, so write/read
// cycles are value-identical and byte-deterministic.
namespace seromrp {

enum class ReportFormat { Csv, Json };

struct ParseIssue {
  int line = 0;  // 1-based; 0 for file-level problems
  std::string message;
};

struct RecordParseResult {
  std::vector<TestRecord> records;
  std::vector<ParseIssue> issues;
};

// Strict row-by-row parse: every data line becomes exactly one record or one
// line-numbered issue; unknown labels are rejected, never coerced.  Throws
// std::runtime_error on unreadable files or a wrong header.
RecordParseResult read_test_records(const std::filesystem::path& path);
void write_test_records(std::span<const TestRecord> records,
                        const std::filesystem::path& path);

// Requires all 60 cells exactly once with nonnegative counts and a positive
// total; errors name the offending cell.
PoststratTable read_poststrat(const std::filesystem::path& path, PopulationLabel label);
void write_poststrat(const PoststratTable& table, const std::filesystem::path& path);

MisclassPriorData read_misclass_priors(const std::filesystem::path& path);
void write_misclass_priors(const MisclassPriorData& data,
                           const std::filesystem::path& path);

// The PCR assay validation studies shipped with the tool: 4 sensitivity
// studies (70/100, 78/85, 27/37, 25/35) and 14 specificity studies.
MisclassPriorData default_pcr_misclass_priors();

struct VaccinationRate {
  Margin margin = Margin::Overall;
  std::string level;  // "overall", "female", "a65_74", ...
  double rate = 0.0;
};

std::vector<VaccinationRate> read_vaccination(const std::filesystem::path& path);
// Inline form used by the CLI: "overall=0.45,female=0.5".  Margins are
// inferred from the level tokens.
std::vector<VaccinationRate> parse_vaccination_inline(const std::string& text);

void write_series(const PrevalenceSeries& series, const std::filesystem::path& path,
                  ReportFormat format);
PrevalenceSeries read_series(const std::filesystem::path& path, ReportFormat format);

void write_subgroups(const SubgroupTable& table, const std::filesystem::path& path,
                     ReportFormat format);

// --- Fit artifacts ---------------------------------------------------------
//
// A fit directory holds draws.csv (chain,draw,<parameter...>) and
// manifest.json (model spec + hash, sampler config, anchor, assay,
// diagnostics).  Reports are reproducible from the directory alone.

struct FitArtifacts {
  ModelSpec spec;
  SamplerConfig sampler;
  Date anchor{};
  AssayKind assay = AssayKind::Pcr;
  Draws draws;
  Diagnostics diag;
};

void write_fit_dir(const FitArtifacts& fit, const std::filesystem::path& dir);
FitArtifacts read_fit_dir(const std::filesystem::path& dir);

// FNV-1a hash of the canonical JSON encoding of a model spec; stored in the
// manifest so reports can detect mismatched draws/spec pairs.
std::string spec_hash(const ModelSpec& spec);

// Shortest round-trip decimal encoding of a double (to_chars).
std::string format_double(double v);

}  // namespace seromrp

#endif  // SEROMRP_INGEST_HPP
