// mrp_sero: estimate community test-positivity prevalence from demographically
// biased hospital testing streams.
//
//   simulate   generate a synthetic testing stream with known ground truth
//   fit        sample the posterior of the prevalence model from records
//   report     turn stored draws into weekly series and subgroup tables
//   diagnose   convergence summary of a stored fit
//
// Exit codes: 0 success; 1 statistical-quality failure (estimates are still
// written, but flagged); 2 usage or I/O failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "seromrp/diagnostics.hpp"
#include "seromrp/domain.hpp"
#include "seromrp/fit.hpp"
#include "seromrp/ingest.hpp"
#include "seromrp/model.hpp"
#include "seromrp/poststrat.hpp"
#include "seromrp/sampler.hpp"
#include "seromrp/simulate.hpp"
#include "seromrp/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace seromrp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitQuality = 1;
constexpr int kExitUsage = 2;

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("MRP_SERO_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n < 1) throw std::invalid_argument("non-positive");
      return n;
    } catch (const std::exception&) {
      throw std::runtime_error(std::string("MRP_SERO_THREADS must be a positive "
                                           "integer, got '") +
                               env + "'");
    }
  }
  return 0;
}

Date parse_date_flag(const std::string& text, const std::string& flag) {
  const auto date = parse_date(text);
  if (!date)
    throw std::runtime_error(flag + ": malformed date '" + text + "' (YYYY-MM-DD)");
  return *date;
}

// ---------------------------------------------------------------------------
// simulate

TruthConfig truth_from_json(const json& j) {
  TruthConfig cfg;
  if (j.contains("kind")) {
    const std::string kind = j["kind"].get<std::string>();
    if (kind == "pcr") {
      cfg.kind = ModelKind::PcrEq1;
    } else if (kind == "igg") {
      cfg.kind = ModelKind::IggEq2;
    } else {
      throw std::runtime_error("config: kind must be 'pcr' or 'igg', got '" + kind + "'");
    }
  }
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("n_weeks")) cfg.n_weeks = j["n_weeks"].get<int>();
  if (j.contains("tests_per_week")) cfg.tests_per_week = j["tests_per_week"].get<int>();
  if (j.contains("true_delta")) cfg.true_delta = j["true_delta"].get<double>();
  if (j.contains("true_gamma")) cfg.true_gamma = j["true_gamma"].get<double>();
  if (j.contains("anchor"))
    cfg.anchor = parse_date_flag(j["anchor"].get<std::string>(), "config anchor");
  if (j.contains("bias")) {
    const json& b = j["bias"];
    auto fill = [&](const char* key, auto& arr) {
      if (!b.contains(key)) return;
      const json& src = b[key];
      if (!src.is_array() || src.size() != arr.size())
        throw std::runtime_error(std::string("config: bias.") + key + " must have " +
                                 std::to_string(arr.size()) + " entries");
      for (std::size_t i = 0; i < arr.size(); ++i) arr[i] = src[i].get<double>();
    };
    fill("sex", cfg.bias.sex);
    fill("age", cfg.bias.age);
    fill("race", cfg.bias.race);
    fill("county", cfg.bias.county);
  }
  if (j.contains("true_params")) {
    const json& p = j["true_params"];
    if (!p.is_array()) throw std::runtime_error("config: true_params must be an array");
    Vector v(static_cast<Eigen::Index>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i)
      v[static_cast<Eigen::Index>(i)] = p[i].get<double>();
    cfg.true_params = std::move(v);
  }
  return cfg;
}

struct SimulateArgs {
  std::string config_path;
  std::string out_dir = "sim_out";
  std::uint64_t seed = 0;
  bool seed_given = false;
};

int run_simulate(const SimulateArgs& args) {
  TruthConfig cfg;
  bool config_has_seed = false;
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config: " + args.config_path);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(args.config_path + ": invalid JSON: " + e.what());
    }
    cfg = truth_from_json(j);
    config_has_seed = j.contains("seed");
  }
  if (args.seed_given) {
    cfg.seed = args.seed;
  } else if (!config_has_seed) {
    cfg.seed = (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^
               std::random_device{}();
    std::cout << "seed drawn: " << cfg.seed << " (pass --seed to reproduce)\n";
  }

  const SimOutput out = generate(cfg);

  const fs::path dir(args.out_dir);
  fs::create_directories(dir);
  write_test_records(out.records, dir / "records.csv");
  write_poststrat(out.community, dir / "poststrat_community.csv");
  write_poststrat(out.hospital, dir / "poststrat_hospital.csv");

  json truth;
  truth["seed"] = cfg.seed;
  truth["kind"] = cfg.kind == ModelKind::PcrEq1 ? "pcr" : "igg";
  truth["n_weeks"] = cfg.n_weeks;
  truth["tests_per_week"] = cfg.tests_per_week;
  truth["anchor"] = format_date(cfg.anchor);
  truth["true_delta"] = out.true_delta;
  truth["true_gamma"] = out.true_gamma;
  truth["true_params"] = json::array();
  for (Eigen::Index i = 0; i < out.true_params.size(); ++i)
    truth["true_params"].push_back(out.true_params[i]);
  truth["true_community_prevalence"] = out.true_community_prevalence;
  truth["true_hospital_prevalence"] = out.true_hospital_prevalence;
  {
    std::ofstream tf(dir / "truth.json", std::ios::binary);
    if (!tf) throw std::runtime_error("cannot write " + (dir / "truth.json").string());
    tf << truth.dump(2) << '\n';
  }

  std::cout << "wrote " << out.records.size() << " records and tables to " << dir.string()
            << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string records_path;
  std::string poststrat_path;
  std::string priors_path;
  std::string fixed_misclass;
  std::string model = "pcr";
  std::string split_date;
  std::string anchor_date;
  std::string out_dir = "fit_out";
  SamplerConfig sampler;
  int threads = 0;
  double max_rhat = 1.05;
  double max_divergence_rate = 0.01;
};

MisclassModel resolve_misclass(const FitArgs& args, ModelKind kind) {
  if (!args.fixed_misclass.empty()) {
    double d = 0.0;
    double g = 0.0;
    if (std::sscanf(args.fixed_misclass.c_str(), "%lf,%lf", &d, &g) != 2)
      throw std::runtime_error("--fixed-misclass expects 'delta,gamma'");
    return FixedMisclass{d, g};
  }
  if (!args.priors_path.empty())
    return EstimatedMisclass{read_misclass_priors(args.priors_path)};
  // PCR fits adjust using the bundled assay validation studies; IgG fits
  // default to a lower-bound configuration with no misclassification.
  if (kind == ModelKind::PcrEq1) return EstimatedMisclass{default_pcr_misclass_priors()};
  return FixedMisclass{1.0, 1.0};
}

// Returns true when the fit passes the quality thresholds.
bool report_quality(const FitResult& fit, const fs::path& dir, double max_rhat,
                    double max_divergence_rate, int chains, int draws) {
  const double worst_rhat = fit.diag.max_rhat();
  const double min_ess = fit.diag.min_ess_bulk();
  const int divergences = fit.diag.divergences;
  const double div_rate =
      static_cast<double>(divergences) / (static_cast<double>(chains) * draws);

  std::cout << "fit " << dir.string() << ": worst R-hat " << worst_rhat
            << ", min bulk-ESS " << min_ess << ", divergences " << divergences << "\n";

  bool ok = true;
  if (fit.diag.any_degenerate()) {
    std::cout << "QUALITY FLAG: degenerate (zero-variance) parameter chains\n";
    ok = false;
  }
  if (!(worst_rhat <= max_rhat)) {
    std::cout << "QUALITY FLAG: R-hat above " << max_rhat << "\n";
    ok = false;
  }
  if (div_rate > max_divergence_rate) {
    std::cout << "QUALITY FLAG: divergence rate " << div_rate << " above "
              << max_divergence_rate << "\n";
    ok = false;
  }
  return ok;
}

int run_fit(const FitArgs& args) {
  const ModelKind kind = [&] {
    if (args.model == "pcr") return ModelKind::PcrEq1;
    if (args.model == "igg") return ModelKind::IggEq2;
    throw std::runtime_error("--model must be 'pcr' or 'igg', got '" + args.model + "'");
  }();

  const RecordParseResult parsed = read_test_records(args.records_path);
  if (!parsed.issues.empty()) {
    for (const ParseIssue& issue : parsed.issues)
      std::cerr << args.records_path << ":" << issue.line << ": " << issue.message
                << "\n";
    throw std::runtime_error(std::to_string(parsed.issues.size()) +
                             " malformed record row(s); fix the input and retry");
  }

  std::optional<PoststratTable> poststrat;
  if (!args.poststrat_path.empty())
    poststrat = read_poststrat(args.poststrat_path, PopulationLabel::Community);

  const MisclassModel misclass = resolve_misclass(args, kind);
  std::optional<Date> anchor;
  if (!args.anchor_date.empty())
    anchor = parse_date_flag(args.anchor_date, "--anchor-date");

  SamplerConfig sampler = args.sampler;
  sampler.threads = resolve_threads(args.threads);

  struct Job {
    std::vector<TestRecord> records;
    std::optional<Date> anchor;
    fs::path dir;
    Date igg_split;
  };
  std::vector<Job> jobs;
  const fs::path out_root(args.out_dir);
  if (!args.split_date.empty()) {
    const Date split = parse_date_flag(args.split_date, "--split-date");
    Job pre{{}, anchor, out_root / "pre", split};
    Job post{{}, split, out_root / "post", split};
    for (const TestRecord& r : parsed.records) {
      if (std::chrono::sys_days(r.date) < std::chrono::sys_days(split))
        pre.records.push_back(r);
      else
        post.records.push_back(r);
    }
    if (pre.records.empty())
      throw std::runtime_error("--split-date leaves no records before the split");
    if (post.records.empty())
      throw std::runtime_error("--split-date leaves no records on/after the split");
    jobs.push_back(std::move(pre));
    jobs.push_back(std::move(post));
  } else {
    jobs.push_back(Job{parsed.records, anchor, out_root, kDefaultIggSplitDate});
  }

  bool all_ok = true;
  for (const Job& job : jobs) {
    const DatasetWindow window = build_dataset(job.records, kind, job.anchor,
                                               job.igg_split);
    ModelSpec spec{kind, window.n_weeks};
    spec.misclass = misclass;

    const FitResult fit = fit_model(window.data, spec, sampler);

    FitArtifacts artifacts{spec, sampler, window.anchor, window.data.assay, fit.draws,
                           fit.diag};
    write_fit_dir(artifacts, job.dir);
    if (poststrat) write_poststrat(*poststrat, job.dir / "poststrat.csv");

    all_ok = report_quality(fit, job.dir, args.max_rhat, args.max_divergence_rate,
                            sampler.chains, sampler.draws) &&
             all_ok;
  }
  return all_ok ? kExitOk : kExitQuality;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::string draws_dir;
  std::string poststrat_path;
  std::string population = "community";
  std::string vaccination;
  std::string margins = "overall";
  std::string weeks = "last";
  std::string format = "csv";
  std::string out_dir = ".";
};

std::vector<Margin> parse_margins(const std::string& text) {
  std::vector<Margin> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string token =
        text.substr(start, comma == std::string::npos ? comma : comma - start);
    if (token == "overall") {
      out.push_back(Margin::Overall);
    } else if (token == "sex") {
      out.push_back(Margin::Sex);
    } else if (token == "race") {
      out.push_back(Margin::Race);
    } else if (token == "age") {
      out.push_back(Margin::Age);
    } else {
      throw std::runtime_error("--margins: unknown margin '" + token + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<int> parse_weeks(const std::string& text, int n_weeks) {
  std::vector<int> out;
  if (text == "all") {
    for (int w = 0; w < n_weeks; ++w) out.push_back(w);
    return out;
  }
  if (text == "last") {
    out.push_back(n_weeks - 1);
    return out;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string token =
        text.substr(start, comma == std::string::npos ? comma : comma - start);
    int w = 0;
    try {
      w = std::stoi(token);
    } catch (const std::exception&) {
      throw std::runtime_error("--weeks: expected 'all', 'last', or integers, got '" +
                               token + "'");
    }
    if (w < 0 || w >= n_weeks)
      throw std::runtime_error("--weeks: week " + token + " outside fitted window [0, " +
                               std::to_string(n_weeks) + ")");
    out.push_back(w);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int level_index(Margin margin, const std::string& level) {
  switch (margin) {
    case Margin::Overall:
      return 0;
    case Margin::Sex:
      return static_cast<int>(*parse_sex(level));
    case Margin::Race:
      return static_cast<int>(*parse_race(level));
    case Margin::Age:
      return static_cast<int>(*parse_age_group(level));
  }
  return 0;
}

int run_report(const ReportArgs& args) {
  const FitArtifacts fit = read_fit_dir(args.draws_dir);

  fs::path poststrat_path(args.poststrat_path);
  if (poststrat_path.empty()) {
    poststrat_path = fs::path(args.draws_dir) / "poststrat.csv";
    if (!fs::exists(poststrat_path))
      throw std::runtime_error(
          "no --poststrat given and no poststrat.csv stored with the fit");
  }
  const auto population = parse_population(args.population);
  if (!population)
    throw std::runtime_error("--population must be 'hospital' or 'community'");
  const PoststratTable table = read_poststrat(poststrat_path, *population);

  const ReportFormat format = [&] {
    if (args.format == "csv") return ReportFormat::Csv;
    if (args.format == "json") return ReportFormat::Json;
    throw std::runtime_error("--format must be 'csv' or 'json'");
  }();
  const std::string ext = args.format;

  std::vector<VaccinationRate> rates;
  if (!args.vaccination.empty()) {
    if (args.vaccination.find('=') != std::string::npos)
      rates = parse_vaccination_inline(args.vaccination);
    else
      rates = read_vaccination(args.vaccination);
  }

  const std::vector<Margin> margins = parse_margins(args.margins);
  const std::vector<int> weeks = parse_weeks(args.weeks, fit.spec.n_weeks);

  const fs::path out_dir(args.out_dir);
  fs::create_directories(out_dir);

  const PrevalenceSeries series = weekly_series(fit.draws, table, fit.spec, fit.assay);
  write_series(series, out_dir / ("series." + ext), format);

  for (const int w : weeks) {
    SubgroupTable subgroups =
        subgroup_estimates(fit.draws, table, WeekIndex{w}, fit.spec, margins);
    for (SubgroupRow& row : subgroups.rows) {
      if (row.empty) continue;
      for (const VaccinationRate& rate : rates) {
        if (rate.margin != row.margin || rate.level != row.level) continue;
        const auto masked = margin_level_counts(table.counts(), row.margin,
                                                level_index(row.margin, row.level));
        const Vector draws_vec =
            poststrat_draws(fit.draws, fit.spec, WeekIndex{w}, masked);
        row.immunity = decompose_immunity(draws_vec, rate.rate);
        break;
      }
    }
    write_subgroups(subgroups,
                    out_dir / ("subgroups_w" + std::to_string(w) + "." + ext), format);
  }

  std::cout << "wrote series." << ext << " and " << weeks.size()
            << " subgroup table(s) to " << out_dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// diagnose

struct DiagnoseArgs {
  std::string draws_dir;
  double max_rhat = 1.05;
  double max_divergence_rate = 0.01;
};

int run_diagnose(const DiagnoseArgs& args) {
  const FitArtifacts fit = read_fit_dir(args.draws_dir);
  const Diagnostics diag = diagnostics(fit.draws);

  std::cout << "parameter                     R-hat     bulk-ESS\n";
  for (std::size_t i = 0; i < diag.param_names.size(); ++i) {
    const double rhat = diag.rhat[static_cast<Eigen::Index>(i)];
    const double ess = diag.ess_bulk[static_cast<Eigen::Index>(i)];
    std::printf("%-28s %8.4f %12.1f\n", diag.param_names[i].c_str(), rhat, ess);
  }
  const int total_draws = static_cast<int>(fit.draws.n_draws()) * fit.draws.n_chains();
  const double div_rate = total_draws > 0
                              ? static_cast<double>(diag.divergences) / total_draws
                              : 0.0;
  std::cout << "divergences: " << diag.divergences << " (" << div_rate * 100.0
            << "% of draws)\n";

  bool ok = true;
  if (diag.any_degenerate()) {
    std::cout << "FAIL: degenerate (zero-variance) parameter chains\n";
    ok = false;
  }
  if (!(diag.max_rhat() <= args.max_rhat)) {
    std::cout << "FAIL: worst R-hat " << diag.max_rhat() << " above " << args.max_rhat
              << "\n";
    ok = false;
  }
  if (div_rate > args.max_divergence_rate) {
    std::cout << "FAIL: divergence rate above " << args.max_divergence_rate << "\n";
    ok = false;
  }
  if (ok) std::cout << "OK\n";
  return ok ? kExitOk : kExitQuality;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Community prevalence estimation from biased hospital testing streams\n"
      "(multilevel regression, poststratification, misclassification "
      "adjustment)"};
  app.require_subcommand(1);

  SimulateArgs sim_args;
  CLI::App* sim = app.add_subcommand("simulate", "Generate synthetic testing data");
  sim->add_option("--config", sim_args.config_path, "JSON scenario config");
  sim->add_option("--out-dir", sim_args.out_dir, "Output directory")
      ->capture_default_str();
  CLI::Option* sim_seed = sim->add_option("--seed", sim_args.seed, "RNG seed");

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "Sample the model posterior from records");
  fit->add_option("--records", fit_args.records_path, "Test records CSV")->required();
  fit->add_option("--poststrat", fit_args.poststrat_path,
                  "Poststratification CSV stored with the fit for reporting");
  fit->add_option("--priors", fit_args.priors_path,
                  "Misclassification prior studies JSON");
  fit->add_option("--fixed-misclass", fit_args.fixed_misclass,
                  "Fix sensitivity,specificity (e.g. 1,1) instead of estimating");
  fit->add_option("--model", fit_args.model, "pcr or igg")->capture_default_str();
  fit->add_option("--split-date", fit_args.split_date,
                  "Partition records into pre/ and post/ fits at this date");
  fit->add_option("--anchor-date", fit_args.anchor_date,
                  "Week-0 anchor (default: earliest record)");
  fit->add_option("--chains", fit_args.sampler.chains)->capture_default_str();
  fit->add_option("--warmup", fit_args.sampler.warmup)->capture_default_str();
  fit->add_option("--draws", fit_args.sampler.draws)->capture_default_str();
  fit->add_option("--seed", fit_args.sampler.seed)->capture_default_str();
  fit->add_option("--target-accept", fit_args.sampler.target_accept)
      ->capture_default_str();
  fit->add_option("--threads", fit_args.threads,
                  "Worker threads (or MRP_SERO_THREADS; 0 = auto)");
  fit->add_option("--max-rhat", fit_args.max_rhat, "Quality threshold")
      ->capture_default_str();
  fit->add_option("--max-divergence-rate", fit_args.max_divergence_rate,
                  "Quality threshold")
      ->capture_default_str();
  fit->add_option("--out", fit_args.out_dir, "Fit output directory")
      ->capture_default_str();

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand("report", "Weekly series and subgroup tables");
  report->add_option("--draws", report_args.draws_dir, "Fit output directory")
      ->required();
  report->add_option("--poststrat", report_args.poststrat_path,
                     "Poststratification CSV (default: stored with the fit)");
  report->add_option("--population", report_args.population,
                     "Label for the table: community or hospital")
      ->capture_default_str();
  report->add_option("--vaccination", report_args.vaccination,
                     "CSV path or inline 'overall=0.45,...' rates");
  report->add_option("--margins", report_args.margins,
                     "Comma list of overall,sex,race,age")
      ->capture_default_str();
  report->add_option("--weeks", report_args.weeks,
                     "Subgroup-table weeks: 'last', 'all', or comma list")
      ->capture_default_str();
  report->add_option("--format", report_args.format, "csv or json")
      ->capture_default_str();
  report->add_option("--out-dir", report_args.out_dir, "Report output directory")
      ->capture_default_str();

  DiagnoseArgs diag_args;
  CLI::App* diagnose = app.add_subcommand("diagnose", "Convergence summary of a fit");
  diagnose->add_option("--draws", diag_args.draws_dir, "Fit output directory")
      ->required();
  diagnose->add_option("--max-rhat", diag_args.max_rhat)->capture_default_str();
  diagnose->add_option("--max-divergence-rate", diag_args.max_divergence_rate)
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim->parsed()) {
      sim_args.seed_given = sim_seed->count() > 0;
      return run_simulate(sim_args);
    }
    if (fit->parsed()) return run_fit(fit_args);
    if (report->parsed()) return run_report(report_args);
    if (diagnose->parsed()) return run_diagnose(diag_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
