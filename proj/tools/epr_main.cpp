// Scenario runner for the two-station instruction-set experiment.
//
// Subcommands: run, table, oracle, analyze, list. Outputs are deterministic:
// fixed key order, floats at 12 significant digits, and (with
// --deterministic-timestamps) byte-identical files for identical scenarios.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "epr/core_tables.hpp"
#include "epr/engine.hpp"
#include "epr/errors.hpp"
#include "epr/io.hpp"
#include "epr/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitPrecondition = 3;
constexpr int kExitIntegrity = 4;

enum class Format { json, csv, both };

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::string timestamp_string(bool deterministic) {
  if (deterministic) return "1970-01-01T00:00:00Z";
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

std::string dump(const epr::Json& j) { return j.dump(2) + "\n"; }

int run_command(const std::string& config_path, const std::string& out_dir,
                std::optional<std::uint64_t> seed_override, bool force_audit, Format format,
                bool deterministic_timestamps) {
  epr::Scenario scenario = epr::parse_scenario_file(config_path);
  if (seed_override.has_value()) scenario.config.seeds.master = *seed_override;
  if (force_audit) scenario.config.audit = true;

  epr::ScenarioResult result = epr::run_scenario(scenario);

  result.report["meta"] = epr::Json{{"generated_at", timestamp_string(deterministic_timestamps)},
                                    {"format_version", 1}};

  std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  write_file(dir / "report.json", dump(result.report));
  if (format != Format::csv) write_file(dir / "analysis.json", dump(result.analyses));
  if (format != Format::json) write_file(dir / "analysis.csv", epr::analyses_to_csv(result.analyses));
  write_file(dir / "summary.txt", result.summary);
  if (scenario.write_records) {
    write_file(dir / "records.csv", epr::records_to_csv(result.records));
    if (format != Format::csv) {
      write_file(dir / "records.ndjson", epr::records_to_ndjson(result.records));
    }
  }
  if (result.rows_csv.has_value() && format != Format::json) {
    write_file(dir / "rows.csv", *result.rows_csv);
  }
  if (result.streams_csv.has_value()) write_file(dir / "streams.csv", *result.streams_csv);

  std::cout << result.summary;
  std::cout << "wrote " << (dir / "report.json").string() << "\n";
  return kExitOk;
}

int table_command(const std::string& out_path, bool as_json) {
  epr::ProductTable table = epr::product_table();
  std::string text =
      as_json ? dump(epr::product_table_to_json(table)) : epr::product_table_to_csv(table);
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_file(out_path, text);
  }
  return kExitOk;
}

epr::Json oracle_json(const epr::SourceDistribution& source,
                      const epr::SettingPairDistribution& pairs) {
  epr::Json j;
  epr::Json src;
  for (const epr::InstructionSet& set : epr::all_instruction_sets()) {
    src[std::string(set.name())] = source.probability(set).str();
  }
  j["source"] = src;
  epr::Json pr;
  for (const epr::SettingPair& p : epr::kSettingPairs) {
    pr[epr::pair_label(p)] = pairs.probability(p.first, p.second).str();
  }
  j["pairs"] = pr;

  bool exact_ok = true;
  epr::Json same, expectations;
  try {
    auto stats = epr::exact_statistics<epr::Rational>(source, pairs);
    same["exact"] = stats.same_color_prob.str();
    same["value"] = epr::json_number(stats.same_color_prob.to_double());
    for (const epr::SettingPair& p : epr::kSettingPairs) {
      const epr::Rational& e =
          stats.pair_expectations(epr::index_of(p.first), epr::index_of(p.second));
      expectations[epr::pair_label(p)] =
          epr::Json{{"exact", e.str()}, {"value", epr::json_number(e.to_double())}};
    }
  } catch (const std::overflow_error&) {
    exact_ok = false;
    auto stats = epr::exact_statistics<double>(source, pairs);
    same["exact"] = nullptr;
    same["value"] = epr::json_number(stats.same_color_prob);
    for (const epr::SettingPair& p : epr::kSettingPairs) {
      double e = stats.pair_expectations(epr::index_of(p.first), epr::index_of(p.second));
      expectations[epr::pair_label(p)] = epr::Json{{"exact", nullptr}, {"value", epr::json_number(e)}};
    }
  }
  j["exact_arithmetic"] = exact_ok;
  j["same_color_prob"] = same;
  j["pair_expectations"] = expectations;
  return j;
}

std::string oracle_csv(const epr::Json& j) {
  std::string out = "key,exact,value\n";
  auto emit = [&out](const std::string& key, const epr::Json& entry) {
    out += key;
    out += ',';
    if (!entry["exact"].is_null()) out += entry["exact"].get<std::string>();
    out += ',';
    out += entry["value"].dump();
    out += '\n';
  };
  emit("same_color_prob", j["same_color_prob"]);
  for (const auto& [pair, entry] : j["pair_expectations"].items()) {
    emit("pair_expectation." + pair, entry);
  }
  return out;
}

int oracle_command(const std::string& config_path, const std::string& out_path, bool as_csv) {
  epr::SourceDistribution source;
  epr::SettingPairDistribution pairs;
  if (!config_path.empty()) {
    epr::Scenario scenario = epr::parse_scenario_file(config_path);
    source = scenario.config.source;
    pairs = scenario.config.pairs;
  }
  epr::Json j = oracle_json(source, pairs);
  std::string text = as_csv ? oracle_csv(j) : dump(j);
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_file(out_path, text);
  }
  return kExitOk;
}

int analyze_command(const std::string& records_path, const std::string& analyses_arg,
                    const std::string& config_path, double alpha, const std::string& out_dir,
                    Format format) {
  std::ifstream in(records_path, std::ios::binary);
  if (!in) throw epr::ConfigError("cannot open records file '" + records_path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<epr::TrialRecord> records = epr::records_from_csv(text);

  std::vector<epr::AnalysisKind> analyses;
  if (!config_path.empty()) {
    epr::Scenario scenario = epr::parse_scenario_file(config_path);
    analyses = scenario.analyses;
    alpha = scenario.density_alpha;
  } else if (!analyses_arg.empty()) {
    std::size_t start = 0;
    while (start <= analyses_arg.size()) {
      std::size_t comma = analyses_arg.find(',', start);
      std::string name = analyses_arg.substr(
          start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!name.empty()) analyses.push_back(epr::analysis_from_name(name));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  } else {
    analyses = {epr::AnalysisKind::feature_i, epr::AnalysisKind::feature_ii,
                epr::AnalysisKind::correlations, epr::AnalysisKind::sampleability};
  }

  std::optional<epr::ReorderReport> reordered;
  epr::Json results = epr::run_analyses(records, analyses, alpha, &reordered);

  if (out_dir.empty()) {
    std::cout << dump(results);
    return kExitOk;
  }
  std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  if (format != Format::csv) write_file(dir / "analysis.json", dump(results));
  if (format != Format::json) write_file(dir / "analysis.csv", epr::analyses_to_csv(results));
  if (reordered.has_value() && format != Format::json) {
    write_file(dir / "rows.csv", epr::reordered_rows_to_csv(*reordered));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-station instruction-set experiment: runner, exact oracles, analyses"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "execute a scenario config and write reports");
  std::string run_config, run_out = ".";
  std::optional<std::uint64_t> run_seed;
  bool run_audit = false, run_det_ts = false;
  std::string run_format = "json";
  run->add_option("--config", run_config, "scenario config file (JSON)")->required();
  run->add_option("--out", run_out, "output directory");
  run->add_option("--seed", run_seed, "override the master seed");
  run->add_flag("--audit", run_audit, "force the audit payload on");
  run->add_option("--format", run_format, "analysis output format: json, csv or both")
      ->check(CLI::IsMember({"json", "csv", "both"}));
  run->add_flag("--deterministic-timestamps", run_det_ts,
                "write a fixed timestamp so outputs are byte-stable");

  // table
  auto* table = app.add_subcommand("table", "print the 8x9 product table");
  std::string table_out, table_format = "csv";
  table->add_option("--out", table_out, "write to a file instead of stdout");
  table->add_option("--format", table_format, "csv (default) or json")
      ->check(CLI::IsMember({"csv", "json"}));

  // oracle
  auto* oracle = app.add_subcommand("oracle", "exact statistics over the 72-point sample space");
  std::string oracle_config, oracle_out, oracle_format = "json";
  oracle->add_option("--config", oracle_config, "scenario config supplying source/pair laws");
  oracle->add_option("--out", oracle_out, "write to a file instead of stdout");
  oracle->add_option("--format", oracle_format, "json (default) or csv")
      ->check(CLI::IsMember({"csv", "json"}));

  // analyze
  auto* analyze = app.add_subcommand("analyze", "run analyses over an exported records CSV");
  std::string an_records, an_analyses, an_config, an_out;
  double an_alpha = 0.01;
  std::string an_format = "json";
  analyze->add_option("--records", an_records, "records CSV file")->required();
  analyze->add_option("--analyses", an_analyses, "comma-separated analysis names");
  analyze->add_option("--config", an_config, "take analyses + alpha from a scenario config");
  analyze->add_option("--alpha", an_alpha, "density test significance level");
  analyze->add_option("--out", an_out, "output directory (stdout when omitted)");
  analyze->add_option("--format", an_format, "analysis output format: json, csv or both")
      ->check(CLI::IsMember({"json", "csv", "both"}));

  // list
  auto* list = app.add_subcommand("list", "list built-in models, stack algorithms and analyses");

  CLI11_PARSE(app, argc, argv);

  auto to_format = [](const std::string& f) {
    return f == "json" ? Format::json : (f == "csv" ? Format::csv : Format::both);
  };

  try {
    if (run->parsed()) {
      return run_command(run_config, run_out, run_seed, run_audit, to_format(run_format),
                         run_det_ts);
    }
    if (table->parsed()) return table_command(table_out, table_format == "json");
    if (oracle->parsed()) return oracle_command(oracle_config, oracle_out, oracle_format == "csv");
    if (analyze->parsed()) {
      return analyze_command(an_records, an_analyses, an_config, an_alpha, an_out,
                             to_format(an_format));
    }
    if (list->parsed()) {
      std::cout << epr::list_builtins();
      return kExitOk;
    }
  } catch (const epr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const epr::PreconditionError& e) {
    std::cerr << "precondition error: " << e.what() << "\n";
    return kExitPrecondition;
  } catch (const epr::IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kExitIntegrity;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
