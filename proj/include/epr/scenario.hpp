#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "epr/analysis.hpp"
#include "epr/core_tables.hpp"
#include "epr/engine.hpp"
#include "epr/errors.hpp"
#include "epr/io.hpp"

namespace epr {

// ---------------------------------------------------------------------------
// Analysis selectors
// ---------------------------------------------------------------------------

enum class AnalysisKind {
  feature_i,
  feature_ii,
  correlations,
  sampleability,
  reorder,
  row_audit,
  density,
};

inline constexpr std::array<AnalysisKind, 7> kAllAnalyses = {
    AnalysisKind::feature_i,  AnalysisKind::feature_ii, AnalysisKind::correlations,
    AnalysisKind::sampleability, AnalysisKind::reorder, AnalysisKind::row_audit,
    AnalysisKind::density,
};

inline const char* analysis_name(AnalysisKind kind) {
  switch (kind) {
    case AnalysisKind::feature_i: return "feature-i";
    case AnalysisKind::feature_ii: return "feature-ii";
    case AnalysisKind::correlations: return "correlations";
    case AnalysisKind::sampleability: return "sampleability";
    case AnalysisKind::reorder: return "reorder";
    case AnalysisKind::row_audit: return "row-audit";
    case AnalysisKind::density: return "density";
  }
  return "?";
}

inline AnalysisKind analysis_from_name(std::string_view name) {
  for (AnalysisKind kind : kAllAnalyses) {
    if (name == analysis_name(kind)) return kind;
  }
  throw ConfigError("unknown analysis '" + std::string(name) + "'");
}

inline bool analysis_needs_audit(AnalysisKind kind) {
  return kind == AnalysisKind::reorder || kind == AnalysisKind::row_audit ||
         kind == AnalysisKind::density;
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

/// A named experiment plus the analyses to run over its records.
struct Scenario {
  std::string name;
  ExperimentConfig config;
  std::vector<AnalysisKind> analyses = {AnalysisKind::feature_i, AnalysisKind::feature_ii,
                                        AnalysisKind::correlations, AnalysisKind::sampleability};
  double density_alpha = 0.01;
  bool write_records = false;
  bool write_streams = false;  // hp only: dump the instrument streams over the run's ticks
};

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace detail {

inline Rational rational_from_json(const nlohmann::json& v, const std::string& where) {
  try {
    if (v.is_string()) return Rational::parse(v.get<std::string>());
    if (v.is_number_integer()) return Rational(v.get<std::int64_t>());
    if (v.is_number()) return Rational::from_double(v.get<double>());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what() + " (use a \"p/q\" string for exact values)");
  }
  throw ConfigError(where + ": expected a number or a \"p/q\" string");
}

inline SourceDistribution parse_source(const nlohmann::json& v) {
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    if (s == "uniform") return SourceDistribution::uniform();
    if (s == "uniform-mixed") return SourceDistribution::uniform_mixed();
    // A bare set name puts all mass on that set.
    return SourceDistribution::point(InstructionSet::from_name(s));
  }
  if (!v.is_object()) throw ConfigError("source: expected \"uniform\", \"uniform-mixed\", a set name, or a map");
  std::array<Rational, 8> p;
  p.fill(Rational(0));
  for (const auto& [key, value] : v.items()) {
    InstructionSet set = InstructionSet::from_name(key);  // rejects unknown keys
    p[set.index() - 1] = rational_from_json(value, "source." + key);
  }
  return SourceDistribution(p);
}

inline SettingPairDistribution parse_pairs(const nlohmann::json& v) {
  if (v.is_string()) {
    if (v.get<std::string>() == "uniform") return SettingPairDistribution::uniform();
    throw ConfigError("pairs: expected \"uniform\" or a map of pair labels");
  }
  if (!v.is_object()) throw ConfigError("pairs: expected \"uniform\" or a map of pair labels");
  std::array<Rational, 9> p;
  p.fill(Rational(0));
  for (const auto& [key, value] : v.items()) {
    SettingPair pair = pair_from_label(key);
    p[pair_index(pair)] = rational_from_json(value, "pairs." + key);
  }
  return SettingPairDistribution(p);
}

template <typename T>
T get_checked(const nlohmann::json& j, const std::string& key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception&) {
    throw ConfigError(key + ": unexpected type");
  }
}

inline void reject_unknown_keys(const nlohmann::json& j,
                                std::initializer_list<std::string_view> known,
                                const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (std::string_view k : known) {
      if (key == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

}  // namespace detail

/// Parses and fully validates a scenario; every default is materialized.
inline Scenario parse_scenario_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  detail::reject_unknown_keys(
      j,
      {"name", "model", "trials", "seed", "seeds", "audit", "source", "pairs", "stacks",
       "time_shift", "settings_mode", "q_same", "functions_equal", "analyses", "density_alpha",
       "write_records", "write_streams"},
      "config");

  Scenario scenario;
  scenario.name = detail::get_checked<std::string>(j, "name", "unnamed");
  if (scenario.name.empty()) throw ConfigError("name: must be nonempty");

  ExperimentConfig& config = scenario.config;
  if (!j.contains("trials")) throw ConfigError("trials: required");
  config.trials = detail::get_checked<std::int64_t>(j, "trials", 0);

  config.model.kind = model_kind_from_name(detail::get_checked<std::string>(j, "model", "mermin"));
  config.seeds.master = detail::get_checked<std::uint64_t>(j, "seed", 0);
  config.audit = detail::get_checked<bool>(j, "audit", false);

  if (j.contains("source")) config.source = detail::parse_source(j.at("source"));
  if (j.contains("pairs")) config.pairs = detail::parse_pairs(j.at("pairs"));

  if (j.contains("stacks")) {
    const auto& s = j.at("stacks");
    detail::reject_unknown_keys(s, {"algorithm", "alphabet", "period"}, "stacks");
    config.model.stacks.kind =
        stack_kind_from_name(detail::get_checked<std::string>(s, "algorithm", "iid-stream"));
    config.model.stacks.alphabet = detail::get_checked<int>(s, "alphabet", 2);
    config.model.stacks.period = detail::get_checked<int>(s, "period", 1);
  }
  if (j.contains("time_shift")) {
    const auto& t = j.at("time_shift");
    detail::reject_unknown_keys(t, {"wing", "delta"}, "time_shift");
    TimeShift shift;
    shift.wing = wing_from_name(detail::get_checked<std::string>(t, "wing", "S2"));
    shift.delta = detail::get_checked<std::int64_t>(t, "delta", 0);
    config.time_shift = shift;
  }
  config.settings_mode =
      settings_mode_from_name(detail::get_checked<std::string>(j, "settings_mode", "iid"));
  config.model.q_same = detail::get_checked<double>(j, "q_same", 0.25);
  config.model.functions_equal = detail::get_checked<bool>(j, "functions_equal", true);

  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    detail::reject_unknown_keys(s, {"source", "settings", "stack", "model", "settings_s2", "stack_s2"},
                                "seeds");
    auto maybe = [&](const char* key) -> std::optional<std::uint64_t> {
      if (!s.contains(key)) return std::nullopt;
      return detail::get_checked<std::uint64_t>(s, key, 0);
    };
    config.seeds.source = maybe("source");
    config.seeds.settings = maybe("settings");
    config.seeds.stack = maybe("stack");
    config.seeds.model = maybe("model");
    config.seeds.settings_s2 = maybe("settings_s2");
    config.seeds.stack_s2 = maybe("stack_s2");
  }

  if (j.contains("analyses")) {
    if (!j.at("analyses").is_array()) throw ConfigError("analyses: expected an array of names");
    scenario.analyses.clear();
    for (const auto& entry : j.at("analyses")) {
      if (!entry.is_string()) throw ConfigError("analyses: entries must be strings");
      scenario.analyses.push_back(analysis_from_name(entry.get<std::string>()));
    }
  }
  scenario.density_alpha = detail::get_checked<double>(j, "density_alpha", 0.01);
  if (scenario.density_alpha <= 0.0 || scenario.density_alpha >= 1.0) {
    throw ConfigError("density_alpha: must be in (0, 1)");
  }
  scenario.write_records = detail::get_checked<bool>(j, "write_records", false);
  scenario.write_streams = detail::get_checked<bool>(j, "write_streams", false);
  if (scenario.write_streams && scenario.config.model.kind != ModelSelector::Kind::hp) {
    throw ConfigError("write_streams: only meaningful for the hp model");
  }

  for (AnalysisKind kind : scenario.analyses) {
    if (analysis_needs_audit(kind) && !config.audit) {
      throw ConfigError(std::string("analysis '") + analysis_name(kind) +
                        "' requires \"audit\": true");
    }
  }

  config.validate();
  return scenario;
}

inline Scenario parse_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  try {
    return parse_scenario_json(j);
  } catch (ConfigError& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Scenario echo (report header; parameters round-trip through here)
// ---------------------------------------------------------------------------

inline Json scenario_echo(const Scenario& scenario) {
  const ExperimentConfig& config = scenario.config;
  Json j;
  j["name"] = scenario.name;
  j["model"] = model_kind_name(config.model.kind);
  j["trials"] = config.trials;
  j["seed"] = config.seeds.master;
  j["audit"] = config.audit;

  Json source;
  for (const InstructionSet& set : all_instruction_sets()) {
    source[std::string(set.name())] = config.source.probability(set).str();
  }
  j["source"] = source;
  Json pairs;
  for (const SettingPair& p : kSettingPairs) {
    pairs[pair_label(p)] = config.pairs.probability(p.first, p.second).str();
  }
  j["pairs"] = pairs;

  if (config.model.kind == ModelSelector::Kind::hp) {
    Json stacks;
    stacks["algorithm"] = stack_kind_name(config.model.stacks.kind);
    stacks["alphabet"] = config.model.stacks.alphabet;
    stacks["period"] = config.model.stacks.period;
    j["stacks"] = stacks;
    j["functions_equal"] = config.model.functions_equal;
  }
  if (config.model.kind == ModelSelector::Kind::qm_reference) {
    j["q_same"] = json_number(config.model.q_same);
    j["nonlocal"] = true;  // quarantine marker
  }
  if (config.time_shift.has_value()) {
    Json shift;
    shift["wing"] = wing_name(config.time_shift->wing);
    shift["delta"] = config.time_shift->delta;
    j["time_shift"] = shift;
  }
  j["settings_mode"] = settings_mode_name(config.settings_mode);

  Json seeds;
  seeds["source"] = config.seeds.source_seed();
  seeds["settings_s1"] = config.seeds.settings_s1_seed();
  seeds["settings_s2"] = config.seeds.settings_s2_seed();
  seeds["stack"] = config.seeds.stack_seed();
  seeds["model"] = config.seeds.model_seed();
  if (config.seeds.stack_s2.has_value()) seeds["stack_s2"] = *config.seeds.stack_s2;
  j["seeds"] = seeds;

  Json analyses = Json::array();
  for (AnalysisKind kind : scenario.analyses) analyses.push_back(analysis_name(kind));
  j["analyses"] = analyses;
  j["density_alpha"] = json_number(scenario.density_alpha);
  return j;
}

// ---------------------------------------------------------------------------
// Running analyses and scenarios
// ---------------------------------------------------------------------------

/// Analysis results depend only on the records and selectors, so a run and a
/// records-only replay produce byte-identical output.
inline Json run_analyses(std::span<const TrialRecord> records,
                         const std::vector<AnalysisKind>& analyses, double density_alpha,
                         std::optional<ReorderReport>* reorder_out = nullptr) {
  Json results;
  results["trials"] = static_cast<std::int64_t>(records.size());
  std::optional<ReorderReport> local_reordered;
  std::optional<ReorderReport>& reordered = reorder_out ? *reorder_out : local_reordered;
  auto ensure_reordered = [&]() -> const ReorderReport& {
    if (!reordered.has_value()) reordered = reorder(records);
    return *reordered;
  };

  for (AnalysisKind kind : analyses) {
    switch (kind) {
      case AnalysisKind::feature_i:
        results["feature_i"] = json_of(feature_i_check(records));
        break;
      case AnalysisKind::feature_ii:
        results["feature_ii"] = json_of(feature_ii_check(records));
        break;
      case AnalysisKind::correlations:
        results["correlations"] = json_of(pair_correlations(records));
        break;
      case AnalysisKind::sampleability:
        results["sampleability"] = json_of(sampleability_check(records));
        break;
      case AnalysisKind::reorder:
        results["reorder"] = json_of(ensure_reordered());
        break;
      case AnalysisKind::row_audit:
        results["row_audit"] = json_of(row_consistency_audit(ensure_reordered()));
        break;
      case AnalysisKind::density:
        results["density"] = json_of(density_dependence_test(records, density_alpha));
        break;
    }
  }
  return results;
}

struct ScenarioResult {
  std::vector<TrialRecord> records;
  Json report;    // {"scenario": ..., "results": ...}
  Json analyses;  // the "results" object alone
  std::string summary;
  std::optional<std::string> rows_csv;     // reorder ran and csv requested later
  std::optional<std::string> streams_csv;  // write_streams
};

inline ScenarioResult run_scenario(const Scenario& scenario) {
  ScenarioResult result;
  result.records = run_experiment(scenario.config);

  std::optional<ReorderReport> reordered;
  result.analyses = run_analyses(result.records, scenario.analyses, scenario.density_alpha,
                                 &reordered);
  if (reordered.has_value()) result.rows_csv = reordered_rows_to_csv(*reordered);

  if (scenario.write_streams) {
    auto [s1, s2] =
        build_synchronized_stacks(scenario.config.model.stacks, scenario.config.seeds.stack_seed());
    result.streams_csv = streams_to_csv(s1, s2, scenario.config.trials);
  }

  result.report["scenario"] = scenario_echo(scenario);
  result.report["results"] = result.analyses;

  std::ostringstream summary;
  summary << "scenario: " << scenario.name << "\n";
  summary << "model: " << model_kind_name(scenario.config.model.kind)
          << "  trials: " << scenario.config.trials << "  seed: " << scenario.config.seeds.master
          << "\n";
  if (result.analyses.contains("feature_i")) {
    const auto& f = result.analyses["feature_i"];
    summary << "feature i: equal-setting trials " << f["equal_setting_trials"]
            << ", same-color fraction "
            << (f["same_color_fraction"].is_null() ? std::string("n/a")
                                                   : format_sig12(f["same_color_fraction"].get<double>()))
            << "\n";
  }
  if (result.analyses.contains("feature_ii")) {
    const auto& f = result.analyses["feature_ii"];
    summary << "feature ii: same-color fraction "
            << format_sig12(f["same_color_fraction"].get<double>()) << "\n";
  }
  if (result.analyses.contains("reorder")) {
    const auto& f = result.analyses["reorder"];
    summary << "reorder: complete rows " << f["complete_rows_total"] << ", leftover fraction "
            << format_sig12(f["leftover_fraction"].get<double>()) << "\n";
  }
  if (result.analyses.contains("row_audit")) {
    const auto& f = result.analyses["row_audit"];
    summary << "row audit: complete rows " << f["complete_rows"] << ", row-sum violations "
            << f["row_sum_violations"] << "\n";
  }
  if (result.analyses.contains("density")) {
    const auto& f = result.analyses["density"];
    summary << "density: p-value " << format_sig12(f["p_value"].get<double>())
            << (f["reject"].get<bool>() ? " (rejected)" : " (not rejected)") << "\n";
  }
  result.summary = summary.str();
  return result;
}

/// Flat key/value CSV rendering of an analysis report.
inline std::string analyses_to_csv(const Json& results) {
  std::string out = "section,key,value\n";
  auto emit = [&out](const std::string& section, const std::string& key, const Json& v) {
    out += section;
    out += ',';
    out += key;
    out += ',';
    if (v.is_null()) {
      // empty field
    } else if (v.is_string()) {
      out += v.get<std::string>();
    } else {
      out += v.dump();
    }
    out += '\n';
  };
  for (const auto& [section, body] : results.items()) {
    if (!body.is_object()) {
      emit("run", section, body);
      continue;
    }
    for (const auto& [key, value] : body.items()) {
      if (value.is_object()) {
        for (const auto& [sub, subvalue] : value.items()) emit(section, key + "." + sub, subvalue);
      } else {
        emit(section, key, value);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Builtins listing
// ---------------------------------------------------------------------------

inline std::string list_builtins() {
  std::ostringstream out;
  out << "models:\n";
  out << "  mermin                 source-only instruction-set model; outcomes ignore time\n";
  out << "  hp                     setting- and time-dependent instrument parameters, two\n";
  out << "                         identically arranged stack replicas, shared evaluation map\n";
  out << "  qm-reference (NONLOCAL) joint-outcome data generator with the two headline\n";
  out << "                         features; quarantined from all locality checks\n";
  out << "stack algorithms:\n";
  out << "  iid-stream             fresh value per (setting, tick)\n";
  out << "  stroboscopic-periodic  fixed random table of period P read by clock phase\n";
  out << "  history-dependent      arrangement at t folds the stack's own contents before t\n";
  out << "analyses:\n";
  out << "  feature-i              same-color fraction on equal-setting trials\n";
  out << "  feature-ii             same-color fraction over all trials + outcome marginals\n";
  out << "  correlations           empirical <A_i B_j> per ordered setting pair\n";
  out << "  sampleability          one tick, one setting pair: structural check\n";
  out << "  reorder                greedy regrouping into per-source-value rows (audit)\n";
  out << "  row-audit              per-row instrument uniformity and row-sum identity (audit)\n";
  out << "  density                chi-squared homogeneity of (lambda, v1, v2) across pairs (audit)\n";
  return out.str();
}

}  // namespace epr
