#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "epr/analysis.hpp"
#include "epr/core_tables.hpp"
#include "epr/engine.hpp"
#include "epr/errors.hpp"

namespace epr {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Deterministic number formatting
// ---------------------------------------------------------------------------

/// Fixed 12-significant-digit rendering used everywhere a float reaches an
/// output file, so identical scenarios serialize byte-identically.
inline std::string format_sig12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

/// A JSON number carrying exactly the 12-significant-digit value (NaN -> null).
inline Json json_number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return Json(std::strtod(format_sig12(v).c_str(), nullptr));
}

// ---------------------------------------------------------------------------
// Record streams as CSV
// ---------------------------------------------------------------------------

inline constexpr std::string_view kRecordsHeader = "index,tick,setting_1,setting_2,outcome_1,outcome_2";
inline constexpr std::string_view kRecordsAuditHeader =
    "index,tick,setting_1,setting_2,outcome_1,outcome_2,lambda,v1,v2";

inline std::string records_to_csv(std::span<const TrialRecord> records) {
  bool audit = !records.empty() && records.front().hidden.has_value();
  std::string out;
  out += audit ? kRecordsAuditHeader : kRecordsHeader;
  out += '\n';
  for (const TrialRecord& rec : records) {
    out += std::to_string(rec.index);
    out += ',';
    out += std::to_string(rec.tick);
    out += ',';
    out += label_of(rec.setting_1);
    out += ',';
    out += label_of(rec.setting_2);
    out += ',';
    out += std::to_string(rec.outcome_1);
    out += ',';
    out += std::to_string(rec.outcome_2);
    if (audit) {
      if (!rec.hidden.has_value()) throw IntegrityError("mixed audit/plain records in one stream");
      const HiddenInfo& hidden = *rec.hidden;
      out += ',';
      out += InstructionSet::from_index(hidden.lambda_index).name();
      out += ',';
      if (hidden.v1.has_value()) out += std::to_string(*hidden.v1);
      out += ',';
      if (hidden.v2.has_value()) out += std::to_string(*hidden.v2);
    }
    out += '\n';
  }
  return out;
}

/// One JSON object per line, fixed key order; the audit keys appear only in
/// audit streams.
inline std::string records_to_ndjson(std::span<const TrialRecord> records) {
  std::string out;
  for (const TrialRecord& rec : records) {
    Json j;
    j["index"] = rec.index;
    j["tick"] = rec.tick;
    j["setting_1"] = std::string{label_of(rec.setting_1)};
    j["setting_2"] = std::string{label_of(rec.setting_2)};
    j["outcome_1"] = rec.outcome_1;
    j["outcome_2"] = rec.outcome_2;
    if (rec.hidden.has_value()) {
      j["lambda"] = InstructionSet::from_index(rec.hidden->lambda_index).name();
      j["v1"] = rec.hidden->v1.has_value() ? Json(*rec.hidden->v1) : Json(nullptr);
      j["v2"] = rec.hidden->v2.has_value() ? Json(*rec.hidden->v2) : Json(nullptr);
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline std::int64_t parse_i64(std::string_view text, std::string_view what) {
  try {
    std::size_t pos = 0;
    std::int64_t v = std::stoll(std::string(text), &pos);
    if (pos != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("records CSV: cannot parse " + std::string(what) + " from '" +
                      std::string(text) + "'");
  }
}

}  // namespace detail

inline std::vector<TrialRecord> records_from_csv(std::string_view text) {
  std::vector<TrialRecord> records;
  std::size_t pos = 0;
  bool audit = false;
  bool first = true;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? eol : eol - pos);
    pos = eol == std::string_view::npos ? text.size() : eol + 1;
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line == kRecordsAuditHeader) {
        audit = true;
        continue;
      }
      if (line == kRecordsHeader) continue;
      throw ConfigError("records CSV: unrecognized header '" + std::string(line) + "'");
    }
    auto fields = detail::split_csv_line(line);
    std::size_t expected = audit ? 9 : 6;
    if (fields.size() != expected) {
      throw ConfigError("records CSV: expected " + std::to_string(expected) + " fields, got " +
                        std::to_string(fields.size()));
    }
    TrialRecord rec;
    rec.index = detail::parse_i64(fields[0], "index");
    rec.tick = detail::parse_i64(fields[1], "tick");
    if (fields[2].size() != 1 || fields[3].size() != 1) {
      throw ConfigError("records CSV: settings must be single letters");
    }
    rec.setting_1 = setting_from_label(fields[2][0]);
    rec.setting_2 = setting_from_label(fields[3][0]);
    rec.outcome_1 = static_cast<Outcome>(detail::parse_i64(fields[4], "outcome_1"));
    rec.outcome_2 = static_cast<Outcome>(detail::parse_i64(fields[5], "outcome_2"));
    if (rec.outcome_1 * rec.outcome_1 != 1 || rec.outcome_2 * rec.outcome_2 != 1) {
      throw ConfigError("records CSV: outcomes must be +1 or -1");
    }
    if (audit) {
      HiddenInfo hidden;
      hidden.lambda_index = InstructionSet::from_name(fields[6]).index();
      if (!fields[7].empty()) hidden.v1 = static_cast<InstrumentValue>(detail::parse_i64(fields[7], "v1"));
      if (!fields[8].empty()) hidden.v2 = static_cast<InstrumentValue>(detail::parse_i64(fields[8], "v2"));
      rec.hidden = hidden;
    }
    records.push_back(rec);
  }
  return records;
}

// ---------------------------------------------------------------------------
// Product table as CSV
// ---------------------------------------------------------------------------

inline std::string product_table_to_csv(const ProductTable& table) {
  std::string out = "lambda";
  for (const SettingPair& p : kSettingPairs) {
    out += ',';
    out += pair_label(p);
  }
  out += '\n';
  for (const InstructionSet& set : all_instruction_sets()) {
    out += set.name();
    for (const SettingPair& p : kSettingPairs) {
      out += ',';
      out += std::to_string(table.entries(set.index() - 1, pair_index(p)));
    }
    out += '\n';
  }
  return out;
}

inline Json product_table_to_json(const ProductTable& table) {
  Json rows = Json::array();
  for (const InstructionSet& set : all_instruction_sets()) {
    Json row;
    row["lambda"] = set.name();
    for (const SettingPair& p : kSettingPairs) {
      row[pair_label(p)] = table.entries(set.index() - 1, pair_index(p));
    }
    rows.push_back(row);
  }
  Json j;
  j["columns"] = Json::array();
  for (const SettingPair& p : kSettingPairs) j["columns"].push_back(pair_label(p));
  j["rows"] = rows;
  return j;
}

// ---------------------------------------------------------------------------
// Analysis reports as JSON
// ---------------------------------------------------------------------------

inline Json json_of(const FeatureIReport& r) {
  Json j;
  j["equal_setting_trials"] = r.equal_setting_trials;
  j["same_color_fraction"] =
      r.same_color_fraction.has_value() ? json_number(*r.same_color_fraction) : Json(nullptr);
  return j;
}

inline Json json_of(const FeatureIIReport& r) {
  Json j;
  j["trials"] = r.trials;
  j["same_color_fraction"] = json_number(r.same_color_fraction);
  j["plus_fraction_s1"] = json_number(r.plus_fraction_s1);
  j["plus_fraction_s2"] = json_number(r.plus_fraction_s2);
  return j;
}

inline Json json_of(const CorrelationMatrix& m) {
  Json values, counts;
  for (const SettingPair& p : kSettingPairs) {
    int r = index_of(p.first), c = index_of(p.second);
    values[pair_label(p)] = json_number(m.values(r, c));
    counts[pair_label(p)] = m.counts(r, c);
  }
  Json j;
  j["values"] = values;
  j["counts"] = counts;
  return j;
}

inline Json json_of(const SampleabilityReport& r) {
  Json j;
  j["records"] = r.records;
  j["distinct_ticks"] = r.distinct_ticks;
  j["max_pairs_per_tick"] = r.max_pairs_per_tick;
  return j;
}

inline Json json_of(const ReorderReport& r) {
  Json per_set;
  for (const InstructionSet& set : all_instruction_sets()) {
    per_set[std::string(set.name())] = r.complete_rows_per_set[set.index() - 1];
  }
  Json j;
  j["rows"] = static_cast<std::int64_t>(r.rows.size());
  j["complete_rows_total"] = r.complete_rows_total;
  j["complete_rows_per_set"] = per_set;
  j["leftover_records"] = r.leftover_records;
  j["leftover_fraction"] = json_number(r.leftover_fraction);
  j["total_records"] = r.total_records;
  return j;
}

inline Json json_of(const RowAuditReport& r) {
  Json j;
  j["complete_rows"] = r.complete_rows;
  j["instrument_values_present"] = r.instrument_values_present;
  j["uniform_station1_fraction"] = json_number(r.uniform_station1_fraction);
  j["uniform_station2_fraction"] = json_number(r.uniform_station2_fraction);
  j["uniform_both_fraction"] = json_number(r.uniform_both_fraction);
  j["row_sum_in_identity_fraction"] = json_number(r.row_sum_in_identity_fraction);
  j["row_sum_violations"] = r.row_sum_violations;
  j["mean_row_average"] = json_number(r.mean_row_average);
  return j;
}

inline Json json_of(const DensityTestReport& r) {
  Json pair_counts;
  for (const SettingPair& p : kSettingPairs) {
    pair_counts[pair_label(p)] = r.pair_counts[pair_index(p)];
  }
  Json j;
  j["statistic"] = json_number(r.statistic);
  j["dof"] = r.dof;
  j["p_value"] = json_number(r.p_value);
  j["alpha"] = json_number(r.alpha);
  j["reject"] = r.reject;
  j["statistic_diagonal"] = json_number(r.statistic_diagonal);
  j["dof_diagonal"] = r.dof_diagonal;
  j["categories_diagonal"] = r.categories_diagonal;
  j["statistic_off_diagonal"] = json_number(r.statistic_off_diagonal);
  j["dof_off_diagonal"] = r.dof_off_diagonal;
  j["categories_off_diagonal"] = r.categories_off_diagonal;
  j["pair_counts"] = pair_counts;
  return j;
}

/// Reordered rows flattened to CSV: one line per filled cell.
inline std::string reordered_rows_to_csv(const ReorderReport& reordered) {
  std::string out = "row,lambda,complete,pair,index,tick,product\n";
  std::int64_t row_id = 0;
  for (const ReorderedRow& row : reordered.rows) {
    for (const SettingPair& p : kSettingPairs) {
      const auto& cell = row.cells[pair_index(p)];
      if (!cell.has_value()) continue;
      out += std::to_string(row_id);
      out += ',';
      out += InstructionSet::from_index(row.lambda_index).name();
      out += ',';
      out += row.complete() ? '1' : '0';
      out += ',';
      out += pair_label(p);
      out += ',';
      out += std::to_string(cell->index);
      out += ',';
      out += std::to_string(cell->tick);
      out += ',';
      out += std::to_string(cell->outcome_1 * cell->outcome_2);
      out += '\n';
    }
    ++row_id;
  }
  return out;
}

/// Instrument stream dump for replay verification.
inline std::string streams_to_csv(const InstrumentStacks& s1, const InstrumentStacks& s2,
                                  Tick ticks) {
  std::string out = "tick,setting,value_s1,value_s2\n";
  for (Tick t = 0; t < ticks; ++t) {
    for (Setting s : kSettings) {
      out += std::to_string(t);
      out += ',';
      out += label_of(s);
      out += ',';
      out += std::to_string(s1.value(s, t));
      out += ',';
      out += std::to_string(s2.value(s, t));
      out += '\n';
    }
  }
  return out;
}

}  // namespace epr
