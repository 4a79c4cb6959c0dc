#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

#include <Eigen/Core>

#include "epr/core_tables.hpp"
#include "epr/engine.hpp"
#include "epr/errors.hpp"
#include "epr/stats.hpp"

namespace epr {

// ---------------------------------------------------------------------------
// Feature checks
// ---------------------------------------------------------------------------

struct FeatureIReport {
  std::int64_t equal_setting_trials = 0;
  std::optional<double> same_color_fraction;  // absent when no equal-setting trials
};

/// Same-colour fraction restricted to trials measured with equal settings.
inline FeatureIReport feature_i_check(std::span<const TrialRecord> records) {
  if (records.empty()) throw PreconditionError("feature_i_check: empty record list");
  FeatureIReport report;
  std::int64_t same = 0;
  for (const TrialRecord& rec : records) {
    if (rec.setting_1 != rec.setting_2) continue;
    ++report.equal_setting_trials;
    if (rec.outcome_1 == rec.outcome_2) ++same;
  }
  if (report.equal_setting_trials > 0) {
    report.same_color_fraction =
        static_cast<double>(same) / static_cast<double>(report.equal_setting_trials);
  }
  return report;
}

struct FeatureIIReport {
  std::int64_t trials = 0;
  double same_color_fraction = 0.0;
  double plus_fraction_s1 = 0.0;  // marginal frequency of +1 at station 1
  double plus_fraction_s2 = 0.0;
};

/// Same-colour fraction over all trials, without reference to the settings,
/// plus per-station outcome marginals.
inline FeatureIIReport feature_ii_check(std::span<const TrialRecord> records) {
  if (records.empty()) throw PreconditionError("feature_ii_check: empty record list");
  FeatureIIReport report;
  report.trials = static_cast<std::int64_t>(records.size());
  std::int64_t same = 0, plus1 = 0, plus2 = 0;
  for (const TrialRecord& rec : records) {
    if (rec.outcome_1 == rec.outcome_2) ++same;
    if (rec.outcome_1 > 0) ++plus1;
    if (rec.outcome_2 > 0) ++plus2;
  }
  double n = static_cast<double>(report.trials);
  report.same_color_fraction = static_cast<double>(same) / n;
  report.plus_fraction_s1 = static_cast<double>(plus1) / n;
  report.plus_fraction_s2 = static_cast<double>(plus2) / n;
  return report;
}

// ---------------------------------------------------------------------------
// Empirical pair correlations
// ---------------------------------------------------------------------------

/// Empirical <A_i B_j> per ordered pair. Cells never observed have count 0
/// and value NaN (serialized as absent).
struct CorrelationMatrix {
  Eigen::Matrix3d values;
  Eigen::Matrix<std::int64_t, 3, 3> counts;
};

inline CorrelationMatrix pair_correlations(std::span<const TrialRecord> records) {
  CorrelationMatrix out;
  out.counts.setZero();
  Eigen::Matrix<std::int64_t, 3, 3> sums;
  sums.setZero();
  for (const TrialRecord& rec : records) {
    int r = index_of(rec.setting_1);
    int c = index_of(rec.setting_2);
    out.counts(r, c) += 1;
    sums(r, c) += rec.outcome_1 * rec.outcome_2;
  }
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      out.values(r, c) = out.counts(r, c) == 0
                             ? std::numeric_limits<double>::quiet_NaN()
                             : static_cast<double>(sums(r, c)) / static_cast<double>(out.counts(r, c));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reordering
// ---------------------------------------------------------------------------

/// A notional table row: up to nine records sharing one source value, one per
/// ordered setting pair.
struct ReorderedRow {
  int lambda_index = 1;
  std::array<std::optional<TrialRecord>, 9> cells;  // indexed by pair_index
  int filled = 0;
  bool complete() const { return filled == 9; }
};

struct ReorderReport {
  std::vector<ReorderedRow> rows;
  std::array<std::int64_t, 8> complete_rows_per_set = {};
  std::int64_t complete_rows_total = 0;
  std::int64_t leftover_records = 0;  // records sitting in incomplete rows
  double leftover_fraction = 0.0;
  std::int64_t total_records = 0;
};

/// Greedy regrouping of an audited record stream into rows: in time order,
/// each record joins the first row of its source value that still lacks its
/// setting pair. Every record is assigned exactly once; nothing is dropped.
inline ReorderReport reorder(std::span<const TrialRecord> records) {
  ReorderReport report;
  report.total_records = static_cast<std::int64_t>(records.size());

  // first_open[s][p]: index into per-set row list of the first row whose pair
  // slot p is still free; rows fill in creation order per pair.
  std::array<std::vector<std::size_t>, 8> rows_of_set;
  std::array<std::array<std::size_t, 9>, 8> next_row_for_pair = {};

  for (const TrialRecord& rec : records) {
    if (!rec.hidden.has_value()) {
      throw PreconditionError("reorder requires records with the audit payload");
    }
    int s = rec.hidden->lambda_index - 1;
    int p = pair_index(rec.setting_1, rec.setting_2);
    std::size_t slot = next_row_for_pair[s][p]++;
    auto& row_ids = rows_of_set[s];
    if (slot == row_ids.size()) {
      row_ids.push_back(report.rows.size());
      report.rows.push_back(ReorderedRow{rec.hidden->lambda_index, {}, 0});
    } else if (slot > row_ids.size()) {
      // next_row_for_pair counts per pair; a gap means another pair already
      // created the row, so slot <= row_ids.size() always holds.
      throw std::logic_error("reorder bookkeeping out of sync");
    }
    ReorderedRow& row = report.rows[row_ids[slot]];
    row.cells[p] = rec;
    row.filled += 1;
  }

  for (const ReorderedRow& row : report.rows) {
    if (row.complete()) {
      report.complete_rows_per_set[row.lambda_index - 1] += 1;
      report.complete_rows_total += 1;
    } else {
      report.leftover_records += row.filled;
    }
  }
  report.leftover_fraction =
      report.total_records == 0
          ? 0.0
          : static_cast<double>(report.leftover_records) / static_cast<double>(report.total_records);
  return report;
}

// ---------------------------------------------------------------------------
// Row-level consistency audit
// ---------------------------------------------------------------------------

struct RowAuditReport {
  std::int64_t complete_rows = 0;
  bool instrument_values_present = false;
  // A row is "uniform" for a station when, per setting, every recorded
  // instrument value at that (station, setting) coincides. Vacuously true
  // without instrument values.
  double uniform_station1_fraction = 0.0;
  double uniform_station2_fraction = 0.0;
  double uniform_both_fraction = 0.0;
  double row_sum_in_identity_fraction = 0.0;  // fraction with row sum in {1, 9}
  std::int64_t row_sum_violations = 0;
  double mean_row_average = 0.0;  // mean over complete rows of row_sum / 9
};

/// Checks, per complete row, whether the nine cells behave like one shared
/// instrument configuration (they need not) and whether the row sum of the
/// nine outcome products lands in {1, 9} (it need not either, once outcomes
/// carry time dependence).
inline RowAuditReport row_consistency_audit(const ReorderReport& reordered) {
  RowAuditReport report;
  std::int64_t uniform1 = 0, uniform2 = 0, uniform_both = 0, in_identity = 0;
  double sum_row_avg = 0.0;

  for (const ReorderedRow& row : reordered.rows) {
    if (!row.complete()) continue;
    ++report.complete_rows;

    int row_sum = 0;
    std::array<std::optional<InstrumentValue>, 3> seen1, seen2;
    bool ok1 = true, ok2 = true;
    for (const SettingPair& p : kSettingPairs) {
      const TrialRecord& rec = *row.cells[pair_index(p)];
      row_sum += rec.outcome_1 * rec.outcome_2;
      const HiddenInfo& hidden = *rec.hidden;
      if (hidden.v1.has_value()) {
        report.instrument_values_present = true;
        auto& slot = seen1[index_of(p.first)];
        if (!slot.has_value()) slot = hidden.v1;
        else if (*slot != *hidden.v1) ok1 = false;
      }
      if (hidden.v2.has_value()) {
        auto& slot = seen2[index_of(p.second)];
        if (!slot.has_value()) slot = hidden.v2;
        else if (*slot != *hidden.v2) ok2 = false;
      }
    }
    if (ok1) ++uniform1;
    if (ok2) ++uniform2;
    if (ok1 && ok2) ++uniform_both;
    if (row_sum == 1 || row_sum == 9) ++in_identity;
    else ++report.row_sum_violations;
    sum_row_avg += static_cast<double>(row_sum) / 9.0;
  }

  if (report.complete_rows > 0) {
    double n = static_cast<double>(report.complete_rows);
    report.uniform_station1_fraction = static_cast<double>(uniform1) / n;
    report.uniform_station2_fraction = static_cast<double>(uniform2) / n;
    report.uniform_both_fraction = static_cast<double>(uniform_both) / n;
    report.row_sum_in_identity_fraction = static_cast<double>(in_identity) / n;
    report.mean_row_average = sum_row_avg / n;
  }
  return report;
}

/// Records contained in complete rows, flattened back into time order.
/// Reordering is a partition, so statistics over this stream should match the
/// full run up to the leftover records.
inline std::vector<TrialRecord> complete_row_records(const ReorderReport& reordered) {
  std::vector<TrialRecord> out;
  for (const ReorderedRow& row : reordered.rows) {
    if (!row.complete()) continue;
    for (const auto& cell : row.cells) out.push_back(*cell);
  }
  std::sort(out.begin(), out.end(),
            [](const TrialRecord& x, const TrialRecord& y) { return x.tick < y.tick; });
  return out;
}

// ---------------------------------------------------------------------------
// Setting-dependence of the hidden-variable density
// ---------------------------------------------------------------------------

struct DensityTestReport {
  double statistic = 0.0;   // sum of the two stratum statistics
  std::int64_t dof = 0;     // (3-1)(C_diag-1) + (6-1)(C_off-1)
  double p_value = 1.0;
  double alpha = 0.01;
  bool reject = false;
  double statistic_diagonal = 0.0;
  double statistic_off_diagonal = 0.0;
  std::int64_t dof_diagonal = 0;
  std::int64_t dof_off_diagonal = 0;
  std::int64_t categories_diagonal = 0;      // distinct (lambda, v1, v2) cells, equal settings
  std::int64_t categories_off_diagonal = 0;  // same, unequal settings
  std::array<std::int64_t, 9> pair_counts = {};
};

namespace detail {

using JointCell = std::tuple<int, int, int>;  // lambda index, v1 (-1 if absent), v2

template <std::size_t NPairs>
struct StratumResult {
  double statistic = 0.0;
  std::int64_t dof = 0;
  std::int64_t categories = 0;
};

/// Pearson chi-squared homogeneity statistic for one stratum, with expected
/// counts from the pooled margins.
template <std::size_t NPairs>
StratumResult<NPairs> stratum_chi_squared(
    const std::map<JointCell, std::array<std::int64_t, NPairs>>& table,
    const std::array<std::int64_t, NPairs>& pair_totals) {
  StratumResult<NPairs> result;
  result.categories = static_cast<std::int64_t>(table.size());
  std::int64_t total = 0;
  for (std::int64_t n : pair_totals) total += n;
  for (const auto& [cell, counts] : table) {
    std::int64_t col_total = 0;
    for (std::int64_t n : counts) col_total += n;
    for (std::size_t p = 0; p < NPairs; ++p) {
      double expected = static_cast<double>(pair_totals[p]) * static_cast<double>(col_total) /
                        static_cast<double>(total);
      if (expected <= 0.0) continue;
      double diff = static_cast<double>(counts[p]) - expected;
      result.statistic += diff * diff / expected;
    }
  }
  result.dof = static_cast<std::int64_t>(NPairs - 1) * (result.categories - 1);
  return result;
}

}  // namespace detail

/// Chi-squared homogeneity test of the joint law of (lambda, v1, v2) across
/// setting pairs, stratified into the three equal-setting pairs and the six
/// unequal-setting pairs. The strata are tested separately (pooled-expected
/// chi-squared each) and combined: statistic = X2_diag + X2_off, dof =
/// (3-1)(C_diag-1) + (6-1)(C_off-1).
///
/// The stratification is forced by synchrony: identically arranged stacks
/// make v1 = v2 on every equal-setting trial, so the equal- and
/// unequal-setting joints differ structurally for every synchronized model.
/// Within each stratum, setting-independence of the hidden variables is a
/// real null hypothesis. Deterministic given the records.
inline DensityTestReport density_dependence_test(std::span<const TrialRecord> records,
                                                 double alpha = 0.01) {
  DensityTestReport report;
  report.alpha = alpha;

  std::map<detail::JointCell, std::array<std::int64_t, 3>> diag_table;
  std::map<detail::JointCell, std::array<std::int64_t, 6>> off_table;
  std::array<std::int64_t, 3> diag_totals = {};
  std::array<std::int64_t, 6> off_totals = {};
  std::array<std::int64_t, 9> pair_totals = {};

  // Off-diagonal pairs keep their canonical relative order.
  std::array<int, 9> off_slot = {};
  {
    int next = 0;
    for (int p = 0; p < 9; ++p) {
      off_slot[p] = kSettingPairs[p].first == kSettingPairs[p].second ? -1 : next++;
    }
  }

  for (const TrialRecord& rec : records) {
    if (!rec.hidden.has_value()) {
      throw PreconditionError("density_dependence_test requires records with the audit payload");
    }
    const HiddenInfo& hidden = *rec.hidden;
    detail::JointCell cell{hidden.lambda_index, hidden.v1.value_or(-1), hidden.v2.value_or(-1)};
    int p = pair_index(rec.setting_1, rec.setting_2);
    pair_totals[p] += 1;
    if (rec.setting_1 == rec.setting_2) {
      int slot = index_of(rec.setting_1);
      auto [it, inserted] = diag_table.try_emplace(cell);
      if (inserted) it->second.fill(0);
      it->second[slot] += 1;
      diag_totals[slot] += 1;
    } else {
      int slot = off_slot[p];
      auto [it, inserted] = off_table.try_emplace(cell);
      if (inserted) it->second.fill(0);
      it->second[slot] += 1;
      off_totals[slot] += 1;
    }
  }

  for (int p = 0; p < 9; ++p) {
    if (pair_totals[p] < 100) {
      throw PreconditionError("density_dependence_test: pair " + pair_label(kSettingPairs[p]) +
                              " observed " + std::to_string(pair_totals[p]) +
                              " times, need >= 100");
    }
  }
  report.pair_counts = pair_totals;

  auto diag = detail::stratum_chi_squared(diag_table, diag_totals);
  auto off = detail::stratum_chi_squared(off_table, off_totals);
  report.statistic_diagonal = diag.statistic;
  report.statistic_off_diagonal = off.statistic;
  report.dof_diagonal = diag.dof;
  report.dof_off_diagonal = off.dof;
  report.categories_diagonal = diag.categories;
  report.categories_off_diagonal = off.categories;
  report.statistic = diag.statistic + off.statistic;
  report.dof = diag.dof + off.dof;
  report.p_value = report.dof < 1 ? 1.0 : chi_squared_tail(report.statistic, report.dof);
  report.reject = report.p_value < alpha;
  return report;
}

}  // namespace epr
