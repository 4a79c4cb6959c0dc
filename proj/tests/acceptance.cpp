// Acceptance suite: runs every headline criterion of the simulator at its
// stated tolerance and prints one pass/fail line per criterion. Exit code is
// the number of failed criteria.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "epr/analysis.hpp"
#include "epr/core_tables.hpp"
#include "epr/engine.hpp"
#include "epr/io.hpp"
#include "epr/models.hpp"
#include "epr/random.hpp"
#include "epr/stats.hpp"

using namespace epr;

namespace {

struct Outcomes {
  bool ok = true;
  std::ostringstream detail;

  void require(bool condition, const std::string& what) {
    if (!condition) {
      ok = false;
      detail << "  FAILED: " << what << "\n";
    }
  }
  void note(const std::string& what) { detail << "  " << what << "\n"; }
};

ExperimentConfig mermin_config(std::int64_t trials, std::uint64_t seed, bool audit = false) {
  ExperimentConfig config;
  config.trials = trials;
  config.seeds.master = seed;
  config.audit = audit;
  return config;
}

ExperimentConfig hp_config(std::int64_t trials, std::uint64_t seed, int alphabet = 2,
                           bool audit = false) {
  ExperimentConfig config;
  config.trials = trials;
  config.model.kind = ModelSelector::Kind::hp;
  config.model.stacks.alphabet = alphabet;
  config.seeds.master = seed;
  config.audit = audit;
  return config;
}

// --------------------------------------------------------------------------
// 1. The 8x9 product table, cell for cell.
// --------------------------------------------------------------------------
void criterion_table(Outcomes& out) {
  constexpr int kExpected[8][9] = {
      {+1, +1, +1, +1, +1, +1, +1, +1, +1},  // RRR
      {+1, +1, -1, +1, +1, -1, -1, -1, +1},  // RRG
      {+1, -1, +1, -1, +1, -1, +1, -1, +1},  // RGR
      {+1, -1, -1, -1, +1, +1, -1, +1, +1},  // GRR
      {+1, +1, -1, +1, +1, -1, -1, -1, +1},  // GGR
      {+1, -1, +1, -1, +1, -1, +1, -1, +1},  // GRG
      {+1, -1, -1, -1, +1, +1, -1, +1, +1},  // RGG
      {+1, +1, +1, +1, +1, +1, +1, +1, +1},  // GGG
  };
  ProductTable table = product_table();
  int mismatches = 0;
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 9; ++c) {
      if (table.entries(r, c) != kExpected[r][c]) ++mismatches;
    }
  }
  out.require(mismatches == 0, std::to_string(mismatches) + " of 72 cells differ");

  // The CSV surface serves the same cells in the same order.
  std::string csv = product_table_to_csv(table);
  std::string expected_csv = "lambda,aa,ab,ac,ba,bb,bc,ca,cb,cc\n";
  const char* names[8] = {"RRR", "RRG", "RGR", "GRR", "GGR", "GRG", "RGG", "GGG"};
  for (int r = 0; r < 8; ++r) {
    expected_csv += names[r];
    for (int c = 0; c < 9; ++c) {
      expected_csv += ',';
      expected_csv += std::to_string(kExpected[r][c]);
    }
    expected_csv += '\n';
  }
  out.require(csv == expected_csv, "CSV rendering differs from the expected table");
}

// --------------------------------------------------------------------------
// 2. Row sums in {1, 9}; row averages bounded below by 1/9. Exact.
// --------------------------------------------------------------------------
void criterion_row_identities(Outcomes& out) {
  for (const InstructionSet& set : all_instruction_sets()) {
    int sum = row_sum(set);
    out.require(sum == 1 || sum == 9,
                std::string(set.name()) + " row sum " + std::to_string(sum));
    out.require(row_average(set) >= Rational(1, 9),
                std::string(set.name()) + " row average below 1/9");
    int colors = instruction_outcome(set, Setting::a) + instruction_outcome(set, Setting::b) +
                 instruction_outcome(set, Setting::c);
    out.require(sum == colors * colors, "square identity violated");
  }
}

// --------------------------------------------------------------------------
// 3. Five-ninths bound, exact rational arithmetic.
// --------------------------------------------------------------------------
void criterion_five_ninths(Outcomes& out) {
  auto uniform_pairs = SettingPairDistribution::uniform();

  auto mixed = exact_statistics<Rational>(SourceDistribution::uniform_mixed(), uniform_pairs);
  out.require(mixed.same_color_prob == Rational(5, 9),
              "uniform mixed sets gave " + mixed.same_color_prob.str());

  for (const InstructionSet& set : all_instruction_sets()) {
    auto vertex = exact_statistics<Rational>(SourceDistribution::point(set), uniform_pairs);
    out.require(vertex.same_color_prob >= Rational(5, 9),
                std::string("vertex ") + std::string(set.name()) + " below 5/9");
  }

  RandomStream stream(500);
  for (int trial = 0; trial < 100; ++trial) {
    std::array<Rational, 8> p;
    std::array<std::int64_t, 8> w;
    std::int64_t total = 0;
    for (auto& weight : w) {
      weight = static_cast<std::int64_t>(stream.next_below(10000)) + 1;
      total += weight;
    }
    for (int s = 0; s < 8; ++s) p[s] = Rational(w[s], total);
    auto stats = exact_statistics<Rational>(SourceDistribution(p), uniform_pairs);
    out.require(stats.same_color_prob >= Rational(5, 9),
                "random distribution " + std::to_string(trial) + " gave " +
                    stats.same_color_prob.str());
  }
}

// --------------------------------------------------------------------------
// 4. Monte Carlo vs the 72-point oracle at N = 1e6.
// --------------------------------------------------------------------------
void criterion_monte_carlo(Outcomes& out) {
  const std::int64_t n = 1000000;
  auto records = run_experiment(mermin_config(n, 20260401));
  std::int64_t same = 0;
  for (const TrialRecord& rec : records) {
    if (rec.outcome_1 == rec.outcome_2) ++same;
  }
  double fraction = static_cast<double>(same) / static_cast<double>(n);
  double expected = 2.0 / 3.0;
  double sigma = binomial_sigma(expected, n);
  out.note("same-color fraction " + format_sig12(fraction) + " vs 2/3, sigma " +
           format_sig12(sigma));
  out.require(std::abs(fraction - expected) <= 3 * sigma, "same-color fraction beyond 3 sigma");

  auto corr = pair_correlations(records);
  auto oracle =
      exact_statistics<double>(SourceDistribution::uniform(), SettingPairDistribution::uniform());
  for (Setting i : kSettings) {
    for (Setting j : kSettings) {
      int r = index_of(i), c = index_of(j);
      double e = oracle.pair_expectations(r, c);
      double cell_sigma = std::sqrt((1.0 - e * e) / static_cast<double>(corr.counts(r, c)));
      bool within = cell_sigma == 0.0 ? corr.values(r, c) == e
                                      : std::abs(corr.values(r, c) - e) <= 3 * cell_sigma;
      out.require(within, "pair (" + std::string{label_of(i), label_of(j)} + ") " +
                              format_sig12(corr.values(r, c)) + " vs " + format_sig12(e));
    }
  }
}

// --------------------------------------------------------------------------
// 5. Equal-setting exactness at N = 1e6 for both local models.
// --------------------------------------------------------------------------
void criterion_equal_setting_exact(Outcomes& out) {
  auto check = [&out](const ExperimentConfig& config, const std::string& name) {
    auto records = run_experiment(config);
    auto fi = feature_i_check(records);
    out.note(name + ": " + std::to_string(fi.equal_setting_trials) + " equal-setting trials");
    out.require(fi.same_color_fraction.has_value() && *fi.same_color_fraction == 1.0,
                name + " equal-setting fraction not exactly 1");
  };
  check(mermin_config(1000000, 7001), "mermin");
  check(hp_config(1000000, 7002), "hp");
}

// --------------------------------------------------------------------------
// 6. The nonlocal reference data sit at 1/2, far below 5/9.
// --------------------------------------------------------------------------
void criterion_reference_incompatibility(Outcomes& out) {
  const std::int64_t n = 1000000;
  ExperimentConfig config;
  config.trials = n;
  config.model.kind = ModelSelector::Kind::qm_reference;
  config.seeds.master = 606;
  auto records = run_experiment(config);
  auto fii = feature_ii_check(records);
  double sigma = binomial_sigma(0.5, n);
  out.note("same-color fraction " + format_sig12(fii.same_color_fraction));
  out.require(std::abs(fii.same_color_fraction - 0.5) <= 3 * sigma,
              "fraction beyond 3 sigma of 1/2");
  double gap_sigmas = (5.0 / 9.0 - fii.same_color_fraction) / sigma;
  out.note("below the 5/9 bound by " + format_sig12(gap_sigmas) + " sigma");
  out.require(gap_sigmas > 10.0, "bound violation below 10 sigma");
}

// --------------------------------------------------------------------------
// 7. Reordering at N = 7.2e5: row yield, leftovers, row-sum identity.
// --------------------------------------------------------------------------
void criterion_reordering(Outcomes& out) {
  auto records = run_experiment(mermin_config(720000, 888, true));
  auto reordered = reorder(records);
  for (const InstructionSet& set : all_instruction_sets()) {
    std::int64_t complete = reordered.complete_rows_per_set[set.index() - 1];
    out.require(complete >= 9500 && complete <= 10500,
                std::string(set.name()) + " complete rows " + std::to_string(complete) +
                    " outside [9500, 10500]");
  }
  out.note("leftover fraction " + format_sig12(reordered.leftover_fraction));
  // Complete rows per source value are capped by the scarcest of its nine
  // pair counts, so the expected leftover at this N is about 1.5%
  // (72 * sigma * E[max of 9 standard normals] / N with sigma ~ sqrt(N/72));
  // a sub-1% leftover needs N of about 1.6e6. The bound is asserted as
  // stated and is expected to fail at this N.
  out.require(reordered.leftover_fraction < 0.01,
              "leftover fraction " + format_sig12(reordered.leftover_fraction) + " >= 1%");

  auto audit = row_consistency_audit(reordered);
  out.require(audit.row_sum_violations == 0,
              std::to_string(audit.row_sum_violations) + " complete rows outside {1, 9}");
  out.require(audit.mean_row_average >= 1.0 / 9.0, "mean row average below 1/9");
}

// --------------------------------------------------------------------------
// 8. Reordered hp rows: instrument values refuse to be row-uniform, and the
//    row-sum identity fails somewhere. Oracle probabilities are enumerated
//    from the stream structure at runtime before the thresholds are applied.
// --------------------------------------------------------------------------
struct UniformityOracle {
  double p_station;
  double p_both;
};

// Exact enumeration over the 15 distinct (setting, tick) coordinates a
// complete row reads with V = 2: per setting, the three station-1 reads and
// the three station-2 reads share the diagonal coordinate.
UniformityOracle enumerate_uniformity_oracle() {
  std::map<std::pair<int, int>, int> position;  // (setting, cell) -> bit index
  auto coord = [&position](int setting, int cell) {
    auto [it, inserted] = position.try_emplace({setting, cell}, static_cast<int>(position.size()));
    return it->second;
  };
  // Cells are the nine ordered pairs; station 1 reads (i, cell), station 2
  // reads (j, cell).
  std::array<std::array<int, 3>, 3> s1_reads{}, s2_reads{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      int cell = 3 * i + j;
      s1_reads[i][j] = coord(i, cell);
      s2_reads[j][i] = coord(j, cell);
    }
  }
  const int bits = static_cast<int>(position.size());  // 15
  std::int64_t station_hits = 0, both_hits = 0;
  const std::int64_t total = std::int64_t(1) << bits;
  for (std::int64_t assignment = 0; assignment < total; ++assignment) {
    auto value = [assignment](int k) { return (assignment >> k) & 1; };
    bool ok1 = true, ok2 = true;
    for (int s = 0; s < 3; ++s) {
      ok1 = ok1 && value(s1_reads[s][0]) == value(s1_reads[s][1]) &&
            value(s1_reads[s][1]) == value(s1_reads[s][2]);
      ok2 = ok2 && value(s2_reads[s][0]) == value(s2_reads[s][1]) &&
            value(s2_reads[s][1]) == value(s2_reads[s][2]);
    }
    if (ok1) ++station_hits;
    if (ok1 && ok2) ++both_hits;
  }
  return {static_cast<double>(station_hits) / static_cast<double>(total),
          static_cast<double>(both_hits) / static_cast<double>(total)};
}

void criterion_hp_row_audit(Outcomes& out) {
  UniformityOracle oracle = enumerate_uniformity_oracle();
  out.note("enumerated oracle: per-station " + format_sig12(oracle.p_station) + ", both " +
           format_sig12(oracle.p_both));
  out.require(std::abs(oracle.p_station - 1.0 / 64.0) < 1e-15, "oracle sanity: expected 1/64");
  out.require(std::abs(oracle.p_both - 1.0 / 4096.0) < 1e-15, "oracle sanity: expected 1/4096");

  auto records = run_experiment(hp_config(150000, 999, 2, true));
  auto reordered = reorder(records);
  auto audit = row_consistency_audit(reordered);
  out.note(std::to_string(audit.complete_rows) + " complete rows");
  out.require(audit.complete_rows >= 1000, "need at least 1000 complete rows");

  double n = static_cast<double>(audit.complete_rows);
  double sigma_station = std::sqrt(oracle.p_station * (1 - oracle.p_station) / n);
  double sigma_both = std::sqrt(oracle.p_both * (1 - oracle.p_both) / n);
  out.note("uniform fractions: s1 " + format_sig12(audit.uniform_station1_fraction) + ", s2 " +
           format_sig12(audit.uniform_station2_fraction) + ", both " +
           format_sig12(audit.uniform_both_fraction));
  out.require(audit.uniform_station1_fraction <= oracle.p_station + 3 * sigma_station,
              "station-1 uniform fraction above oracle + 3 sigma");
  out.require(audit.uniform_station2_fraction <= oracle.p_station + 3 * sigma_station,
              "station-2 uniform fraction above oracle + 3 sigma");
  out.require(audit.uniform_both_fraction <= oracle.p_both + 3 * sigma_both,
              "both-station uniform fraction above oracle + 3 sigma");

  out.note(std::to_string(audit.row_sum_violations) + " row-sum violations");
  out.require(audit.row_sum_violations >= 1, "no complete row violated the row-sum identity");
}

// --------------------------------------------------------------------------
// 9. Stack synchrony, and periodic shifts as the identity.
// --------------------------------------------------------------------------
void criterion_synchrony(Outcomes& out) {
  RandomStream sample(31337);
  for (StackAlgorithm::Kind kind :
       {StackAlgorithm::Kind::iid_stream, StackAlgorithm::Kind::stroboscopic_periodic,
        StackAlgorithm::Kind::history_dependent}) {
    StackAlgorithm algo;
    algo.kind = kind;
    algo.alphabet = 4;
    algo.period = 12;
    auto [s1, s2] = build_synchronized_stacks(algo, 424242);
    // The history recurrence walks every tick, so keep its range moderate.
    Tick range = kind == StackAlgorithm::Kind::history_dependent ? 20000 : 1000000;
    int mismatches = 0;
    for (int k = 0; k < 10000; ++k) {
      Tick t = static_cast<Tick>(sample.next_below(static_cast<std::uint64_t>(range)));
      Setting s = kSettings[sample.next_below(3)];
      if (s1.value(s, t) != s2.value(s, t)) ++mismatches;
    }
    out.require(mismatches == 0, std::string(stack_kind_name(kind)) + ": " +
                                     std::to_string(mismatches) + " synchrony exceptions");
  }

  StackAlgorithm strobo;
  strobo.kind = StackAlgorithm::Kind::stroboscopic_periodic;
  strobo.alphabet = 4;
  strobo.period = 12;
  auto [p1, p2] = build_synchronized_stacks(strobo, 77);
  InstrumentStacks shifted = apply_time_shift(p1, strobo.period);
  int mismatches = 0;
  for (int k = 0; k < 10000; ++k) {
    Tick t = static_cast<Tick>(sample.next_below(1000000));
    Setting s = kSettings[sample.next_below(3)];
    if (shifted.value(s, t) != p1.value(s, t) || shifted.value(s, t) != p2.value(s, t)) {
      ++mismatches;
    }
  }
  out.require(mismatches == 0,
              std::to_string(mismatches) + " period-shift synchrony exceptions");
}

// --------------------------------------------------------------------------
// 10. Locality firewall at N = 1e5 for both local models.
// --------------------------------------------------------------------------
void criterion_firewall(Outcomes& out) {
  auto check = [&out](ExperimentConfig config, const std::string& name) {
    config.audit = true;
    ExperimentConfig tweaked = config;
    tweaked.seeds.settings_s2 = 0xFEEDFACEULL;
    auto base = run_experiment(config);
    auto other = run_experiment(tweaked);
    std::int64_t mismatches = 0;
    bool station2_differs = false;
    for (std::size_t k = 0; k < base.size(); ++k) {
      if (base[k].setting_1 != other[k].setting_1 || base[k].outcome_1 != other[k].outcome_1) {
        ++mismatches;
      }
      if (base[k].setting_2 != other[k].setting_2) station2_differs = true;
    }
    out.require(mismatches == 0,
                name + ": " + std::to_string(mismatches) + " station-1 deviations");
    out.require(station2_differs, name + ": fixture did not vary station 2");
  };
  check(mermin_config(100000, 1010), "mermin");
  check(hp_config(100000, 1010), "hp");
}

// --------------------------------------------------------------------------
// 11. Density dependence: the engineered stroboscopic fixture is rejected,
//     the iid configuration passes a 20-seed calibration.
// --------------------------------------------------------------------------
void criterion_density(Outcomes& out) {
  ExperimentConfig fixture = hp_config(100000, 2711, 4, true);
  fixture.model.stacks.kind = StackAlgorithm::Kind::stroboscopic_periodic;
  fixture.model.stacks.period = 12;
  fixture.settings_mode = SettingsMode::phase_locked;
  auto report = density_dependence_test(run_experiment(fixture), 0.01);
  out.note("fixture p-value " + format_sig12(report.p_value));
  out.require(report.reject, "engineered fixture not rejected at alpha = 0.01");

  int rejections = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto calm = density_dependence_test(run_experiment(hp_config(100000, seed, 2, true)), 0.01);
    if (calm.reject) ++rejections;
  }
  out.note(std::to_string(rejections) + " of 20 calibration seeds rejected");
  out.require(rejections <= 1, "more than 1 of 20 homogeneous runs rejected");
}

// --------------------------------------------------------------------------
// 12. No collapse with varying stacks; exact collapse with constant stacks.
// --------------------------------------------------------------------------
void criterion_collapse(Outcomes& out) {
  auto records = run_experiment(hp_config(10000, 3131, 2, true));
  std::map<std::pair<int, int>, std::set<Outcome>> seen;
  for (const TrialRecord& rec : records) {
    seen[{index_of(rec.setting_1), rec.hidden->lambda_index}].insert(rec.outcome_1);
  }
  bool varies = false;
  for (const auto& [key, outcomes] : seen) {
    if (outcomes.size() > 1) varies = true;
  }
  out.require(varies, "no (setting, source) combination produced both outcomes");

  ExperimentConfig constant = hp_config(10000, 3131, 1, true);
  ExperimentConfig source_only = mermin_config(10000, 3131, true);
  auto hp_records = run_experiment(constant);
  auto mermin_records = run_experiment(source_only);
  std::int64_t mismatches = 0;
  for (std::size_t k = 0; k < hp_records.size(); ++k) {
    if (hp_records[k].outcome_1 != mermin_records[k].outcome_1 ||
        hp_records[k].outcome_2 != mermin_records[k].outcome_2) {
      ++mismatches;
    }
  }
  out.require(mismatches == 0,
              std::to_string(mismatches) + " constant-stack trials differ from the source-only model");
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<void(Outcomes&)> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "product table reproduced cell-for-cell", 1.0, criterion_table},
      {2, "row sums in {1,9}, row averages >= 1/9 (exact)", 1.0, criterion_row_identities},
      {3, "five-ninths bound, exact rationals", 1.0, criterion_five_ninths},
      {4, "monte carlo vs 72-point oracle, N=1e6, 3 sigma", 10.0, criterion_monte_carlo},
      {5, "equal-setting exactness, mermin and hp, N=1e6", 20.0, criterion_equal_setting_exact},
      {6, "nonlocal reference at 1/2, >10 sigma below 5/9", 10.0,
       criterion_reference_incompatibility},
      {7, "reordering at N=7.2e5: yield, leftovers, identity", 30.0, criterion_reordering},
      {8, "hp reordered rows: non-uniform instruments, identity fails", 60.0,
       criterion_hp_row_audit},
      {9, "stack synchrony and periodic shift identity", 5.0, criterion_synchrony},
      {10, "locality firewall: station-1 stream bit-identical", 10.0, criterion_firewall},
      {11, "density homogeneity: fixture rejected, iid calibrated", 60.0, criterion_density},
      {12, "collapse refutation: varying vs constant stacks", 10.0, criterion_collapse},
  };

  int failures = 0;
  for (const Criterion& criterion : criteria) {
    Outcomes out;
    auto start = std::chrono::steady_clock::now();
    try {
      criterion.run(out);
    } catch (const std::exception& e) {
      out.require(false, std::string("exception: ") + e.what());
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds >= criterion.budget_seconds) {
      out.require(false, "runtime " + format_sig12(seconds) + "s over budget " +
                             format_sig12(criterion.budget_seconds) + "s");
    }
    std::printf("[%s] criterion %2d: %s (%.2fs)\n", out.ok ? "PASS" : "FAIL", criterion.id,
                criterion.name, seconds);
    std::string detail = out.detail.str();
    if (!detail.empty()) std::fputs(detail.c_str(), stdout);
    if (!out.ok) ++failures;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures;
}
