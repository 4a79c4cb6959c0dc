#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "epr/errors.hpp"
#include "epr/rational.hpp"

namespace epr {

// ---------------------------------------------------------------------------
// Settings and outcomes
// ---------------------------------------------------------------------------

/// Detector setting label. Total order a < b < c fixes table column order
/// and every tie-break in the project.
enum class Setting : int { a = 0, b = 1, c = 2 };

inline constexpr std::array<Setting, 3> kSettings = {Setting::a, Setting::b, Setting::c};

constexpr int index_of(Setting s) { return static_cast<int>(s); }
constexpr char label_of(Setting s) { return "abc"[index_of(s)]; }

inline Setting setting_from_label(char ch) {
  switch (ch) {
    case 'a': return Setting::a;
    case 'b': return Setting::b;
    case 'c': return Setting::c;
    default: throw ConfigError(std::string("unknown setting '") + ch + "' (expected a, b or c)");
  }
}

/// Detector outcome: +1 is green, -1 is red.
using Outcome = int;
inline constexpr Outcome kGreen = +1;
inline constexpr Outcome kRed = -1;

// ---------------------------------------------------------------------------
// Instruction sets (Table-1 row order)
// ---------------------------------------------------------------------------

/// One of the eight source-emitted colour assignments: a colour for each of
/// the three settings, read identically by both stations. Canonical row
/// order: RRR, RRG, RGR, GRR, GGR, GRG, RGG, GGG.
class InstructionSet {
 public:
  static constexpr int kCount = 8;

  constexpr InstructionSet() = default;  // RRR, the first canonical set

  /// 1-based canonical index, 1..8.
  static InstructionSet from_index(int s) {
    if (s < 1 || s > kCount) throw ConfigError("instruction set index out of range: " + std::to_string(s));
    InstructionSet out;
    out.index_ = s;
    std::string_view n = kNames[s - 1];
    for (int k = 0; k < 3; ++k) out.colors_[k] = (n[k] == 'G') ? kGreen : kRed;
    return out;
  }

  /// Three-letter name over {R, G}, e.g. "GGR": green for a and b, red for c.
  static InstructionSet from_name(std::string_view name) {
    for (int s = 1; s <= kCount; ++s) {
      if (kNames[s - 1] == name) return from_index(s);
    }
    throw ConfigError("unknown instruction set '" + std::string(name) + "'");
  }

  int index() const { return index_; }
  std::string_view name() const { return kNames[index_ - 1]; }
  Outcome outcome(Setting s) const { return colors_[index_of(s)]; }

  /// True when both colours appear (six of the eight sets).
  bool mixed() const {
    return !(colors_[0] == colors_[1] && colors_[1] == colors_[2]);
  }

  friend bool operator==(const InstructionSet& a, const InstructionSet& b) {
    return a.index_ == b.index_;
  }
  friend bool operator!=(const InstructionSet& a, const InstructionSet& b) { return !(a == b); }

 private:
  static constexpr std::array<std::string_view, kCount> kNames = {
      "RRR", "RRG", "RGR", "GRR", "GGR", "GRG", "RGG", "GGG"};

  std::array<Outcome, 3> colors_ = {kRed, kRed, kRed};
  int index_ = 1;
};

inline std::array<InstructionSet, InstructionSet::kCount> all_instruction_sets() {
  std::array<InstructionSet, InstructionSet::kCount> out = {
      InstructionSet::from_index(1), InstructionSet::from_index(2),
      InstructionSet::from_index(3), InstructionSet::from_index(4),
      InstructionSet::from_index(5), InstructionSet::from_index(6),
      InstructionSet::from_index(7), InstructionSet::from_index(8)};
  return out;
}

/// Colour the given set assigns to the given setting; the same for both
/// stations by construction.
inline Outcome instruction_outcome(const InstructionSet& set, Setting s) { return set.outcome(s); }

// ---------------------------------------------------------------------------
// Ordered setting pairs (station 1, station 2), Table-1 column order
// ---------------------------------------------------------------------------

struct SettingPair {
  Setting first;   // station 1
  Setting second;  // station 2
};

constexpr int pair_index(Setting i, Setting j) { return 3 * index_of(i) + index_of(j); }
constexpr int pair_index(const SettingPair& p) { return pair_index(p.first, p.second); }

inline constexpr std::array<SettingPair, 9> kSettingPairs = {{
    {Setting::a, Setting::a}, {Setting::a, Setting::b}, {Setting::a, Setting::c},
    {Setting::b, Setting::a}, {Setting::b, Setting::b}, {Setting::b, Setting::c},
    {Setting::c, Setting::a}, {Setting::c, Setting::b}, {Setting::c, Setting::c},
}};

inline std::string pair_label(const SettingPair& p) {
  return std::string{label_of(p.first), label_of(p.second)};
}

inline SettingPair pair_from_label(std::string_view label) {
  if (label.size() != 2) throw ConfigError("pair label must be two letters, got '" + std::string(label) + "'");
  return {setting_from_label(label[0]), setting_from_label(label[1])};
}

// ---------------------------------------------------------------------------
// Product table and row functionals
// ---------------------------------------------------------------------------

/// The 8x9 matrix of products A_i * B_j: rows are instruction sets in
/// canonical order, columns the nine ordered setting pairs.
struct ProductTable {
  Eigen::Matrix<int, 8, 9> entries;

  int at(const InstructionSet& set, Setting i, Setting j) const {
    return entries(set.index() - 1, pair_index(i, j));
  }
};

inline ProductTable product_table() {
  ProductTable table;
  for (const InstructionSet& set : all_instruction_sets()) {
    for (const SettingPair& p : kSettingPairs) {
      table.entries(set.index() - 1, pair_index(p)) =
          instruction_outcome(set, p.first) * instruction_outcome(set, p.second);
    }
  }
  return table;
}

/// Sum of the nine products in the set's table row; always equals
/// (A_a + A_b + A_c)^2, i.e. 1 or 9.
inline int row_sum(const InstructionSet& set) {
  int sum = 0;
  for (const SettingPair& p : kSettingPairs) {
    sum += instruction_outcome(set, p.first) * instruction_outcome(set, p.second);
  }
  return sum;
}

/// row_sum / 9; never below 1/9.
inline Rational row_average(const InstructionSet& set) { return Rational(row_sum(set), 9); }

// ---------------------------------------------------------------------------
// Sample space
// ---------------------------------------------------------------------------

/// One simple event: an instruction set paired with one ordered setting pair.
struct SamplePoint {
  InstructionSet set;
  Setting first;
  Setting second;
};

/// The 72 simple events (8 sets x 9 ordered pairs). The indecomposable
/// outcomes an idealized run of this experiment can produce.
inline std::array<SamplePoint, 72> enumerate_sample_space() {
  std::array<SamplePoint, 72> out = {};
  int k = 0;
  for (const InstructionSet& set : all_instruction_sets()) {
    for (const SettingPair& p : kSettingPairs) {
      out[k++] = SamplePoint{set, p.first, p.second};
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Distributions
// ---------------------------------------------------------------------------

namespace detail {
inline void check_distribution(double sum, double min_entry, std::string_view what) {
  if (min_entry < 0.0) throw ConfigError(std::string(what) + ": negative probability");
  if (std::abs(sum - 1.0) > 1e-12) {
    throw ConfigError(std::string(what) + ": probabilities sum to " + std::to_string(sum) +
                      ", expected 1");
  }
}
}  // namespace detail

/// Probability of each instruction set at the source. Entries are exact
/// rationals; validation is done on the double image so dyadic conversions
/// of float configs pass through.
class SourceDistribution {
 public:
  SourceDistribution() : SourceDistribution(uniform()) {}

  explicit SourceDistribution(std::array<Rational, InstructionSet::kCount> p) : p_(p) {
    double sum = 0.0, min_entry = 0.0;
    for (const Rational& r : p_) {
      sum += r.to_double();
      min_entry = std::min(min_entry, r.to_double());
    }
    detail::check_distribution(sum, min_entry, "source distribution");
  }

  static SourceDistribution uniform() {
    std::array<Rational, 8> p;
    p.fill(Rational(1, 8));
    return SourceDistribution(p);
  }

  /// Uniform over the six sets in which both colours appear.
  static SourceDistribution uniform_mixed() {
    std::array<Rational, 8> p;
    p.fill(Rational(0));
    for (const InstructionSet& s : all_instruction_sets()) {
      if (s.mixed()) p[s.index() - 1] = Rational(1, 6);
    }
    return SourceDistribution(p);
  }

  /// All mass on one set (a vertex of the simplex).
  static SourceDistribution point(const InstructionSet& set) {
    std::array<Rational, 8> p;
    p.fill(Rational(0));
    p[set.index() - 1] = Rational(1);
    return SourceDistribution(p);
  }

  const Rational& probability(const InstructionSet& set) const { return p_[set.index() - 1]; }
  const std::array<Rational, InstructionSet::kCount>& probabilities() const { return p_; }

 private:
  std::array<Rational, InstructionSet::kCount> p_;
};

/// Probability of each ordered setting pair (station 1, station 2).
class SettingPairDistribution {
 public:
  SettingPairDistribution() : SettingPairDistribution(uniform()) {}

  explicit SettingPairDistribution(std::array<Rational, 9> p) : p_(p) {
    double sum = 0.0, min_entry = 0.0;
    for (const Rational& r : p_) {
      sum += r.to_double();
      min_entry = std::min(min_entry, r.to_double());
    }
    detail::check_distribution(sum, min_entry, "pair distribution");
  }

  static SettingPairDistribution uniform() {
    std::array<Rational, 9> p;
    p.fill(Rational(1, 9));
    return SettingPairDistribution(p);
  }

  const Rational& probability(Setting i, Setting j) const { return p_[pair_index(i, j)]; }
  const std::array<Rational, 9>& probabilities() const { return p_; }

  /// Station-1 marginal, as doubles for stream sampling.
  std::array<double, 3> station1_marginal() const {
    std::array<double, 3> m = {0.0, 0.0, 0.0};
    for (const SettingPair& p : kSettingPairs) {
      m[index_of(p.first)] += probability(p.first, p.second).to_double();
    }
    return m;
  }

  /// Station-2 conditional given station 1 chose `i`; uniform when the
  /// marginal of `i` is zero (the branch is then never taken).
  std::array<double, 3> station2_conditional(Setting i) const {
    std::array<double, 3> cond = {0.0, 0.0, 0.0};
    double total = 0.0;
    for (Setting j : kSettings) {
      cond[index_of(j)] = probability(i, j).to_double();
      total += cond[index_of(j)];
    }
    if (total <= 0.0) return {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    for (double& v : cond) v /= total;
    return cond;
  }

 private:
  std::array<Rational, 9> p_;
};

// ---------------------------------------------------------------------------
// Exact statistics over the 72-point space
// ---------------------------------------------------------------------------

template <typename Scalar>
Scalar to_scalar(const Rational& r);

template <>
inline Rational to_scalar<Rational>(const Rational& r) { return r; }

template <>
inline double to_scalar<double>(const Rational& r) { return r.to_double(); }

/// Column-sum statistics of the product table under the given laws.
/// pair_expectations(i, j) is the expectation of A_i * B_j over the source
/// alone; same_color_prob additionally weights by the pair distribution.
template <typename Scalar>
struct ExactStatistics {
  Scalar same_color_prob{};
  Eigen::Matrix<Scalar, 3, 3> pair_expectations;
};

/// Enumerates the 72 simple events; with Scalar = Rational all values are
/// exact (std::overflow_error signals that the inputs need the double path).
template <typename Scalar>
ExactStatistics<Scalar> exact_statistics(const SourceDistribution& src,
                                         const SettingPairDistribution& pairs) {
  ExactStatistics<Scalar> out;
  out.same_color_prob = Scalar(0);
  for (Setting i : kSettings) {
    for (Setting j : kSettings) {
      out.pair_expectations(index_of(i), index_of(j)) = Scalar(0);
    }
  }
  for (const InstructionSet& set : all_instruction_sets()) {
    Scalar ps = to_scalar<Scalar>(src.probability(set));
    for (const SettingPair& p : kSettingPairs) {
      Scalar q = to_scalar<Scalar>(pairs.probability(p.first, p.second));
      int product = instruction_outcome(set, p.first) * instruction_outcome(set, p.second);
      out.pair_expectations(index_of(p.first), index_of(p.second)) += ps * Scalar(product);
      if (product > 0) out.same_color_prob += ps * q;
    }
  }
  return out;
}

}  // namespace epr
