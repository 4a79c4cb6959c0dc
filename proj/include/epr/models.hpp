#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "epr/core_tables.hpp"
#include "epr/errors.hpp"
#include "epr/random.hpp"

namespace epr {

enum class Station : int { S1 = 0, S2 = 1 };

constexpr const char* station_name(Station s) { return s == Station::S1 ? "S1" : "S2"; }

/// Global trial clock; one trial = one tick, never reused.
using Tick = std::int64_t;

/// Local apparatus parameter value, an integer in [0, V).
using InstrumentValue = int;

// ---------------------------------------------------------------------------
// Instrument stacks
// ---------------------------------------------------------------------------

/// How a station's three per-setting parameter streams are arranged.
struct StackAlgorithm {
  enum class Kind {
    iid_stream,             // fresh value per (setting, tick), position-hashed
    stroboscopic_periodic,  // fixed random table of period P, read by clock phase
    history_dependent,      // value at t depends on the stack's own contents before t
  };

  Kind kind = Kind::iid_stream;
  int alphabet = 2;  // V >= 1; V = 1 is the degenerate constant-stack case
  int period = 1;    // P >= 1, stroboscopic only

  void validate() const {
    if (alphabet < 1) throw ConfigError("stack alphabet must be >= 1, got " + std::to_string(alphabet));
    if (period < 1) throw ConfigError("stack period must be >= 1, got " + std::to_string(period));
  }
};

inline const char* stack_kind_name(StackAlgorithm::Kind kind) {
  switch (kind) {
    case StackAlgorithm::Kind::iid_stream: return "iid-stream";
    case StackAlgorithm::Kind::stroboscopic_periodic: return "stroboscopic-periodic";
    case StackAlgorithm::Kind::history_dependent: return "history-dependent";
  }
  return "?";
}

inline StackAlgorithm::Kind stack_kind_from_name(std::string_view name) {
  if (name == "iid-stream") return StackAlgorithm::Kind::iid_stream;
  if (name == "stroboscopic-periodic") return StackAlgorithm::Kind::stroboscopic_periodic;
  if (name == "history-dependent") return StackAlgorithm::Kind::history_dependent;
  throw ConfigError("unknown stack algorithm '" + std::string(name) + "'");
}

/// A station's family of three time-indexed parameter streams.
///
/// The stream is a pure function of (algorithm, seed, setting, tick), so two
/// stacks built with the same algorithm and seed are identically arranged and
/// agree at every coordinate without sharing any state. A time shift
/// re-bases the clock: value(i, t) of a shifted stack reads the base stream
/// at t + delta.
class InstrumentStacks {
 public:
  InstrumentStacks(Station station, const StackAlgorithm& algo, std::uint64_t seed)
      : station_(station), algo_(algo), seed_(seed) {
    algo_.validate();
    if (algo_.kind == StackAlgorithm::Kind::stroboscopic_periodic) {
      RandomStream arrange(derive_seed(seed_, "strobo-table"));
      table_.resize(static_cast<std::size_t>(algo_.period) * 3);
      for (auto& v : table_) v = static_cast<InstrumentValue>(arrange.next_below(algo_.alphabet));
    }
  }

  InstrumentValue value(Setting s, Tick t) const {
    Tick shifted = t + shift_;
    if (shifted < 0) {
      throw std::out_of_range("instrument stack tick underflow: t=" + std::to_string(t) +
                              " shift=" + std::to_string(shift_));
    }
    switch (algo_.kind) {
      case StackAlgorithm::Kind::iid_stream:
        return reduce(hash_at(seed_, static_cast<std::uint64_t>(index_of(s)),
                              static_cast<std::uint64_t>(shifted)));
      case StackAlgorithm::Kind::stroboscopic_periodic:
        return table_[static_cast<std::size_t>(shifted % algo_.period) * 3 + index_of(s)];
      case StackAlgorithm::Kind::history_dependent:
        return history_value(s, shifted);
    }
    throw std::logic_error("unreachable stack kind");
  }

  Station station() const { return station_; }
  const StackAlgorithm& algorithm() const { return algo_; }
  std::uint64_t seed() const { return seed_; }
  std::int64_t shift() const { return shift_; }

  friend InstrumentStacks apply_time_shift(const InstrumentStacks& stacks, std::int64_t delta) {
    InstrumentStacks out = stacks;
    out.shift_ += delta;
    out.digests_.clear();  // cache is per-instance scratch, rebuilt on demand
    return out;
  }

 private:
  InstrumentValue reduce(std::uint64_t h) const {
    return static_cast<InstrumentValue>(
        (static_cast<unsigned __int128>(h) * static_cast<std::uint64_t>(algo_.alphabet)) >> 64);
  }

  // Rolling arrangement digest: digest(t) folds the per-setting values at all
  // ticks < t, so the arrangement at t depends on the whole stack history.
  // Both replicas run the same recurrence from the same seed.
  InstrumentValue history_value(Setting s, Tick t) const {
    extend_digests(t);
    return reduce(hash_at(digests_[static_cast<std::size_t>(t)],
                          static_cast<std::uint64_t>(index_of(s)),
                          static_cast<std::uint64_t>(t)));
  }

  void extend_digests(Tick t) const {
    if (digests_.empty()) digests_.push_back(derive_seed(seed_, "history-digest"));
    while (static_cast<Tick>(digests_.size()) <= t) {
      Tick prev = static_cast<Tick>(digests_.size()) - 1;
      std::uint64_t folded = digests_[static_cast<std::size_t>(prev)];
      for (Setting s : kSettings) {
        folded = mix64(folded ^ (static_cast<std::uint64_t>(
                                     reduce(hash_at(folded, static_cast<std::uint64_t>(index_of(s)),
                                                    static_cast<std::uint64_t>(prev)))) +
                                 0x2545F4914F6CDD1DULL * (index_of(s) + 1)));
      }
      digests_.push_back(folded);
    }
  }

  Station station_;
  StackAlgorithm algo_;
  std::uint64_t seed_;
  std::int64_t shift_ = 0;
  std::vector<InstrumentValue> table_;            // stroboscopic arrangement
  mutable std::vector<std::uint64_t> digests_;    // history-dependent scratch
};

/// Two identically arranged replicas, one per station. They share the seed
/// (the "identical clock time, identical arrangement" construction) and no
/// mutable state.
inline std::pair<InstrumentStacks, InstrumentStacks> build_synchronized_stacks(
    const StackAlgorithm& algo, std::uint64_t seed) {
  algo.validate();
  return {InstrumentStacks(Station::S1, algo, seed), InstrumentStacks(Station::S2, algo, seed)};
}

/// Clock re-basing of one wing's measurements by a whole number of ticks.
struct TimeShift {
  enum class Wing { S1, S2, both };
  Wing wing = Wing::S2;
  std::int64_t delta = 0;
};

inline const char* wing_name(TimeShift::Wing w) {
  switch (w) {
    case TimeShift::Wing::S1: return "S1";
    case TimeShift::Wing::S2: return "S2";
    case TimeShift::Wing::both: return "both";
  }
  return "?";
}

inline TimeShift::Wing wing_from_name(std::string_view name) {
  if (name == "S1") return TimeShift::Wing::S1;
  if (name == "S2") return TimeShift::Wing::S2;
  if (name == "both") return TimeShift::Wing::both;
  throw ConfigError("unknown wing '" + std::string(name) + "' (expected S1, S2 or both)");
}

// ---------------------------------------------------------------------------
// Local models
// ---------------------------------------------------------------------------

/// The locality contract. A station's response may see its own identity, its
/// local setting, the source value, its local instrument value and the clock
/// -- and nothing else. The remote setting cannot even be passed in.
struct LocalModel {
  std::string name;
  bool uses_instrument = false;
  std::function<Outcome(Station station, Setting local_setting, const InstructionSet& source,
                        std::optional<InstrumentValue> instrument, Tick tick)>
      respond;
};

/// Source-only model: the outcome is the colour the instruction set assigns
/// to the local setting. Instrument value and time are ignored.
inline LocalModel mermin_model() {
  LocalModel m;
  m.name = "mermin";
  m.uses_instrument = false;
  m.respond = [](Station, Setting local, const InstructionSet& source,
                 std::optional<InstrumentValue>, Tick) -> Outcome {
    return instruction_outcome(source, local);
  };
  return m;
}

/// Instrument-parameter model: both stations evaluate the same fixed map
/// f(setting, source, instrument value). With synchronized stacks this makes
/// equal-setting equal-time outcomes agree identically, while outcomes at
/// different times may differ for the same (setting, source) pair.
///
/// Reference map: f = instruction colour, sign-flipped on odd instrument
/// values. Constant stacks (V = 1) therefore reproduce the source-only model
/// trial for trial.
inline LocalModel hp_model(bool functions_equal = true) {
  if (!functions_equal) {
    throw ConfigError("hp model: only the identical-evaluation-map construction is supported");
  }
  LocalModel m;
  m.name = "hp";
  m.uses_instrument = true;
  m.respond = [](Station, Setting local, const InstructionSet& source,
                 std::optional<InstrumentValue> instrument, Tick) -> Outcome {
    if (!instrument.has_value()) {
      throw PreconditionError("hp model requires a local instrument value");
    }
    return instruction_outcome(source, local) * ((*instrument % 2 == 0) ? +1 : -1);
  };
  return m;
}

// ---------------------------------------------------------------------------
// Quarantined nonlocal reference generator
// ---------------------------------------------------------------------------

/// NONLOCAL data generator, used only to manufacture data with the two
/// headline features (equal settings -> equal colours; overall same/different
/// colours equally likely). It draws both outcomes jointly from both settings
/// and is excluded from every locality assertion.
class QmReferenceModel {
 public:
  QmReferenceModel(double q_same, std::uint64_t seed) : q_same_(q_same), stream_(seed) {
    if (q_same < 0.0 || q_same > 1.0) {
      throw ConfigError("qm-reference q_same must be in [0, 1], got " + std::to_string(q_same));
    }
  }

  /// Consumes exactly two draws per trial regardless of branch, so trials
  /// can be replayed by skipping the stream.
  std::pair<Outcome, Outcome> generate(Setting i, Setting j) {
    double u_first = stream_.next_unit();
    double u_same = stream_.next_unit();
    Outcome first = u_first < 0.5 ? kGreen : kRed;
    if (i == j) return {first, first};
    return {first, u_same < q_same_ ? first : static_cast<Outcome>(-first)};
  }

  void skip_trials(std::int64_t trials) { stream_.skip(static_cast<std::uint64_t>(trials) * 2); }

  double q_same() const { return q_same_; }

 private:
  double q_same_;
  RandomStream stream_;
};

}  // namespace epr
