#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "epr/core_tables.hpp"
#include "epr/errors.hpp"
#include "epr/models.hpp"
#include "epr/random.hpp"

namespace epr {

// ---------------------------------------------------------------------------
// Records and configuration
// ---------------------------------------------------------------------------

/// Simulation-privilege view of a trial's hidden inputs; never available to
/// the model functions of the remote station.
struct HiddenInfo {
  int lambda_index = 1;  // 1..8, canonical instruction-set index
  std::optional<InstrumentValue> v1;
  std::optional<InstrumentValue> v2;
};

/// One measurement event.
struct TrialRecord {
  std::int64_t index = 0;
  Tick tick = 0;
  Setting setting_1 = Setting::a;
  Setting setting_2 = Setting::a;
  Outcome outcome_1 = kGreen;
  Outcome outcome_2 = kGreen;
  std::optional<HiddenInfo> hidden;
};

/// Which generator produces outcomes.
struct ModelSelector {
  enum class Kind { mermin, hp, qm_reference };

  Kind kind = Kind::mermin;
  StackAlgorithm stacks;        // hp only
  bool functions_equal = true;  // hp only
  double q_same = 0.25;         // qm-reference only
};

inline const char* model_kind_name(ModelSelector::Kind kind) {
  switch (kind) {
    case ModelSelector::Kind::mermin: return "mermin";
    case ModelSelector::Kind::hp: return "hp";
    case ModelSelector::Kind::qm_reference: return "qm-reference";
  }
  return "?";
}

inline ModelSelector::Kind model_kind_from_name(std::string_view name) {
  if (name == "mermin") return ModelSelector::Kind::mermin;
  if (name == "hp") return ModelSelector::Kind::hp;
  if (name == "qm-reference") return ModelSelector::Kind::qm_reference;
  throw ConfigError("unknown model '" + std::string(name) + "'");
}

/// How setting pairs are chosen per trial.
///
/// iid: both stations draw from the configured pair law, station 1 from the
/// marginal and station 2 from the conditional, on separate streams.
/// phase-locked: station 1's setting cycles with the clock (tick mod 3) and
/// station 2 draws from the conditional; an Einstein-local fixture whose
/// choices correlate with clock phase (used by the density-dependence test).
enum class SettingsMode { iid, phase_locked };

inline const char* settings_mode_name(SettingsMode m) {
  return m == SettingsMode::iid ? "iid" : "phase-locked";
}

inline SettingsMode settings_mode_from_name(std::string_view name) {
  if (name == "iid") return SettingsMode::iid;
  if (name == "phase-locked") return SettingsMode::phase_locked;
  throw ConfigError("unknown settings mode '" + std::string(name) + "'");
}

/// Named deterministic streams, all derived from one master seed by fixed
/// labels unless overridden. Station 2's settings sub-stream and stack seed
/// can be overridden independently; the former drives the locality-firewall
/// test, the latter is a deliberate synchrony-violation fixture.
struct Seeds {
  std::uint64_t master = 0;
  std::optional<std::uint64_t> source;
  std::optional<std::uint64_t> settings;
  std::optional<std::uint64_t> stack;
  std::optional<std::uint64_t> model;
  std::optional<std::uint64_t> settings_s2;
  std::optional<std::uint64_t> stack_s2;

  std::uint64_t source_seed() const { return source.value_or(derive_seed(master, "source")); }
  std::uint64_t settings_seed() const { return settings.value_or(derive_seed(master, "settings")); }
  std::uint64_t settings_s1_seed() const { return derive_seed(settings_seed(), "S1"); }
  std::uint64_t settings_s2_seed() const {
    return settings_s2.value_or(derive_seed(settings_seed(), "S2"));
  }
  std::uint64_t stack_seed() const { return stack.value_or(derive_seed(master, "stack")); }
  std::uint64_t model_seed() const { return model.value_or(derive_seed(master, "model")); }
};

struct ExperimentConfig {
  std::int64_t trials = 0;
  SourceDistribution source;
  SettingPairDistribution pairs;
  ModelSelector model;
  Seeds seeds;
  bool audit = false;
  std::optional<TimeShift> time_shift;
  SettingsMode settings_mode = SettingsMode::iid;

  void validate() const {
    if (trials < 1) throw ConfigError("trials must be >= 1, got " + std::to_string(trials));
    if (model.kind == ModelSelector::Kind::hp) {
      model.stacks.validate();
      if (!model.functions_equal) {
        throw ConfigError("hp model: functions_equal must be true");
      }
    }
    if (model.kind == ModelSelector::Kind::qm_reference &&
        (model.q_same < 0.0 || model.q_same > 1.0)) {
      throw ConfigError("qm-reference q_same must be in [0, 1]");
    }
  }
};

// ---------------------------------------------------------------------------
// Trial scheduler
// ---------------------------------------------------------------------------

namespace detail {

/// One cumulative draw per call; every sampler consumes exactly one stream
/// value so streams can be repositioned by skipping.
template <std::size_t N>
int draw_index(RandomStream& stream, const std::array<double, N>& probabilities) {
  double u = stream.next_unit();
  double cum = 0.0;
  for (std::size_t k = 0; k + 1 < N; ++k) {
    cum += probabilities[k];
    if (u < cum) return static_cast<int>(k);
  }
  return static_cast<int>(N - 1);
}

struct PreparedRun {
  std::array<double, 8> source_cum_probs;  // plain probabilities, searched cumulatively
  std::array<double, 3> station1_marginal;
  std::array<std::array<double, 3>, 3> station2_conditional;
  std::optional<InstrumentStacks> stacks_s1;
  std::optional<InstrumentStacks> stacks_s2;
  std::optional<LocalModel> local;
  std::optional<QmReferenceModel> qm;
};

inline PreparedRun prepare(const ExperimentConfig& config) {
  config.validate();
  PreparedRun run;
  const auto& src = config.source.probabilities();
  for (int s = 0; s < 8; ++s) run.source_cum_probs[static_cast<std::size_t>(s)] = src[s].to_double();
  run.station1_marginal = config.pairs.station1_marginal();
  for (Setting i : kSettings) {
    run.station2_conditional[index_of(i)] = config.pairs.station2_conditional(i);
  }

  switch (config.model.kind) {
    case ModelSelector::Kind::mermin:
      run.local = mermin_model();
      break;
    case ModelSelector::Kind::hp: {
      run.local = hp_model(config.model.functions_equal);
      auto [s1, s2] = build_synchronized_stacks(config.model.stacks, config.seeds.stack_seed());
      if (config.seeds.stack_s2.has_value()) {
        // Violation fixture: desynchronized replicas.
        s2 = InstrumentStacks(Station::S2, config.model.stacks, *config.seeds.stack_s2);
      }
      if (config.time_shift.has_value()) {
        const TimeShift& shift = *config.time_shift;
        if (shift.wing != TimeShift::Wing::S2) s1 = apply_time_shift(s1, shift.delta);
        if (shift.wing != TimeShift::Wing::S1) s2 = apply_time_shift(s2, shift.delta);
      }
      run.stacks_s1 = std::move(s1);
      run.stacks_s2 = std::move(s2);
      break;
    }
    case ModelSelector::Kind::qm_reference:
      run.qm.emplace(config.model.q_same, config.seeds.model_seed());
      break;
  }
  return run;
}

inline InstructionSet draw_lambda(RandomStream& source_stream,
                                  const std::array<double, 8>& probs) {
  return InstructionSet::from_index(draw_index(source_stream, probs) + 1);
}

}  // namespace detail

/// Runs the configured experiment and returns exactly N records.
///
/// Per trial: the source value is drawn first, then the settings (delayed
/// choice, separate streams), then each station's outcome is evaluated from
/// local information only. The clock advances once per trial.
inline std::vector<TrialRecord> run_experiment(const ExperimentConfig& config) {
  detail::PreparedRun run = detail::prepare(config);
  RandomStream source_stream(config.seeds.source_seed());
  RandomStream settings_s1(config.seeds.settings_s1_seed());
  RandomStream settings_s2(config.seeds.settings_s2_seed());

  std::vector<TrialRecord> records;
  records.reserve(static_cast<std::size_t>(config.trials));
  for (std::int64_t index = 0; index < config.trials; ++index) {
    Tick tick = index;
    InstructionSet lambda = detail::draw_lambda(source_stream, run.source_cum_probs);

    Setting i = config.settings_mode == SettingsMode::phase_locked
                    ? kSettings[static_cast<std::size_t>(tick % 3)]
                    : kSettings[static_cast<std::size_t>(
                          detail::draw_index(settings_s1, run.station1_marginal))];
    Setting j = kSettings[static_cast<std::size_t>(
        detail::draw_index(settings_s2, run.station2_conditional[index_of(i)]))];

    std::optional<InstrumentValue> v1, v2;
    if (run.stacks_s1.has_value()) {
      v1 = run.stacks_s1->value(i, tick);
      v2 = run.stacks_s2->value(j, tick);
    }

    TrialRecord rec;
    rec.index = index;
    rec.tick = tick;
    rec.setting_1 = i;
    rec.setting_2 = j;
    if (run.qm.has_value()) {
      auto [o1, o2] = run.qm->generate(i, j);
      rec.outcome_1 = o1;
      rec.outcome_2 = o2;
    } else {
      rec.outcome_1 = run.local->respond(Station::S1, i, lambda, v1, tick);
      rec.outcome_2 = run.local->respond(Station::S2, j, lambda, v2, tick);
    }
    if (config.audit) rec.hidden = HiddenInfo{lambda.index(), v1, v2};
    records.push_back(rec);
  }
  return records;
}

// ---------------------------------------------------------------------------
// Structural checks
// ---------------------------------------------------------------------------

struct SampleabilityReport {
  std::int64_t records = 0;
  std::int64_t distinct_ticks = 0;
  int max_pairs_per_tick = 0;
};

/// Verifies that each tick was measured exactly once, i.e. that no trial ever
/// sampled more than one setting pair. Duplicate ticks are corruption.
inline SampleabilityReport sampleability_check(std::span<const TrialRecord> records) {
  SampleabilityReport report;
  report.records = static_cast<std::int64_t>(records.size());
  std::unordered_set<Tick> seen;
  seen.reserve(records.size() * 2);
  for (const TrialRecord& rec : records) {
    if (!seen.insert(rec.tick).second) {
      throw IntegrityError("duplicate tick " + std::to_string(rec.tick) + " in record stream");
    }
  }
  report.distinct_ticks = static_cast<std::int64_t>(seen.size());
  report.max_pairs_per_tick = records.empty() ? 0 : 1;
  return report;
}

/// Re-derives a single trial with the same source value and tick but an
/// alternative setting pair. Only the local inputs change: across the nine
/// hypothetical pairs the instrument values vary through the setting index
/// alone, while across real trials they vary through time.
inline TrialRecord counterfactual_replay(const ExperimentConfig& config, std::int64_t trial_index,
                                         Setting alt_1, Setting alt_2) {
  if (!config.audit) {
    throw PreconditionError("counterfactual_replay requires audit mode");
  }
  if (trial_index < 0 || trial_index >= config.trials) {
    throw std::out_of_range("trial index " + std::to_string(trial_index) + " out of range [0, " +
                            std::to_string(config.trials) + ")");
  }
  detail::PreparedRun run = detail::prepare(config);
  RandomStream source_stream(config.seeds.source_seed());
  source_stream.skip(static_cast<std::uint64_t>(trial_index));
  InstructionSet lambda = detail::draw_lambda(source_stream, run.source_cum_probs);
  Tick tick = trial_index;

  std::optional<InstrumentValue> v1, v2;
  if (run.stacks_s1.has_value()) {
    v1 = run.stacks_s1->value(alt_1, tick);
    v2 = run.stacks_s2->value(alt_2, tick);
  }

  TrialRecord rec;
  rec.index = trial_index;
  rec.tick = tick;
  rec.setting_1 = alt_1;
  rec.setting_2 = alt_2;
  if (run.qm.has_value()) {
    run.qm->skip_trials(trial_index);
    auto [o1, o2] = run.qm->generate(alt_1, alt_2);
    rec.outcome_1 = o1;
    rec.outcome_2 = o2;
  } else {
    rec.outcome_1 = run.local->respond(Station::S1, alt_1, lambda, v1, tick);
    rec.outcome_2 = run.local->respond(Station::S2, alt_2, lambda, v2, tick);
  }
  rec.hidden = HiddenInfo{lambda.index(), v1, v2};
  return rec;
}

}  // namespace epr
