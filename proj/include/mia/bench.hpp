#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mia/attacks.hpp"
#include "mia/config.hpp"
#include "mia/metrics.hpp"
#include "mia/scenario.hpp"

namespace mia {

enum class ControlVariable { CV1, CV2, CV3, CV4 };
std::string to_string(ControlVariable cv);

/// One (scenario, attack, run) evaluation.
struct RunRecord {
    std::string scenario_id;
    std::string dataset_id;
    DistKind cv1 = DistKind::Normal;
    double cv2 = 0.0, cv3 = 0.0, cv4 = 0.0;
    AttackKind attack = AttackKind::NnAttack;
    std::size_t run = 0;
    std::uint64_t seed = 0;
    MetricReport metrics;
    bool converged = true;
    double wall_time_s = 0.0; // not serialized

    bool operator==(const RunRecord& other) const;
};

/// Scenarios from one dataset matrix that differ in exactly the varied CV.
struct ScenarioGroup {
    ControlVariable varied = ControlVariable::CV1;
    std::string fingerprint; // the three fixed CVs
    std::vector<std::string> scenario_ids;
};

struct FlipRecord {
    AttackKind attack_a = AttackKind::NnAttack;
    AttackKind attack_b = AttackKind::NnAttack;
    std::string dataset_id;
    std::string scenario_a, scenario_b;
    std::string metric;
    ControlVariable attributed_cv = ControlVariable::CV1;
    std::string fingerprint;
};

/// Partitions one dataset's matrix into one-CV-varies groups (>= 2
/// scenarios each) for every choice of varied CV.
std::vector<ScenarioGroup> group_scenarios(const std::vector<EvaluationScenario>& matrix);

struct RankResult {
    std::vector<AttackKind> order; // best first
    bool ties = false;
    std::vector<AttackKind> missing; // attacks without records, coverage warning
};

/// Ranks attacks by the mean of the selected metric over a scenario's
/// records; ties fall back to the canonical attack order.
RankResult rank_attacks(const std::vector<RunRecord>& scenario_records,
                        const std::string& metric = "ma");

std::vector<FlipRecord> detect_rank_flips(const std::vector<RunRecord>& records,
                                          const std::vector<ScenarioGroup>& groups,
                                          const std::string& dataset_id,
                                          const std::string& metric = "ma");

/// Normalized share of flips attributed to each CV; sums to 1.
std::array<double, 4> summarize_flip_causes(const std::vector<FlipRecord>& flips);

/// Results CSV, bit-exact header, shortest-round-trip number formatting,
/// rows ordered by (dataset, scenario, attack, run).
extern const char* kResultsCsvHeader;
void persist_results(const std::vector<RunRecord>& records, const std::string& path);
std::vector<RunRecord> load_results(const std::string& path);
std::string results_csv(const std::vector<RunRecord>& records);

void write_flips_csv(const std::vector<FlipRecord>& flips, const std::string& path);

/// Selected metric of a record by column name ("ma", "auc", ...).
double metric_value(const RunRecord& record, const std::string& metric);

struct BenchOutcome {
    std::vector<RunRecord> records;
    std::vector<std::string> rejects; // "dataset:ESxx: reason"
    std::vector<std::string> errors;  // per-record failures, logged not persisted
    std::uint64_t digest = 0;         // FNV-1a of the results CSV
};

/// The full sweep: (dataset x run) units in parallel, scenario cores
/// cached within a unit, attacks cached across CV4 siblings. Deterministic
/// per master seed.
BenchOutcome run_bench(const BenchConfig& cfg);

/// One scenario end to end: fresh models per run, every requested attack.
std::vector<RunRecord> run_scenario(const EvaluationScenario& scenario,
                                    const std::vector<AttackKind>& kinds, std::size_t runs,
                                    std::uint64_t master_seed, bool quick = false);

/// ROC point files ((fpr, tpr, threshold) per attack) for one scenario.
void dump_roc_points(const EvaluationScenario& scenario, std::uint64_t master_seed, bool quick,
                     const std::string& out_dir);

} // namespace mia
