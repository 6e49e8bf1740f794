#include "mia/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "mia/rng.hpp"

namespace mia {

namespace {

// Shortest representation that round-trips exactly.
std::string fmt(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{}) throw IoError("bad number in results file: '" + s + "'");
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string fingerprint_without(const EvaluationScenario& s, ControlVariable varied) {
    std::string f;
    if (varied != ControlVariable::CV1) f += "cv1=" + to_string(s.cv1) + "|";
    if (varied != ControlVariable::CV2) f += "cv2=" + fmt(s.cv2) + "|";
    if (varied != ControlVariable::CV3) f += "cv3=" + fmt(s.cv3) + "|";
    if (varied != ControlVariable::CV4) f += "cv4=" + fmt(s.cv4) + "|";
    return f;
}

double varied_value(const EvaluationScenario& s, ControlVariable varied) {
    switch (varied) {
    case ControlVariable::CV1: return static_cast<double>(s.cv1);
    case ControlVariable::CV2: return s.cv2;
    case ControlVariable::CV3: return s.cv3;
    case ControlVariable::CV4: return s.cv4;
    }
    return 0.0;
}

} // namespace

std::string to_string(ControlVariable cv) {
    switch (cv) {
    case ControlVariable::CV1: return "CV1";
    case ControlVariable::CV2: return "CV2";
    case ControlVariable::CV3: return "CV3";
    case ControlVariable::CV4: return "CV4";
    }
    return "?";
}

std::vector<ScenarioGroup> group_scenarios(const std::vector<EvaluationScenario>& matrix) {
    std::vector<ScenarioGroup> groups;
    for (ControlVariable varied : {ControlVariable::CV1, ControlVariable::CV2,
                                   ControlVariable::CV3, ControlVariable::CV4}) {
        std::map<std::string, std::vector<const EvaluationScenario*>> buckets;
        for (const auto& s : matrix) buckets[fingerprint_without(s, varied)].push_back(&s);
        for (auto& [fp, members] : buckets) {
            if (members.size() < 2) continue;
            std::sort(members.begin(), members.end(),
                      [&](const EvaluationScenario* a, const EvaluationScenario* b) {
                          const double va = varied_value(*a, varied);
                          const double vb = varied_value(*b, varied);
                          return va != vb ? va < vb : a->scenario_id < b->scenario_id;
                      });
            ScenarioGroup g;
            g.varied = varied;
            g.fingerprint = fp;
            for (const auto* s : members) g.scenario_ids.push_back(s->scenario_id);
            groups.push_back(std::move(g));
        }
    }
    return groups;
}

double metric_value(const RunRecord& r, const std::string& metric) {
    const auto& m = r.metrics;
    if (metric == "accuracy") return m.accuracy;
    if (metric == "precision") return m.precision;
    if (metric == "recall") return m.recall;
    if (metric == "f1") return m.f1;
    if (metric == "fnr") return m.fnr;
    if (metric == "fpr") return m.fpr;
    if (metric == "ma") return m.ma;
    if (metric == "auc") return m.auc;
    if (metric == "auc_log") return m.auc_log;
    if (metric == "tpr_at_1e-2") return m.tpr_at_fpr.count(1e-2) ? m.tpr_at_fpr.at(1e-2) : 0.0;
    if (metric == "tpr_at_1e-3") return m.tpr_at_fpr.count(1e-3) ? m.tpr_at_fpr.at(1e-3) : 0.0;
    throw ConfigError("unknown metric selector: " + metric);
}

RankResult rank_attacks(const std::vector<RunRecord>& scenario_records,
                        const std::string& metric) {
    std::map<AttackKind, std::pair<double, std::size_t>> sums;
    for (const auto& r : scenario_records) {
        auto& [sum, n] = sums[r.attack];
        sum += metric_value(r, metric);
        ++n;
    }
    RankResult res;
    for (AttackKind k : kAllAttackKinds)
        if (!sums.count(k)) res.missing.push_back(k);
    std::vector<std::pair<double, AttackKind>> order;
    for (const auto& [k, sn] : sums)
        order.emplace_back(sn.first / static_cast<double>(sn.second), k);
    // Descending by mean; canonical enum order breaks ties.
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first
                                  : static_cast<int>(a.second) < static_cast<int>(b.second);
    });
    for (std::size_t i = 1; i < order.size(); ++i)
        if (order[i].first == order[i - 1].first) res.ties = true;
    for (const auto& [v, k] : order) res.order.push_back(k);
    return res;
}

std::vector<FlipRecord> detect_rank_flips(const std::vector<RunRecord>& records,
                                          const std::vector<ScenarioGroup>& groups,
                                          const std::string& dataset_id,
                                          const std::string& metric) {
    // Mean metric per (scenario, attack) for this dataset.
    std::map<std::string, std::map<AttackKind, std::pair<double, std::size_t>>> sums;
    for (const auto& r : records) {
        if (r.dataset_id != dataset_id) continue;
        auto& [sum, n] = sums[r.scenario_id][r.attack];
        sum += metric_value(r, metric);
        ++n;
    }
    auto mean_of = [&](const std::string& sid, AttackKind k, double& out) {
        auto sit = sums.find(sid);
        if (sit == sums.end()) return false;
        auto ait = sit->second.find(k);
        if (ait == sit->second.end()) return false;
        out = ait->second.first / static_cast<double>(ait->second.second);
        return true;
    };

    std::vector<FlipRecord> flips;
    for (const auto& g : groups) {
        for (std::size_t i = 0; i < g.scenario_ids.size(); ++i) {
            for (std::size_t j = i + 1; j < g.scenario_ids.size(); ++j) {
                const auto& sa = g.scenario_ids[i];
                const auto& sb = g.scenario_ids[j];
                for (std::size_t a = 0; a < kAllAttackKinds.size(); ++a) {
                    for (std::size_t b = a + 1; b < kAllAttackKinds.size(); ++b) {
                        double a_in_sa, b_in_sa, a_in_sb, b_in_sb;
                        if (!mean_of(sa, kAllAttackKinds[a], a_in_sa) ||
                            !mean_of(sa, kAllAttackKinds[b], b_in_sa) ||
                            !mean_of(sb, kAllAttackKinds[a], a_in_sb) ||
                            !mean_of(sb, kAllAttackKinds[b], b_in_sb))
                            continue;
                        const double da = a_in_sa - b_in_sa;
                        const double db = a_in_sb - b_in_sb;
                        if ((da > 0.0 && db < 0.0) || (da < 0.0 && db > 0.0)) {
                            FlipRecord f;
                            f.attack_a = kAllAttackKinds[a];
                            f.attack_b = kAllAttackKinds[b];
                            f.dataset_id = dataset_id;
                            f.scenario_a = sa;
                            f.scenario_b = sb;
                            f.metric = metric;
                            f.attributed_cv = g.varied;
                            f.fingerprint = g.fingerprint;
                            flips.push_back(std::move(f));
                        }
                    }
                }
            }
        }
    }
    return flips;
}

std::array<double, 4> summarize_flip_causes(const std::vector<FlipRecord>& flips) {
    if (flips.empty()) throw EmptyInputError("summarize_flip_causes: no flips");
    std::array<double, 4> shares{0.0, 0.0, 0.0, 0.0};
    for (const auto& f : flips) shares[static_cast<std::size_t>(f.attributed_cv)] += 1.0;
    for (double& s : shares) s /= static_cast<double>(flips.size());
    return shares;
}

const char* kResultsCsvHeader =
    "scenario_id,dataset_id,cv1,cv2,cv3,cv4,attack,run,accuracy,precision,recall,f1,fnr,fpr,"
    "ma,auc,auc_log,tpr_at_1e-2,tpr_at_1e-3,threshold_max_ma,abstained,converged,seed";

namespace {

std::string record_row(const RunRecord& r) {
    const auto& m = r.metrics;
    std::string row = r.scenario_id + "," + r.dataset_id + "," + to_string(r.cv1) + "," +
                      fmt(r.cv2) + "," + fmt(r.cv3) + "," + fmt(r.cv4) + "," +
                      to_string(r.attack) + "," + std::to_string(r.run) + "," + fmt(m.accuracy) +
                      "," + fmt(m.precision) + "," + fmt(m.recall) + "," + fmt(m.f1) + "," +
                      fmt(m.fnr) + "," + fmt(m.fpr) + "," + fmt(m.ma) + "," + fmt(m.auc) + "," +
                      fmt(m.auc_log) + ",";
    row += fmt(m.tpr_at_fpr.count(1e-2) ? m.tpr_at_fpr.at(1e-2) : 0.0);
    row += ",";
    row += fmt(m.tpr_at_fpr.count(1e-3) ? m.tpr_at_fpr.at(1e-3) : 0.0);
    row += ",";
    if (m.threshold_at_max_ma) row += fmt(*m.threshold_at_max_ma);
    row += "," + std::to_string(m.abstained) + ",";
    row += r.converged ? "1" : "0";
    row += "," + std::to_string(r.seed);
    return row;
}

} // namespace

bool RunRecord::operator==(const RunRecord& other) const {
    return record_row(*this) == record_row(other);
}

std::string results_csv(const std::vector<RunRecord>& records) {
    std::vector<const RunRecord*> sorted;
    sorted.reserve(records.size());
    for (const auto& r : records) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(), [](const RunRecord* a, const RunRecord* b) {
        if (a->dataset_id != b->dataset_id) return a->dataset_id < b->dataset_id;
        if (a->scenario_id != b->scenario_id) return a->scenario_id < b->scenario_id;
        if (a->attack != b->attack)
            return static_cast<int>(a->attack) < static_cast<int>(b->attack);
        return a->run < b->run;
    });
    std::string csv = kResultsCsvHeader;
    csv += "\n";
    for (const auto* r : sorted) {
        csv += record_row(*r);
        csv += "\n";
    }
    return csv;
}

void persist_results(const std::vector<RunRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << results_csv(records);
    if (!out) throw IoError("write failed for " + path);
}

std::vector<RunRecord> load_results(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError(path + ": empty results file");
    if (line != kResultsCsvHeader) throw IoError(path + ": unexpected results header");
    std::vector<RunRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 23) throw IoError(path + ": malformed row: " + line);
        RunRecord r;
        r.scenario_id = f[0];
        r.dataset_id = f[1];
        r.cv1 = dist_kind_from_string(f[2]);
        r.cv2 = parse_double(f[3]);
        r.cv3 = parse_double(f[4]);
        r.cv4 = parse_double(f[5]);
        r.attack = attack_kind_from_string(f[6]);
        r.run = static_cast<std::size_t>(std::stoull(f[7]));
        r.metrics.accuracy = parse_double(f[8]);
        r.metrics.precision = parse_double(f[9]);
        r.metrics.recall = parse_double(f[10]);
        r.metrics.f1 = parse_double(f[11]);
        r.metrics.fnr = parse_double(f[12]);
        r.metrics.fpr = parse_double(f[13]);
        r.metrics.ma = parse_double(f[14]);
        r.metrics.auc = parse_double(f[15]);
        r.metrics.auc_log = parse_double(f[16]);
        r.metrics.tpr_at_fpr[1e-2] = parse_double(f[17]);
        r.metrics.tpr_at_fpr[1e-3] = parse_double(f[18]);
        if (!f[19].empty()) r.metrics.threshold_at_max_ma = parse_double(f[19]);
        r.metrics.abstained = static_cast<std::size_t>(std::stoull(f[20]));
        r.converged = f[21] == "1";
        r.seed = std::stoull(f[22]);
        records.push_back(std::move(r));
    }
    return records;
}

void write_flips_csv(const std::vector<FlipRecord>& flips, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "attack_a,attack_b,scenario_a,scenario_b,metric,mr_cv\n";
    for (const auto& f : flips)
        out << to_string(f.attack_a) << "," << to_string(f.attack_b) << "," << f.dataset_id
            << ":" << f.scenario_a << "," << f.dataset_id << ":" << f.scenario_b << ","
            << f.metric << "," << to_string(f.attributed_cv) << "\n";
    if (!out) throw IoError("write failed for " + path);
}

// ---------------------------------------------------------------------
// Sweep execution
// ---------------------------------------------------------------------

namespace {

struct UnitTask {
    const DatasetPreset* preset = nullptr;
    std::size_t run = 0;
};

struct UnitOutput {
    std::vector<RunRecord> records;
    std::vector<std::string> rejects;
    std::vector<std::string> errors;
};

std::string core_key(const EvaluationScenario& s) {
    return to_string(s.cv1) + "|" + fmt(s.cv2) + "|" + fmt(s.cv3);
}

// Per-(dataset, run) caches shared by that unit's scenarios.
struct UnitState {
    DatasetFixture fixture;
    std::vector<bool> truth;
    std::vector<std::vector<double>> shadow_ptrue_all; // [shadow][dataset sample]
    std::vector<ProbVector> target_on_shadow_pool;
    SoftmaxClassifier distilled_student;
    SoftmaxClassifier calibration_student;
    std::map<std::string, ScenarioInstance> cores;
    std::map<std::string, std::string> core_rejects;
    std::map<std::string, AttackResult> attack_cache;
};

void prepare_unit(UnitState& st, const DatasetPreset& preset, std::uint64_t master,
                  std::size_t run) {
    st.fixture = build_fixture(preset, master, run, /*with_shadows=*/true);
    st.truth = scoring_truth(st.fixture.dataset);

    const auto& sb = st.fixture.shadows;
    st.shadow_ptrue_all.resize(sb.shadows.size());
    for (std::size_t s = 0; s < sb.shadows.size(); ++s) {
        st.shadow_ptrue_all[s].resize(st.fixture.dataset.size());
        for (std::size_t i = 0; i < st.fixture.dataset.size(); ++i) {
            const auto& ex = st.fixture.dataset.examples[i];
            st.shadow_ptrue_all[s][i] =
                sb.shadows[s].model.predict_proba(ex.features)[ex.true_label];
        }
    }
    st.target_on_shadow_pool.reserve(sb.pool.examples.size());
    for (const auto& ex : sb.pool.examples)
        st.target_on_shadow_pool.push_back(st.fixture.target.model.predict_proba(ex.features));

    std::vector<std::size_t> all(sb.pool.examples.size());
    std::iota(all.begin(), all.end(), 0);
    TrainHyper h;
    h.hidden = {64};
    h.epochs = 50;
    h.learning_rate = 0.25;
    const std::string tag = preset.id + "|run" + std::to_string(run);
    h.seed = derive_seed(master, "distill-student|" + tag);
    st.distilled_student = train_distilled(sb.pool, all, st.target_on_shadow_pool, h);
    h.seed = derive_seed(master, "distill-cal|" + tag);
    st.calibration_student = train_distilled(sb.pool, all, sb.shadows.front().outputs, h);
}

const ScenarioInstance* core_for(UnitState& st, const EvaluationScenario& scenario,
                                 std::uint64_t master, std::size_t run,
                                 std::string* reject_reason) {
    const std::string key = core_key(scenario);
    if (auto it = st.cores.find(key); it != st.cores.end()) return &it->second;
    if (auto it = st.core_rejects.find(key); it != st.core_rejects.end()) {
        *reject_reason = it->second;
        return nullptr;
    }
    try {
        const auto seed = derive_seed(
            master, "materialize|" + scenario.dataset_id + "|" + std::to_string(run) + "|" + key);
        auto [it, ok] = st.cores.emplace(key, materialize_scenario(scenario, st.fixture, seed));
        return &it->second;
    } catch (const InfeasibleDistributionError& e) {
        st.core_rejects[key] = e.what();
        *reject_reason = e.what();
        return nullptr;
    }
}

AttackContext make_context(const UnitState& st, const ScenarioInstance& inst,
                           const EvaluationScenario& scenario, std::uint64_t master,
                           std::size_t run) {
    AttackContext ctx;
    ctx.outputs = inst.outputs;
    ctx.features.reserve(inst.sample_indices.size());
    ctx.true_labels = inst.labels;
    for (std::size_t i : inst.sample_indices)
        ctx.features.push_back(st.fixture.dataset.examples[i].features);
    ctx.nonmember_reference = inst.nonmember_reference;
    ctx.shadow = &st.fixture.shadows;
    ctx.abstention_ratio = scenario.cv4;
    ctx.class_count = st.fixture.pool.class_count;
    ctx.seed = derive_seed(master, "attack|" + scenario.dataset_id + "|" +
                                       std::to_string(run) + "|" + core_key(scenario));

    ctx.shadow_ptrue.resize(st.shadow_ptrue_all.size());
    for (std::size_t s = 0; s < st.shadow_ptrue_all.size(); ++s) {
        ctx.shadow_ptrue[s].reserve(inst.sample_indices.size());
        for (std::size_t i : inst.sample_indices)
            ctx.shadow_ptrue[s].push_back(st.shadow_ptrue_all[s][i]);
    }
    ctx.target_on_shadow_pool = st.target_on_shadow_pool;
    ctx.distilled_student = &st.distilled_student;
    ctx.calibration_student = &st.calibration_student;

    // Query access: transformed copies of the scenario's own samples.
    std::vector<std::size_t> base;
    base.reserve(inst.sample_indices.size());
    for (std::size_t i : inst.sample_indices)
        base.push_back(st.fixture.dataset.source_indices[i]);
    const Pool* pool = &st.fixture.pool;
    const TrainedTarget* target = &st.fixture.target;
    ctx.transform_probe = [pool, target, base](std::uint64_t probe_seed, double noise,
                                               std::size_t count) {
        return generate_nonmembers(*pool, *target, NonmemberMode::Transform, count, probe_seed,
                                   noise, base);
    };
    return ctx;
}

UnitOutput run_unit(const DatasetPreset& preset, std::size_t run,
                    const std::vector<EvaluationScenario>& scenarios,
                    const std::vector<AttackKind>& kinds, std::uint64_t master) {
    UnitOutput out;
    UnitState st;
    try {
        prepare_unit(st, preset, master, run);
    } catch (const std::exception& e) {
        out.errors.push_back(preset.id + " run " + std::to_string(run) +
                             ": unit setup failed: " + e.what());
        return out;
    }

    for (const auto& scenario : scenarios) {
        std::string reject;
        const ScenarioInstance* inst = core_for(st, scenario, master, run, &reject);
        if (!inst) {
            out.rejects.push_back(scenario.dataset_id + ":" + scenario.scenario_id + ": " +
                                  reject);
            continue;
        }
        std::vector<bool> truth;
        truth.reserve(inst->sample_indices.size());
        for (std::size_t i : inst->sample_indices) truth.push_back(st.truth[i]);

        for (AttackKind kind : kinds) {
            RunRecord rec;
            rec.scenario_id = scenario.scenario_id;
            rec.dataset_id = scenario.dataset_id;
            rec.cv1 = scenario.cv1;
            rec.cv2 = scenario.cv2;
            rec.cv3 = scenario.cv3;
            rec.cv4 = scenario.cv4;
            rec.attack = kind;
            rec.run = run;
            rec.seed = derive_seed(master, "attack|" + scenario.dataset_id + "|" +
                                               std::to_string(run) + "|" + core_key(scenario));

            // CV4 siblings share everything except abstention, so results
            // cache on the core; fine-grained attacks key on the ratio too.
            std::string cache_key = core_key(scenario) + "|" + to_string(kind);
            if (is_fine_grained(kind)) cache_key += "|" + fmt(scenario.cv4);

            try {
                const auto t0 = std::chrono::steady_clock::now();
                const AttackResult* result = nullptr;
                if (auto it = st.attack_cache.find(cache_key); it != st.attack_cache.end()) {
                    result = &it->second;
                } else {
                    AttackContext ctx = make_context(st, *inst, scenario, master, run);
                    auto [it2, ok] = st.attack_cache.emplace(cache_key, run_attack(kind, ctx));
                    result = &it2->second;
                }
                rec.metrics = evaluate(result->scores, result->decisions, truth);
                rec.converged = result->converged;
                rec.wall_time_s =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                out.records.push_back(std::move(rec));
            } catch (const std::exception& e) {
                out.errors.push_back(scenario.dataset_id + ":" + scenario.scenario_id + ":" +
                                     to_string(kind) + " run " + std::to_string(run) + ": " +
                                     e.what());
            }
        }
    }
    return out;
}

} // namespace

BenchOutcome run_bench(const BenchConfig& cfg) {
    validate_config(cfg);

    std::vector<DatasetPreset> presets;
    for (const auto& p : all_presets()) {
        if (!cfg.datasets.empty() &&
            std::find(cfg.datasets.begin(), cfg.datasets.end(), p.id) == cfg.datasets.end())
            continue;
        presets.push_back(cfg.quick ? quick_variant(p) : p);
    }
    std::vector<AttackKind> kinds;
    if (cfg.attacks.empty()) {
        kinds.assign(kAllAttackKinds.begin(), kAllAttackKinds.end());
    } else {
        for (const auto& a : cfg.attacks) kinds.push_back(attack_kind_from_string(a));
    }

    std::vector<std::vector<EvaluationScenario>> matrices;
    std::vector<UnitTask> units;
    for (auto& p : presets) {
        auto matrix = build_scenario_matrix(p);
        if (!cfg.scenarios.empty()) {
            std::erase_if(matrix, [&](const EvaluationScenario& s) {
                return std::find(cfg.scenarios.begin(), cfg.scenarios.end(), s.scenario_id) ==
                       cfg.scenarios.end();
            });
        }
        matrices.push_back(std::move(matrix));
    }
    for (std::size_t pi = 0; pi < presets.size(); ++pi)
        for (std::size_t r = 0; r < cfg.runs; ++r) units.push_back({&presets[pi], r});

    std::vector<UnitOutput> outputs(units.size());
    std::atomic<std::size_t> next{0};
    const std::size_t workers =
        std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(),
                                                       units.size()));
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= units.size()) return;
            const auto& u = units[i];
            std::size_t pi = 0;
            for (; pi < presets.size(); ++pi)
                if (&presets[pi] == u.preset) break;
            outputs[i] = run_unit(*u.preset, u.run, matrices[pi], kinds, cfg.master_seed);
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    BenchOutcome outcome;
    for (auto& o : outputs) {
        outcome.records.insert(outcome.records.end(), o.records.begin(), o.records.end());
        outcome.rejects.insert(outcome.rejects.end(), o.rejects.begin(), o.rejects.end());
        outcome.errors.insert(outcome.errors.end(), o.errors.begin(), o.errors.end());
    }
    std::sort(outcome.rejects.begin(), outcome.rejects.end());
    outcome.rejects.erase(std::unique(outcome.rejects.begin(), outcome.rejects.end()),
                          outcome.rejects.end());
    std::sort(outcome.errors.begin(), outcome.errors.end());
    outcome.digest = fnv1a(results_csv(outcome.records));
    return outcome;
}

std::vector<RunRecord> run_scenario(const EvaluationScenario& scenario,
                                    const std::vector<AttackKind>& kinds, std::size_t runs,
                                    std::uint64_t master_seed, bool quick) {
    const DatasetPreset base = preset_by_id(scenario.dataset_id);
    const DatasetPreset preset = quick ? quick_variant(base) : base;
    std::vector<RunRecord> records;
    for (std::size_t r = 0; r < runs; ++r) {
        auto out = run_unit(preset, r, {scenario}, kinds, master_seed);
        if (!out.errors.empty())
            throw std::runtime_error("run_scenario: " + out.errors.front());
        if (!out.rejects.empty())
            throw InfeasibleDistributionError("run_scenario: " + out.rejects.front(),
                                              "scenario");
        records.insert(records.end(), out.records.begin(), out.records.end());
    }
    return records;
}

void dump_roc_points(const EvaluationScenario& scenario, std::uint64_t master_seed, bool quick,
                     const std::string& out_dir) {
    const DatasetPreset base = preset_by_id(scenario.dataset_id);
    const DatasetPreset preset = quick ? quick_variant(base) : base;
    UnitState st;
    prepare_unit(st, preset, master_seed, 0);
    std::string reject;
    const ScenarioInstance* inst = core_for(st, scenario, master_seed, 0, &reject);
    if (!inst)
        throw InfeasibleDistributionError("roc dump: " + reject, "scenario");
    std::vector<bool> truth;
    for (std::size_t i : inst->sample_indices) truth.push_back(st.truth[i]);

    for (AttackKind kind : kAllAttackKinds) {
        AttackContext ctx = make_context(st, *inst, scenario, master_seed, 0);
        const AttackResult result = run_attack(kind, ctx);
        const RocCurve curve = roc(result.scores, truth);
        const std::string path = out_dir + "/roc_" + scenario.dataset_id + "_" +
                                 scenario.scenario_id + "_" + to_string(kind) + ".csv";
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path);
        out << "fpr,tpr,threshold\n";
        for (const auto& pt : curve.points)
            out << fmt(pt.fpr) << "," << fmt(pt.tpr) << "," << fmt(pt.threshold) << "\n";
    }
}

} // namespace mia
