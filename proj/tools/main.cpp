#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mia/bench.hpp"
#include "mia/config.hpp"
#include "mia/rng.hpp"

namespace fs = std::filesystem;
using namespace mia;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitAllFailed = 4;

struct CliOptions {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::size_t runs = 0;
    bool runs_given = false;
    bool quick = false;
    std::vector<std::string> attacks, scenarios, datasets;
    std::string out_dir;
};

BenchConfig merge_config(const CliOptions& opt) {
    BenchConfig cfg;
    if (!opt.config_path.empty()) cfg = load_config(opt.config_path);
    if (opt.seed_given) {
        cfg.master_seed = opt.seed;
        cfg.seed_set = true;
    }
    if (opt.runs_given) cfg.runs = opt.runs;
    if (opt.quick) cfg.quick = true;
    if (!opt.attacks.empty()) cfg.attacks = opt.attacks;
    if (!opt.scenarios.empty()) cfg.scenarios = opt.scenarios;
    if (!opt.datasets.empty()) cfg.datasets = opt.datasets;
    if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
    validate_config(cfg);
    return cfg;
}

std::vector<DatasetPreset> selected_presets(const BenchConfig& cfg) {
    std::vector<DatasetPreset> out;
    for (const auto& p : all_presets()) {
        if (!cfg.datasets.empty() &&
            std::find(cfg.datasets.begin(), cfg.datasets.end(), p.id) == cfg.datasets.end())
            continue;
        out.push_back(cfg.quick ? quick_variant(p) : p);
    }
    return out;
}

std::string scenario_matrix_csv(const std::vector<EvaluationScenario>& matrix) {
    std::string csv = "scenario_id,dataset_id,cv1,cv2,cv3,cv4\n";
    char buf[128];
    for (const auto& s : matrix) {
        std::snprintf(buf, sizeof buf, "%s,%s,%s,%.3f,%.3f,%.2f\n", s.scenario_id.c_str(),
                      s.dataset_id.c_str(), to_string(s.cv1).c_str(), s.cv2, s.cv3, s.cv4);
        csv += buf;
    }
    return csv;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("write failed for " + path);
}

int cmd_gen_data(const BenchConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    for (const auto& preset : selected_presets(cfg)) {
        const auto fixture = build_fixture(preset, cfg.master_seed, 0, /*with_shadows=*/false);
        const std::string path = cfg.out_dir + "/snapshot_" + preset.id + ".json";
        write_dataset_snapshot(path, fixture);
        std::cout << preset.id << " " << file_digest(path) << "\n";
    }
    return kExitOk;
}

int cmd_build_scenarios(const BenchConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    std::vector<std::string> rejects;
    for (const auto& preset : selected_presets(cfg)) {
        const auto matrix = build_scenario_matrix(preset);
        write_file(cfg.out_dir + "/scenarios_" + preset.id + ".csv",
                   scenario_matrix_csv(matrix));

        // Realized-CV report from the run-0 fixture; scenarios differing
        // only in CV4 share one materialization.
        const auto fixture = build_fixture(preset, cfg.master_seed, 0, /*with_shadows=*/false);
        std::string report = "scenario_id,dataset_id,realized_cv2,realized_cv3,nonmember_mode,"
                             "nonmember_knob\n";
        std::map<std::string, const ScenarioInstance*> cores;
        std::vector<ScenarioInstance> storage;
        storage.reserve(27);
        for (const auto& s : matrix) {
            const std::string key = to_string(s.cv1) + "|" + std::to_string(s.cv2) + "|" +
                                    std::to_string(s.cv3);
            const ScenarioInstance* inst = nullptr;
            if (auto it = cores.find(key); it != cores.end()) {
                inst = it->second;
            } else {
                try {
                    storage.push_back(materialize_scenario(
                        s, fixture,
                        derive_seed(cfg.master_seed, "materialize|" + preset.id + "|0|" + key)));
                    inst = &storage.back();
                } catch (const InfeasibleDistributionError& e) {
                    rejects.push_back(preset.id + ":" + s.scenario_id + ": " + e.what());
                }
                cores[key] = inst;
            }
            if (inst) {
                char buf[160];
                std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%s,%.6f\n",
                              s.scenario_id.c_str(), preset.id.c_str(), inst->realized_cv2,
                              inst->realized_cv3,
                              inst->nonmember_mode == NonmemberMode::Transform ? "transform"
                                                                               : "heldout",
                              inst->nonmember_knob);
                report += buf;
            }
        }
        write_file(cfg.out_dir + "/realized_" + preset.id + ".csv", report);
        std::cout << preset.id << ": 84 scenarios written\n";
    }
    std::string reject_text;
    for (const auto& r : rejects) reject_text += r + "\n";
    write_file(cfg.out_dir + "/rejects.txt", reject_text);
    if (!rejects.empty())
        std::cout << "warning: " << rejects.size() << " infeasible scenario cores (see "
                  << cfg.out_dir << "/rejects.txt)\n";
    return kExitOk;
}

std::string render_table2(const std::vector<RunRecord>& records);

int cmd_run(const BenchConfig& cfg) {
    for (const auto& preset : selected_presets(cfg)) {
        const std::string path = cfg.out_dir + "/scenarios_" + preset.id + ".csv";
        if (!fs::exists(path))
            throw IoError("missing scenario matrix " + path + " (run build-scenarios first)");
    }
    fs::create_directories(cfg.out_dir);

    const BenchOutcome outcome = run_bench(cfg);
    for (const auto& e : outcome.errors) std::cerr << "error: " << e << "\n";
    std::string reject_text;
    for (const auto& r : outcome.rejects) reject_text += r + "\n";
    write_file(cfg.out_dir + "/rejects.txt", reject_text);

    if (outcome.records.empty()) {
        std::cerr << "all records failed\n";
        return kExitAllFailed;
    }
    persist_results(outcome.records, cfg.out_dir + "/results.csv");
    write_file(cfg.out_dir + "/summary.txt", render_table2(outcome.records));

    // ROC point dumps: requested scenarios plus each dataset's ES01.
    std::vector<std::string> dumps = cfg.roc_dump;
    for (const auto& preset : selected_presets(cfg)) {
        if (cfg.scenarios.empty() ||
            std::find(cfg.scenarios.begin(), cfg.scenarios.end(), "ES01") !=
                cfg.scenarios.end())
            dumps.push_back(preset.id + ":ES01");
    }
    std::sort(dumps.begin(), dumps.end());
    dumps.erase(std::unique(dumps.begin(), dumps.end()), dumps.end());
    for (const auto& d : dumps) {
        const auto colon = d.find(':');
        if (colon == std::string::npos) continue;
        const std::string dataset = d.substr(0, colon), sid = d.substr(colon + 1);
        bool listed = false;
        for (const auto& preset : selected_presets(cfg)) listed |= preset.id == dataset;
        if (!listed) continue;
        const auto matrix = build_scenario_matrix(cfg.quick
                                                      ? quick_variant(preset_by_id(dataset))
                                                      : preset_by_id(dataset));
        for (const auto& s : matrix)
            if (s.scenario_id == sid) {
                try {
                    dump_roc_points(s, cfg.master_seed, cfg.quick, cfg.out_dir);
                } catch (const std::exception& e) {
                    std::cerr << "roc dump " << d << ": " << e.what() << "\n";
                }
                break;
            }
    }

    char digest[32];
    std::snprintf(digest, sizeof digest, "%016llx",
                  static_cast<unsigned long long>(outcome.digest));
    std::cout << outcome.records.size() << " records, digest " << digest << "\n";
    if (!outcome.rejects.empty())
        std::cout << "warning: " << outcome.rejects.size() << " rejected scenarios\n";
    return kExitOk;
}

const char* kTableMetrics[] = {"accuracy", "precision", "recall",     "f1",
                               "fnr",      "fpr",       "ma",         "auc",
                               "auc_log",  "tpr_at_1e-2"};

std::string render_table2(const std::vector<RunRecord>& records) {
    // One block per (dataset, cv1): the lowest (cv2, cv3, cv4) scenario,
    // metric rows by attack columns, mean over runs.
    std::map<std::string, std::map<DistKind, std::vector<const RunRecord*>>> blocks;
    for (const auto& r : records) blocks[r.dataset_id][r.cv1].push_back(&r);

    std::string out;
    for (const auto& [dataset, kinds] : blocks) {
        for (const auto& [kind, recs] : kinds) {
            auto tuple_of = [](const RunRecord* r) {
                return std::array<double, 3>{r->cv2, r->cv3, r->cv4};
            };
            auto base = tuple_of(*std::min_element(
                recs.begin(), recs.end(),
                [&](const RunRecord* a, const RunRecord* b) { return tuple_of(a) < tuple_of(b); }));
            out += "== " + dataset + " / " + to_string(kind) + " @ cv2=" +
                   std::to_string(base[0]) + " cv3=" + std::to_string(base[1]) + " cv4=" +
                   std::to_string(base[2]) + " ==\n";
            std::map<AttackKind, std::map<std::string, std::pair<double, std::size_t>>> cells;
            for (const auto* r : recs) {
                if (tuple_of(r) != base) continue;
                for (const char* m : kTableMetrics) {
                    auto& [sum, n] = cells[r->attack][m];
                    sum += metric_value(*r, m);
                    ++n;
                }
            }
            out += "metric";
            for (AttackKind k : kAllAttackKinds)
                if (cells.count(k)) out += "\t" + to_string(k);
            out += "\n";
            for (const char* m : kTableMetrics) {
                out += m;
                for (AttackKind k : kAllAttackKinds) {
                    if (!cells.count(k)) continue;
                    const auto& [sum, n] = cells[k][m];
                    char buf[32];
                    std::snprintf(buf, sizeof buf, "\t%.4f",
                                  n ? sum / static_cast<double>(n) : 0.0);
                    out += buf;
                }
                out += "\n";
            }
            out += "\n";
        }
    }
    return out;
}

int cmd_report(const BenchConfig& cfg, const std::string& kind, const std::string& results_path) {
    if (kind != "table2" && kind != "flips" && kind != "roc-points")
        throw ConfigError("unknown report kind: " + kind);
    const auto records = load_results(results_path);
    fs::create_directories(cfg.out_dir);

    if (kind == "table2") {
        const std::string text = render_table2(records);
        write_file(cfg.out_dir + "/table2.txt", text);
        std::cout << text;
        return kExitOk;
    }
    if (kind == "flips") {
        std::vector<std::string> datasets;
        for (const auto& r : records)
            if (std::find(datasets.begin(), datasets.end(), r.dataset_id) == datasets.end())
                datasets.push_back(r.dataset_id);
        std::sort(datasets.begin(), datasets.end());
        std::vector<FlipRecord> flips;
        for (const auto& d : datasets) {
            const auto matrix = build_scenario_matrix(preset_by_id(d));
            const auto groups = group_scenarios(matrix);
            const auto f = detect_rank_flips(records, groups, d, "ma");
            flips.insert(flips.end(), f.begin(), f.end());
        }
        write_flips_csv(flips, cfg.out_dir + "/flips.csv");
        std::cout << flips.size() << " flips\n";
        if (!flips.empty()) {
            const auto shares = summarize_flip_causes(flips);
            std::printf("shares: CV1=%.4f CV2=%.4f CV3=%.4f CV4=%.4f\n", shares[0], shares[1],
                        shares[2], shares[3]);
        }
        return kExitOk;
    }
    // roc-points: merge the per-attack dumps into plot-ready files.
    std::string merged = "dataset,scenario,attack,fpr,tpr,threshold\n";
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(cfg.out_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("roc_", 0) != 0 || entry.path().extension() != ".csv") continue;
        std::ifstream in(entry.path());
        std::string line;
        std::getline(in, line); // header
        const std::string stem = name.substr(4, name.size() - 8);
        auto p1 = stem.find('_');
        auto p2 = stem.find('_', p1 + 1);
        const std::string dataset = stem.substr(0, p1);
        const std::string sid = stem.substr(p1 + 1, p2 - p1 - 1);
        const std::string attack = stem.substr(p2 + 1);
        while (std::getline(in, line))
            if (!line.empty()) merged += dataset + "," + sid + "," + attack + "," + line + "\n";
        ++files;
    }
    if (files == 0) throw IoError("no roc_*.csv dumps found in " + cfg.out_dir);
    write_file(cfg.out_dir + "/roc_points.csv", merged);
    std::cout << "merged " << files << " curve files\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Controlled-scenario benchmark for membership-inference attacks"};
    app.require_subcommand(1);

    CliOptions opt;
    std::string report_kind = "table2";
    std::string results_path;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opt.config_path, "JSON config file");
        cmd->add_option("--seed", opt.seed, "master seed")->each([&](const std::string&) {
            opt.seed_given = true;
        });
        cmd->add_option("--runs", opt.runs, "runs per scenario")->each([&](const std::string&) {
            opt.runs_given = true;
        });
        cmd->add_flag("--quick", opt.quick, "quick mode (small models, 3 runs convention)");
        cmd->add_option("--attacks", opt.attacks, "attack filter")->delimiter(',');
        cmd->add_option("--scenarios", opt.scenarios, "scenario id filter")->delimiter(',');
        cmd->add_option("--datasets", opt.datasets, "dataset filter")->delimiter(',');
        cmd->add_option("--out", opt.out_dir, "output directory");
    };

    auto* gen = app.add_subcommand("gen-data", "write dataset/model snapshots");
    add_common(gen);
    auto* build = app.add_subcommand("build-scenarios", "write scenario matrices");
    add_common(build);
    auto* run = app.add_subcommand("run", "run the benchmark sweep");
    add_common(run);
    auto* report = app.add_subcommand("report", "format results");
    add_common(report);
    report->add_option("--kind", report_kind, "table2 | flips | roc-points");
    report->add_option("--results", results_path, "results CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return kExitConfig;
    }

    try {
        const BenchConfig cfg = merge_config(opt);
        if (gen->parsed()) return cmd_gen_data(cfg);
        if (build->parsed()) return cmd_build_scenarios(cfg);
        if (run->parsed()) return cmd_run(cfg);
        if (report->parsed()) {
            if (results_path.empty()) results_path = cfg.out_dir + "/results.csv";
            return cmd_report(cfg, report_kind, results_path);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
