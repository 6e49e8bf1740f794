#include "mia/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mia/attacks.hpp"
#include "mia/errors.hpp"
#include "mia/rng.hpp"

namespace mia {

using nlohmann::json;

namespace {

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("write failed for " + path);
}

} // namespace

BenchConfig load_config(const std::string& path) {
    const json j = read_json(path);
    BenchConfig cfg;
    try {
        cfg.format_version = j.value("format_version", 1);
        if (cfg.format_version != 1)
            throw ConfigError(path + ": unsupported format_version " +
                              std::to_string(cfg.format_version));
        if (j.contains("master_seed")) {
            cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
            cfg.seed_set = true;
        }
        cfg.runs = j.value("runs", std::size_t{10});
        cfg.quick = j.value("quick", false);
        cfg.datasets = j.value("datasets", std::vector<std::string>{});
        cfg.attacks = j.value("attacks", std::vector<std::string>{});
        cfg.scenarios = j.value("scenarios", std::vector<std::string>{});
        cfg.out_dir = j.value("out_dir", std::string("out"));
        cfg.roc_dump = j.value("roc_dump", std::vector<std::string>{});
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return cfg;
}

void save_config(const BenchConfig& cfg, const std::string& path) {
    json j;
    j["format_version"] = cfg.format_version;
    if (cfg.seed_set) j["master_seed"] = cfg.master_seed;
    j["runs"] = cfg.runs;
    j["quick"] = cfg.quick;
    j["datasets"] = cfg.datasets;
    j["attacks"] = cfg.attacks;
    j["scenarios"] = cfg.scenarios;
    j["out_dir"] = cfg.out_dir;
    j["roc_dump"] = cfg.roc_dump;
    write_text(path, j.dump(2) + "\n");
}

void validate_config(const BenchConfig& cfg) {
    if (!cfg.seed_set)
        throw ConfigError("master_seed is required (wall-clock seeding is not supported)");
    if (cfg.runs < 1) throw ConfigError("runs must be >= 1");
    for (const auto& d : cfg.datasets) preset_by_id(d); // throws on unknown
    for (const auto& a : cfg.attacks) attack_kind_from_string(a);
    for (const auto& s : cfg.scenarios) {
        if (s.size() != 4 || s.rfind("ES", 0) != 0)
            throw ConfigError("bad scenario id: " + s);
        const int num = std::stoi(s.substr(2));
        if (num < 1 || num > 84) throw ConfigError("scenario id out of range: " + s);
    }
}

void write_dataset_snapshot(const std::string& path, const DatasetFixture& fixture) {
    json j;
    j["format_version"] = 1;
    j["dataset_id"] = fixture.preset.id;
    const auto& task = fixture.preset.task;
    j["task"] = {{"seed", task.seed},
                 {"class_count", task.class_count},
                 {"feature_dim", task.feature_dim},
                 {"per_class_mean_scale", task.per_class_mean_scale},
                 {"noise_scale", task.noise_scale},
                 {"pool_size", task.pool_size}};
    const auto& h = fixture.preset.target_hyper;
    j["hyper"] = {{"hidden", h.hidden},
                  {"epochs", h.epochs},
                  {"learning_rate", h.learning_rate},
                  {"init_scale", h.init_scale},
                  {"seed", h.seed}};

    json features = json::array(), labels = json::array();
    for (const auto& ex : fixture.pool.examples) {
        features.push_back(ex.features);
        labels.push_back(ex.true_label);
    }
    j["pool"] = {{"class_count", fixture.pool.class_count},
                 {"feature_dim", fixture.pool.feature_dim},
                 {"features", std::move(features)},
                 {"labels", std::move(labels)}};
    j["model"] = {{"weights", fixture.target.model.weights},
                  {"biases", fixture.target.model.biases},
                  {"hidden", h.hidden}};
    j["train_indices"] = fixture.target.train_indices;
    j["heldout_indices"] = fixture.target.heldout_indices;
    write_text(path, j.dump() + "\n");
}

DatasetSnapshot read_dataset_snapshot(const std::string& path) {
    const json j = read_json(path);
    DatasetSnapshot s;
    try {
        s.format_version = j.at("format_version").get<int>();
        if (s.format_version != 1)
            throw ConfigError(path + ": unsupported snapshot version");
        s.dataset_id = j.at("dataset_id").get<std::string>();
        const auto& jt = j.at("task");
        s.task.seed = jt.at("seed").get<std::uint64_t>();
        s.task.class_count = jt.at("class_count").get<std::size_t>();
        s.task.feature_dim = jt.at("feature_dim").get<std::size_t>();
        s.task.per_class_mean_scale = jt.at("per_class_mean_scale").get<double>();
        s.task.noise_scale = jt.at("noise_scale").get<double>();
        s.task.pool_size = jt.at("pool_size").get<std::size_t>();
        s.task_seed = s.task.seed;
        const auto& jh = j.at("hyper");
        s.hyper.hidden = jh.at("hidden").get<std::vector<std::size_t>>();
        s.hyper.epochs = jh.at("epochs").get<std::size_t>();
        s.hyper.learning_rate = jh.at("learning_rate").get<double>();
        s.hyper.init_scale = jh.at("init_scale").get<double>();
        s.hyper.seed = jh.at("seed").get<std::uint64_t>();
        const auto& jp = j.at("pool");
        s.pool.class_count = jp.at("class_count").get<std::size_t>();
        s.pool.feature_dim = jp.at("feature_dim").get<std::size_t>();
        const auto feats = jp.at("features").get<std::vector<std::vector<double>>>();
        const auto labs = jp.at("labels").get<std::vector<std::size_t>>();
        s.pool.examples.resize(feats.size());
        for (std::size_t i = 0; i < feats.size(); ++i) {
            s.pool.examples[i].features = feats[i];
            s.pool.examples[i].true_label = labs[i];
        }
        s.model = SoftmaxClassifier(s.pool.feature_dim,
                                    j.at("model").at("hidden").get<std::vector<std::size_t>>(),
                                    s.pool.class_count);
        s.model.weights = j.at("model").at("weights").get<std::vector<std::vector<double>>>();
        s.model.biases = j.at("model").at("biases").get<std::vector<std::vector<double>>>();
        s.train_indices = j.at("train_indices").get<std::vector<std::size_t>>();
        s.heldout_indices = j.at("heldout_indices").get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return s;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(bytes)));
    return buf;
}

} // namespace mia
