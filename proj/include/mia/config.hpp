#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mia/scenario.hpp"

namespace mia {

/// Benchmark run configuration. Loaded from a versioned JSON file, with
/// CLI flags overriding individual fields. A seed is mandatory; nothing in
/// the harness ever seeds from the clock.
struct BenchConfig {
    int format_version = 1;
    std::uint64_t master_seed = 0;
    bool seed_set = false;
    std::size_t runs = 10;
    bool quick = false;
    std::vector<std::string> datasets;  // empty = all presets
    std::vector<std::string> attacks;   // empty = all 15
    std::vector<std::string> scenarios; // empty = all 84 (ES ids)
    std::string out_dir = "out";
    std::vector<std::string> roc_dump; // "dataset:ESxx" entries to dump curves for
};

BenchConfig load_config(const std::string& path);
void save_config(const BenchConfig& cfg, const std::string& path);

/// Throws ConfigError naming the offending key.
void validate_config(const BenchConfig& cfg);

/// Dataset snapshot files: versioned header plus pool and model arrays.
void write_dataset_snapshot(const std::string& path, const DatasetFixture& fixture);

struct DatasetSnapshot {
    int format_version = 1;
    std::string dataset_id;
    std::uint64_t task_seed = 0;
    SyntheticTask task;
    TrainHyper hyper;
    Pool pool;
    SoftmaxClassifier model;
    std::vector<std::size_t> train_indices, heldout_indices;
};

DatasetSnapshot read_dataset_snapshot(const std::string& path);

/// FNV-1a digest of a file's bytes, hex-encoded.
std::string file_digest(const std::string& path);

} // namespace mia
