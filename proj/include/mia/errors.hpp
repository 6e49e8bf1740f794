#pragma once

#include <stdexcept>
#include <string>

namespace mia {

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyBatchError : std::runtime_error {
    explicit EmptyBatchError(const std::string& what) : std::runtime_error(what) {}
};

struct PartitionError : std::runtime_error {
    explicit PartitionError(const std::string& what) : std::runtime_error(what) {}
};

/// A requested distribution cannot be realized from the available groups.
/// `region` names the deficient part of the pool.
struct InfeasibleDistributionError : std::runtime_error {
    InfeasibleDistributionError(const std::string& what, std::string region_)
        : std::runtime_error(what + " [region: " + region_ + "]"), region(std::move(region_)) {}
    std::string region;
};

struct PoolExhaustedError : std::runtime_error {
    explicit PoolExhaustedError(const std::string& what) : std::runtime_error(what) {}
};

struct TrainingDivergedError : std::runtime_error {
    explicit TrainingDivergedError(const std::string& what) : std::runtime_error(what) {}
};

struct MissingContextError : std::runtime_error {
    explicit MissingContextError(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateSetError : std::runtime_error {
    explicit DegenerateSetError(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateTruthError : std::runtime_error {
    explicit DegenerateTruthError(const std::string& what) : std::runtime_error(what) {}
};

struct LengthError : std::runtime_error {
    explicit LengthError(const std::string& what) : std::runtime_error(what) {}
};

struct NoDecisionsError : std::runtime_error {
    explicit NoDecisionsError(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyInputError : std::runtime_error {
    explicit EmptyInputError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace mia
