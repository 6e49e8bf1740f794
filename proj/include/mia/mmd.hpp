#pragma once

#include <optional>
#include <vector>

#include "mia/errors.hpp"

namespace mia {

/// A model's output probability vector for one example: entries in [0,1],
/// summing to 1 within 1e-6.
using ProbVector = std::vector<double>;

/// Nonempty list of ProbVectors of uniform dimensionality.
using Batch = std::vector<ProbVector>;

enum class NormMode {
    UnsquaredNorm, // exp(-||p-q|| / (2 sigma^2)), the literal printed kernel
    SquaredNorm    // exp(-||p-q||^2 / (2 sigma^2)), the classical Gaussian kernel
};

enum class Estimator { BiasedVStatistic };

struct MmdConfig {
    /// Kernel bandwidth. Unset -> median of pairwise distances over the
    /// union of the two batches, resolved per call.
    std::optional<double> sigma;
    NormMode norm_mode = NormMode::UnsquaredNorm;
    Estimator estimator = Estimator::BiasedVStatistic;
};

/// Throws if v is not a valid probability vector.
void validate_prob_vector(const ProbVector& v);

/// Euclidean distance (unsquared) between two equal-dimension vectors.
double vector_distance(const ProbVector& p, const ProbVector& q);

/// exp(-d / (2 sigma^2)) with d = ||p-q|| or ||p-q||^2 per cfg.norm_mode.
/// Requires cfg.sigma to be set and positive. Result in (0, 1].
double gaussian_kernel(const ProbVector& p, const ProbVector& q, const MmdConfig& cfg);

/// Median of pairwise distances over the union of a and b (the "median
/// heuristic" bandwidth). Distances per cfg.norm_mode. Degenerate unions
/// (all points identical) fall back to 1.
double median_heuristic_sigma(const Batch& a, const Batch& b, NormMode norm_mode);

/// RKHS norm of the mean-embedding difference between a and b:
///   sqrt( mean k(a_i,a_i') + mean k(b_j,b_j') - 2 mean k(a_i,b_j) )
/// Biased V-statistic, diagonal included. Tiny negative radicands from
/// floating error (> -1e-12) clamp to 0.
double mmd(const Batch& a, const Batch& b, const MmdConfig& cfg);

/// Same quantity as mmd(), computed with naive nested loops and no
/// algebraic shortcuts. Exists to cross-check mmd.
double mmd_brute_oracle(const Batch& a, const Batch& b, const MmdConfig& cfg);

/// RKHS norm of the *sum*-embedding difference, || sum phi(a) - sum phi(b) ||.
/// Equals n * mmd(a, b) when |a| == |b| == n. This is the scale on which
/// the scenario machinery expresses distances between sample sets.
double embedding_sum_distance(const Batch& a, const Batch& b, const MmdConfig& cfg);

/// Partitions high and low into consecutive blocks of eta, pairs block i of
/// high with block i of low, returns the resulting MMDs in input order.
/// Requires |high| == |low| and eta | |high|.
std::vector<double> group_mmds(const std::vector<ProbVector>& high,
                               const std::vector<ProbVector>& low,
                               std::size_t eta, const MmdConfig& cfg);

/// Dense kernel matrix k(a_i, b_j). Used by attacks that iterate over
/// set-moves and need cached kernel rows.
std::vector<std::vector<double>> kernel_matrix(const Batch& a, const Batch& b,
                                               const MmdConfig& cfg);

} // namespace mia
