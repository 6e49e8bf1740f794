#include "mia/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mia {

namespace {

void check_same_dim(const ProbVector& p, const ProbVector& q) {
    if (p.size() != q.size()) {
        throw DimensionError("vector dimension mismatch: " + std::to_string(p.size()) +
                             " vs " + std::to_string(q.size()));
    }
}

void check_batches(const Batch& a, const Batch& b) {
    if (a.empty() || b.empty()) throw EmptyBatchError("mmd: empty batch");
    const std::size_t dim = a.front().size();
    for (const auto& v : a)
        if (v.size() != dim) throw DimensionError("mmd: ragged batch a");
    for (const auto& v : b)
        if (v.size() != dim) throw DimensionError("mmd: batch dimension mismatch");
}

double resolved_sigma(const Batch& a, const Batch& b, const MmdConfig& cfg) {
    if (cfg.sigma) {
        if (*cfg.sigma <= 0.0) throw ConfigError("mmd: sigma must be positive");
        return *cfg.sigma;
    }
    return median_heuristic_sigma(a, b, cfg.norm_mode);
}

double kernel_from_sq(double dist_sq, double sigma, NormMode mode) {
    const double d = mode == NormMode::UnsquaredNorm ? std::sqrt(dist_sq) : dist_sq;
    return std::exp(-d / (2.0 * sigma * sigma));
}

double dist_sq(const ProbVector& p, const ProbVector& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - q[i];
        s += d * d;
    }
    return s;
}

double sqrt_clamped(double radicand) {
    if (radicand < 0.0) {
        if (radicand > -1e-12) return 0.0;
        throw std::logic_error("mmd: radicand " + std::to_string(radicand) +
                               " below the floating-error clamp");
    }
    return std::sqrt(radicand);
}

// Shared core for the mean- and sum-normalized variants. Exploits kernel
// symmetry within each batch; the brute oracle deliberately does not.
// Extended-precision accumulation keeps identical batches at exact zero.
double embedding_radicand(const Batch& a, const Batch& b, double sigma, NormMode mode,
                          bool mean_form) {
    const std::size_t na = a.size(), nb = b.size();
    long double kaa = static_cast<long double>(na); // diagonal terms, k(x,x) = 1
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = i + 1; j < na; ++j)
            kaa += 2.0L * kernel_from_sq(dist_sq(a[i], a[j]), sigma, mode);
    long double kbb = static_cast<long double>(nb);
    for (std::size_t i = 0; i < nb; ++i)
        for (std::size_t j = i + 1; j < nb; ++j)
            kbb += 2.0L * kernel_from_sq(dist_sq(b[i], b[j]), sigma, mode);
    long double kab = 0.0L;
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j)
            kab += kernel_from_sq(dist_sq(a[i], b[j]), sigma, mode);
    if (mean_form) {
        const long double fa = static_cast<long double>(na), fb = static_cast<long double>(nb);
        return static_cast<double>(kaa / (fa * fa) + kbb / (fb * fb) - 2.0L * kab / (fa * fb));
    }
    return static_cast<double>(kaa + kbb - 2.0L * kab);
}

} // namespace

void validate_prob_vector(const ProbVector& v) {
    if (v.empty()) throw DimensionError("probability vector is empty");
    double sum = 0.0;
    for (double x : v) {
        if (!(x >= 0.0 && x <= 1.0))
            throw std::invalid_argument("probability entry outside [0,1]: " + std::to_string(x));
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw std::invalid_argument("probability vector sums to " + std::to_string(sum));
}

double vector_distance(const ProbVector& p, const ProbVector& q) {
    check_same_dim(p, q);
    return std::sqrt(dist_sq(p, q));
}

double gaussian_kernel(const ProbVector& p, const ProbVector& q, const MmdConfig& cfg) {
    check_same_dim(p, q);
    if (!cfg.sigma || *cfg.sigma <= 0.0)
        throw ConfigError("gaussian_kernel: positive sigma required");
    return kernel_from_sq(dist_sq(p, q), *cfg.sigma, cfg.norm_mode);
}

double median_heuristic_sigma(const Batch& a, const Batch& b, NormMode norm_mode) {
    check_batches(a, b);
    std::vector<const ProbVector*> all;
    all.reserve(a.size() + b.size());
    for (const auto& v : a) all.push_back(&v);
    for (const auto& v : b) all.push_back(&v);
    std::vector<double> dists;
    dists.reserve(all.size() * (all.size() - 1) / 2);
    for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = i + 1; j < all.size(); ++j) {
            const double d2 = dist_sq(*all[i], *all[j]);
            dists.push_back(norm_mode == NormMode::UnsquaredNorm ? std::sqrt(d2) : d2);
        }
    if (dists.empty()) return 1.0;
    const std::size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
    const double med = dists[mid];
    return med > 0.0 ? med : 1.0;
}

double mmd(const Batch& a, const Batch& b, const MmdConfig& cfg) {
    check_batches(a, b);
    const double sigma = resolved_sigma(a, b, cfg);
    return sqrt_clamped(embedding_radicand(a, b, sigma, cfg.norm_mode, /*mean_form=*/true));
}

double mmd_brute_oracle(const Batch& a, const Batch& b, const MmdConfig& cfg) {
    check_batches(a, b);
    MmdConfig resolved = cfg;
    resolved.sigma = resolved_sigma(a, b, cfg);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    long double term_aa = 0.0L, term_bb = 0.0L, term_ab = 0.0L;
    for (const auto& x : a)
        for (const auto& y : a) term_aa += gaussian_kernel(x, y, resolved);
    for (const auto& x : b)
        for (const auto& y : b) term_bb += gaussian_kernel(x, y, resolved);
    for (const auto& x : a)
        for (const auto& y : b) term_ab += gaussian_kernel(x, y, resolved);
    const double radicand = static_cast<double>(term_aa / (na * na) + term_bb / (nb * nb) -
                                                2.0L * term_ab / (na * nb));
    return sqrt_clamped(radicand);
}

double embedding_sum_distance(const Batch& a, const Batch& b, const MmdConfig& cfg) {
    check_batches(a, b);
    const double sigma = resolved_sigma(a, b, cfg);
    return sqrt_clamped(embedding_radicand(a, b, sigma, cfg.norm_mode, /*mean_form=*/false));
}

std::vector<double> group_mmds(const std::vector<ProbVector>& high,
                               const std::vector<ProbVector>& low,
                               std::size_t eta, const MmdConfig& cfg) {
    if (high.size() != low.size())
        throw PartitionError("group_mmds: high/low sizes differ");
    if (eta == 0 || high.size() % eta != 0)
        throw PartitionError("group_mmds: eta " + std::to_string(eta) +
                             " does not divide side size " + std::to_string(high.size()));
    const std::size_t groups = high.size() / eta;
    std::vector<double> out;
    out.reserve(groups);
    for (std::size_t g = 0; g < groups; ++g) {
        Batch ha(high.begin() + static_cast<std::ptrdiff_t>(g * eta),
                 high.begin() + static_cast<std::ptrdiff_t>((g + 1) * eta));
        Batch lo(low.begin() + static_cast<std::ptrdiff_t>(g * eta),
                 low.begin() + static_cast<std::ptrdiff_t>((g + 1) * eta));
        out.push_back(mmd(ha, lo, cfg));
    }
    return out;
}

std::vector<std::vector<double>> kernel_matrix(const Batch& a, const Batch& b,
                                               const MmdConfig& cfg) {
    check_batches(a, b);
    MmdConfig resolved = cfg;
    resolved.sigma = resolved_sigma(a, b, cfg);
    std::vector<std::vector<double>> k(a.size(), std::vector<double>(b.size()));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            k[i][j] = kernel_from_sq(dist_sq(a[i], b[j]), *resolved.sigma, cfg.norm_mode);
    return k;
}

} // namespace mia
