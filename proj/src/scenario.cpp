#include "mia/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mia/rng.hpp"

namespace mia {

namespace {

// ---------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------

double normal_cdf(double z) { return 0.5 * (1.0 + std::erf(z / std::sqrt(2.0))); }

double normal_quantile(double q) {
    double lo = -10.0, hi = 10.0;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (normal_cdf(mid) < q ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// `needed` strictly increasing picks spread evenly over [0, avail).
std::vector<std::size_t> pick_even(std::size_t avail, std::size_t needed) {
    std::vector<std::size_t> out;
    out.reserve(needed);
    for (std::size_t i = 0; i < needed; ++i)
        out.push_back(((2 * i + 1) * avail) / (2 * needed));
    return out;
}

double kern(const double* a, const double* b, std::size_t dim, double sigma, NormMode nm) {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    const double d = nm == NormMode::UnsquaredNorm ? std::sqrt(s) : s;
    return std::exp(-d / (2.0 * sigma * sigma));
}

// Contiguous storage for the kernel-heavy paths.
struct Flat {
    std::vector<double> data;
    std::size_t n = 0, dim = 0;

    explicit Flat(std::size_t dim_ = 0) : dim(dim_) {}
    void push(const ProbVector& v) {
        if (dim == 0) dim = v.size();
        data.insert(data.end(), v.begin(), v.end());
        ++n;
    }
    const double* row(std::size_t i) const { return data.data() + i * dim; }
};

double pair_sum(const Flat& a, const Flat& b, double sigma, NormMode nm) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.n; ++i)
        for (std::size_t j = 0; j < b.n; ++j) s += kern(a.row(i), b.row(j), a.dim, sigma, nm);
    return s;
}

double self_sum(const Flat& a, double sigma, NormMode nm) {
    double s = static_cast<double>(a.n); // diagonal
    for (std::size_t i = 0; i < a.n; ++i)
        for (std::size_t j = i + 1; j < a.n; ++j)
            s += 2.0 * kern(a.row(i), a.row(j), a.dim, sigma, nm);
    return s;
}

// Realized CV3: average magnitude of the embedding-sum differential when
// one sample moves from the target subset to an equally sized nonmember
// set. Moving x changes the squared distance by exactly
// 4 (1 + rN(x) - rT(x)), so per-probe work is two kernel row sums.
struct Cv3Measurer {
    Flat target;
    std::vector<std::size_t> probe_idx; // subset positions averaged over
    std::vector<bool> probe_high;
    double sigma = 1.0;
    NormMode nm = NormMode::UnsquaredNorm;
    double k_tt = 0.0;

    void init(const Flat& t, const std::vector<bool>& high_flag, std::size_t probe_count) {
        target = t;
        std::vector<std::size_t> high_pos, low_pos;
        for (std::size_t i = 0; i < high_flag.size(); ++i)
            (high_flag[i] ? high_pos : low_pos).push_back(i);
        const std::size_t per_side = std::min({probe_count / 2, high_pos.size(), low_pos.size()});
        for (std::size_t k : pick_even(high_pos.size(), per_side)) {
            probe_idx.push_back(high_pos[k]);
            probe_high.push_back(true);
        }
        for (std::size_t k : pick_even(low_pos.size(), per_side)) {
            probe_idx.push_back(low_pos[k]);
            probe_high.push_back(false);
        }
        k_tt = self_sum(target, sigma, nm);
    }

    double measure(const Flat& nonmem) const {
        const double k_nn = self_sum(nonmem, sigma, nm);
        const double k_tn = pair_sum(target, nonmem, sigma, nm);
        const double before_sq = std::max(0.0, k_tt + k_nn - 2.0 * k_tn);
        const double before = std::sqrt(before_sq);

        double sum_high = 0.0, sum_low = 0.0;
        std::size_t n_high = 0, n_low = 0;
        for (std::size_t p = 0; p < probe_idx.size(); ++p) {
            const std::size_t i = probe_idx[p];
            double r_t = 0.0, r_n = 0.0;
            for (std::size_t j = 0; j < target.n; ++j)
                r_t += kern(target.row(i), target.row(j), target.dim, sigma, nm);
            for (std::size_t j = 0; j < nonmem.n; ++j)
                r_n += kern(target.row(i), nonmem.row(j), target.dim, sigma, nm);
            const double after_sq = std::max(0.0, before_sq + 4.0 * (1.0 + r_n - r_t));
            const double delta = std::sqrt(after_sq) - before;
            if (probe_high[p]) {
                sum_high += delta;
                ++n_high;
            } else {
                sum_low += delta;
                ++n_low;
            }
        }
        const double avg_high = n_high ? sum_high / static_cast<double>(n_high) : 0.0;
        const double avg_low = n_low ? sum_low / static_cast<double>(n_low) : 0.0;
        // Half the spread between the class averages: the common-mode part
        // of a single move (its own embedding mass) cancels, leaving the
        // confidence-axis component of the set mismatch.
        return 0.5 * std::abs(avg_high - avg_low);
    }
};

// Shape-preserving mean steering: swaps a selected value for an unselected
// one from the same swap class while it moves the mean toward the target.
void steer_mean(std::vector<std::size_t>& selected, const std::vector<double>& values,
                const std::vector<int>& swap_class, double target, double tol) {
    std::vector<bool> in_sel(values.size(), false);
    for (std::size_t s : selected) in_sel[s] = true;
    const double n = static_cast<double>(selected.size());
    double mean = 0.0;
    for (std::size_t s : selected) mean += values[s];
    mean /= n;

    for (int iter = 0; iter < 600 && std::abs(mean - target) > tol; ++iter) {
        double best_gain = 0.0;
        std::size_t best_sel = 0, best_uns = 0;
        bool found = false;
        for (std::size_t si = 0; si < selected.size(); ++si) {
            const std::size_t s = selected[si];
            for (std::size_t u = 0; u < values.size(); ++u) {
                if (in_sel[u] || swap_class[u] != swap_class[s]) continue;
                const double new_mean = mean + (values[u] - values[s]) / n;
                const double gain = std::abs(mean - target) - std::abs(new_mean - target);
                if (gain > best_gain + 1e-15) {
                    best_gain = gain;
                    best_sel = si;
                    best_uns = u;
                    found = true;
                }
            }
        }
        if (!found) break;
        in_sel[selected[best_sel]] = false;
        in_sel[best_uns] = true;
        mean += (values[best_uns] - values[selected[best_sel]]) / n;
        selected[best_sel] = best_uns;
    }
    std::sort(selected.begin(), selected.end());
}

} // namespace

std::string to_string(DistKind kind) {
    switch (kind) {
    case DistKind::Normal: return "Normal";
    case DistKind::Uniform: return "Uniform";
    case DistKind::Bernoulli: return "Bernoulli";
    }
    return "?";
}

DistKind dist_kind_from_string(const std::string& s) {
    if (s == "Normal") return DistKind::Normal;
    if (s == "Uniform") return DistKind::Uniform;
    if (s == "Bernoulli") return DistKind::Bernoulli;
    throw ConfigError("unknown distribution kind: " + s);
}

DistributionSpec DistributionSpec::normal(double mu, double sigma2) {
    if (sigma2 <= 0.0) throw ConfigError("Normal spec: sigma2 must be positive");
    DistributionSpec d;
    d.kind = DistKind::Normal;
    d.mu = mu;
    d.sigma2 = sigma2;
    return d;
}

DistributionSpec DistributionSpec::uniform(double a, double b, std::size_t gamma) {
    if (!(a <= b) || gamma < 1) throw ConfigError("Uniform spec: need a <= b and gamma >= 1");
    DistributionSpec d;
    d.kind = DistKind::Uniform;
    d.a = a;
    d.b = b;
    d.gamma = gamma;
    return d;
}

DistributionSpec DistributionSpec::bernoulli(double epsilon, double p) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("Bernoulli spec: need 0 < p < 1");
    DistributionSpec d;
    d.kind = DistKind::Bernoulli;
    d.epsilon = epsilon;
    d.p = p;
    return d;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_by_confidence(const std::vector<ProbVector>& outputs) {
    if (outputs.size() % 2 != 0)
        throw PartitionError("split_by_confidence: odd sample count");
    std::vector<std::size_t> idx(outputs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> conf(outputs.size());
    for (std::size_t i = 0; i < outputs.size(); ++i)
        conf[i] = *std::max_element(outputs[i].begin(), outputs[i].end());
    // Stable: equal confidences keep index order, so lower indices land on
    // the high side.
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });
    const std::size_t half = outputs.size() / 2;
    std::vector<std::size_t> high(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(half));
    std::vector<std::size_t> low(idx.rbegin(), idx.rbegin() + static_cast<std::ptrdiff_t>(half));
    return {high, low}; // high: most confident first; low: flattest first
}

std::vector<std::size_t> construct_subset(const std::vector<double>& sorted_group_dists,
                                          const DistributionSpec& spec, std::size_t count,
                                          std::uint64_t /*seed*/) {
    const auto& v = sorted_group_dists;
    if (count == 0 || count > v.size())
        throw InfeasibleDistributionError("construct_subset: count " + std::to_string(count) +
                                              " exceeds pool " + std::to_string(v.size()),
                                          "pool size");
    if (!std::is_sorted(v.begin(), v.end()))
        throw PartitionError("construct_subset: groups must be sorted ascending");

    std::vector<std::size_t> sel;
    sel.reserve(count);

    switch (spec.kind) {
    case DistKind::Normal: {
        const double sd = std::sqrt(spec.sigma2);
        std::vector<double> targets(count);
        for (std::size_t i = 0; i < count; ++i)
            targets[i] =
                spec.mu + sd * normal_quantile((static_cast<double>(i) + 0.5) /
                                               static_cast<double>(count));
        if (targets.front() < v.front() - 1e-12)
            throw InfeasibleDistributionError("Normal construction: pool has no mass at the left tail",
                                              "below " + std::to_string(targets.front()));
        if (targets.back() > v.back() + 1e-12)
            throw InfeasibleDistributionError("Normal construction: pool has no mass at the right tail",
                                              "above " + std::to_string(targets.back()));
        // Monotone nearest-unused matching; leaves room for the remaining
        // targets at the pool's end.
        std::size_t j = 0;
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t remaining = count - i;
            const std::size_t j_max = v.size() - remaining;
            while (j < j_max &&
                   std::abs(v[j + 1] - targets[i]) <= std::abs(v[j] - targets[i]))
                ++j;
            sel.push_back(j);
            ++j;
        }
        break;
    }
    case DistKind::Uniform: {
        if (spec.gamma == 0 || count % spec.gamma != 0)
            throw InfeasibleDistributionError("Uniform construction: gamma must divide count",
                                              "gamma " + std::to_string(spec.gamma));
        const std::size_t per_bin = count / spec.gamma;
        const double width = (spec.b - spec.a) / static_cast<double>(spec.gamma);
        if (width <= 0.0)
            throw InfeasibleDistributionError("Uniform construction: empty interval", "[a,b]");
        std::vector<std::vector<std::size_t>> bins(spec.gamma);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i] < spec.a || v[i] > spec.b) continue;
            auto b = static_cast<std::size_t>((v[i] - spec.a) / width);
            if (b >= spec.gamma) b = spec.gamma - 1;
            bins[b].push_back(i);
        }
        std::vector<int> swap_class(v.size(), -1);
        for (std::size_t b = 0; b < spec.gamma; ++b) {
            if (bins[b].size() < per_bin)
                throw InfeasibleDistributionError(
                    "Uniform construction: bin " + std::to_string(b) + " has " +
                        std::to_string(bins[b].size()) + " groups, needs " +
                        std::to_string(per_bin),
                    "bin [" + std::to_string(spec.a + width * static_cast<double>(b)) + "," +
                        std::to_string(spec.a + width * static_cast<double>(b + 1)) + ")");
            for (std::size_t i : bins[b]) swap_class[i] = static_cast<int>(b);
            for (std::size_t k : pick_even(bins[b].size(), per_bin)) sel.push_back(bins[b][k]);
        }
        std::sort(sel.begin(), sel.end());
        if (spec.target_mean)
            steer_mean(sel, v, swap_class, *spec.target_mean, 1e-3);
        break;
    }
    case DistKind::Bernoulli: {
        const auto k_above = static_cast<std::size_t>(
            std::llround(spec.p * static_cast<double>(count)));
        const std::size_t k_below = count - k_above;
        std::vector<std::size_t> below, above;
        for (std::size_t i = 0; i < v.size(); ++i)
            (v[i] > spec.epsilon ? above : below).push_back(i);
        if (above.size() < k_above)
            throw InfeasibleDistributionError(
                "Bernoulli construction: " + std::to_string(above.size()) +
                    " groups above the split point, need " + std::to_string(k_above),
                "above " + std::to_string(spec.epsilon));
        if (below.size() < k_below)
            throw InfeasibleDistributionError(
                "Bernoulli construction: " + std::to_string(below.size()) +
                    " groups below the split point, need " + std::to_string(k_below),
                "below " + std::to_string(spec.epsilon));
        std::vector<int> swap_class(v.size(), -1);
        for (std::size_t i : below) swap_class[i] = 0;
        for (std::size_t i : above) swap_class[i] = 1;
        for (std::size_t k : pick_even(below.size(), k_below)) sel.push_back(below[k]);
        for (std::size_t k : pick_even(above.size(), k_above)) sel.push_back(above[k]);
        std::sort(sel.begin(), sel.end());
        if (spec.target_mean)
            steer_mean(sel, v, swap_class, *spec.target_mean, 1e-3);
        break;
    }
    }
    return sel;
}

std::vector<std::size_t> select_for_cv2(const std::vector<double>& groups, double target,
                                        double tolerance) {
    if (target <= 0.0) throw ConfigError("select_for_cv2: target must be positive");
    if (groups.empty()) throw EmptyBatchError("select_for_cv2: no groups");
    std::vector<std::size_t> kept(groups.size());
    std::iota(kept.begin(), kept.end(), 0);
    double sum = std::accumulate(groups.begin(), groups.end(), 0.0);

    while (true) {
        const double mean = sum / static_cast<double>(kept.size());
        if (std::abs(mean - target) <= tolerance) return kept;
        if (kept.size() <= 1)
            throw InfeasibleDistributionError(
                "select_for_cv2: no subset reaches " + std::to_string(target),
                "pool mean " + std::to_string(mean));
        // Drop the group pulling the mean hardest away from the target.
        std::size_t drop = 0;
        for (std::size_t i = 1; i < kept.size(); ++i) {
            const bool want_max = mean > target;
            const double a = groups[kept[i]], b = groups[kept[drop]];
            if (want_max ? a > b : a < b) drop = i;
        }
        sum -= groups[kept[drop]];
        kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(drop));
    }
}

double measure_cv2(const std::vector<ProbVector>& high, const std::vector<ProbVector>& low,
                   std::size_t eta, const MmdConfig& cfg) {
    if (high.empty() || low.empty()) throw EmptyBatchError("measure_cv2: empty side");
    const auto dists = group_mmds(high, low, eta, cfg);
    double sum = 0.0;
    for (double d : dists) sum += d * static_cast<double>(eta);
    return sum / static_cast<double>(dists.size());
}

std::vector<ProbVector> generate_nonmembers(const Pool& pool, const TrainedTarget& target,
                                            NonmemberMode mode, std::size_t count,
                                            std::uint64_t seed, double transform_noise,
                                            const std::vector<std::size_t>& transform_base) {
    if (count < 1) throw ConfigError("generate_nonmembers: count must be >= 1");
    std::vector<ProbVector> out;
    out.reserve(count);
    if (mode == NonmemberMode::HeldOut) {
        if (count > target.heldout_indices.size())
            throw PoolExhaustedError("generate_nonmembers: held-out split smaller than count");
        auto rng = seeded_rng(seed, "nonmembers-heldout");
        auto idx = target.heldout_indices;
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i = 0; i < count; ++i)
            out.push_back(target.model.predict_proba(pool.examples[idx[i]].features));
        return out;
    }
    if (transform_base.empty())
        throw PoolExhaustedError("generate_nonmembers: no base samples to transform");
    auto rng = seeded_rng(seed, "nonmembers-transform");
    std::normal_distribution<double> gauss(0.0, 1.0);
    // Bases cycle deterministically so the reference keeps the base list's
    // composition; only the perturbation is random.
    for (std::size_t i = 0; i < count; ++i) {
        const auto& base = pool.examples[transform_base[i % transform_base.size()]];
        std::vector<double> f = base.features;
        for (double& x : f) x += transform_noise * gauss(rng);
        out.push_back(target.model.predict_proba(f));
    }
    return out;
}

double differential_distance(const std::vector<ProbVector>& target_set,
                             const std::vector<ProbVector>& nonmember_set, std::size_t idx,
                             const MmdConfig& cfg) {
    if (target_set.size() < 2)
        throw DegenerateSetError("differential_distance: target set of size < 2");
    if (idx >= target_set.size())
        throw DimensionError("differential_distance: sample index out of range");
    const double before = mmd(target_set, nonmember_set, cfg);
    Batch t_after;
    t_after.reserve(target_set.size() - 1);
    for (std::size_t i = 0; i < target_set.size(); ++i)
        if (i != idx) t_after.push_back(target_set[i]);
    Batch n_after = nonmember_set;
    n_after.push_back(target_set[idx]);
    return mmd(t_after, n_after, cfg) - before;
}

std::pair<double, double>
average_differential_distances(const std::vector<ProbVector>& target_set,
                               const std::vector<bool>& high_flag,
                               const std::vector<ProbVector>& nonmember_set,
                               const MmdConfig& cfg) {
    if (target_set.size() != high_flag.size())
        throw LengthError("average_differential_distances: flag length mismatch");
    double sum_high = 0.0, sum_low = 0.0;
    std::size_t n_high = 0, n_low = 0;
    for (std::size_t i = 0; i < target_set.size(); ++i) {
        const double d = differential_distance(target_set, nonmember_set, i, cfg);
        if (high_flag[i]) {
            sum_high += d;
            ++n_high;
        } else {
            sum_low += d;
            ++n_low;
        }
    }
    if (n_high == 0 || n_low == 0)
        throw DegenerateSetError("average_differential_distances: a confidence class is empty");
    return {sum_high / static_cast<double>(n_high), sum_low / static_cast<double>(n_low)};
}

std::vector<std::size_t> apply_cv4(const std::vector<double>& margins, double ratio) {
    if (!(ratio >= 0.0 && ratio < 1.0))
        throw ConfigError("apply_cv4: ratio must be in [0, 1)");
    const auto k = static_cast<std::size_t>(
        std::floor(ratio * static_cast<double>(margins.size()) + 1e-9));
    std::vector<std::size_t> idx(margins.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return margins[a] < margins[b]; });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

namespace {

// Table VI tuple template: (cv1 kind, cv2 level, cv3 level, cv4 ratio)
// indices for ES01..ES84, copied row by row.
struct ScenarioTuple {
    int kind, l2, l3, l4;
};
constexpr ScenarioTuple kScenarioTemplate[84] = {
    {0, 0, 0, 0}, {0, 0, 0, 1}, {0, 0, 0, 2}, {0, 0, 1, 1}, {0, 0, 1, 2}, {0, 0, 1, 3},
    {0, 0, 2, 2}, {0, 0, 2, 3}, {0, 1, 0, 0}, {0, 1, 0, 1}, {0, 1, 0, 2}, {0, 1, 0, 3},
    {0, 1, 1, 0}, {0, 1, 1, 1}, {0, 1, 1, 2}, {0, 1, 1, 3}, {0, 1, 2, 0}, {0, 1, 2, 1},
    {0, 1, 2, 2}, {0, 1, 2, 3}, {0, 2, 0, 0}, {0, 2, 0, 1}, {0, 2, 0, 2}, {0, 2, 1, 1},
    {0, 2, 1, 2}, {0, 2, 1, 3}, {0, 2, 2, 2}, {0, 2, 2, 3},
    {1, 0, 0, 0}, {1, 0, 0, 1}, {1, 0, 0, 2}, {1, 0, 1, 1}, {1, 0, 1, 2}, {1, 0, 1, 3},
    {1, 0, 2, 2}, {1, 0, 2, 3}, {1, 1, 0, 0}, {1, 1, 0, 1}, {1, 1, 0, 2}, {1, 1, 0, 3},
    {1, 1, 1, 0}, {1, 1, 1, 1}, {1, 1, 1, 2}, {1, 1, 1, 3}, {1, 1, 2, 0}, {1, 1, 2, 1},
    {1, 1, 2, 2}, {1, 1, 2, 3}, {1, 2, 0, 0}, {1, 2, 0, 1}, {1, 2, 0, 2}, {1, 2, 1, 1},
    {1, 2, 1, 2}, {1, 2, 1, 3}, {1, 2, 2, 2}, {1, 2, 2, 3},
    {2, 0, 0, 0}, {2, 0, 0, 1}, {2, 0, 0, 2}, {2, 0, 1, 1}, {2, 0, 1, 2}, {2, 0, 1, 3},
    {2, 0, 2, 2}, {2, 0, 2, 3}, {2, 1, 0, 0}, {2, 1, 0, 1}, {2, 1, 0, 2}, {2, 1, 0, 3},
    {2, 1, 1, 0}, {2, 1, 1, 1}, {2, 1, 1, 2}, {2, 1, 1, 3}, {2, 1, 2, 0}, {2, 1, 2, 1},
    {2, 1, 2, 2}, {2, 1, 2, 3}, {2, 2, 0, 0}, {2, 2, 0, 1}, {2, 2, 0, 2}, {2, 2, 1, 1},
    {2, 2, 1, 2}, {2, 2, 1, 3}, {2, 2, 2, 2}, {2, 2, 2, 3},
};

} // namespace

std::vector<EvaluationScenario> build_scenario_matrix(const DatasetPreset& preset) {
    std::vector<EvaluationScenario> out;
    out.reserve(84);
    for (std::size_t i = 0; i < 84; ++i) {
        const auto& t = kScenarioTemplate[i];
        EvaluationScenario es;
        char id[8];
        std::snprintf(id, sizeof id, "ES%02zu", i + 1);
        es.scenario_id = id;
        es.dataset_id = preset.id;
        es.cv1 = static_cast<DistKind>(t.kind);
        es.cv2 = preset.cv2_levels[static_cast<std::size_t>(t.l2)];
        es.cv3 = preset.cv3_levels[static_cast<std::size_t>(t.l3)];
        es.cv4 = preset.cv4_ratios[static_cast<std::size_t>(t.l4)];
        out.push_back(std::move(es));
    }
    return out;
}

DatasetFixture build_fixture(const DatasetPreset& preset, std::uint64_t master_seed,
                             std::size_t run, bool with_shadows) {
    DatasetFixture f;
    f.preset = preset;
    const std::string tag = preset.id + "|run" + std::to_string(run);

    SyntheticTask task = preset.task;
    task.seed = derive_seed(master_seed, "pool|" + tag);
    f.pool = generate_task(task);

    TrainHyper th = preset.target_hyper;
    th.seed = derive_seed(master_seed, "target-init|" + tag);
    f.target = train_target(f.pool, th, derive_seed(master_seed, "target-split|" + tag),
                            preset.target_train, preset.target_heldout);
    f.dataset = assemble_target_dataset(f.pool, f.target, preset.target_n,
                                        derive_seed(master_seed, "dataset|" + tag), preset.id);

    if (with_shadows) {
        SyntheticTask shadow_task = task;
        shadow_task.pool_size = preset.shadow_pool_size;
        f.shadows = train_shadow_ensemble(shadow_task, preset.shadow_count, preset.shadow_hyper,
                                          derive_seed(master_seed, "shadows|" + tag));
    }

    std::tie(f.high_order, f.low_order) = split_by_confidence(f.dataset.model_outputs);

    std::vector<ProbVector> high, low;
    high.reserve(f.high_order.size());
    low.reserve(f.low_order.size());
    for (std::size_t i : f.high_order) high.push_back(f.dataset.model_outputs[i]);
    for (std::size_t i : f.low_order) low.push_back(f.dataset.model_outputs[i]);

    auto quantile_at = [&](double sigma, double q) {
        MmdConfig cfg;
        cfg.norm_mode = preset.norm_mode;
        cfg.sigma = sigma;
        auto vals = group_mmds(high, low, preset.eta, cfg);
        auto pos = static_cast<std::ptrdiff_t>(q * static_cast<double>(vals.size()));
        pos = std::min<std::ptrdiff_t>(pos, static_cast<std::ptrdiff_t>(vals.size()) - 1);
        std::nth_element(vals.begin(), vals.begin() + pos, vals.end());
        return vals[static_cast<std::size_t>(pos)] * static_cast<double>(preset.eta);
    };
    // Larger sigma shrinks every kernel distance, so each anchor is a
    // one-dimensional bisection.
    auto calibrate = [&](double q, double target_value) {
        double lo = preset.sigma * 0.15, hi = preset.sigma * 6.0;
        for (int it = 0; it < 16; ++it) {
            const double mid = 0.5 * (lo + hi);
            (quantile_at(mid, q) > target_value ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    };
    const double anchors[][2] = {
        {0.50, preset.bernoulli_eps},   // median at the p=0.5 split point
        {0.62, preset.cv2_levels[1]},   // mid level on the upper shoulder
        {0.80, preset.cv2_levels[2]},   // stretched-top runs
        {0.22, preset.cv2_levels[0]},   // compressed-bottom runs
    };
    for (const auto& [q, target_value] : anchors) {
        DatasetFixture::PoolVariant v;
        v.cfg.norm_mode = preset.norm_mode;
        v.cfg.sigma = calibrate(q, target_value);
        const auto raw = group_mmds(high, low, preset.eta, v.cfg);
        v.group_distances.reserve(raw.size());
        for (double d : raw) v.group_distances.push_back(d * static_cast<double>(preset.eta));
        v.sorted_positions.resize(raw.size());
        std::iota(v.sorted_positions.begin(), v.sorted_positions.end(), 0);
        std::sort(v.sorted_positions.begin(), v.sorted_positions.end(),
                  [&](std::size_t a, std::size_t b) {
                      return v.group_distances[a] < v.group_distances[b] ||
                             (v.group_distances[a] == v.group_distances[b] && a < b);
                  });
        v.sorted_distances.reserve(raw.size());
        for (std::size_t p : v.sorted_positions)
            v.sorted_distances.push_back(v.group_distances[p]);
        f.pool_variants.push_back(std::move(v));
    }
    f.cfg = f.pool_variants.front().cfg;
    f.group_distances = f.pool_variants.front().group_distances;
    f.sorted_positions = f.pool_variants.front().sorted_positions;
    f.sorted_distances = f.pool_variants.front().sorted_distances;
    return f;
}

namespace {

DistributionSpec spec_for(const DatasetPreset& preset, DistKind kind, double cv2_level,
                          double pool_min, double pool_max, double spread_scale) {
    std::size_t level = 0;
    for (std::size_t i = 0; i < preset.cv2_levels.size(); ++i)
        if (preset.cv2_levels[i] == cv2_level) level = i;
    DistributionSpec spec;
    switch (kind) {
    case DistKind::Normal: {
        // Clamp the spread so the stratified targets stay inside this
        // fixture's pool; the level (the mean) is what CV2 pins.
        const double cap = std::min(pool_max - cv2_level, cv2_level - pool_min) / 2.6;
        const double sn =
            std::min(preset.normal_sigma * spread_scale, std::max(cap, 1e-6));
        spec = DistributionSpec::normal(cv2_level, sn * sn);
        break;
    }
    case DistKind::Uniform: {
        const double cap = std::min(pool_max - cv2_level, cv2_level - pool_min) * 0.98;
        const double h =
            std::min(preset.uniform_halfwidth * spread_scale, std::max(cap, 1e-6));
        spec = DistributionSpec::uniform(cv2_level - h, cv2_level + h, preset.uniform_bins);
        break;
    }
    case DistKind::Bernoulli:
        // Each distance level pairs with its published (p, threshold).
        spec = DistributionSpec::bernoulli(preset.bernoulli_eps_levels[level],
                                           preset.bernoulli_p_levels[level]);
        break;
    }
    spec.target_mean = cv2_level;
    return spec;
}

} // namespace

std::vector<std::size_t> construct_for_level(const DatasetPreset& preset, DistKind kind,
                                             double cv2_level,
                                             const std::vector<double>& pool,
                                             std::uint64_t seed) {
    const double scales[] = {1.0, 1.5, 0.75, 2.2, 0.55, 0.4};
    std::string last_error = "no construction attempted";
    std::string last_region = "?";
    for (double scale : scales) {
        const auto spec = spec_for(preset, kind, cv2_level, pool.front(), pool.back(), scale);
        try {
            auto sel = construct_subset(pool, spec, preset.select_count, seed);
            double mean = 0.0;
            for (std::size_t s : sel) mean += pool[s];
            mean /= static_cast<double>(sel.size());
            if (std::abs(mean - cv2_level) <= preset.cv2_tolerance) return sel;
            last_error = "constructed mean " + std::to_string(mean) + " misses cv2 " +
                         std::to_string(cv2_level);
            last_region = "cv2 " + std::to_string(cv2_level);
        } catch (const InfeasibleDistributionError& e) {
            last_error = e.what();
            last_region = e.region;
        }
        if (kind == DistKind::Bernoulli) break; // no spread knob to shrink
    }
    throw InfeasibleDistributionError(last_error, last_region);
}

ScenarioInstance materialize_scenario(const EvaluationScenario& scenario,
                                      const DatasetFixture& fixture, std::uint64_t seed) {
    const auto& preset = fixture.preset;
    if (scenario.dataset_id != preset.id)
        throw ConfigError("materialize_scenario: scenario " + scenario.scenario_id +
                          " belongs to " + scenario.dataset_id + ", fixture is " + preset.id);
    ScenarioInstance inst;
    inst.scenario = scenario;

    // Try each bandwidth calibration until one realizes the level.
    std::vector<std::size_t> sel_sorted;
    const DatasetFixture::PoolVariant* variant = nullptr;
    std::string last_error = "no pool variants";
    std::string last_region = "?";
    for (const auto& v : fixture.pool_variants) {
        try {
            sel_sorted = construct_for_level(preset, scenario.cv1, scenario.cv2,
                                             v.sorted_distances, seed);
            variant = &v;
            break;
        } catch (const InfeasibleDistributionError& e) {
            last_error = e.what();
            last_region = e.region;
        }
    }
    if (!variant)
        throw InfeasibleDistributionError(scenario.scenario_id + ": " + last_error, last_region);
    inst.cfg = variant->cfg;
    double mean = 0.0;
    for (std::size_t s : sel_sorted) mean += variant->sorted_distances[s];
    inst.realized_cv2 = mean / static_cast<double>(sel_sorted.size());

    // Selected groups -> sample indices. Block g holds the g-th eta-slices
    // of the confidence orders.
    const std::size_t eta = preset.eta;
    for (std::size_t s : sel_sorted) {
        const std::size_t block = variant->sorted_positions[s];
        for (std::size_t i = 0; i < eta; ++i) {
            inst.sample_indices.push_back(fixture.high_order[block * eta + i]);
            inst.high_flag.push_back(true);
        }
        for (std::size_t i = 0; i < eta; ++i) {
            inst.sample_indices.push_back(fixture.low_order[block * eta + i]);
            inst.high_flag.push_back(false);
        }
    }
    inst.outputs.reserve(inst.sample_indices.size());
    inst.labels.reserve(inst.sample_indices.size());
    for (std::size_t i : inst.sample_indices) {
        inst.outputs.push_back(fixture.dataset.model_outputs[i]);
        inst.labels.push_back(fixture.dataset.examples[i].true_label);
    }

    // CV3: the reference set is the same size as the subset so the bulk of
    // the embedding difference reflects distribution mismatch, not counts.
    // The primary knob is the confidence mix of the transform bases: at
    // 0.5 the reference mirrors the subset and the differential contrast
    // is near zero; toward either extreme it grows. A secondary noise
    // sweep at the matched mix covers targets below the primary curve.
    inst.cv3_cfg = fixture.cfg;
    inst.cv3_cfg.sigma = preset.cv3_sigma;
    Cv3Measurer meas;
    meas.sigma = preset.cv3_sigma;
    meas.nm = fixture.cfg.norm_mode;
    {
        Flat t(inst.outputs.front().size());
        for (const auto& o : inst.outputs) t.push(o);
        meas.init(t, inst.high_flag, preset.cv3_probe);
    }

    std::vector<std::size_t> high_bases, low_bases;
    for (std::size_t i = 0; i < inst.sample_indices.size(); ++i) {
        const std::size_t src = fixture.dataset.source_indices[inst.sample_indices[i]];
        (inst.high_flag[i] ? high_bases : low_bases).push_back(src);
    }
    const std::size_t ref_count = inst.sample_indices.size();
    const std::uint64_t nm_seed = derive_seed(seed, "nonmembers|" + scenario.scenario_id);

    auto eval_knob = [&](double low_fraction, double noise) {
        const auto low_n = static_cast<std::size_t>(
            std::llround(low_fraction * static_cast<double>(ref_count)));
        std::vector<std::size_t> bases;
        bases.reserve(ref_count);
        if (low_n > 0)
            for (std::size_t k : pick_even(low_bases.size(), std::min(low_n, low_bases.size())))
                bases.push_back(low_bases[k]);
        if (ref_count - low_n > 0)
            for (std::size_t k :
                 pick_even(high_bases.size(), std::min(ref_count - low_n, high_bases.size())))
                bases.push_back(high_bases[k]);
        auto ref = generate_nonmembers(fixture.pool, fixture.target, NonmemberMode::Transform,
                                       ref_count, nm_seed, noise, bases);
        Flat flat(ref.front().size());
        for (const auto& r : ref) flat.push(r);
        return std::make_pair(meas.measure(flat), std::move(ref));
    };

    double best_err = 1e300, best_knob = 0.5, best_val = 0.0;
    std::vector<ProbVector> best_ref;
    auto consider = [&](double val, double knob, std::vector<ProbVector>&& ref) {
        if (std::abs(val - scenario.cv3) < best_err) {
            best_err = std::abs(val - scenario.cv3);
            best_knob = knob;
            best_val = val;
            best_ref = std::move(ref);
        }
    };
    // Sweep a 1-d knob path with bracketing bisection; the path parameter
    // doubles as the recorded knob value.
    auto sweep = [&](auto&& eval, const std::vector<double>& grid) {
        double prev_val = 0.0, prev_x = 0.0;
        bool have_prev = false;
        for (double x : grid) {
            auto [val, ref] = eval(x);
            consider(val, x, std::move(ref));
            if (have_prev && (prev_val - scenario.cv3) * (val - scenario.cv3) < 0.0) {
                double lo = prev_x, hi = x, lo_val = prev_val;
                for (int it = 0; it < 20 && best_err > preset.cv3_tolerance * 0.2; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    auto [mval, mref] = eval(mid);
                    consider(mval, mid, std::move(mref));
                    if ((lo_val - scenario.cv3) * (mval - scenario.cv3) < 0.0) {
                        hi = mid;
                    } else {
                        lo = mid;
                        lo_val = mval;
                    }
                }
            }
            prev_val = val;
            prev_x = x;
            have_prev = true;
            if (best_err <= preset.cv3_tolerance * 0.2) return true;
        }
        return false;
    };

    const std::vector<double> mix_grid = {0.5, 0.625, 0.75, 0.875, 1.0, 0.375, 0.25, 0.125, 0.0};
    const std::vector<double> noise_grid = {0.25, 0.15, 0.08, 0.04, 0.02, 0.4, 0.7, 1.2};
    bool done = sweep([&](double m) { return eval_knob(m, 0.25); }, mix_grid);
    if (!done) done = sweep([&](double s) { return eval_knob(0.5, s); }, noise_grid);
    if (!done && best_err > preset.cv3_tolerance) {
        // Held-out references as a last resort.
        auto ref = generate_nonmembers(fixture.pool, fixture.target, NonmemberMode::HeldOut,
                                       std::min(ref_count, fixture.target.heldout_indices.size()),
                                       nm_seed, 0.0, {});
        Flat flat(ref.front().size());
        for (const auto& r : ref) flat.push(r);
        const double val = meas.measure(flat);
        if (std::abs(val - scenario.cv3) < best_err) {
            consider(val, -1.0, std::move(ref));
            inst.nonmember_mode = NonmemberMode::HeldOut;
        }
    }
    if (best_err > preset.cv3_tolerance)
        throw InfeasibleDistributionError(
            scenario.scenario_id + ": realized cv3 " + std::to_string(best_val) +
                " misses target " + std::to_string(scenario.cv3),
            "cv3 " + std::to_string(scenario.cv3));

    inst.realized_cv3 = best_val;
    inst.nonmember_knob = best_knob;
    inst.nonmember_reference = std::move(best_ref);
    return inst;
}

} // namespace mia
