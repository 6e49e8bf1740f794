#include "mia/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "mia/rng.hpp"
#include "mia/scenario.hpp"

namespace mia {

namespace {

constexpr double kPtrueClamp = 1e-7;
constexpr double kLossFloor = 1e-12;
constexpr int kBlindMiMaxIters = 20;
constexpr double kBlindMiWoNoise = 0.35;
constexpr double kBlindMiSigmaScale = 1.0;
constexpr std::size_t kBlindMiRefCap = 32;
constexpr std::size_t kRiskScoreBins = 20;
constexpr std::size_t kShapleyK = 5;

void require(bool ok, const char* what) {
    if (!ok) throw MissingContextError(std::string("attack context missing: ") + what);
}

std::size_t argmax(const ProbVector& p) {
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

double max_prob(const ProbVector& p) { return *std::max_element(p.begin(), p.end()); }

// Nearest-rank upper quantile of a copy of values.
double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw EmptyBatchError("quantile of empty set");
    std::sort(values.begin(), values.end());
    auto idx = static_cast<std::size_t>(q * static_cast<double>(values.size()));
    if (idx >= values.size()) idx = values.size() - 1;
    return values[idx];
}

double euclidean(const ProbVector& a, const ProbVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// Member iff score strictly exceeds tau; fine-grained attacks then abstain
// on the floor(ratio*n) smallest margins.
AttackResult finalize_threshold(std::vector<double> scores, double tau,
                                const AttackContext& ctx, bool fine_grained) {
    AttackResult r;
    r.scores = std::move(scores);
    r.threshold_used = tau;
    r.decisions.resize(r.scores.size());
    for (std::size_t i = 0; i < r.scores.size(); ++i)
        r.decisions[i] = r.scores[i] > tau ? Decision::Member : Decision::NonMember;
    if (fine_grained) {
        std::vector<double> margins(r.scores.size());
        for (std::size_t i = 0; i < r.scores.size(); ++i)
            margins[i] = std::abs(r.scores[i] - tau);
        for (std::size_t i : apply_cv4(margins, ctx.abstention_ratio))
            r.decisions[i] = Decision::Abstain;
    }
    return r;
}

AttackResult finalize_per_class(std::vector<double> scores, const std::vector<double>& taus,
                                const AttackContext& ctx) {
    AttackResult r;
    r.scores = std::move(scores);
    r.decisions.resize(r.scores.size());
    std::vector<double> margins(r.scores.size());
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
        r.decisions[i] = r.scores[i] > taus[i] ? Decision::Member : Decision::NonMember;
        margins[i] = std::abs(r.scores[i] - taus[i]);
    }
    for (std::size_t i : apply_cv4(margins, ctx.abstention_ratio))
        r.decisions[i] = Decision::Abstain;
    return r;
}

// ---------------------------------------------------------------------
// Shadow-trained binary classifiers (NN_attack family)
// ---------------------------------------------------------------------

using FeatureFn = std::function<std::vector<double>(const ProbVector&, std::size_t label)>;

std::vector<double> sorted_top(const ProbVector& p, std::size_t k) {
    std::vector<double> s(p.begin(), p.end());
    std::partial_sort(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(std::min(k, s.size())),
                      s.end(), std::greater<>());
    s.resize(std::min(k, s.size()));
    return s;
}

SoftmaxClassifier train_membership_classifier(const ShadowBundle& sb, const FeatureFn& fx,
                                              std::uint64_t seed) {
    const std::size_t pool_n = sb.pool.examples.size();
    std::vector<std::pair<std::size_t, std::size_t>> in_pairs, out_pairs; // (shadow, example)
    for (std::size_t s = 0; s < sb.shadows.size(); ++s)
        for (std::size_t e = 0; e < pool_n; ++e)
            (sb.shadows[s].in_train[e] ? in_pairs : out_pairs).emplace_back(s, e);

    auto rng = seeded_rng(seed, "attack-classifier-sample");
    std::shuffle(in_pairs.begin(), in_pairs.end(), rng);
    std::shuffle(out_pairs.begin(), out_pairs.end(), rng);
    const std::size_t per_side = std::min({in_pairs.size(), out_pairs.size(),
                                           static_cast<std::size_t>(1500)});

    Pool train;
    train.class_count = 2;
    for (std::size_t i = 0; i < per_side; ++i) {
        for (int side = 0; side < 2; ++side) {
            const auto [s, e] = side == 0 ? out_pairs[i] : in_pairs[i];
            LabeledExample ex;
            ex.features = fx(sb.shadows[s].outputs[e], sb.pool.examples[e].true_label);
            ex.true_label = static_cast<std::size_t>(side);
            train.examples.push_back(std::move(ex));
        }
    }
    train.feature_dim = train.examples.front().features.size();

    TrainHyper hyper;
    hyper.hidden = {16};
    hyper.epochs = 80;
    hyper.learning_rate = 0.5;
    hyper.seed = derive_seed(seed, "attack-classifier-init");
    std::vector<std::size_t> all(train.examples.size());
    std::iota(all.begin(), all.end(), 0);
    return train_classifier(train, all, hyper);
}

AttackResult classifier_attack(const AttackContext& ctx, const FeatureFn& fx,
                               const char* name, bool needs_labels) {
    require(ctx.shadow != nullptr && !ctx.shadow->shadows.empty(), "shadow bundle");
    if (needs_labels) require(ctx.true_labels.size() == ctx.outputs.size(), "true labels");
    const auto model =
        train_membership_classifier(*ctx.shadow, fx, derive_seed(ctx.seed, name));
    std::vector<double> scores(ctx.outputs.size());
    for (std::size_t i = 0; i < ctx.outputs.size(); ++i) {
        const std::size_t label = needs_labels ? ctx.true_labels[i] : 0;
        scores[i] = model.predict_proba(fx(ctx.outputs[i], label))[1];
    }
    return finalize_threshold(std::move(scores), 0.5, ctx, false);
}

// ---------------------------------------------------------------------
// Differential-comparison engine (BlindMI family)
// ---------------------------------------------------------------------

struct MoveEngine {
    std::size_t n = 0, m = 0, total = 0;
    std::vector<double> gram; // (n+m)^2 row-major
    std::vector<bool> in_target;
    std::vector<double> r_t, r_n; // kernel row sums to current sets
    double k_tt = 0.0, k_nn = 0.0, k_tn = 0.0;
    std::size_t t_count = 0, n_count = 0;

    double at(std::size_t i, std::size_t j) const { return gram[i * total + j]; }

    void init(const std::vector<ProbVector>& targets, const std::vector<ProbVector>& reference) {
        n = targets.size();
        m = reference.size();
        total = n + m;
        Batch all;
        all.reserve(total);
        for (const auto& t : targets) all.push_back(t);
        for (const auto& r : reference) all.push_back(r);
        MmdConfig cfg;
        cfg.sigma = kBlindMiSigmaScale * median_heuristic_sigma(targets, reference, cfg.norm_mode);
        const auto k = kernel_matrix(all, all, cfg);
        gram.resize(total * total);
        for (std::size_t i = 0; i < total; ++i)
            for (std::size_t j = 0; j < total; ++j) gram[i * total + j] = k[i][j];

        in_target.assign(total, false);
        for (std::size_t i = 0; i < n; ++i) in_target[i] = true;
        t_count = n;
        n_count = m;
        r_t.assign(total, 0.0);
        r_n.assign(total, 0.0);
        for (std::size_t i = 0; i < total; ++i)
            for (std::size_t j = 0; j < total; ++j)
                (in_target[j] ? r_t[i] : r_n[i]) += at(i, j);
        k_tt = k_nn = k_tn = 0.0;
        for (std::size_t i = 0; i < total; ++i) {
            if (in_target[i])
                k_tt += r_t[i];
            else
                k_nn += r_n[i];
        }
        for (std::size_t i = 0; i < n; ++i) k_tn += r_n[i];
    }

    double mean_mmd_sq(double tt, double nn, double tn, double tc, double nc) const {
        return tt / (tc * tc) + nn / (nc * nc) - 2.0 * tn / (tc * nc);
    }

    // Differential of moving target i into the nonmember side.
    double delta(std::size_t i) const {
        const double tc = static_cast<double>(t_count), nc = static_cast<double>(n_count);
        const double before =
            std::sqrt(std::max(0.0, mean_mmd_sq(k_tt, k_nn, k_tn, tc, nc)));
        const double tt = k_tt - 2.0 * r_t[i] + 1.0;
        const double nn = k_nn + 2.0 * r_n[i] + 1.0;
        const double tn = k_tn - r_n[i] + r_t[i] - 1.0;
        const double after =
            std::sqrt(std::max(0.0, mean_mmd_sq(tt, nn, tn, tc - 1.0, nc + 1.0)));
        return after - before;
    }

    void move(std::size_t i) {
        k_tt -= 2.0 * r_t[i] - 1.0;
        k_nn += 2.0 * r_n[i] + 1.0;
        k_tn += r_t[i] - r_n[i] - 1.0;
        in_target[i] = false;
        --t_count;
        ++n_count;
        for (std::size_t j = 0; j < total; ++j) {
            r_t[j] -= at(j, i);
            r_n[j] += at(j, i);
        }
    }
};

// The differential family works on descending-sorted output vectors:
// sorting strips class identity, which otherwise dominates output-space
// distances and buries the membership shift.
std::vector<ProbVector> sorted_outputs(const std::vector<ProbVector>& outputs) {
    std::vector<ProbVector> out = outputs;
    for (auto& p : out) std::sort(p.rbegin(), p.rend());
    return out;
}

AttackResult blindmi_engine(const AttackContext& ctx, const std::vector<ProbVector>& reference) {
    if (reference.empty()) throw MissingContextError("blindmi: empty reference set");
    // Small reference sets keep each move's differential on the scale of
    // the moved sample (the comparison batches are small in the original
    // procedure); larger references dilute it below the V-statistic noise.
    std::vector<ProbVector> ref_small;
    if (reference.size() > kBlindMiRefCap) {
        for (std::size_t i = 0; i < kBlindMiRefCap; ++i)
            ref_small.push_back(reference[((2 * i + 1) * reference.size()) / (2 * kBlindMiRefCap)]);
    } else {
        ref_small = reference;
    }
    MoveEngine eng;
    eng.init(sorted_outputs(ctx.outputs), sorted_outputs(ref_small));

    std::vector<double> last_delta(eng.n, 0.0);
    bool converged = false;
    for (int pass = 0; pass < kBlindMiMaxIters; ++pass) {
        std::size_t moves = 0;
        for (std::size_t i = 0; i < eng.n; ++i) {
            if (!eng.in_target[i]) continue;
            const double d = eng.delta(i);
            last_delta[i] = d;
            if (d > 0.0 && eng.t_count > 1) {
                eng.move(i);
                ++moves;
            }
        }
        if (moves == 0) {
            converged = true;
            break;
        }
    }

    AttackResult r;
    r.converged = converged;
    r.scores.resize(eng.n);
    r.decisions.resize(eng.n);
    for (std::size_t i = 0; i < eng.n; ++i) {
        r.scores[i] = -last_delta[i];
        r.decisions[i] = eng.in_target[i] ? Decision::Member : Decision::NonMember;
    }
    return r;
}

// ---------------------------------------------------------------------
// Shadow-statistic helpers
// ---------------------------------------------------------------------

double logit(double p) {
    const double c = std::clamp(p, kPtrueClamp, 1.0 - kPtrueClamp);
    return std::log(c / (1.0 - c));
}

double log_normal_pdf(double x, double mean, double var) {
    const double v = std::max(var, 1e-6);
    const double d = x - mean;
    return -0.5 * std::log(2.0 * std::numbers::pi * v) - d * d / (2.0 * v);
}

// Max-MA threshold with a neutral fallback when the calibration set is
// degenerate (empty or single-class).
double safe_max_ma_threshold(const std::vector<double>& scores, const std::vector<bool>& truth) {
    if (scores.empty()) return 0.0;
    const auto members = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), true));
    if (members == 0 || members == truth.size()) return 0.0;
    return threshold_at_max_ma(scores, truth).first;
}

// True-class probabilities of the context samples under every shadow.
// Uses the harness-cached matrix when present.
std::vector<std::vector<double>> shadow_ptrue_matrix(const AttackContext& ctx) {
    if (!ctx.shadow_ptrue.empty()) return ctx.shadow_ptrue;
    require(!ctx.features.empty(), "sample features (for shadow queries)");
    std::vector<std::vector<double>> out(ctx.shadow->shadows.size());
    for (std::size_t s = 0; s < ctx.shadow->shadows.size(); ++s) {
        out[s].resize(ctx.outputs.size());
        for (std::size_t i = 0; i < ctx.outputs.size(); ++i) {
            const auto p = ctx.shadow->shadows[s].model.predict_proba(ctx.features[i]);
            out[s][i] = p[ctx.true_labels[i]];
        }
    }
    return out;
}

} // namespace

std::string to_string(AttackKind kind) {
    switch (kind) {
    case AttackKind::NnAttack: return "nn_attack";
    case AttackKind::LossThreshold: return "loss_threshold";
    case AttackKind::LabelOnly: return "label_only";
    case AttackKind::Top3Nn: return "top3_nn";
    case AttackKind::Top1Threshold: return "top1_threshold";
    case AttackKind::BlindMiDiffW: return "blindmi_diff_w";
    case AttackKind::BlindMiDiffWo: return "blindmi_diff_wo";
    case AttackKind::BlindMi1Class: return "blindmi_1class";
    case AttackKind::Top2True: return "top2_true";
    case AttackKind::PrivacyRiskScores: return "privacy_risk_scores";
    case AttackKind::ShapleyValues: return "shapley_values";
    case AttackKind::PpvAttack: return "ppv_attack";
    case AttackKind::CalibratedScore: return "calibrated_score";
    case AttackKind::DistillationThreshold: return "distillation_threshold";
    case AttackKind::Lira: return "lira";
    }
    return "?";
}

AttackKind attack_kind_from_string(const std::string& s) {
    for (AttackKind k : kAllAttackKinds)
        if (to_string(k) == s) return k;
    throw ConfigError("unknown attack kind: " + s);
}

bool is_fine_grained(AttackKind kind) {
    switch (kind) {
    case AttackKind::PrivacyRiskScores:
    case AttackKind::ShapleyValues:
    case AttackKind::PpvAttack:
    case AttackKind::Lira: return true;
    default: return false;
    }
}

AttackResult nn_attack(const AttackContext& ctx) {
    const std::size_t k = std::min<std::size_t>(ctx.outputs.front().size(), 10);
    return classifier_attack(
        ctx, [k](const ProbVector& p, std::size_t) { return sorted_top(p, k); }, "nn_attack",
        false);
}

AttackResult top3_nn(const AttackContext& ctx) {
    if (ctx.outputs.empty() || ctx.outputs.front().size() < 3)
        throw DimensionError("top3_nn: needs at least 3 classes");
    return classifier_attack(
        ctx, [](const ProbVector& p, std::size_t) { return sorted_top(p, 3); }, "top3_nn",
        false);
}

AttackResult top2_true(const AttackContext& ctx) {
    require(ctx.true_labels.size() == ctx.outputs.size(), "true labels");
    auto fx = [](const ProbVector& p, std::size_t label) {
        auto top = sorted_top(p, 2);
        top.push_back(argmax(p) == label ? 1.0 : 0.0);
        return top;
    };
    return classifier_attack(ctx, fx, "top2_true", true);
}

AttackResult loss_threshold(const AttackContext& ctx) {
    require(ctx.shadow != nullptr && !ctx.shadow->shadows.empty(), "shadow bundle");
    require(ctx.true_labels.size() == ctx.outputs.size(), "true labels");
    // tau = mean shadow in-training loss; member iff loss < tau.
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& sh : ctx.shadow->shadows)
        for (std::size_t e = 0; e < sh.losses.size(); ++e)
            if (sh.in_train[e]) {
                sum += sh.losses[e];
                ++count;
            }
    if (count == 0) throw MissingContextError("loss_threshold: shadows have no training data");
    const double tau = sum / static_cast<double>(count);
    std::vector<double> scores(ctx.outputs.size());
    for (std::size_t i = 0; i < ctx.outputs.size(); ++i)
        scores[i] = -cross_entropy_loss(ctx.outputs[i], ctx.true_labels[i]);
    return finalize_threshold(std::move(scores), -tau, ctx, false);
}

AttackResult label_only(const AttackContext& ctx) {
    require(ctx.true_labels.size() == ctx.outputs.size(), "true labels");
    std::vector<double> scores(ctx.outputs.size());
    for (std::size_t i = 0; i < ctx.outputs.size(); ++i)
        scores[i] = argmax(ctx.outputs[i]) == ctx.true_labels[i] ? 1.0 : 0.0;
    return finalize_threshold(std::move(scores), 0.5, ctx, false);
}

AttackResult top1_threshold(const AttackContext& ctx) {
    require(!ctx.nonmember_reference.empty(), "nonmember reference");
    std::vector<double> ref(ctx.nonmember_reference.size());
    for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = max_prob(ctx.nonmember_reference[i]);
    const double tau = quantile(ref, 0.95);
    std::vector<double> scores(ctx.outputs.size());
    for (std::size_t i = 0; i < ctx.outputs.size(); ++i) scores[i] = max_prob(ctx.outputs[i]);
    return finalize_threshold(std::move(scores), tau, ctx, false);
}

AttackResult blindmi_diff_w(const AttackContext& ctx) {
    require(!ctx.nonmember_reference.empty(), "nonmember reference");
    return blindmi_engine(ctx, ctx.nonmember_reference);
}

AttackResult blindmi_diff_wo(const AttackContext& ctx) {
    require(static_cast<bool>(ctx.transform_probe), "transform probe");
    const std::size_t count = std::min<std::size_t>(ctx.outputs.size(), 400);
    const auto reference =
        ctx.transform_probe(derive_seed(ctx.seed, "blindmi-wo"), kBlindMiWoNoise, count);
    return blindmi_engine(ctx, reference);
}

AttackResult blindmi_1class(const AttackContext& ctx) {
    require(!ctx.nonmember_reference.empty(), "nonmember reference");
    const auto reference = sorted_outputs(ctx.nonmember_reference);
    const auto samples = sorted_outputs(ctx.outputs);
    const std::size_t dim = reference.front().size();
    ProbVector center(dim, 0.0);
    for (const auto& r : reference)
        for (std::size_t d = 0; d < dim; ++d) center[d] += r[d];
    for (double& c : center) c /= static_cast<double>(reference.size());
    std::vector<double> ref_dists(reference.size());
    for (std::size_t i = 0; i < ref_dists.size(); ++i)
        ref_dists[i] = euclidean(reference[i], center);
    const double radius = quantile(ref_dists, 0.95);
    std::vector<double> scores(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) scores[i] = euclidean(samples[i], center);
    return finalize_threshold(std::move(scores), radius, ctx, false);
}

AttackResult privacy_risk_scores(const AttackContext& ctx) {
    require(ctx.shadow != nullptr && !ctx.shadow->shadows.empty(), "shadow bundle");
    require(ctx.true_labels.size() == ctx.outputs.size(), "true labels");
    const auto& sb = *ctx.shadow;
    const std::size_t classes = sb.pool.class_count;

    // Per-class histograms of the true-class probability, in vs out.
    auto bin_of = [](double ptrue) {
        auto b = static_cast<std::size_t>(ptrue * static_cast<double>(kRiskScoreBins));
        return std::min(b, kRiskScoreBins - 1);
    };
    std::vector<std::vector<double>> h_in(classes, std::vector<double>(kRiskScoreBins, 0.0));
    std::vector<std::vector<double>> h_out = h_in;
    std::vector<double> n_in(classes, 0.0), n_out(classes, 0.0);
    for (const auto& sh : sb.shadows)
        for (std::size_t e = 0; e < sh.outputs.size(); ++e) {
            const std::size_t c = sb.pool.examples[e].true_label;
            const std::size_t b = bin_of(sh.outputs[e][c]);
            if (sh.in_train[e]) {
                h_in[c][b] += 1.0;
                n_in[c] += 1.0;
            } else {
                h_out[c][b] += 1.0;
                n_out[c] += 1.0;
            }
        }
    auto risk = [&](std::size_t c, double ptrue) {
        if (n_in[c] == 0.0 || n_out[c] == 0.0) return 0.5;
        const std::size_t b = bin_of(ptrue);
        const double fi = h_in[c][b] / n_in[c];
        const double fo = h_out[c][b] / n_out[c];
        if (fi + fo == 0.0) return 0.5; // empty bin -> global prior
        return fi / (fi + fo);
    };

    // Per-class thresholds at max shadow MA.
    std::vector<std::vector<double>> cal_scores(classes);
    std::vector<std::vector<bool>> cal_truth(classes);
    std::vector<double> all_scores;
    std::vector<bool> all_truth;
    for (const auto& sh : sb.shadows)
        for (std::size_t e = 0; e < sh.outputs.size(); ++e) {
            const std::size_t c = sb.pool.examples[e].true_label;
            const double s = risk(c, sh.outputs[e][c]);
            cal_scores[c].push_back(s);
            cal_truth[c].push_back(sh.in_train[e]);
            all_scores.push_back(s);
            all_truth.push_back(sh.in_train[e]);
        }
    const double global_tau = threshold_at_max_ma(all_scores, all_truth).first;
    std::vector<double> class_tau(classes, global_tau);
    for (std::size_t c = 0; c < classes; ++c) {
        const auto members =
            static_cast<std::size_t>(std::count(cal_truth[c].begin(), cal_truth[c].end(), true));
        if (members > 0 && members < cal_truth[c].size())
            class_tau[c] = threshold_at_max_ma(cal_scores[c], cal_truth[c]).first;
    }

    std::vector<double> scores(ctx.outputs.size()), taus(ctx.outputs.size());
    for (std::size_t i = 0; i < ctx.outputs.size(); ++i) {
        const std::size_t c = ctx.true_labels[i];
        scores[i] = risk(c, ctx.outputs[i][c]);
        taus[i] = class_tau[c];
    }
    return finalize_per_class(std::move(scores), taus, ctx);
}

double knn_shapley_value(const std::vector<ProbVector>& base_outputs,
                         const std::vector<std::size_t>& base_labels,
                         const std::vector<ProbVector>& val_outputs,
                         const std::vector<std::size_t>& val_labels,
                         const ProbVector& x_output, std::size_t x_label, std::size_t k_nn) {
    if (val_outputs.empty()) throw EmptyBatchError("knn_shapley_value: empty validation set");
    const double kd = static_cast<double>(k_nn);
    double total = 0.0;
    for (std::size_t v = 0; v < val_outputs.size(); ++v) {
        const std::size_t m = base_outputs.size();
        std::vector<std::pair<double, std::size_t>> order(m);
        for (std::size_t b = 0; b < m; ++b)
            order[b] = {euclidean(base_outputs[b], val_outputs[v]), b};
        std::sort(order.begin(), order.end());

        const double match_x = x_label == val_labels[v] ? 1.0 : 0.0;
        // Shifted suffix: value of sorted base element r (1-based) once a
        // new point is inserted anywhere at or before rank r.
        std::vector<double> shift(m + 1, 0.0);
        if (m > 0) {
            auto match = [&](std::size_t rank1) { // 1-based into sorted order
                return base_labels[order[rank1 - 1].second] == val_labels[v] ? 1.0 : 0.0;
            };
            shift[m] = match(m) / static_cast<double>(m + 1);
            for (std::size_t r = m; r-- > 1;)
                shift[r] = shift[r + 1] + (match(r) - match(r + 1)) / kd *
                                              std::min(kd, static_cast<double>(r + 1)) /
                                              static_cast<double>(r + 1);
        }
        const double dx = euclidean(x_output, val_outputs[v]);
        std::size_t r = 1;
        while (r <= m && order[r - 1].first <= dx) ++r; // ties rank x after
        double s_x;
        if (r == m + 1) {
            s_x = match_x / static_cast<double>(m + 1);
        } else {
            const double match_r =
                base_labels[order[r - 1].second] == val_labels[v] ? 1.0 : 0.0;
            s_x = shift[r] + (match_x - match_r) / kd *
                                 std::min(kd, static_cast<double>(r)) / static_cast<double>(r);
        }
        total += s_x;
    }
    return total / static_cast<double>(val_outputs.size());
}

AttackResult shapley_values(const AttackContext& ctx) {
    require(ctx.shadow != nullptr && !ctx.shadow->shadows.empty(), "shadow bundle");
    require(ctx.true_labels.size() == ctx.outputs.size(), "true labels");
    const auto& sb = *ctx.shadow;
    const auto& sh0 = sb.shadows.front();

    // Valuation base: even-position in-train examples of shadow 0; the odd
    // positions calibrate member scores. Out examples split the same way
    // between validation points and calibration nonmembers.
    std::vector<std::size_t> ins, outs;
    for (std::size_t e = 0; e < sh0.in_train.size(); ++e)
        (sh0.in_train[e] ? ins : outs).push_back(e);
    if (ins.size() < 4 || outs.size() < 4)
        throw MissingContextError("shapley_values: shadow 0 splits too small");

    std::vector<ProbVector> base_out, val_out;
    std::vector<std::size_t> base_lab, val_lab;
    std::vector<std::size_t> cal_members, cal_nonmembers;
    for (std::size_t i = 0; i < ins.size(); ++i)
        if (i % 2 == 0) {
            base_out.push_back(sh0.outputs[ins[i]]);
            base_lab.push_back(sb.pool.examples[ins[i]].true_label);
        } else {
            cal_members.push_back(ins[i]);
        }
    for (std::size_t i = 0; i < outs.size(); ++i)
        if (i % 2 == 0) {
            if (val_out.size() < 200) {
                val_out.push_back(sh0.outputs[outs[i]]);
                val_lab.push_back(sb.pool.examples[outs[i]].true_label);
            }
        } else {
            cal_nonmembers.push_back(outs[i]);
        }

    const std::size_t classes = sb.pool.class_count;
    std::vector<std::vector<double>> cal_scores(classes);
    std::vector<std::vector<bool>> cal_truth(classes);
    std::vector<double> all_scores;
    std::vector<bool> all_truth;
    auto add_cal = [&](std::size_t e, bool member) {
        const std::size_t c = sb.pool.examples[e].true_label;
        const double s = knn_shapley_value(base_out, base_lab, val_out, val_lab,
                                           sh0.outputs[e], c, kShapleyK);
        cal_scores[c].push_back(s);
        cal_truth[c].push_back(member);
        all_scores.push_back(s);
        all_truth.push_back(member);
    };
    for (std::size_t e : cal_members) add_cal(e, true);
    for (std::size_t e : cal_nonmembers) add_cal(e, false);

    const double global_tau = threshold_at_max_ma(all_scores, all_truth).first;
    std::vector<double> class_tau(classes, global_tau);
    for (std::size_t c = 0; c < classes; ++c) {
        const auto members =
            static_cast<std::size_t>(std::count(cal_truth[c].begin(), cal_truth[c].end(), true));
        if (members > 0 && members < cal_truth[c].size())
            class_tau[c] = threshold_at_max_ma(cal_scores[c], cal_truth[c]).first;
    }

    std::vector<double> scores(ctx.outputs.size()), taus(ctx.outputs.size());
    for (std::size_t i = 0; i < ctx.outputs.size(); ++i) {
        scores[i] = knn_shapley_value(base_out, base_lab, val_out, val_lab, ctx.outputs[i],
                                      ctx.true_labels[i], kShapleyK);
        taus[i] = class_tau[ctx.true_labels[i]];
    }
    return finalize_per_class(std::move(scores), taus, ctx);
}

AttackResult ppv_attack(const AttackContext& ctx) {
    require(ctx.shadow != nullptr && !ctx.shadow->shadows.empty(), "shadow bundle");
    require(ctx.true_labels.size() == ctx.outputs.size(), "true labels");
    const double prior = ctx.ppv_prior;

    // Shadow scores: -loss, member iff score > tau; pick tau maximizing
    // PPV = prior*TPR / (prior*TPR + (1-prior)*FPR).
    std::vector<double> cal_scores;
    std::vector<bool> cal_truth;
    for (const auto& sh : ctx.shadow->shadows)
        for (std::size_t e = 0; e < sh.losses.size(); ++e) {
            cal_scores.push_back(-sh.losses[e]);
            cal_truth.push_back(sh.in_train[e]);
        }
    std::vector<std::size_t> idx(cal_scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return cal_scores[a] > cal_scores[b]; });
    const double p_total =
        static_cast<double>(std::count(cal_truth.begin(), cal_truth.end(), true));
    const double n_total = static_cast<double>(cal_truth.size()) - p_total;
    if (p_total == 0.0 || n_total == 0.0)
        throw DegenerateTruthError("ppv_attack: shadow calibration needs both classes");

    double best_ppv = -1.0, best_tau = 0.0;
    std::size_t tp = 0, fp = 0, i = 0;
    auto consider = [&](double tau) {
        const double tpr = static_cast<double>(tp) / p_total;
        const double fpr = static_cast<double>(fp) / n_total;
        const double denom = prior * tpr + (1.0 - prior) * fpr;
        const double ppv = denom > 0.0 ? prior * tpr / denom : 0.0;
        if (ppv >= best_ppv) { // >= walks toward the smaller threshold
            best_ppv = ppv;
            best_tau = tau;
        }
    };
    while (i < idx.size()) {
        const double s = cal_scores[idx[i]];
        consider(s);
        while (i < idx.size() && cal_scores[idx[i]] == s) {
            cal_truth[idx[i]] ? ++tp : ++fp;
            ++i;
        }
    }
    consider(cal_scores[idx.back()] - 1.0); // below-minimum sentinel: everyone member

    std::vector<double> scores(ctx.outputs.size());
    for (std::size_t s = 0; s < ctx.outputs.size(); ++s)
        scores[s] = -cross_entropy_loss(ctx.outputs[s], ctx.true_labels[s]);
    return finalize_threshold(std::move(scores), best_tau, ctx, true);
}

AttackResult calibrated_score(const AttackContext& ctx) {
    require(ctx.shadow != nullptr && ctx.shadow->shadows.size() >= 2, "shadow bundle (k >= 2)");
    require(ctx.true_labels.size() == ctx.outputs.size(), "true labels");
    const auto& sb = *ctx.shadow;
    const auto ptrue = shadow_ptrue_matrix(ctx);

    std::vector<double> scores(ctx.outputs.size());
    for (std::size_t i = 0; i < ctx.outputs.size(); ++i) {
        double ref = 0.0;
        for (std::size_t s = 0; s < ptrue.size(); ++s)
            ref += -std::log(ptrue[s][i] + kLossFloor);
        ref /= static_cast<double>(ptrue.size());
        scores[i] = ref - cross_entropy_loss(ctx.outputs[i], ctx.true_labels[i]);
    }

    // Calibration: member case pairs in-shadow loss with the out-shadow
    // reference; nonmember case holds one out-shadow out as the pseudo
    // target.
    std::vector<double> cal_scores;
    std::vector<bool> cal_truth;
    for (std::size_t e = 0; e < sb.pool.examples.size(); ++e) {
        std::vector<std::size_t> ins, outs;
        for (std::size_t s = 0; s < sb.shadows.size(); ++s)
            (sb.shadows[s].in_train[e] ? ins : outs).push_back(s);
        if (ins.empty() || outs.size() < 2) continue;
        double ref_full = 0.0;
        for (std::size_t s : outs) ref_full += sb.shadows[s].losses[e];
        ref_full /= static_cast<double>(outs.size());
        double in_loss = 0.0;
        for (std::size_t s : ins) in_loss += sb.shadows[s].losses[e];
        in_loss /= static_cast<double>(ins.size());
        cal_scores.push_back(ref_full - in_loss);
        cal_truth.push_back(true);

        const std::size_t half = outs.size() / 2;
        double ref_half = 0.0;
        for (std::size_t j = 0; j < half; ++j) ref_half += sb.shadows[outs[j]].losses[e];
        ref_half /= static_cast<double>(half);
        cal_scores.push_back(ref_half - sb.shadows[outs[half]].losses[e]);
        cal_truth.push_back(false);
    }
    const double tau = safe_max_ma_threshold(cal_scores, cal_truth);
    return finalize_threshold(std::move(scores), tau, ctx, false);
}

AttackResult distillation_threshold(const AttackContext& ctx) {
    require(ctx.shadow != nullptr && !ctx.shadow->shadows.empty(), "shadow bundle");
    require(ctx.true_labels.size() == ctx.outputs.size(), "true labels");
    require(!ctx.target_on_shadow_pool.empty(), "target outputs on the shadow pool");
    require(!ctx.features.empty(), "sample features");
    const auto& sb = *ctx.shadow;

    std::vector<std::size_t> all(sb.pool.examples.size());
    std::iota(all.begin(), all.end(), 0);
    TrainHyper hyper;
    hyper.hidden = {64};
    hyper.epochs = 50;
    hyper.learning_rate = 0.25;

    SoftmaxClassifier local_student;
    const SoftmaxClassifier* student = ctx.distilled_student;
    if (!student) {
        hyper.seed = derive_seed(ctx.seed, "distill-student");
        local_student = train_distilled(sb.pool, all, ctx.target_on_shadow_pool, hyper);
        student = &local_student;
    }

    std::vector<double> scores(ctx.outputs.size());
    for (std::size_t i = 0; i < ctx.outputs.size(); ++i) {
        const double student_loss =
            cross_entropy_loss(student->predict_proba(ctx.features[i]), ctx.true_labels[i]);
        scores[i] = student_loss - cross_entropy_loss(ctx.outputs[i], ctx.true_labels[i]);
    }

    // Calibrate with shadow 0 standing in for the target.
    SoftmaxClassifier local_cal;
    const SoftmaxClassifier* cal_student = ctx.calibration_student;
    if (!cal_student) {
        hyper.seed = derive_seed(ctx.seed, "distill-cal-student");
        local_cal = train_distilled(sb.pool, all, sb.shadows.front().outputs, hyper);
        cal_student = &local_cal;
    }
    std::vector<double> cal_scores;
    std::vector<bool> cal_truth;
    const auto& sh0 = sb.shadows.front();
    for (std::size_t e = 0; e < sb.pool.examples.size(); ++e) {
        const double s_loss = cross_entropy_loss(
            cal_student->predict_proba(sb.pool.examples[e].features),
            sb.pool.examples[e].true_label);
        cal_scores.push_back(s_loss - sh0.losses[e]);
        cal_truth.push_back(sh0.in_train[e]);
    }
    const double tau = threshold_at_max_ma(cal_scores, cal_truth).first;
    return finalize_threshold(std::move(scores), tau, ctx, false);
}

AttackResult lira(const AttackContext& ctx) {
    require(ctx.shadow != nullptr && ctx.shadow->shadows.size() >= 2, "shadow bundle (k >= 2)");
    require(ctx.true_labels.size() == ctx.outputs.size(), "true labels");
    const auto& sb = *ctx.shadow;
    const auto ptrue = shadow_ptrue_matrix(ctx);

    // Global logit statistics over the shadow pool.
    double in_sum = 0.0, out_sum = 0.0;
    std::size_t in_n = 0, out_n = 0;
    std::vector<std::vector<double>> pool_phi(sb.shadows.size());
    for (std::size_t s = 0; s < sb.shadows.size(); ++s) {
        pool_phi[s].resize(sb.pool.examples.size());
        for (std::size_t e = 0; e < sb.pool.examples.size(); ++e) {
            const double phi =
                logit(sb.shadows[s].outputs[e][sb.pool.examples[e].true_label]);
            pool_phi[s][e] = phi;
            if (sb.shadows[s].in_train[e]) {
                in_sum += phi;
                ++in_n;
            } else {
                out_sum += phi;
                ++out_n;
            }
        }
    }
    if (in_n == 0 || out_n == 0)
        throw MissingContextError("lira: shadows lack in/out populations");
    const double shift = in_sum / static_cast<double>(in_n) -
                         out_sum / static_cast<double>(out_n);

    // Pooled variances around per-example means.
    double var_in = 0.0, var_out = 0.0;
    std::size_t vin_n = 0, vout_n = 0;
    for (std::size_t e = 0; e < sb.pool.examples.size(); ++e) {
        double im = 0.0, om = 0.0;
        std::size_t ic = 0, oc = 0;
        for (std::size_t s = 0; s < sb.shadows.size(); ++s)
            if (sb.shadows[s].in_train[e]) {
                im += pool_phi[s][e];
                ++ic;
            } else {
                om += pool_phi[s][e];
                ++oc;
            }
        if (ic > 0) im /= static_cast<double>(ic);
        if (oc > 0) om /= static_cast<double>(oc);
        for (std::size_t s = 0; s < sb.shadows.size(); ++s)
            if (sb.shadows[s].in_train[e]) {
                var_in += (pool_phi[s][e] - im) * (pool_phi[s][e] - im);
                ++vin_n;
            } else {
                var_out += (pool_phi[s][e] - om) * (pool_phi[s][e] - om);
                ++vout_n;
            }
    }
    var_in = vin_n > 1 ? var_in / static_cast<double>(vin_n - 1) : 1.0;
    var_out = vout_n > 1 ? var_out / static_cast<double>(vout_n - 1) : 1.0;

    auto llr = [&](double phi, double mu_out) {
        return log_normal_pdf(phi, mu_out + shift, var_in) -
               log_normal_pdf(phi, mu_out, var_out);
    };

    std::vector<double> scores(ctx.outputs.size());
    for (std::size_t i = 0; i < ctx.outputs.size(); ++i) {
        double mu_out = 0.0;
        for (std::size_t s = 0; s < ptrue.size(); ++s) mu_out += logit(ptrue[s][i]);
        mu_out /= static_cast<double>(ptrue.size());
        scores[i] = llr(logit(ctx.outputs[i][ctx.true_labels[i]]), mu_out);
    }

    // Calibration over the shadow pool with leave-one-shadow scoring.
    std::vector<double> cal_scores;
    std::vector<bool> cal_truth;
    for (std::size_t e = 0; e < sb.pool.examples.size(); ++e) {
        std::vector<std::size_t> ins, outs;
        for (std::size_t s = 0; s < sb.shadows.size(); ++s)
            (sb.shadows[s].in_train[e] ? ins : outs).push_back(s);
        if (ins.empty() || outs.size() < 2) continue;
        double mu_rest = 0.0;
        for (std::size_t j = 1; j < outs.size(); ++j) mu_rest += pool_phi[outs[j]][e];
        mu_rest /= static_cast<double>(outs.size() - 1);
        cal_scores.push_back(llr(pool_phi[ins.front()][e], mu_rest));
        cal_truth.push_back(true);
        cal_scores.push_back(llr(pool_phi[outs.front()][e], mu_rest));
        cal_truth.push_back(false);
    }
    const double tau = safe_max_ma_threshold(cal_scores, cal_truth);
    return finalize_threshold(std::move(scores), tau, ctx, true);
}

AttackResult run_attack(AttackKind kind, const AttackContext& ctx) {
    if (ctx.outputs.empty()) throw EmptyBatchError("run_attack: no samples");
    switch (kind) {
    case AttackKind::NnAttack: return nn_attack(ctx);
    case AttackKind::LossThreshold: return loss_threshold(ctx);
    case AttackKind::LabelOnly: return label_only(ctx);
    case AttackKind::Top3Nn: return top3_nn(ctx);
    case AttackKind::Top1Threshold: return top1_threshold(ctx);
    case AttackKind::BlindMiDiffW: return blindmi_diff_w(ctx);
    case AttackKind::BlindMiDiffWo: return blindmi_diff_wo(ctx);
    case AttackKind::BlindMi1Class: return blindmi_1class(ctx);
    case AttackKind::Top2True: return top2_true(ctx);
    case AttackKind::PrivacyRiskScores: return privacy_risk_scores(ctx);
    case AttackKind::ShapleyValues: return shapley_values(ctx);
    case AttackKind::PpvAttack: return ppv_attack(ctx);
    case AttackKind::CalibratedScore: return calibrated_score(ctx);
    case AttackKind::DistillationThreshold: return distillation_threshold(ctx);
    case AttackKind::Lira: return lira(ctx);
    }
    throw ConfigError("run_attack: unknown kind");
}

} // namespace mia
