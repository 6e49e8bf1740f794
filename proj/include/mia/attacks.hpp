#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mia/metrics.hpp"
#include "mia/mmd.hpp"
#include "mia/model.hpp"

namespace mia {

enum class AttackKind {
    NnAttack,
    LossThreshold,
    LabelOnly,
    Top3Nn,
    Top1Threshold,
    BlindMiDiffW,
    BlindMiDiffWo,
    BlindMi1Class,
    Top2True,
    PrivacyRiskScores,
    ShapleyValues,
    PpvAttack,
    CalibratedScore,
    DistillationThreshold,
    Lira,
};

constexpr std::array<AttackKind, 15> kAllAttackKinds = {
    AttackKind::NnAttack,          AttackKind::LossThreshold,
    AttackKind::LabelOnly,         AttackKind::Top3Nn,
    AttackKind::Top1Threshold,     AttackKind::BlindMiDiffW,
    AttackKind::BlindMiDiffWo,     AttackKind::BlindMi1Class,
    AttackKind::Top2True,          AttackKind::PrivacyRiskScores,
    AttackKind::ShapleyValues,     AttackKind::PpvAttack,
    AttackKind::CalibratedScore,   AttackKind::DistillationThreshold,
    AttackKind::Lira,
};

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& s);

/// Fine-grained attacks abstain on floor(ratio*n) samples; the rest decide
/// on every sample.
bool is_fine_grained(AttackKind kind);

/// Everything an attack may consume. Carries no membership information;
/// optional fields are empty/null when the scenario does not provide them.
struct AttackContext {
    std::vector<ProbVector> outputs;            // target model outputs, one per sample
    std::vector<std::vector<double>> features;  // the samples themselves
    std::vector<std::size_t> true_labels;       // empty when unavailable
    std::vector<ProbVector> nonmember_reference;
    const ShadowBundle* shadow = nullptr;
    double abstention_ratio = 0.0;
    std::uint64_t seed = 0;
    std::size_t class_count = 0;
    double ppv_prior = 0.5; // membership prior for the PPV threshold

    /// Black-box query access: outputs of `count` noise-transformed copies
    /// of the context's own samples.
    std::function<std::vector<ProbVector>(std::uint64_t seed, double noise, std::size_t count)>
        transform_probe;

    /// Harness-cached cross-model artifacts (query results, no ground truth).
    std::vector<std::vector<double>> shadow_ptrue; // [shadow][sample] true-class prob
    std::vector<ProbVector> target_on_shadow_pool; // target outputs on shadow pool
    const SoftmaxClassifier* distilled_student = nullptr;
    const SoftmaxClassifier* calibration_student = nullptr;
};

struct AttackResult {
    std::vector<double> scores; // higher = more member-like
    std::vector<Decision> decisions;
    std::optional<double> threshold_used;
    bool converged = true;
};

AttackResult nn_attack(const AttackContext& ctx);
AttackResult loss_threshold(const AttackContext& ctx);
AttackResult label_only(const AttackContext& ctx);
AttackResult top3_nn(const AttackContext& ctx);
AttackResult top1_threshold(const AttackContext& ctx);
AttackResult blindmi_diff_w(const AttackContext& ctx);
AttackResult blindmi_diff_wo(const AttackContext& ctx);
AttackResult blindmi_1class(const AttackContext& ctx);
AttackResult top2_true(const AttackContext& ctx);
AttackResult privacy_risk_scores(const AttackContext& ctx);
AttackResult shapley_values(const AttackContext& ctx);
AttackResult ppv_attack(const AttackContext& ctx);
AttackResult calibrated_score(const AttackContext& ctx);
AttackResult distillation_threshold(const AttackContext& ctx);
AttackResult lira(const AttackContext& ctx);

AttackResult run_attack(AttackKind kind, const AttackContext& ctx);

/// Exact KNN-Shapley value of (x_output, x_label) when inserted into the
/// valued set next to `base`, scored against the validation points.
/// Distances are Euclidean in output space; ties rank x after the base
/// points it ties with.
double knn_shapley_value(const std::vector<ProbVector>& base_outputs,
                         const std::vector<std::size_t>& base_labels,
                         const std::vector<ProbVector>& val_outputs,
                         const std::vector<std::size_t>& val_labels,
                         const ProbVector& x_output, std::size_t x_label, std::size_t k_nn);

} // namespace mia
