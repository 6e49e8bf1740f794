#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "mia/errors.hpp"

namespace mia {

enum class Decision { Member, NonMember, Abstain };

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::size_t abstained = 0;
    std::size_t decided() const { return tp + fp + tn + fn; }
    std::size_t total() const { return decided() + abstained; }
};

/// The ten evaluation metrics for one (attack, scenario) pair. Rates are
/// over decided samples only; abstained is reported separately.
struct MetricReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0; // == TPR
    double f1 = 0.0;
    double fnr = 0.0;
    double fpr = 0.0;
    double ma = 0.0; // TPR - FPR
    double auc = 0.0;
    double auc_log = 0.0;
    std::map<double, double> tpr_at_fpr; // fpr level -> tpr
    std::optional<double> threshold_at_max_ma;
    std::size_t abstained = 0;
    bool degenerate = false; // some rate had a zero denominator
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

/// Ordered ROC points from a descending score sweep; fpr nondecreasing,
/// first point (0,0), last point (1,1).
struct RocCurve {
    std::vector<RocPoint> points;
};

/// Abstain samples count only in `abstained`; truth[i] is true for members.
ConfusionCounts confusion(const std::vector<Decision>& decisions,
                          const std::vector<bool>& truth);

/// accuracy/precision/recall/f1/fpr/fnr/ma from counts. Zero denominators
/// yield 0 with the degenerate flag set. Throws NoDecisionsError when
/// nothing was decided.
MetricReport basic_metrics(const ConfusionCounts& c);

/// Threshold sweep over unique scores descending; samples with equal score
/// enter together. Requires both classes present.
RocCurve roc(const std::vector<double>& scores, const std::vector<bool>& truth);

/// Plain trapezoidal area under the curve in linear fpr.
double auc_linear(const RocCurve& curve);

/// Trapezoidal area of the curve plotted over log10(fpr), restricted to
/// fpr in [fpr_floor, 1] and normalized by the log-domain width.
double auc_log(const RocCurve& curve, double fpr_floor = 1e-4);

/// TPR at the largest curve point with fpr <= fpr_level (step convention).
double tpr_at_fpr(const RocCurve& curve, double fpr_level);

/// Grid over unique scores; returns the threshold maximizing recall - fpr
/// under the strict decision rule (member iff score > threshold), ties
/// broken toward the smaller threshold.
std::pair<double, double> threshold_at_max_ma(const std::vector<double>& scores,
                                              const std::vector<bool>& truth);

/// Full report: decision metrics from (decisions, truth), score metrics
/// from (scores, truth). tpr levels default to the reporting schema's.
MetricReport evaluate(const std::vector<double>& scores,
                      const std::vector<Decision>& decisions,
                      const std::vector<bool>& truth,
                      const std::vector<double>& tpr_levels = {1e-2, 1e-3});

} // namespace mia
