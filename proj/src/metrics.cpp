#include "mia/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mia {

namespace {

// Indices sorted by score descending, stable in index for equal scores.
std::vector<std::size_t> order_desc(const std::vector<double>& scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

void check_both_classes(const std::vector<bool>& truth) {
    const auto members = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), true));
    if (members == 0 || members == truth.size())
        throw DegenerateTruthError("score metrics need both classes present");
}

} // namespace

ConfusionCounts confusion(const std::vector<Decision>& decisions,
                          const std::vector<bool>& truth) {
    if (decisions.size() != truth.size())
        throw LengthError("confusion: decisions/truth length mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        switch (decisions[i]) {
        case Decision::Abstain: ++c.abstained; break;
        case Decision::Member: truth[i] ? ++c.tp : ++c.fp; break;
        case Decision::NonMember: truth[i] ? ++c.fn : ++c.tn; break;
        }
    }
    return c;
}

MetricReport basic_metrics(const ConfusionCounts& c) {
    if (c.decided() == 0) throw NoDecisionsError("basic_metrics: no decided samples");
    MetricReport r;
    r.abstained = c.abstained;
    auto rate = [&r](std::size_t num, std::size_t den) {
        if (den == 0) {
            r.degenerate = true;
            return 0.0;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };
    r.accuracy = rate(c.tp + c.tn, c.decided());
    r.precision = rate(c.tp, c.tp + c.fp);
    r.recall = rate(c.tp, c.tp + c.fn);
    r.fpr = rate(c.fp, c.fp + c.tn);
    r.fnr = 1.0 - r.recall;
    r.ma = r.recall - r.fpr;
    r.f1 = (r.precision + r.recall) > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : (r.degenerate = true, 0.0);
    return r;
}

RocCurve roc(const std::vector<double>& scores, const std::vector<bool>& truth) {
    if (scores.size() != truth.size())
        throw LengthError("roc: scores/truth length mismatch");
    check_both_classes(truth);
    const auto idx = order_desc(scores);
    const double p = static_cast<double>(std::count(truth.begin(), truth.end(), true));
    const double n = static_cast<double>(truth.size()) - p;

    RocCurve curve;
    curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < idx.size()) {
        const double s = scores[idx[i]];
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == s) {
            truth[idx[j]] ? ++tp : ++fp;
            ++j;
        }
        curve.points.push_back({static_cast<double>(fp) / n, static_cast<double>(tp) / p, s});
        i = j;
    }
    return curve;
}

double auc_linear(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t k = 1; k < curve.points.size(); ++k) {
        const auto& a = curve.points[k - 1];
        const auto& b = curve.points[k];
        area += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
    }
    return area;
}

double auc_log(const RocCurve& curve, double fpr_floor) {
    // Integrate the polyline in (log10 fpr, tpr); fpr below the floor is
    // clamped to it, so leading zero-fpr points become zero-width segments.
    const double lo = std::log10(fpr_floor);
    const double width = -lo;
    double area = 0.0;
    for (std::size_t k = 1; k < curve.points.size(); ++k) {
        const double xa = std::log10(std::max(curve.points[k - 1].fpr, fpr_floor));
        const double xb = std::log10(std::max(curve.points[k].fpr, fpr_floor));
        area += (xb - xa) * 0.5 * (curve.points[k - 1].tpr + curve.points[k].tpr);
    }
    return area / width;
}

double tpr_at_fpr(const RocCurve& curve, double fpr_level) {
    double best = 0.0;
    for (const auto& pt : curve.points)
        if (pt.fpr <= fpr_level) best = std::max(best, pt.tpr);
    return best;
}

std::pair<double, double> threshold_at_max_ma(const std::vector<double>& scores,
                                              const std::vector<bool>& truth) {
    if (scores.size() != truth.size())
        throw LengthError("threshold_at_max_ma: scores/truth length mismatch");
    check_both_classes(truth);
    const auto idx = order_desc(scores);
    const double p = static_cast<double>(std::count(truth.begin(), truth.end(), true));
    const double n = static_cast<double>(truth.size()) - p;

    // Threshold tau = s decides member for score > s, i.e. every strictly
    // earlier tie group in the descending walk.
    double best_ma = -2.0, best_tau = 0.0;
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < idx.size()) {
        const double s = scores[idx[i]];
        const double ma = static_cast<double>(tp) / p - static_cast<double>(fp) / n;
        if (ma > best_ma || (ma == best_ma && s < best_tau)) {
            best_ma = ma;
            best_tau = s;
        }
        while (i < idx.size() && scores[idx[i]] == s) {
            truth[idx[i]] ? ++tp : ++fp;
            ++i;
        }
    }
    return {best_tau, best_ma};
}

MetricReport evaluate(const std::vector<double>& scores,
                      const std::vector<Decision>& decisions,
                      const std::vector<bool>& truth,
                      const std::vector<double>& tpr_levels) {
    MetricReport r = basic_metrics(confusion(decisions, truth));
    const RocCurve curve = roc(scores, truth);
    r.auc = auc_linear(curve);
    r.auc_log = auc_log(curve);
    for (double level : tpr_levels) r.tpr_at_fpr[level] = tpr_at_fpr(curve, level);
    auto [tau, _] = threshold_at_max_ma(scores, truth);
    r.threshold_at_max_ma = tau;
    return r;
}

} // namespace mia
