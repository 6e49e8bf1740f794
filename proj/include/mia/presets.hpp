#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mia/mmd.hpp"
#include "mia/model.hpp"

namespace mia {

/// Everything that defines one benchmark dataset: the synthetic task that
/// stands in for it, training hyperparameters, the kernel bandwidth used
/// for every distance in its scenarios, and the scenario parameter levels.
struct DatasetPreset {
    std::string id;
    bool image_family = true; // picks the abstention-ratio family

    SyntheticTask task;
    TrainHyper target_hyper;
    TrainHyper shadow_hyper;
    std::size_t shadow_count = 16;

    std::size_t target_n = 4000;      // dataset size, half members
    std::size_t target_train = 2000;  // target model train-slice size
    std::size_t target_heldout = 4000;
    std::size_t shadow_pool_size = 2000;

    std::size_t eta = 10;           // samples per confidence block, per side
    std::size_t select_count = 100; // groups per scenario subset
    double sigma = 1.0;     // kernel bandwidth for the CV2 distances
    double cv3_sigma = 1.0; // bandwidth for the differential distance
    NormMode norm_mode = NormMode::UnsquaredNorm;

    std::array<double, 3> cv2_levels{};
    std::array<double, 3> cv3_levels{};
    // Bernoulli split points per CV2 level, the published thresholds for
    // p = 0.3, 0.5, 0.7; the mid entry is the p=0.5 threshold.
    std::array<double, 3> bernoulli_eps_levels{};
    std::array<double, 3> bernoulli_p_levels{0.3, 0.5, 0.7};
    double bernoulli_eps = 0.0; // the p=0.5 split point
    double bernoulli_p = 0.5;
    std::array<double, 4> cv4_ratios{};

    double uniform_halfwidth = 0.35;
    std::size_t uniform_bins = 5;
    double normal_sigma = 0.2;

    std::size_t nonmember_count = 400;
    /// Probe-set size per side for the realized-CV3 measurement; the
    /// differential's magnitude scales like eta/cv3_probe, so this pins
    /// the preset's realizable CV3 range.
    std::size_t cv3_probe = 32;
    double cv2_tolerance = 0.05;
    double cv3_tolerance = 0.02;
};

/// The seven shipped presets, in canonical order.
const std::vector<DatasetPreset>& all_presets();

const DatasetPreset& preset_by_id(const std::string& id);

/// Smaller models/subsets for the quick benchmark mode; scenario parameter
/// levels are unchanged.
DatasetPreset quick_variant(const DatasetPreset& p);

/// The hyperparameter preset whose train/test gap carries the MI signal.
TrainHyper overfit_hyper();

} // namespace mia
