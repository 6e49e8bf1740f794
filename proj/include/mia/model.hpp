#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mia/mmd.hpp"

namespace mia {

/// Seeded Gaussian-mixture classification task. Class means are drawn from
/// the task RNG and scaled by per_class_mean_scale with a per-class radius
/// factor, so classes differ in separability and the trained model shows a
/// wide confidence spread.
///
/// `seed` fixes the task identity (the class means); `resample` draws a
/// fresh example pool from the same distribution, which is how shadow
/// pools stay on-task without sharing samples.
struct SyntheticTask {
    std::uint64_t seed = 1;
    std::uint64_t resample = 0;
    std::size_t class_count = 10;
    std::size_t feature_dim = 16;
    double per_class_mean_scale = 1.0;
    double noise_scale = 0.45;
    std::size_t pool_size = 8000;
};

enum class Membership { Member, NonMember };

struct LabeledExample {
    std::vector<double> features;
    std::size_t true_label = 0;
};

struct Pool {
    std::size_t class_count = 0;
    std::size_t feature_dim = 0;
    std::vector<LabeledExample> examples;
};

/// Deterministic pool of labeled examples; no membership yet.
Pool generate_task(const SyntheticTask& task);

struct TrainHyper {
    std::vector<std::size_t> hidden = {32};
    std::size_t epochs = 120;
    double learning_rate = 1.0;
    double init_scale = 0.5;
    double weight_decay = 0.0; // decoupled L2 shrink per epoch
    std::uint64_t seed = 1;
};

/// Fully-connected softmax classifier trained by full-batch gradient
/// descent (tanh hidden activations).
class SoftmaxClassifier {
public:
    SoftmaxClassifier() = default;
    SoftmaxClassifier(std::size_t feature_dim, std::vector<std::size_t> hidden,
                      std::size_t class_count);

    ProbVector predict_proba(const std::vector<double>& features) const;
    std::size_t predict_label(const std::vector<double>& features) const;

    std::size_t feature_dim() const { return feature_dim_; }
    std::size_t class_count() const { return class_count_; }

    // Layer l maps widths_[l] -> widths_[l+1]; weights row-major.
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
    double first_epoch_loss = 0.0;
    double final_loss = 0.0;

private:
    std::size_t feature_dim_ = 0;
    std::size_t class_count_ = 0;
    std::vector<std::size_t> widths_;
};

/// Trains on pool[subset]; deterministic given (pool, subset, hyper).
/// Throws TrainingDivergedError if the loss becomes non-finite.
SoftmaxClassifier train_classifier(const Pool& pool, const std::vector<std::size_t>& subset,
                                   const TrainHyper& hyper);

/// Same trainer against soft targets (one distribution per pool example)
/// instead of the hard labels.
SoftmaxClassifier train_distilled(const Pool& pool, const std::vector<std::size_t>& subset,
                                  const std::vector<ProbVector>& soft_targets,
                                  const TrainHyper& hyper);

/// -log(p[label] + 1e-12); the floor avoids -log 0.
double cross_entropy_loss(const ProbVector& p, std::size_t label);

/// Fraction of subset examples whose argmax prediction equals the label.
double accuracy_on(const SoftmaxClassifier& model, const Pool& pool,
                   const std::vector<std::size_t>& subset);

/// A target model with its train / held-out split over the pool.
struct TrainedTarget {
    SoftmaxClassifier model;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> heldout_indices;
};

/// Seeded split of the pool into train/held-out slices, then training on
/// the train slice.
TrainedTarget train_target(const Pool& pool, const TrainHyper& hyper, std::uint64_t seed,
                           std::size_t train_size, std::size_t heldout_size);

class TargetDataset;
std::vector<bool> scoring_truth(const TargetDataset& dataset);

/// Labeled examples with aligned model outputs and hidden membership
/// ground truth. Attacks only ever see the attack-facing fields; the
/// membership vector is reachable solely via the scoring path.
class TargetDataset {
public:
    std::string dataset_id;
    std::vector<LabeledExample> examples;
    std::vector<ProbVector> model_outputs;
    std::vector<std::size_t> source_indices; // positions in the source pool

    std::size_t size() const { return examples.size(); }

private:
    std::vector<Membership> membership_;

    friend std::vector<bool> scoring_truth(const TargetDataset& dataset);
    friend TargetDataset assemble_target_dataset(const Pool&, const TrainedTarget&,
                                                 std::size_t, std::uint64_t,
                                                 const std::string&);
};

/// n/2 members sampled from the target's train split, n/2 nonmembers from
/// its held-out split; outputs filled via predict_proba.
TargetDataset assemble_target_dataset(const Pool& pool, const TrainedTarget& target,
                                      std::size_t n, std::uint64_t seed,
                                      const std::string& dataset_id);

/// k classifiers on per-shadow random half-splits of a fresh pool, with
/// outputs and losses recorded for every pool example under every shadow.
struct ShadowBundle {
    Pool pool;
    struct Shadow {
        SoftmaxClassifier model;
        std::vector<bool> in_train;
        std::vector<ProbVector> outputs;
        std::vector<double> losses;
    };
    std::vector<Shadow> shadows;

    std::size_t size() const { return shadows.size(); }
};

ShadowBundle train_shadow_ensemble(const SyntheticTask& task, std::size_t k,
                                   const TrainHyper& hyper, std::uint64_t seed);

} // namespace mia
