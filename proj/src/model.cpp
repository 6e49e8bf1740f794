#include "mia/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mia/errors.hpp"
#include "mia/rng.hpp"

namespace mia {

namespace {

void softmax_inplace(std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double& x : logits) {
        x = std::exp(x - m);
        sum += x;
    }
    for (double& x : logits) x /= sum;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

} // namespace

Pool generate_task(const SyntheticTask& task) {
    if (task.class_count < 2) throw ConfigError("task: class_count must be >= 2");
    if (task.pool_size < 4 * task.class_count)
        throw ConfigError("task: pool_size must be >= 4 * class_count");
    if (task.noise_scale <= 0.0) throw ConfigError("task: noise_scale must be positive");

    auto mean_rng = seeded_rng(task.seed, "task-means");
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Per-class mean with a skewed radius factor: a crowd of classes
    // overlaps near the origin while a few sit far out, so the trained
    // model's confidence profile spans flat to one-hot.
    std::vector<std::vector<double>> means(task.class_count);
    for (auto& m : means) {
        m.resize(task.feature_dim);
        const double u = unit(mean_rng);
        const double r = (0.15 + 1.85 * u * u) * task.per_class_mean_scale;
        for (double& x : m) x = gauss(mean_rng) * r;
    }

    auto rng = seeded_rng(task.seed, "task-samples|" + std::to_string(task.resample));
    Pool pool;
    pool.class_count = task.class_count;
    pool.feature_dim = task.feature_dim;
    pool.examples.resize(task.pool_size);
    for (std::size_t i = 0; i < task.pool_size; ++i) {
        const std::size_t c = i % task.class_count;
        auto& ex = pool.examples[i];
        ex.true_label = c;
        ex.features.resize(task.feature_dim);
        for (std::size_t d = 0; d < task.feature_dim; ++d)
            ex.features[d] = means[c][d] + task.noise_scale * gauss(rng);
    }
    return pool;
}

SoftmaxClassifier::SoftmaxClassifier(std::size_t feature_dim, std::vector<std::size_t> hidden,
                                     std::size_t class_count)
    : feature_dim_(feature_dim), class_count_(class_count) {
    widths_.push_back(feature_dim);
    for (std::size_t h : hidden) widths_.push_back(h);
    widths_.push_back(class_count);
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        weights.emplace_back(widths_[l + 1] * widths_[l], 0.0);
        biases.emplace_back(widths_[l + 1], 0.0);
    }
}

ProbVector SoftmaxClassifier::predict_proba(const std::vector<double>& features) const {
    if (features.size() != feature_dim_)
        throw DimensionError("predict_proba: feature dimension mismatch");
    std::vector<double> act = features;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const std::size_t out = biases[l].size(), in = act.size();
        std::vector<double> next(out);
        for (std::size_t o = 0; o < out; ++o) {
            double z = biases[l][o];
            const double* w = &weights[l][o * in];
            for (std::size_t i = 0; i < in; ++i) z += w[i] * act[i];
            next[o] = z;
        }
        if (l + 1 < weights.size())
            for (double& z : next) z = std::tanh(z);
        act = std::move(next);
    }
    softmax_inplace(act);
    return act;
}

std::size_t SoftmaxClassifier::predict_label(const std::vector<double>& features) const {
    const ProbVector p = predict_proba(features);
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

namespace {

// Shared full-batch trainer; soft == nullptr trains on hard labels.
SoftmaxClassifier train_impl(const Pool& pool, const std::vector<std::size_t>& subset,
                             const TrainHyper& hyper, const std::vector<ProbVector>* soft) {
    if (subset.empty()) throw EmptyBatchError("train_classifier: empty training subset");
    SoftmaxClassifier net(pool.feature_dim, hyper.hidden, pool.class_count);

    auto rng = seeded_rng(hyper.seed, "mlp-init");
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        const double fan_in =
            static_cast<double>(net.weights[l].size() / net.biases[l].size());
        std::uniform_real_distribution<double> u(-hyper.init_scale / std::sqrt(fan_in),
                                                 hyper.init_scale / std::sqrt(fan_in));
        for (double& w : net.weights[l]) w = u(rng);
    }

    const std::size_t n = subset.size();
    const std::size_t layers = net.weights.size();
    const double momentum = 0.9;
    std::vector<std::vector<double>> vel_w, vel_b, grad_w, grad_b;
    for (std::size_t l = 0; l < layers; ++l) {
        vel_w.emplace_back(net.weights[l].size(), 0.0);
        vel_b.emplace_back(net.biases[l].size(), 0.0);
        grad_w.emplace_back(net.weights[l].size(), 0.0);
        grad_b.emplace_back(net.biases[l].size(), 0.0);
    }

    std::vector<std::vector<double>> act(layers + 1);
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        for (std::size_t l = 0; l < layers; ++l) {
            std::fill(grad_w[l].begin(), grad_w[l].end(), 0.0);
            std::fill(grad_b[l].begin(), grad_b[l].end(), 0.0);
        }
        double loss = 0.0;
        for (std::size_t s : subset) {
            const auto& ex = pool.examples[s];
            act[0] = ex.features;
            for (std::size_t l = 0; l < layers; ++l) {
                const std::size_t out = net.biases[l].size(), in = act[l].size();
                act[l + 1].assign(out, 0.0);
                for (std::size_t o = 0; o < out; ++o) {
                    double z = net.biases[l][o];
                    const double* w = &net.weights[l][o * in];
                    for (std::size_t i = 0; i < in; ++i) z += w[i] * act[l][i];
                    act[l + 1][o] = (l + 1 < layers) ? std::tanh(z) : z;
                }
            }
            softmax_inplace(act[layers]);
            std::vector<double> delta = act[layers];
            if (soft) {
                const ProbVector& q = (*soft)[s];
                for (std::size_t c = 0; c < q.size(); ++c) {
                    loss -= q[c] * std::log(act[layers][c] + 1e-12);
                    delta[c] -= q[c];
                }
            } else {
                loss += cross_entropy_loss(act[layers], ex.true_label);
                delta[ex.true_label] -= 1.0;
            }
            for (double& d : delta) d /= static_cast<double>(n);
            for (std::size_t l = layers; l-- > 0;) {
                const std::size_t out = net.biases[l].size(), in = act[l].size();
                for (std::size_t o = 0; o < out; ++o) {
                    grad_b[l][o] += delta[o];
                    double* gw = &grad_w[l][o * in];
                    for (std::size_t i = 0; i < in; ++i) gw[i] += delta[o] * act[l][i];
                }
                if (l == 0) break;
                std::vector<double> prev(in, 0.0);
                for (std::size_t o = 0; o < out; ++o) {
                    const double* w = &net.weights[l][o * in];
                    for (std::size_t i = 0; i < in; ++i) prev[i] += w[i] * delta[o];
                }
                for (std::size_t i = 0; i < in; ++i) prev[i] *= 1.0 - act[l][i] * act[l][i];
                delta = std::move(prev);
            }
        }
        loss /= static_cast<double>(n);
        if (!std::isfinite(loss))
            throw TrainingDivergedError("training loss became non-finite at epoch " +
                                        std::to_string(epoch));
        if (epoch == 0) net.first_epoch_loss = loss;
        net.final_loss = loss;

        const double shrink = 1.0 - hyper.learning_rate * hyper.weight_decay;
        for (std::size_t l = 0; l < layers; ++l) {
            for (std::size_t i = 0; i < net.weights[l].size(); ++i) {
                vel_w[l][i] = momentum * vel_w[l][i] - hyper.learning_rate * grad_w[l][i];
                net.weights[l][i] = net.weights[l][i] * shrink + vel_w[l][i];
            }
            for (std::size_t i = 0; i < net.biases[l].size(); ++i) {
                vel_b[l][i] = momentum * vel_b[l][i] - hyper.learning_rate * grad_b[l][i];
                net.biases[l][i] += vel_b[l][i];
            }
        }
    }
    return net;
}

} // namespace

SoftmaxClassifier train_classifier(const Pool& pool, const std::vector<std::size_t>& subset,
                                   const TrainHyper& hyper) {
    return train_impl(pool, subset, hyper, nullptr);
}

SoftmaxClassifier train_distilled(const Pool& pool, const std::vector<std::size_t>& subset,
                                  const std::vector<ProbVector>& soft_targets,
                                  const TrainHyper& hyper) {
    if (soft_targets.size() != pool.examples.size())
        throw LengthError("train_distilled: soft targets must align with the pool");
    return train_impl(pool, subset, hyper, &soft_targets);
}

double cross_entropy_loss(const ProbVector& p, std::size_t label) {
    if (label >= p.size()) throw DimensionError("cross_entropy_loss: label out of range");
    return -std::log(p[label] + 1e-12);
}

double accuracy_on(const SoftmaxClassifier& model, const Pool& pool,
                   const std::vector<std::size_t>& subset) {
    if (subset.empty()) throw EmptyBatchError("accuracy_on: empty subset");
    std::size_t hits = 0;
    for (std::size_t s : subset)
        if (model.predict_label(pool.examples[s].features) == pool.examples[s].true_label)
            ++hits;
    return static_cast<double>(hits) / static_cast<double>(subset.size());
}

TrainedTarget train_target(const Pool& pool, const TrainHyper& hyper, std::uint64_t seed,
                           std::size_t train_size, std::size_t heldout_size) {
    if (train_size + heldout_size > pool.examples.size())
        throw PoolExhaustedError("train_target: pool smaller than train + heldout");
    auto rng = seeded_rng(seed, "target-split");
    auto idx = shuffled_indices(pool.examples.size(), rng);
    TrainedTarget t;
    t.train_indices.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train_size));
    t.heldout_indices.assign(idx.begin() + static_cast<std::ptrdiff_t>(train_size),
                             idx.begin() + static_cast<std::ptrdiff_t>(train_size + heldout_size));
    t.model = train_classifier(pool, t.train_indices, hyper);
    return t;
}

std::vector<bool> scoring_truth(const TargetDataset& dataset) {
    std::vector<bool> truth(dataset.membership_.size());
    for (std::size_t i = 0; i < truth.size(); ++i)
        truth[i] = dataset.membership_[i] == Membership::Member;
    return truth;
}

TargetDataset assemble_target_dataset(const Pool& pool, const TrainedTarget& target,
                                      std::size_t n, std::uint64_t seed,
                                      const std::string& dataset_id) {
    if (n % 2 != 0) throw PartitionError("assemble_target_dataset: n must be even");
    const std::size_t half = n / 2;
    if (target.train_indices.size() < half || target.heldout_indices.size() < half)
        throw PoolExhaustedError("assemble_target_dataset: insufficient pool splits for n=" +
                                 std::to_string(n));

    auto rng = seeded_rng(seed, "dataset-assemble");
    auto train = target.train_indices;
    auto held = target.heldout_indices;
    std::shuffle(train.begin(), train.end(), rng);
    std::shuffle(held.begin(), held.end(), rng);

    // Interleave members and nonmembers in shuffled order so position in
    // the dataset carries no membership signal.
    std::vector<std::pair<std::size_t, Membership>> picks;
    picks.reserve(n);
    for (std::size_t i = 0; i < half; ++i) picks.emplace_back(train[i], Membership::Member);
    for (std::size_t i = 0; i < half; ++i) picks.emplace_back(held[i], Membership::NonMember);
    std::shuffle(picks.begin(), picks.end(), rng);

    TargetDataset d;
    d.dataset_id = dataset_id;
    d.examples.reserve(n);
    d.model_outputs.reserve(n);
    d.membership_.reserve(n);
    d.source_indices.reserve(n);
    for (const auto& [idx, flag] : picks) {
        d.examples.push_back(pool.examples[idx]);
        d.model_outputs.push_back(target.model.predict_proba(pool.examples[idx].features));
        d.membership_.push_back(flag);
        d.source_indices.push_back(idx);
    }
    return d;
}

ShadowBundle train_shadow_ensemble(const SyntheticTask& task, std::size_t k,
                                   const TrainHyper& hyper, std::uint64_t seed) {
    if (k < 1) throw ConfigError("train_shadow_ensemble: k must be >= 1");
    // Same task (same class means), fresh example pool.
    SyntheticTask shadow_task = task;
    shadow_task.resample = derive_seed(seed, "shadow-pool");

    ShadowBundle bundle;
    bundle.pool = generate_task(shadow_task);
    const std::size_t pool_n = bundle.pool.examples.size();
    bundle.shadows.reserve(k);
    for (std::size_t s = 0; s < k; ++s) {
        auto rng = seeded_rng(seed, "shadow-split-" + std::to_string(s));
        auto idx = shuffled_indices(pool_n, rng);
        const std::size_t half = pool_n / 2;
        std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(half));

        ShadowBundle::Shadow sh;
        sh.in_train.assign(pool_n, false);
        for (std::size_t i : train) sh.in_train[i] = true;
        TrainHyper h = hyper;
        h.seed = derive_seed(seed, "shadow-init-" + std::to_string(s));
        sh.model = train_classifier(bundle.pool, train, h);
        sh.outputs.reserve(pool_n);
        sh.losses.reserve(pool_n);
        for (const auto& ex : bundle.pool.examples) {
            sh.outputs.push_back(sh.model.predict_proba(ex.features));
            sh.losses.push_back(cross_entropy_loss(sh.outputs.back(), ex.true_label));
        }
        bundle.shadows.push_back(std::move(sh));
    }
    return bundle;
}

} // namespace mia
