#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "slipfuse/errors.hpp"
#include "slipfuse/model.hpp"
#include "slipfuse/rng.hpp"

namespace slipfuse {

struct TrainConfig {
    double learning_rate = 5e-4;
    int batch_size = 160;  // reference value; desk-scale runs override to 32
    int max_epochs = 30;
    uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    bool shuffle = true;
    int early_stop_patience = 10;  // epochs without validation improvement
};

inline void validate_train_config(const TrainConfig& c) {
    if (c.learning_rate <= 0) throw InvalidConfig("learning_rate must be > 0");
    if (c.batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
    if (c.max_epochs < 1) throw InvalidConfig("max_epochs must be >= 1");
    if (!(c.adam_beta1 > 0 && c.adam_beta1 < 1) || !(c.adam_beta2 > 0 && c.adam_beta2 < 1))
        throw InvalidConfig("adam betas must be in (0,1)");
    if (c.adam_eps <= 0) throw InvalidConfig("adam_eps must be > 0");
}

// One model-ready sequence: flattened L x dim features plus label and the
// identity needed for leakage checks and grasp-level grouping.
struct LabeledSequence {
    std::string trial_id;
    int offset = 0;
    std::vector<float> features;  // seq_len * dim
    Label label = Label::STABLE;
};

// Mean over the batch of -log p[label], with p floored at 1e-12.
inline double compute_loss(const std::vector<std::array<double, 2>>& probabilities,
                           const std::vector<int>& label_classes) {
    if (probabilities.size() != label_classes.size())
        throw ShapeMismatch("probability and label counts differ");
    if (probabilities.empty()) throw ShapeMismatch("empty batch");
    double loss = 0;
    for (size_t i = 0; i < probabilities.size(); ++i) {
        const int y = label_classes[i];
        if (y != 0 && y != 1) throw ShapeMismatch("label class must be 0 or 1");
        loss += -std::log(std::max(probabilities[i][y], 1e-12));
    }
    return loss / static_cast<double>(probabilities.size());
}

template <typename S>
struct AdamMomentsT {
    std::vector<S> m, v;
};

// Standard Adam update with bias correction, applied in place:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
template <typename S>
void adam_step(std::span<S> params, std::span<const S> grads, AdamMomentsT<S>& moments,
               long step, const TrainConfig& cfg) {
    if (params.size() != grads.size()) throw ShapeMismatch("param/grad size mismatch");
    if (step < 1) throw InvalidConfig("adam step index must be >= 1");
    if (moments.m.size() != params.size()) moments.m.assign(params.size(), S(0));
    if (moments.v.size() != params.size()) moments.v.assign(params.size(), S(0));
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (size_t i = 0; i < params.size(); ++i) {
        const double g = static_cast<double>(grads[i]);
        const double m = b1 * moments.m[i] + (1 - b1) * g;
        const double v = b2 * moments.v[i] + (1 - b2) * g * g;
        moments.m[i] = static_cast<S>(m);
        moments.v[i] = static_cast<S>(v);
        const double m_hat = m / corr1;
        const double v_hat = v / corr2;
        params[i] = static_cast<S>(params[i] - cfg.learning_rate * m_hat /
                                                   (std::sqrt(v_hat) + cfg.adam_eps));
    }
}

struct EpochStats {
    int epoch = 0;
    double train_loss = 0;
    double train_accuracy = 0;
    double val_accuracy = 0;
    double wall_ms = 0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;
    double best_val_accuracy = 0;
    std::string best_checkpoint_path;
    double wall_seconds = 0;
    std::vector<std::string> warnings;

    nlohmann::json epoch_json(const EpochStats& e) const {
        return {{"epoch", e.epoch},
                {"train_loss", e.train_loss},
                {"train_accuracy", e.train_accuracy},
                {"val_accuracy", e.val_accuracy},
                {"wall_ms", e.wall_ms}};
    }
    nlohmann::json summary_json() const {
        nlohmann::json j = {{"epochs_run", epochs.size()},
                            {"best_epoch", best_epoch},
                            {"best_val_accuracy", best_val_accuracy},
                            {"wall_seconds", wall_seconds},
                            {"warnings", warnings}};
        if (!best_checkpoint_path.empty()) j["best_checkpoint"] = best_checkpoint_path;
        return j;
    }
};

struct TrainResult {
    ModelState best_state;
    TrainReport report;
};

namespace detail {

template <typename S>
double accuracy_of(const ModelStateT<S>& state, const std::vector<LabeledSequence>& samples) {
    if (samples.empty()) return 0.0;
    size_t correct = 0;
    for (const auto& s : samples)
        if (predict_label(state, std::span<const float>(s.features)).label == s.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace detail

// Optimizes the head with Adam and cross-entropy. Deterministic for a fixed
// seed: shuffle order, batch composition and dropout draws are all derived
// from it. Keeps the best-validation state; stops early after
// early_stop_patience epochs without improvement. Throws DivergenceError on a
// non-finite loss and ClassImbalanceError when a class is missing from the
// training set.
inline TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                         const std::vector<LabeledSequence>& train_samples,
                         const std::vector<LabeledSequence>& val_samples,
                         const std::filesystem::path& checkpoint_dir = {},
                         const nlohmann::json& checkpoint_meta = nlohmann::json::object(),
                         std::ostream* epoch_log = nullptr) {
    validate_config(model_config);
    validate_train_config(train_config);
    if (train_samples.empty()) throw EmptyDataset();

    size_t n_slip = 0;
    for (const auto& s : train_samples)
        if (s.label == Label::SLIP) ++n_slip;
    const size_t n_stable = train_samples.size() - n_slip;
    if (n_slip == 0 || n_stable == 0)
        throw ClassImbalanceError("training set is missing the " +
                                  std::string(n_slip == 0 ? "slip" : "stable") + " class");

    TrainResult result;
    TrainReport& report = result.report;
    const double ratio = static_cast<double>(n_slip) / static_cast<double>(train_samples.size());
    if (ratio < 0.4 || ratio > 0.6)
        report.warnings.push_back("class ratio slip/total = " + std::to_string(ratio) +
                                  " exceeds 60/40; consider rebalancing the dataset");

    ModelState state = init_model<float>(model_config, train_config.seed);
    state.training_mode = true;
    Gradients grads = Gradients::zeros_like(state);
    auto registry = param_registry(state);
    std::vector<AdamMomentsT<float>> moments(registry.size());

    std::vector<size_t> order(train_samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(train_config.seed, 0x5175ffULL));

    const auto t_start = std::chrono::steady_clock::now();
    long step = 0;
    int epochs_since_best = 0;

    for (int epoch = 0; epoch < train_config.max_epochs; ++epoch) {
        const auto t_epoch = std::chrono::steady_clock::now();
        if (train_config.shuffle) shuffle_rng.shuffle(order);

        double loss_sum = 0;
        size_t n_batches = 0;
        for (size_t start = 0; start < order.size(); start += train_config.batch_size) {
            const size_t end = std::min(order.size(), start + train_config.batch_size);
            std::vector<std::span<const float>> batch;
            std::vector<int> labels;
            batch.reserve(end - start);
            for (size_t i = start; i < end; ++i) {
                batch.emplace_back(train_samples[order[i]].features);
                labels.push_back(class_of(train_samples[order[i]].label));
            }
            grads.zero();
            const double loss = forward_backward(state, batch, labels, grads, true);
            ++step;
            if (!std::isfinite(loss)) throw DivergenceError(step);
            loss_sum += loss;
            ++n_batches;
            for (size_t gi = 0; gi < registry.size(); ++gi)
                adam_step<float>(std::span<float>(*registry[gi].values),
                                 std::span<const float>(grads.groups[gi]), moments[gi], step,
                                 train_config);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(std::max<size_t>(1, n_batches));
        stats.train_accuracy = detail::accuracy_of(state, train_samples);
        stats.val_accuracy = detail::accuracy_of(state, val_samples);
        stats.wall_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t_epoch)
                            .count();
        report.epochs.push_back(stats);
        if (epoch_log) (*epoch_log) << report.epoch_json(stats).dump() << "\n";

        const double score = val_samples.empty() ? stats.train_accuracy : stats.val_accuracy;
        if (report.best_epoch < 0 || score > report.best_val_accuracy) {
            report.best_epoch = epoch;
            report.best_val_accuracy = score;
            result.best_state = state;
            epochs_since_best = 0;
            if (!checkpoint_dir.empty()) {
                std::filesystem::create_directories(checkpoint_dir);
                const auto path = checkpoint_dir / "checkpoint_best.bin";
                nlohmann::json meta = checkpoint_meta;
                meta["best_epoch"] = epoch;
                meta["val_accuracy"] = stats.val_accuracy;
                save_checkpoint(state, meta, path);
                report.best_checkpoint_path = path.string();
            }
        } else if (++epochs_since_best >= train_config.early_stop_patience) {
            break;
        }
    }

    result.best_state.training_mode = false;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification
// ---------------------------------------------------------------------------

struct GradCheckResult {
    double max_rel_error = 0;
    std::string worst_group;
    size_t checked = 0;
};

// Central differences against the analytic gradients on a (typically tiny)
// instance, in whatever precision S provides. A deterministic sample of
// indices per parameter group is checked; every group is covered.
template <typename S>
GradCheckResult gradient_check(ModelStateT<S>& state,
                               const std::vector<std::vector<float>>& batch_features,
                               const std::vector<int>& label_classes, double epsilon = 1e-4,
                               size_t indices_per_group = 64, uint64_t sample_seed = 42) {
    std::vector<std::span<const float>> batch;
    for (const auto& f : batch_features) batch.emplace_back(f);

    GradientsT<S> grads = GradientsT<S>::zeros_like(state);
    forward_backward(state, batch, label_classes, grads, false);

    auto loss_at = [&]() {
        double loss = 0;
        const double w = 1.0 / static_cast<double>(batch.size());
        for (size_t i = 0; i < batch.size(); ++i) {
            const auto probs = forward(state, batch[i], false);
            loss += -std::log(std::max(probs[label_classes[i]], 1e-12)) * w;
        }
        return loss;
    };

    GradCheckResult result;
    Rng rng(sample_seed);
    auto registry = param_registry(state);
    for (size_t gi = 0; gi < registry.size(); ++gi) {
        auto& values = *registry[gi].values;
        std::vector<size_t> idx;
        if (values.size() <= indices_per_group) {
            for (size_t i = 0; i < values.size(); ++i) idx.push_back(i);
        } else {
            idx.push_back(0);
            idx.push_back(values.size() - 1);
            while (idx.size() < indices_per_group)
                idx.push_back(static_cast<size_t>(rng.next_below(values.size())));
        }
        for (size_t i : idx) {
            const S saved = values[i];
            values[i] = saved + static_cast<S>(epsilon);
            const double up = loss_at();
            values[i] = saved - static_cast<S>(epsilon);
            const double down = loss_at();
            values[i] = saved;
            const double numeric = (up - down) / (2 * epsilon);
            const double analytic = static_cast<double>(grads.groups[gi][i]);
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            const double rel = std::abs(numeric - analytic) / denom;
            ++result.checked;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_group = registry[gi].name;
            }
        }
    }
    return result;
}

}  // namespace slipfuse
