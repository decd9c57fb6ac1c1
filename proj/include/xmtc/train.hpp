#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "xmtc/corpus.hpp"
#include "xmtc/model.hpp"

namespace xmtc {

// One-vs-all logistic loss over raw logits, summed over labels, with the
// numerically stable softplus rearrangement (safe for |logit| up to ~700).
struct LossResult {
    double value = 0.0;
    Matrix logit_grad; // 1 x L, sigmoid(Y) - y
};
LossResult ova_loss(const Matrix& logits, const std::vector<int>& positive_labels);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment accumulators mirror param_entries order and shapes.
struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    long long step = 0;
};

AdamState init_adam_state(const ModelParams& params);

// Bias-corrected update; `lr` is passed per call so the decay schedule can
// move it between epochs.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const AdamConfig& config, double lr);

struct TrainConfig {
    int epochs = 200;
    int batch_size = 32;
    double lr = 1e-4;
    double decay_factor = 0.5;        // applied after `patience` stale epochs
    double improve_rel_threshold = 1e-3;
    int patience = 3;
    std::uint64_t seed = 42;
    bool shuffle = true;
    bool mean_reduction = false;      // default: sum over the batch
    int threads = 1;
    AdamConfig adam;
};

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double lr = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    ModelParams params;
    AdamState adam;
    std::vector<EpochStats> log;
};

using EpochCallback = std::function<void(const EpochStats&, const ModelParams&,
                                         const AdamState&)>;

// Seeded-shuffle minibatch loop: forward, loss, backward, Adam per batch.
// Gradients reduce over the batch in example order, so results do not
// depend on the thread count. `teacher` may be empty when the ablation has
// no teacher branch; otherwise it must cover every example.
TrainResult train_model(const Corpus& corpus, const std::vector<TeacherKnowledge>& teacher,
                        const EmbeddingTable& table, const ModelConfig& model_config,
                        const TrainConfig& train_config,
                        const EpochCallback& on_epoch = nullptr);

// Batch loss + summed gradients, no optimizer step. Exposed for the wiring
// checks and the gradient suite.
double batch_forward_backward(const Corpus& corpus, const std::vector<std::size_t>& batch,
                              const std::vector<TeacherKnowledge>& teacher,
                              const EmbeddingTable& table, const ModelParams& params,
                              const ModelConfig& model_config, bool mean_reduction,
                              int threads, ModelParams& grads);

// --- checkpoints -------------------------------------------------------------
// Layout: magic, format version, JSON header (model config, seed, step,
// current lr), then named matrix dumps for parameters and both Adam moment
// sets. load(save(x)) is bit-exact.

struct Checkpoint {
    ModelParams params;
    AdamState adam;
    ModelConfig config;
    std::uint64_t seed = 0;
    long long step = 0;
    double lr = 0.0;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);

// With `expected`, a stored config that differs is a ConfigError.
Checkpoint load_checkpoint(const std::string& path,
                           const std::optional<ModelConfig>& expected = std::nullopt);

} // namespace xmtc
