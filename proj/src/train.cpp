#include "xmtc/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "xmtc/errors.hpp"

namespace xmtc {

namespace {

double softplus(double z) {
    // log(1 + e^z) without overflow
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

} // namespace

LossResult ova_loss(const Matrix& logits, const std::vector<int>& positive_labels) {
    if (logits.rows() != 1) throw ShapeError("ova_loss: logits must be 1 x L");
    if (!logits.all_finite()) throw NumericError("ova_loss: non-finite logit");
    const std::size_t L = logits.cols();
    std::vector<char> positive(L, 0);
    for (int label : positive_labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= L)
            throw ValidationError("ova_loss: label " + std::to_string(label) +
                                  " outside [0, " + std::to_string(L) + ")");
        positive[static_cast<std::size_t>(label)] = 1;
    }
    LossResult result;
    result.logit_grad = Matrix(1, L);
    for (std::size_t j = 0; j < L; ++j) {
        const double y = logits.at(0, j);
        const double target = positive[j] ? 1.0 : 0.0;
        result.value += positive[j] ? softplus(-y) : softplus(y);
        result.logit_grad.at(0, j) = sigmoid(y) - target;
    }
    return result;
}

AdamState init_adam_state(const ModelParams& params) {
    AdamState state;
    for (auto& [name, m] : param_entries(params)) {
        state.m.emplace_back(m->rows(), m->cols());
        state.v.emplace_back(m->rows(), m->cols());
    }
    return state;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const AdamConfig& config, double lr) {
    auto p_entries = param_entries(params);
    auto g_entries = param_entries(grads);
    if (p_entries.size() != state.m.size())
        throw ShapeError("adam_step: state does not mirror parameters");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));

    for (std::size_t b = 0; b < p_entries.size(); ++b) {
        Matrix& p = *p_entries[b].second;
        const Matrix& g = *g_entries[b].second;
        Matrix& m = state.m[b];
        Matrix& v = state.v[b];
        if (!p.same_shape(g) || !p.same_shape(m))
            throw ShapeError("adam_step: shape mismatch in block " + p_entries[b].first);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g.data()[i];
            m.data()[i] = config.beta1 * m.data()[i] + (1.0 - config.beta1) * gi;
            v.data()[i] = config.beta2 * v.data()[i] + (1.0 - config.beta2) * gi * gi;
            const double mhat = m.data()[i] / bc1;
            const double vhat = v.data()[i] / bc2;
            p.data()[i] -= lr * mhat / (std::sqrt(vhat) + config.eps);
        }
    }
}

double batch_forward_backward(const Corpus& corpus, const std::vector<std::size_t>& batch,
                              const std::vector<TeacherKnowledge>& teacher,
                              const EmbeddingTable& table, const ModelParams& params,
                              const ModelConfig& model_config, bool mean_reduction,
                              int threads, ModelParams& grads) {
    const bool use_teacher = ablation_preset(model_config.ablation).use_teacher;
    const double weight = mean_reduction ? 1.0 / static_cast<double>(batch.size()) : 1.0;
    if (use_teacher) {
        for (std::size_t index : batch)
            if (index >= teacher.size())
                throw ConfigError("train: teacher cache does not cover example " +
                                  std::to_string(corpus.examples[index].id));
    }

    std::vector<ModelParams> example_grads(batch.size());
    std::vector<double> example_loss(batch.size(), 0.0);

    const auto worker = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Example& ex = corpus.examples[batch[i]];
            const TeacherKnowledge* tk = use_teacher ? &teacher[batch[i]] : nullptr;
            ForwardPass pass = model_forward(ex.tokens, table, tk, params, model_config);
            LossResult loss = ova_loss(pass.tape.value(pass.logits), ex.labels);
            example_loss[i] = loss.value * weight;
            loss.logit_grad.scale_in_place(weight);
            pass.tape.backward(pass.logits, loss.logit_grad);
            example_grads[i] = zeros_like(params);
            pass.accumulate_param_grads(example_grads[i]);
        }
    };

    const std::size_t n = batch.size();
    const std::size_t nthreads =
        std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(n, 1));
    if (nthreads <= 1) {
        worker(0, n);
    } else {
        std::vector<std::thread> pool_threads;
        const std::size_t chunk = (n + nthreads - 1) / nthreads;
        for (std::size_t t = 0; t < nthreads; ++t) {
            const std::size_t begin = t * chunk;
            const std::size_t end = std::min(begin + chunk, n);
            if (begin >= end) break;
            pool_threads.emplace_back(worker, begin, end);
        }
        for (std::thread& w : pool_threads) w.join();
    }

    // Fixed-order reduction keeps the result independent of scheduling.
    double total = 0.0;
    auto g_entries = param_entries(grads);
    for (std::size_t i = 0; i < n; ++i) {
        total += example_loss[i];
        auto e_entries = param_entries(example_grads[i]);
        for (std::size_t b = 0; b < g_entries.size(); ++b)
            g_entries[b].second->add_in_place(*e_entries[b].second);
    }
    return total;
}

namespace {

// Fisher-Yates over the fully specified mt19937_64 stream; identical
// permutations on every platform.
void deterministic_shuffle(std::vector<std::size_t>& order, std::mt19937_64& rng) {
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
}

} // namespace

TrainResult train_model(const Corpus& corpus, const std::vector<TeacherKnowledge>& teacher,
                        const EmbeddingTable& table, const ModelConfig& model_config,
                        const TrainConfig& train_config, const EpochCallback& on_epoch) {
    validate_config(model_config);
    if (corpus.size() == 0) throw ConfigError("train: empty corpus");
    if (train_config.epochs <= 0 || train_config.batch_size <= 0)
        throw ConfigError("train: epochs and batch size must be positive");
    if (train_config.decay_factor <= 0.0 || train_config.decay_factor > 1.0)
        throw ConfigError("train: decay factor must be in (0, 1]");
    const bool use_teacher = ablation_preset(model_config.ablation).use_teacher;
    if (use_teacher && teacher.size() < corpus.size())
        throw ConfigError("train: teacher cache covers " + std::to_string(teacher.size()) +
                          " of " + std::to_string(corpus.size()) + " examples");

    TrainResult result;
    result.params = init_params(model_config, model_config.seed);
    result.adam = init_adam_state(result.params);

    std::mt19937_64 shuffle_rng(train_config.seed);
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    double lr = train_config.lr;
    double best_mean_loss = std::numeric_limits<double>::infinity();
    int stale_epochs = 0;

    for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        if (train_config.shuffle) deterministic_shuffle(order, shuffle_rng);

        double epoch_loss = 0.0;
        const std::size_t bs = static_cast<std::size_t>(train_config.batch_size);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(start + bs, order.size());
            const std::vector<std::size_t> batch(order.begin() + start, order.begin() + end);
            ModelParams grads = zeros_like(result.params);
            const double batch_loss = batch_forward_backward(
                corpus, batch, teacher, table, result.params, model_config,
                train_config.mean_reduction, train_config.threads, grads);
            if (!std::isfinite(batch_loss))
                throw NumericError("train: non-finite loss in epoch " +
                                   std::to_string(epoch) + ", batch starting at index " +
                                   std::to_string(start));
            const double unweighted =
                train_config.mean_reduction
                    ? batch_loss * static_cast<double>(batch.size())
                    : batch_loss;
            epoch_loss += unweighted;
            adam_step(result.params, grads, result.adam, train_config.adam, lr);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = epoch_loss / static_cast<double>(corpus.size());
        stats.lr = lr;
        stats.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(stats);
        if (on_epoch) on_epoch(stats, result.params, result.adam);

        // Attenuate once the mean loss stops improving by the relative margin.
        if (stats.mean_loss < best_mean_loss * (1.0 - train_config.improve_rel_threshold)) {
            best_mean_loss = stats.mean_loss;
            stale_epochs = 0;
        } else {
            if (++stale_epochs >= train_config.patience) {
                lr *= train_config.decay_factor;
                stale_epochs = 0;
            }
        }
    }
    return result;
}

// --- checkpoint io -------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'X', 'M', 'T', 'C', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) throw ParseError("checkpoint: truncated " + what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
}

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& in, const std::string& what) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw ParseError("checkpoint: truncated " + what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_named_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_matrix(out, m);
}

Matrix read_named_matrix(std::istream& in, const std::string& expected_name) {
    const std::uint64_t len = read_u64(in, "matrix name length");
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    if (!in) throw ParseError("checkpoint: truncated matrix name");
    if (name != expected_name)
        throw ParseError("checkpoint: expected block `" + expected_name + "`, found `" +
                         name + "`");
    return read_matrix(in);
}

nlohmann::json config_to_json(const ModelConfig& c) {
    return nlohmann::json{{"d_model", c.d_model},
                          {"heads", c.heads},
                          {"d_bottleneck", c.d_bottleneck},
                          {"label_count", c.label_count},
                          {"max_text_len", c.max_text_len},
                          {"max_teacher_rows", c.max_teacher_rows},
                          {"ablation", c.ablation},
                          {"fusion_attention", c.fusion_attention},
                          {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.d_model = j.at("d_model").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.d_bottleneck = j.at("d_bottleneck").get<std::size_t>();
    c.label_count = j.at("label_count").get<std::size_t>();
    c.max_text_len = j.at("max_text_len").get<std::size_t>();
    c.max_teacher_rows = j.at("max_teacher_rows").get<std::size_t>();
    c.ablation = j.at("ablation").get<int>();
    c.fusion_attention = j.at("fusion_attention").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

} // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_u32(out, kCheckpointVersion);

    nlohmann::json header = {{"config", config_to_json(checkpoint.config)},
                             {"seed", checkpoint.seed},
                             {"step", checkpoint.step},
                             {"lr", checkpoint.lr}};
    const std::string header_text = header.dump();
    write_u64(out, header_text.size());
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

    const auto entries = param_entries(checkpoint.params);
    write_u64(out, entries.size());
    for (auto& [name, m] : entries) write_named_matrix(out, name, *m);
    for (std::size_t b = 0; b < entries.size(); ++b)
        write_named_matrix(out, "adam.m." + entries[b].first, checkpoint.adam.m[b]);
    for (std::size_t b = 0; b < entries.size(); ++b)
        write_named_matrix(out, "adam.v." + entries[b].first, checkpoint.adam.v[b]);
    if (!out) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path,
                           const std::optional<ModelConfig>& expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw ParseError(path + ": not a checkpoint file");
    const std::uint32_t version = read_u32(in, "version");
    if (version != kCheckpointVersion)
        throw ParseError(path + ": checkpoint format version " + std::to_string(version) +
                         ", expected " + std::to_string(kCheckpointVersion));

    const std::uint64_t header_len = read_u64(in, "header length");
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw ParseError(path + ": truncated header");

    Checkpoint checkpoint;
    try {
        const nlohmann::json header = nlohmann::json::parse(header_text);
        checkpoint.config = config_from_json(header.at("config"));
        checkpoint.seed = header.at("seed").get<std::uint64_t>();
        checkpoint.step = header.at("step").get<long long>();
        checkpoint.lr = header.at("lr").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": bad checkpoint header: " + e.what());
    }
    if (expected && !(checkpoint.config == *expected))
        throw ConfigError(path + ": checkpoint config does not match the requested config");

    checkpoint.params = init_params(checkpoint.config, 0); // shapes only; overwritten below
    const auto entries = param_entries(checkpoint.params);
    const std::uint64_t block_count = read_u64(in, "block count");
    if (block_count != entries.size())
        throw ParseError(path + ": has " + std::to_string(block_count) +
                         " parameter blocks, expected " + std::to_string(entries.size()));
    for (auto& [name, m] : entries) *m = read_named_matrix(in, name);
    checkpoint.adam = init_adam_state(checkpoint.params);
    for (std::size_t b = 0; b < entries.size(); ++b)
        checkpoint.adam.m[b] = read_named_matrix(in, "adam.m." + entries[b].first);
    for (std::size_t b = 0; b < entries.size(); ++b)
        checkpoint.adam.v[b] = read_named_matrix(in, "adam.v." + entries[b].first);
    checkpoint.adam.step = checkpoint.step;
    return checkpoint;
}

} // namespace xmtc
