#include "xmtc/model.hpp"

#include <cmath>
#include <random>
#include <unordered_map>

#include "xmtc/errors.hpp"

namespace xmtc {

AblationConfig ablation_preset(int id) {
    using L = ReadingLayer;
    switch (id) {
    case 0: return {false, {}};
    case 1: return {true, {}};
    case 2: return {true, {L::MaskedAttention, L::Residual}};
    case 3: return {true, {L::Attention, L::Residual}};
    case 4: return {true, {L::Attention, L::Residual, L::MaskedAttention}};
    case 5: return {true, {L::MaskedAttention, L::Attention}};
    case 6: return {true, {L::MaskedAttention, L::Residual, L::Attention}};
    default:
        throw ConfigError("ablation preset must be 0..6, got " + std::to_string(id));
    }
}

std::string ablation_teacher_string(int id) {
    return ablation_preset(id).use_teacher ? "True" : "-";
}

std::string ablation_components_string(int id) {
    const AblationConfig cfg = ablation_preset(id);
    if (cfg.stack.empty()) return "-";
    std::string out;
    for (ReadingLayer layer : cfg.stack) {
        if (!out.empty()) out += "+";
        switch (layer) {
        case ReadingLayer::MaskedAttention: out += "MMHSA"; break;
        case ReadingLayer::Residual: out += "R"; break;
        case ReadingLayer::Attention: out += "MHSA"; break;
        }
    }
    return out;
}

void validate_config(const ModelConfig& config) {
    if (config.d_model == 0 || config.heads == 0 || config.d_bottleneck == 0 ||
        config.label_count == 0 || config.max_text_len == 0 || config.max_teacher_rows == 0)
        throw ConfigError("model config: all dimensions must be positive");
    if (config.d_model % config.heads != 0)
        throw ConfigError("model config: d_model=" + std::to_string(config.d_model) +
                          " not divisible by heads=" + std::to_string(config.heads));
    ablation_preset(config.ablation);
}

std::vector<std::pair<std::string, Matrix*>> param_entries(ModelParams& params) {
    std::vector<std::pair<std::string, Matrix*>> out;
    const auto block = [&out](const std::string& prefix, AttentionBlockParams& b) {
        out.emplace_back(prefix + ".wq", &b.wq);
        out.emplace_back(prefix + ".wk", &b.wk);
        out.emplace_back(prefix + ".wv", &b.wv);
        out.emplace_back(prefix + ".w_mh", &b.w_mh);
    };
    block("teacher.mmhsa", params.teacher.mmhsa);
    block("teacher.mhsa", params.teacher.mhsa);
    block("text.mmhsa", params.text.mmhsa);
    block("text.mhsa", params.text.mhsa);
    block("fusion", params.fusion);
    out.emplace_back("w_hb", &params.w_hb);
    out.emplace_back("w_out", &params.w_out);
    return out;
}

std::vector<std::pair<std::string, const Matrix*>> param_entries(const ModelParams& params) {
    std::vector<std::pair<std::string, const Matrix*>> out;
    for (auto& [name, m] : param_entries(const_cast<ModelParams&>(params)))
        out.emplace_back(name, m);
    return out;
}

namespace {

// Uniform draw in [lo, hi) from the raw 64-bit stream; mt19937_64 output is
// fully specified, so fills are reproducible across platforms.
double uniform_from(std::mt19937_64& rng, double lo, double hi) {
    const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + unit * (hi - lo);
}

} // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    validate_config(config);
    const std::size_t d = config.d_model;
    ModelParams p;
    const auto block = [&](AttentionBlockParams& b) {
        b.wq = Matrix(d, d);
        b.wk = Matrix(d, d);
        b.wv = Matrix(d, d);
        b.w_mh = Matrix(d, d);
    };
    block(p.teacher.mmhsa);
    block(p.teacher.mhsa);
    block(p.text.mmhsa);
    block(p.text.mhsa);
    block(p.fusion);
    p.w_hb = Matrix(d, config.d_bottleneck);
    p.w_out = Matrix(config.d_bottleneck, config.label_count);

    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& [name, m] : param_entries(p))
        for (std::size_t i = 0; i < m->size(); ++i)
            m->data()[i] = uniform_from(rng, -bound, bound);
    return p;
}

ModelParams zeros_like(const ModelParams& params) {
    ModelParams out = params;
    for (auto& [name, m] : param_entries(out)) m->fill(0.0);
    return out;
}

// --- taped building blocks ---------------------------------------------------

namespace {

struct Binder {
    Tape& tape;
    std::vector<ParamBinding>* bindings;

    Tape::Id bind(const std::string& name, const Matrix& m) {
        const Tape::Id id = tape.leaf(m);
        if (bindings) bindings->push_back({name, id});
        return id;
    }
};

Tape::Id attention_block_tape(Tape& tape, Tape::Id input, const AttentionBlockParams& p,
                              std::size_t heads, bool masked, Binder& binder,
                              const std::string& prefix) {
    const std::size_t d_model = tape.value(input).cols();
    if (p.wq.rows() != d_model)
        throw ShapeError("attention block: input cols " + std::to_string(d_model) +
                         " vs wq rows " + std::to_string(p.wq.rows()));
    if (d_model % heads != 0)
        throw ShapeError("attention block: d_model " + std::to_string(d_model) +
                         " not divisible by " + std::to_string(heads) + " heads");
    const std::size_t dk = d_model / heads;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

    const Tape::Id wq = binder.bind(prefix + ".wq", p.wq);
    const Tape::Id wk = binder.bind(prefix + ".wk", p.wk);
    const Tape::Id wv = binder.bind(prefix + ".wv", p.wv);
    const Tape::Id wmh = binder.bind(prefix + ".w_mh", p.w_mh);

    const Tape::Id q = tape.matmul(input, wq);
    const Tape::Id k = tape.matmul(input, wk);
    const Tape::Id v = tape.matmul(input, wv);

    std::vector<Tape::Id> head_outputs;
    head_outputs.reserve(heads);
    for (std::size_t i = 0; i < heads; ++i) {
        const Tape::Id qi = tape.slice_cols(q, i * dk, dk);
        const Tape::Id ki = tape.slice_cols(k, i * dk, dk);
        const Tape::Id vi = tape.slice_cols(v, i * dk, dk);
        Tape::Id score = tape.scale(tape.matmul(qi, tape.transpose(ki)), inv_sqrt_dk);
        if (masked) score = tape.causal_mask(score);
        head_outputs.push_back(tape.matmul(tape.row_softmax(score), vi));
    }
    const Tape::Id merged = tape.matmul(tape.concat_cols(std::move(head_outputs)), wmh);
    return tape.tanh_map(merged);
}

Tape::Id reading_forward_tape(Tape& tape, Tape::Id input, const BranchParams& branch,
                              const std::vector<ReadingLayer>& stack, std::size_t heads,
                              Binder& binder, const std::string& prefix) {
    Tape::Id cur = input;
    std::optional<Tape::Id> prev_attention_input;
    for (ReadingLayer layer : stack) {
        switch (layer) {
        case ReadingLayer::MaskedAttention:
            prev_attention_input = cur;
            cur = attention_block_tape(tape, cur, branch.mmhsa, heads, true, binder,
                                       prefix + ".mmhsa");
            break;
        case ReadingLayer::Attention:
            prev_attention_input = cur;
            cur = attention_block_tape(tape, cur, branch.mhsa, heads, false, binder,
                                       prefix + ".mhsa");
            break;
        case ReadingLayer::Residual:
            if (!prev_attention_input)
                throw ConfigError("reading stack: residual with no preceding attention");
            cur = tape.add(*prev_attention_input, cur);
            break;
        }
    }
    return cur;
}

Tape::Id interaction_tape(Tape& tape, std::optional<Tape::Id> teacher_out, Tape::Id text_out,
                          const ModelParams& params, const ModelConfig& config,
                          Binder& binder) {
    Tape::Id sequence = teacher_out ? tape.concat_rows({*teacher_out, text_out}) : text_out;
    if (config.fusion_attention)
        sequence = attention_block_tape(tape, sequence, params.fusion, config.heads, true,
                                        binder, "fusion");
    const Tape::Id pooled = tape.mean_rows(sequence);
    const Tape::Id w_hb = binder.bind("w_hb", params.w_hb);
    return tape.matmul(pooled, w_hb);
}

} // namespace

// --- plain forward wrappers ---------------------------------------------------

Matrix attention_block(const Matrix& input, const AttentionBlockParams& params,
                       std::size_t heads, bool masked) {
    Tape tape;
    Binder binder{tape, nullptr};
    const Tape::Id out =
        attention_block_tape(tape, tape.leaf(input), params, heads, masked, binder, "block");
    return tape.value(out);
}

Matrix reading_forward(const Matrix& input, const BranchParams& branch,
                       const std::vector<ReadingLayer>& stack, std::size_t heads) {
    Tape tape;
    Binder binder{tape, nullptr};
    const Tape::Id out =
        reading_forward_tape(tape, tape.leaf(input), branch, stack, heads, binder, "branch");
    return tape.value(out);
}

Matrix interaction_forward(const std::optional<Matrix>& teacher_out, const Matrix& text_out,
                           const ModelParams& params, const ModelConfig& config) {
    Tape tape;
    Binder binder{tape, nullptr};
    std::optional<Tape::Id> teacher_id;
    if (teacher_out && teacher_out->rows() > 0) teacher_id = tape.leaf(*teacher_out);
    const Tape::Id out =
        interaction_tape(tape, teacher_id, tape.leaf(text_out), params, config, binder);
    return tape.value(out);
}

Matrix predict_scores(const Matrix& fused, const Matrix& w_out) {
    return matmul(fused, w_out);
}

Matrix softmax_view(const Matrix& logits) {
    return row_softmax(logits);
}

// --- full model ---------------------------------------------------------------

void ForwardPass::accumulate_param_grads(ModelParams& grads) const {
    std::unordered_map<std::string, Matrix*> slots;
    for (auto& [name, m] : param_entries(grads)) slots.emplace(name, m);
    for (const ParamBinding& binding : bindings) {
        auto it = slots.find(binding.name);
        if (it == slots.end())
            throw ConfigError("gradient collection: unknown parameter " + binding.name);
        it->second->add_in_place(tape.grad(binding.id));
    }
}

Matrix teacher_input_rows(const TeacherKnowledge* teacher, const ModelConfig& config) {
    if (teacher == nullptr || teacher->empty || teacher->encoding.rows() == 0)
        return Matrix(1, config.d_model); // zero row stands in for an empty teacher
    const Matrix& enc = teacher->encoding;
    if (enc.cols() != config.d_model)
        throw ShapeError("teacher encoding dim " + std::to_string(enc.cols()) +
                         " vs d_model " + std::to_string(config.d_model));
    if (enc.rows() <= config.max_teacher_rows) return enc;
    Matrix out(config.max_teacher_rows, enc.cols());
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) = enc.at(i, j);
    return out;
}

ForwardPass model_forward_embedded(const Matrix& text_rows, const Matrix& teacher_rows,
                                   const ModelParams& params, const ModelConfig& config) {
    validate_config(config);
    if (text_rows.rows() == 0) throw ValidationError("model forward: empty text input");
    if (text_rows.cols() != config.d_model)
        throw ShapeError("text rows dim " + std::to_string(text_rows.cols()) +
                         " vs d_model " + std::to_string(config.d_model));

    const AblationConfig ablation = ablation_preset(config.ablation);
    ForwardPass pass;
    Binder binder{pass.tape, &pass.bindings};

    const Tape::Id text_in = pass.tape.leaf(text_rows);
    const Tape::Id text_out = reading_forward_tape(pass.tape, text_in, params.text,
                                                   ablation.stack, config.heads, binder,
                                                   "text");

    std::optional<Tape::Id> teacher_out;
    if (ablation.use_teacher) {
        const Tape::Id teacher_in = pass.tape.leaf(teacher_rows);
        teacher_out = reading_forward_tape(pass.tape, teacher_in, params.teacher,
                                           ablation.stack, config.heads, binder, "teacher");
    }

    const Tape::Id fused =
        interaction_tape(pass.tape, teacher_out, text_out, params, config, binder);
    const Tape::Id w_out = binder.bind("w_out", params.w_out);
    pass.logits = pass.tape.matmul(fused, w_out);
    return pass;
}

ForwardPass model_forward(const std::vector<int>& tokens, const EmbeddingTable& table,
                          const TeacherKnowledge* teacher, const ModelParams& params,
                          const ModelConfig& config) {
    std::vector<int> clipped = tokens;
    if (clipped.size() > config.max_text_len) clipped.resize(config.max_text_len);
    const Matrix text_rows = encode_tokens(clipped, table);
    const bool use_teacher = ablation_preset(config.ablation).use_teacher;
    const Matrix teacher_rows =
        use_teacher ? teacher_input_rows(teacher, config) : Matrix(0, config.d_model);
    return model_forward_embedded(text_rows, teacher_rows, params, config);
}

} // namespace xmtc
