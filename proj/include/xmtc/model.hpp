#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xmtc/matrix.hpp"
#include "xmtc/tape.hpp"
#include "xmtc/teacher.hpp"
#include "xmtc/vocab.hpp"

namespace xmtc {

enum class ReadingLayer { MaskedAttention, Residual, Attention };

// One row of the ablation table: whether the guidance branch is wired in and
// which reading layers run (in order, shared by both branches).
struct AblationConfig {
    bool use_teacher = true;
    std::vector<ReadingLayer> stack;
};

// Presets 0..6. 6 = masked attention, residual, plain attention on both
// branches; 0 = no teacher and no reading layers.
AblationConfig ablation_preset(int id);
std::string ablation_teacher_string(int id);    // "-" or "True"
std::string ablation_components_string(int id); // "-", "MMHSA+R", ...

inline constexpr int kAblationPresetCount = 7;

struct ModelConfig {
    std::size_t d_model = 400;
    std::size_t heads = 4;
    std::size_t d_bottleneck = 200;
    std::size_t label_count = 0;
    std::size_t max_text_len = 500;
    std::size_t max_teacher_rows = 64;
    int ablation = 6;
    bool fusion_attention = true; // masked fusion attention before the bottleneck
    std::uint64_t seed = 42;

    std::size_t head_dim() const { return d_model / heads; }
    bool operator==(const ModelConfig&) const = default;
};

// Throws ConfigError on any violated constraint (d_model % heads != 0, ...).
void validate_config(const ModelConfig& config);

// Shared projection matrices of one multi-head block, logically split into
// `heads` column blocks of head_dim.
struct AttentionBlockParams {
    Matrix wq, wk, wv;  // d_model x d_model
    Matrix w_mh;        // d_model x d_model
};

struct BranchParams {
    AttentionBlockParams mmhsa;
    AttentionBlockParams mhsa;
};

// The two branches hold distinct weights; fusion has its own block.
struct ModelParams {
    BranchParams teacher;
    BranchParams text;
    AttentionBlockParams fusion;
    Matrix w_hb;   // d_model x d_bottleneck
    Matrix w_out;  // d_bottleneck x label_count
};

// Fixed-order (name, matrix) view over every parameter block; the one
// ordering used by the optimizer, checkpoints and gradient collection.
std::vector<std::pair<std::string, Matrix*>> param_entries(ModelParams& params);
std::vector<std::pair<std::string, const Matrix*>> param_entries(const ModelParams& params);

// Every matrix i.i.d. uniform on [-1/sqrt(d_model), +1/sqrt(d_model)] from a
// seeded generator; same seed gives bit-identical parameters.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& params);

// --- forward passes ---------------------------------------------------------

// Per head: Score = Q K^T / sqrt(d_k), optional causal mask, softmax times V;
// heads concatenated, merged through w_mh, tanh.
Matrix attention_block(const Matrix& input, const AttentionBlockParams& params,
                       std::size_t heads, bool masked);

// Composes the stack in order; Residual adds the input of the immediately
// preceding attention block. Empty stack passes the input through.
Matrix reading_forward(const Matrix& input, const BranchParams& branch,
                       const std::vector<ReadingLayer>& stack, std::size_t heads);

// Row-concatenates teacher rows (first) with text rows, runs the masked
// fusion block when enabled, mean-pools over positions and projects through
// w_hb to 1 x d_bottleneck.
Matrix interaction_forward(const std::optional<Matrix>& teacher_out, const Matrix& text_out,
                           const ModelParams& params, const ModelConfig& config);

Matrix predict_scores(const Matrix& fused, const Matrix& w_out);

// Softmax over logits, for reporting only; training consumes raw logits.
Matrix softmax_view(const Matrix& logits);

// --- taped forward (training path) ------------------------------------------

struct ParamBinding {
    std::string name;
    Tape::Id id;
};

// One complete forward pass recorded on a tape. `bindings` maps every
// parameter matrix that participated to its tape leaf, so gradients can be
// collected after backward(); parameters outside the active ablation never
// get a binding and keep an exactly-zero gradient.
struct ForwardPass {
    Tape tape;
    Tape::Id logits = 0; // 1 x label_count
    std::vector<ParamBinding> bindings;

    // Adds d(output)/d(param) into `grads` for every bound parameter.
    // Call after tape.backward().
    void accumulate_param_grads(ModelParams& grads) const;
};

// Teacher branch input for one example: the cached encoding truncated to
// max_teacher_rows, or a single zero row when the cache row is empty.
Matrix teacher_input_rows(const TeacherKnowledge* teacher, const ModelConfig& config);

ForwardPass model_forward(const std::vector<int>& tokens, const EmbeddingTable& table,
                          const TeacherKnowledge* teacher, const ModelParams& params,
                          const ModelConfig& config);

// Same pass over pre-encoded inputs (len x d_model text rows).
ForwardPass model_forward_embedded(const Matrix& text_rows, const Matrix& teacher_rows,
                                   const ModelParams& params, const ModelConfig& config);

} // namespace xmtc
