#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "xmtc/corpus.hpp"
#include "xmtc/matrix.hpp"

namespace xmtc {

// Mean token embedding of one example.
struct TextVector {
    std::vector<double> values;
};

struct NeighborResult {
    long long query_id = -1;
    std::vector<long long> neighbor_ids; // scores non-increasing, ties by lower id
    std::vector<double> scores;          // in [-1, 1]
};

// Per-example guidance input: the hierarchy-augmented label subset of the
// example's nearest neighbors, plus one mean description embedding per
// label that has a non-empty description.
struct TeacherKnowledge {
    long long example_id = 0;
    std::vector<int> label_set;  // ascending, duplicate-free
    Matrix encoding;             // K x d_model, K = labels with non-empty descriptions
    bool empty = false;          // K == 0; callers substitute one zero row
};

enum class TeacherPooling {
    PerLabel, // one encoding row per non-empty description (default)
    Global,   // all description rows averaged into a single row
};

struct TeacherConfig {
    int k = 5;
    bool exclude_self = true;
    bool include_roots = false; // also admit labels whose parent is absent
    TeacherPooling pooling = TeacherPooling::PerLabel;
};

TextVector vectorize_text(const Example& example, const EmbeddingTable& table);

// a.b / (|a| |b|); a zero-norm operand scores 0 (degenerate text).
double cosine_score(const TextVector& a, const TextVector& b);

// Exhaustive scan; the k pool entries with highest cosine score, ties broken
// by lower example id. exclude_self skips pool entries whose id equals
// query_id.
NeighborResult nearest_neighbors(const TextVector& query, long long query_id,
                                 const std::vector<std::pair<long long, TextVector>>& pool,
                                 int k, bool exclude_self);

// For each label set in the neighbor union whose parent exists, admits the
// label and its parent; ascending order, duplicate-free. With include_roots,
// parentless labels are admitted alone.
std::vector<int> build_teacher_label_set(const std::vector<int>& neighbor_label_union,
                                         const LabelTree& tree, bool include_roots = false);

// Row k is the mean token embedding of the k-th non-empty description among
// label_set (order preserved). K = 0 comes back as an empty 0 x d matrix.
Matrix encode_teacher_knowledge(const std::vector<int>& label_set, const LabelTree& tree,
                                const EmbeddingTable& table);

struct TeacherBuildStats {
    std::size_t example_count = 0;
    std::size_t empty_teacher_count = 0;
    std::size_t zero_norm_vector_count = 0;
    double mean_label_set_size = 0.0;
};

// One TeacherKnowledge per corpus example. The pool is the concatenation of
// `pool_corpora`; `query_pool_index`, when set, marks which pool corpus the
// queries come from so self-exclusion can identify them. Deterministic and
// thread-count independent: per-example results merge in example order.
std::vector<TeacherKnowledge> build_all_teacher_knowledge(
    const Corpus& corpus, const std::vector<const Corpus*>& pool_corpora,
    std::optional<std::size_t> query_pool_index, const LabelTree& tree,
    const EmbeddingTable& table, const TeacherConfig& config, int threads = 1,
    TeacherBuildStats* stats = nullptr);

// Cache layout: `<stem>.tsv` holds `example_id<TAB>comma-separated label_set`
// per record; `<stem>.bin` holds the encodings as (u64 id, u8 empty flag,
// matrix dump) records behind a magic/count header. See docs/formats.md.
void save_teacher_cache(const std::string& stem, const std::vector<TeacherKnowledge>& cache);
std::vector<TeacherKnowledge> load_teacher_cache(const std::string& stem);

} // namespace xmtc
