#pragma once

#include <cstdint>
#include <string>

namespace xmtc {

// Deterministic toy dataset: a two-level hierarchy whose child labels own
// signature words that dominate their documents, so a model able to use the
// neighbor-derived guidance can memorize the training split.
struct SynthConfig {
    int train_docs = 100;
    int test_docs = 20;
    int vocab_size = 50;
    int embedding_dim = 16;
    int label_count = 20;
    int parent_count = 5;
    int desc_tokens = 4;
    int min_labels = 1;
    int max_labels = 3;
    std::uint64_t seed = 1;
};

// Writes train.txt, test.txt, hierarchy.txt, descriptions.txt and
// embeddings.txt (word2vec text format) into `dir`.
void write_synthetic_dataset(const std::string& dir, const SynthConfig& config);

} // namespace xmtc
