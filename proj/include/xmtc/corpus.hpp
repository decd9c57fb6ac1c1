#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "xmtc/vocab.hpp"

namespace xmtc {

struct Example {
    long long id = 0;                 // line order in the source file
    std::vector<int> tokens;          // vocabulary ids, length <= max_tokens
    std::vector<int> labels;          // sorted, duplicate-free, < L
};

struct Corpus {
    std::vector<Example> examples;
    int label_count = 0;              // L
    std::string split;                // "train" / "validation" / "test"

    std::size_t size() const { return examples.size(); }
    double mean_labels_per_example() const;
};

// Parent map over label ids plus per-label description token sequences.
// parent[l] < 0 means no parent (root). The parent relation is acyclic.
struct LabelTree {
    std::vector<int> parent;                        // size L, -1 = none
    std::vector<std::vector<int>> descriptions;     // size L, each <= desc limit

    int label_count() const { return static_cast<int>(parent.size()); }
    bool has_parent(int label) const { return parent[static_cast<std::size_t>(label)] >= 0; }
};

// One example per line: `comma-separated label ids<TAB>whitespace text`.
// Out-of-vocabulary words map to the unknown token; tokens are then cut to
// the first max_tokens. An empty label field means no labels.
Corpus load_text_corpus(const std::string& path, const Vocabulary& vocab,
                        int max_tokens, int label_count, const std::string& split);

// `parent_id<TAB>child_id` per line, `#` comments allowed. Labels never
// appearing as a child have no parent.
std::vector<int> load_label_hierarchy(const std::string& path, int label_count);

// `label_id<TAB>description text` per line; tokens cut to max_tokens;
// labels absent from the file get an empty sequence.
std::vector<std::vector<int>> load_label_descriptions(const std::string& path,
                                                      const Vocabulary& vocab,
                                                      int max_tokens, int label_count);

// Canonical text form of a loaded corpus; reloading it with the same
// vocabulary and limits reproduces the corpus field by field.
void write_text_corpus(std::ostream& out, const Corpus& corpus, const Vocabulary& vocab);

} // namespace xmtc
