#pragma once

#include <optional>
#include <string>

#include "xmtc/corpus.hpp"
#include "xmtc/vocab.hpp"

namespace xmtc {

// A fully validated dataset in its normalized on-disk form (the output of
// `ingest`). File layouts are documented in docs/formats.md.
struct Dataset {
    Vocabulary vocab;
    EmbeddingTable table;
    Corpus train;
    std::optional<Corpus> validation;
    Corpus test;
    LabelTree tree;
    int label_count = 0;
    int max_tokens = 0;
    int desc_tokens = 0;
};

void save_dataset(const std::string& dir, const Dataset& dataset);
Dataset load_dataset(const std::string& dir);

} // namespace xmtc
