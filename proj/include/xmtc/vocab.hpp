#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "xmtc/matrix.hpp"

namespace xmtc {

// Dense word ids 0..V-1; the reserved unknown token is the last id and is
// present in the map, so text serialized through id_to_word reloads to the
// same ids.
struct Vocabulary {
    std::unordered_map<std::string, int> word_to_id;
    std::vector<std::string> id_to_word;
    int unknown_id = -1;

    int size() const { return static_cast<int>(id_to_word.size()); }

    // Lowercased lookup result or the unknown id.
    int lookup(const std::string& word) const {
        auto it = word_to_id.find(word);
        return it == word_to_id.end() ? unknown_id : it->second;
    }
};

// One row per vocabulary id. Row count equals vocabulary size, no NaN/Inf.
struct EmbeddingTable {
    Matrix rows; // V x d_model

    std::size_t dim() const { return rows.cols(); }
};

inline const std::string kUnknownToken = "<unk>";

// Word2vec text format: optional `V d` header, then `word v_1 ... v_d` per
// line. Words are lowercased; a duplicate word after lowercasing is an
// error. Appends the reserved unknown token with an all-zero row.
std::pair<Vocabulary, EmbeddingTable> load_embeddings(const std::string& path);

// Whitespace split + lowercasing. No stemming.
std::vector<std::string> tokenize(const std::string& text);

// Row t is the embedding row for tokens[t]. Empty input or an out-of-range
// id is an error.
Matrix encode_tokens(const std::vector<int>& tokens, const EmbeddingTable& table);

} // namespace xmtc
