#include "xmtc/vocab.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "xmtc/errors.hpp"

namespace xmtc {

namespace {

std::string lowercase(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

bool parse_double(const std::string& s, double& out) {
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

bool is_integer_token(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    return true;
}

} // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream iss(text);
    std::string word;
    while (iss >> word) out.push_back(lowercase(word));
    return out;
}

std::pair<Vocabulary, EmbeddingTable> load_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open embeddings file: " + path);

    Vocabulary vocab;
    std::vector<std::vector<double>> row_buf;
    std::size_t dim = 0;
    std::size_t declared_count = 0;
    bool has_header = false;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream iss(line);
        std::vector<std::string> fields;
        std::string f;
        while (iss >> f) fields.push_back(f);
        if (fields.empty()) continue;

        if (line_no == 1 && fields.size() == 2 && is_integer_token(fields[0]) &&
            is_integer_token(fields[1])) {
            declared_count = std::stoull(fields[0]);
            dim = std::stoull(fields[1]);
            has_header = true;
            continue;
        }

        if (fields.size() < 2) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": expected `word v_1 ... v_d`");
        }
        const std::string word = lowercase(fields[0]);
        const std::size_t row_dim = fields.size() - 1;
        if (dim == 0) {
            dim = row_dim;
        } else if (row_dim != dim) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": row has " +
                             std::to_string(row_dim) + " values, expected " +
                             std::to_string(dim));
        }
        if (vocab.word_to_id.count(word)) {
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": duplicate word after lowercasing: `" + word + "`");
        }
        std::vector<double> values(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            if (!parse_double(fields[i + 1], values[i])) {
                throw ParseError(path + ":" + std::to_string(line_no) +
                                 ": bad float `" + fields[i + 1] + "`");
            }
            if (!std::isfinite(values[i])) {
                throw ValidationError(path + ":" + std::to_string(line_no) +
                                      ": non-finite embedding value");
            }
        }
        vocab.word_to_id.emplace(word, static_cast<int>(row_buf.size()));
        vocab.id_to_word.push_back(word);
        row_buf.push_back(std::move(values));
    }

    if (row_buf.empty()) throw ValidationError(path + ": no embedding rows");
    if (has_header && declared_count != row_buf.size()) {
        throw ParseError(path + ": header declares " + std::to_string(declared_count) +
                         " rows, file has " + std::to_string(row_buf.size()));
    }
    if (vocab.word_to_id.count(kUnknownToken)) {
        throw ValidationError(path + ": word `" + kUnknownToken +
                              "` collides with the reserved unknown token");
    }

    vocab.unknown_id = static_cast<int>(row_buf.size());
    vocab.word_to_id.emplace(kUnknownToken, vocab.unknown_id);
    vocab.id_to_word.push_back(kUnknownToken);

    Matrix rows(row_buf.size() + 1, dim);
    for (std::size_t i = 0; i < row_buf.size(); ++i)
        for (std::size_t j = 0; j < dim; ++j) rows.at(i, j) = row_buf[i][j];
    // unknown row stays all-zero

    return {std::move(vocab), EmbeddingTable{std::move(rows)}};
}

Matrix encode_tokens(const std::vector<int>& tokens, const EmbeddingTable& table) {
    if (tokens.empty()) throw ValidationError("encode_tokens: empty token sequence");
    Matrix out(tokens.size(), table.dim());
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const int id = tokens[t];
        if (id < 0 || static_cast<std::size_t>(id) >= table.rows.rows()) {
            throw ValidationError("encode_tokens: token id " + std::to_string(id) +
                                  " outside table with " +
                                  std::to_string(table.rows.rows()) + " rows");
        }
        for (std::size_t j = 0; j < table.dim(); ++j)
            out.at(t, j) = table.rows.at(static_cast<std::size_t>(id), j);
    }
    return out;
}

} // namespace xmtc
