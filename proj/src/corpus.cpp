#include "xmtc/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

#include "xmtc/errors.hpp"

namespace xmtc {

namespace {

bool parse_int(const std::string& s, int& out) {
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

std::vector<int> parse_label_field(const std::string& field, int label_count,
                                   const std::string& where) {
    std::vector<int> labels;
    if (field.empty()) return labels;
    std::stringstream ss(field);
    std::string item;
    while (std::getline(ss, item, ',')) {
        int id = 0;
        if (!parse_int(item, id))
            throw ParseError(where + ": non-integer label `" + item + "`");
        if (id < 0 || id >= label_count)
            throw ValidationError(where + ": label id " + std::to_string(id) +
                                  " outside [0, " + std::to_string(label_count) + ")");
        labels.push_back(id);
    }
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    return labels;
}

} // namespace

double Corpus::mean_labels_per_example() const {
    if (examples.empty()) return 0.0;
    std::size_t total = 0;
    for (const Example& e : examples) total += e.labels.size();
    return static_cast<double>(total) / static_cast<double>(examples.size());
}

Corpus load_text_corpus(const std::string& path, const Vocabulary& vocab,
                        int max_tokens, int label_count, const std::string& split) {
    if (max_tokens <= 0) throw ConfigError("load_text_corpus: max_tokens must be positive");
    if (label_count <= 0) throw ConfigError("load_text_corpus: label_count must be positive");
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file: " + path);

    Corpus corpus;
    corpus.label_count = label_count;
    corpus.split = split;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = path + ":" + std::to_string(line_no);
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError(where + ": missing TAB between labels and text");

        Example ex;
        ex.id = static_cast<long long>(corpus.examples.size());
        ex.labels = parse_label_field(line.substr(0, tab), label_count, where);

        for (const std::string& word : tokenize(line.substr(tab + 1))) {
            if (static_cast<int>(ex.tokens.size()) >= max_tokens) break;
            ex.tokens.push_back(vocab.lookup(word));
        }
        if (ex.tokens.empty())
            throw ValidationError(where + ": example " + std::to_string(ex.id) +
                                  " has no tokens");
        corpus.examples.push_back(std::move(ex));
    }
    return corpus;
}

std::vector<int> load_label_hierarchy(const std::string& path, int label_count) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open hierarchy file: " + path);

    std::vector<int> parent(static_cast<std::size_t>(label_count), -1);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = path + ":" + std::to_string(line_no);
        const std::size_t hash = line.find('#');
        std::string body = hash == std::string::npos ? line : line.substr(0, hash);
        std::istringstream iss(body);
        std::string pf, cf, extra;
        if (!(iss >> pf)) continue; // blank or comment-only line
        if (!(iss >> cf) || (iss >> extra))
            throw ParseError(where + ": expected `parent_id<TAB>child_id`");
        int p = 0, c = 0;
        if (!parse_int(pf, p) || !parse_int(cf, c))
            throw ParseError(where + ": non-integer label id");
        if (p < 0 || p >= label_count || c < 0 || c >= label_count)
            throw ValidationError(where + ": label id outside [0, " +
                                  std::to_string(label_count) + ")");
        const std::size_t child = static_cast<std::size_t>(c);
        if (parent[child] >= 0 && parent[child] != p)
            throw ValidationError(where + ": child " + std::to_string(c) +
                                  " already has parent " + std::to_string(parent[child]));
        parent[child] = p;
    }

    // Following parent links from any label must terminate within L steps.
    for (int start = 0; start < label_count; ++start) {
        int steps = 0;
        int cur = start;
        while (parent[static_cast<std::size_t>(cur)] >= 0) {
            cur = parent[static_cast<std::size_t>(cur)];
            if (++steps > label_count) {
                std::string cycle = std::to_string(start);
                int walk = start;
                for (int i = 0; i <= label_count; ++i) {
                    walk = parent[static_cast<std::size_t>(walk)];
                    cycle += " -> " + std::to_string(walk);
                    if (walk == start) break;
                }
                throw ValidationError(path + ": hierarchy cycle: " + cycle);
            }
        }
    }
    return parent;
}

std::vector<std::vector<int>> load_label_descriptions(const std::string& path,
                                                      const Vocabulary& vocab,
                                                      int max_tokens, int label_count) {
    if (max_tokens <= 0)
        throw ConfigError("load_label_descriptions: max_tokens must be positive");
    std::ifstream in(path);
    if (!in) throw IoError("cannot open descriptions file: " + path);

    std::vector<std::vector<int>> descriptions(static_cast<std::size_t>(label_count));
    std::vector<bool> seen(static_cast<std::size_t>(label_count), false);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError(where + ": missing TAB after label id");
        int id = 0;
        if (!parse_int(line.substr(0, tab), id))
            throw ParseError(where + ": non-integer label id");
        if (id < 0 || id >= label_count)
            throw ValidationError(where + ": label id " + std::to_string(id) +
                                  " outside [0, " + std::to_string(label_count) + ")");
        if (seen[static_cast<std::size_t>(id)])
            throw ValidationError(where + ": duplicate description for label " +
                                  std::to_string(id));
        seen[static_cast<std::size_t>(id)] = true;

        std::vector<int>& tokens = descriptions[static_cast<std::size_t>(id)];
        for (const std::string& word : tokenize(line.substr(tab + 1))) {
            if (static_cast<int>(tokens.size()) >= max_tokens) break;
            tokens.push_back(vocab.lookup(word));
        }
    }
    return descriptions;
}

void write_text_corpus(std::ostream& out, const Corpus& corpus, const Vocabulary& vocab) {
    for (const Example& ex : corpus.examples) {
        for (std::size_t i = 0; i < ex.labels.size(); ++i) {
            if (i) out << ',';
            out << ex.labels[i];
        }
        out << '\t';
        for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
            if (i) out << ' ';
            out << vocab.id_to_word[static_cast<std::size_t>(ex.tokens[i])];
        }
        out << '\n';
    }
}

} // namespace xmtc
