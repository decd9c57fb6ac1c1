#include "xmtc/synth.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "xmtc/errors.hpp"

namespace xmtc {

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    return out;
}

std::size_t draw(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % n);
}

std::vector<int> description_words(int label, const SynthConfig& cfg) {
    std::vector<int> words;
    for (int j = 0; j < cfg.desc_tokens; ++j)
        words.push_back((label * 7 + j) % cfg.vocab_size);
    return words;
}

void write_doc_line(std::ofstream& out, const std::vector<int>& labels,
                    const std::vector<int>& tokens) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) out << ',';
        out << labels[i];
    }
    out << '\t';
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out << ' ';
        out << 'w' << tokens[i];
    }
    out << '\n';
}

void write_split(const std::string& path, int docs, const SynthConfig& cfg,
                 std::mt19937_64& rng) {
    std::ofstream out = open_out(path);
    const int children = cfg.label_count - cfg.parent_count;
    for (int d = 0; d < docs; ++d) {
        const int n_labels =
            cfg.min_labels + static_cast<int>(draw(rng, static_cast<std::size_t>(
                                                           cfg.max_labels - cfg.min_labels + 1)));
        std::vector<int> child_pool(static_cast<std::size_t>(children));
        for (int i = 0; i < children; ++i) child_pool[static_cast<std::size_t>(i)] =
            cfg.parent_count + i;
        std::vector<int> labels;
        for (int i = 0; i < n_labels; ++i) {
            const std::size_t pick = draw(rng, child_pool.size());
            labels.push_back(child_pool[pick]);
            child_pool.erase(child_pool.begin() + static_cast<std::ptrdiff_t>(pick));
        }
        std::sort(labels.begin(), labels.end());

        // Each label contributes its signature words three times; two noise
        // words keep the split from being a pure lookup table.
        std::vector<int> tokens;
        for (int label : labels) {
            const std::vector<int> sig = description_words(label, cfg);
            for (int rep = 0; rep < 3; ++rep)
                tokens.insert(tokens.end(), sig.begin(), sig.end());
        }
        tokens.push_back(static_cast<int>(draw(rng, static_cast<std::size_t>(cfg.vocab_size))));
        tokens.push_back(static_cast<int>(draw(rng, static_cast<std::size_t>(cfg.vocab_size))));
        for (std::size_t i = tokens.size(); i > 1; --i)
            std::swap(tokens[i - 1], tokens[draw(rng, i)]);

        write_doc_line(out, labels, tokens);
    }
}

} // namespace

void write_synthetic_dataset(const std::string& dir, const SynthConfig& cfg) {
    if (cfg.parent_count <= 0 || cfg.label_count <= cfg.parent_count)
        throw ConfigError("synth: need 0 < parents < labels");
    if (cfg.min_labels < 1 || cfg.max_labels < cfg.min_labels ||
        cfg.max_labels > cfg.label_count - cfg.parent_count)
        throw ConfigError("synth: bad labels-per-doc range");
    std::filesystem::create_directories(dir);

    {
        std::mt19937_64 rng(cfg.seed);
        std::ofstream out = open_out(dir + "/embeddings.txt");
        out << cfg.vocab_size << ' ' << cfg.embedding_dim << '\n';
        out.setf(std::ios::fixed);
        out.precision(6);
        for (int w = 0; w < cfg.vocab_size; ++w) {
            out << 'w' << w;
            for (int j = 0; j < cfg.embedding_dim; ++j) {
                const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
                out << ' ' << (unit - 0.5);
            }
            out << '\n';
        }
    }
    {
        std::ofstream out = open_out(dir + "/hierarchy.txt");
        out << "# two-level synthetic hierarchy: labels 0.." << cfg.parent_count - 1
            << " are roots\n";
        for (int c = cfg.parent_count; c < cfg.label_count; ++c)
            out << (c - cfg.parent_count) % cfg.parent_count << '\t' << c << '\n';
    }
    {
        std::ofstream out = open_out(dir + "/descriptions.txt");
        for (int l = 0; l < cfg.label_count; ++l) {
            out << l << '\t';
            const std::vector<int> words = description_words(l, cfg);
            for (std::size_t i = 0; i < words.size(); ++i) {
                if (i) out << ' ';
                out << 'w' << words[i];
            }
            out << '\n';
        }
    }
    {
        std::mt19937_64 rng(cfg.seed + 1);
        write_split(dir + "/train.txt", cfg.train_docs, cfg, rng);
    }
    {
        std::mt19937_64 rng(cfg.seed + 2);
        write_split(dir + "/test.txt", cfg.test_docs, cfg, rng);
    }
}

} // namespace xmtc
