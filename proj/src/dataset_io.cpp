#include "xmtc/dataset_io.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "xmtc/errors.hpp"
#include "xmtc/matrix.hpp"

namespace xmtc {

namespace {

constexpr char kVocabMagic[8] = {'X', 'M', 'T', 'C', 'V', 'O', 'C', '1'};
constexpr char kExamplesMagic[8] = {'X', 'M', 'T', 'C', 'E', 'X', 'S', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& in, const std::string& what) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw ParseError("dataset: truncated " + what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    if (!in) throw ParseError("dataset: truncated " + what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return in;
}

void save_corpus_bin(const std::string& path, const Corpus& corpus) {
    std::ofstream out = open_out(path);
    out.write(kExamplesMagic, 8);
    write_u64(out, corpus.size());
    write_u64(out, static_cast<std::uint64_t>(corpus.label_count));
    for (const Example& ex : corpus.examples) {
        write_u64(out, static_cast<std::uint64_t>(ex.id));
        write_u64(out, ex.tokens.size());
        for (int t : ex.tokens) write_u32(out, static_cast<std::uint32_t>(t));
        write_u64(out, ex.labels.size());
        for (int l : ex.labels) write_u32(out, static_cast<std::uint32_t>(l));
    }
    if (!out) throw IoError("write failed: " + path);
}

Corpus load_corpus_bin(const std::string& path, const std::string& split) {
    std::ifstream in = open_in(path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kExamplesMagic, 8) != 0)
        throw ParseError(path + ": not a corpus file");
    Corpus corpus;
    corpus.split = split;
    const std::uint64_t count = read_u64(in, "example count");
    corpus.label_count = static_cast<int>(read_u64(in, "label count"));
    corpus.examples.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        Example& ex = corpus.examples[i];
        ex.id = static_cast<long long>(read_u64(in, "example id"));
        ex.tokens.resize(read_u64(in, "token count"));
        for (int& t : ex.tokens) t = static_cast<int>(read_u32(in, "token"));
        ex.labels.resize(read_u64(in, "label count"));
        for (int& l : ex.labels) l = static_cast<int>(read_u32(in, "label"));
    }
    return corpus;
}

} // namespace

void save_dataset(const std::string& dir, const Dataset& dataset) {
    std::filesystem::create_directories(dir);
    const auto path = [&dir](const char* name) { return dir + "/" + name; };

    {
        std::ofstream out = open_out(path("vocab.bin"));
        out.write(kVocabMagic, 8);
        write_u64(out, static_cast<std::uint64_t>(dataset.vocab.size()));
        write_u64(out, static_cast<std::uint64_t>(dataset.vocab.unknown_id));
        for (const std::string& word : dataset.vocab.id_to_word) {
            write_u64(out, word.size());
            out.write(word.data(), static_cast<std::streamsize>(word.size()));
        }
    }
    {
        std::ofstream out = open_out(path("embed.bin"));
        write_matrix(out, dataset.table.rows);
    }
    save_corpus_bin(path("train.bin"), dataset.train);
    save_corpus_bin(path("test.bin"), dataset.test);
    if (dataset.validation) save_corpus_bin(path("validation.bin"), *dataset.validation);
    {
        std::ofstream out = open_out(path("hierarchy.bin"));
        write_u64(out, dataset.tree.parent.size());
        for (int p : dataset.tree.parent)
            write_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(p)));
    }
    {
        std::ofstream out = open_out(path("descriptions.bin"));
        write_u64(out, dataset.tree.descriptions.size());
        for (const std::vector<int>& desc : dataset.tree.descriptions) {
            write_u64(out, desc.size());
            for (int t : desc) write_u32(out, static_cast<std::uint32_t>(t));
        }
    }
    {
        nlohmann::json j;
        j["label_count"] = dataset.label_count;
        j["max_tokens"] = dataset.max_tokens;
        j["desc_tokens"] = dataset.desc_tokens;
        j["vocab_size"] = dataset.vocab.size();
        j["embedding_dim"] = dataset.table.dim();
        j["train_examples"] = dataset.train.size();
        j["test_examples"] = dataset.test.size();
        j["has_validation"] = dataset.validation.has_value();
        if (dataset.validation) j["validation_examples"] = dataset.validation->size();
        std::ofstream out(path("dataset.json"));
        if (!out) throw IoError("cannot write dataset.json");
        out << j.dump(2) << '\n';
    }
}

Dataset load_dataset(const std::string& dir) {
    const auto path = [&dir](const char* name) { return dir + "/" + name; };

    nlohmann::json meta;
    {
        std::ifstream in(path("dataset.json"));
        if (!in) throw IoError("cannot open " + path("dataset.json"));
        try {
            in >> meta;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path("dataset.json") + ": " + e.what());
        }
    }

    Dataset dataset;
    dataset.label_count = meta.at("label_count").get<int>();
    dataset.max_tokens = meta.at("max_tokens").get<int>();
    dataset.desc_tokens = meta.at("desc_tokens").get<int>();

    {
        std::ifstream in = open_in(path("vocab.bin"));
        char magic[8];
        in.read(magic, 8);
        if (!in || std::memcmp(magic, kVocabMagic, 8) != 0)
            throw ParseError(path("vocab.bin") + ": not a vocabulary file");
        const std::uint64_t count = read_u64(in, "vocab size");
        dataset.vocab.unknown_id = static_cast<int>(read_u64(in, "unknown id"));
        dataset.vocab.id_to_word.resize(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            std::string word(read_u64(in, "word length"), '\0');
            in.read(word.data(), static_cast<std::streamsize>(word.size()));
            if (!in) throw ParseError(path("vocab.bin") + ": truncated word");
            dataset.vocab.word_to_id.emplace(word, static_cast<int>(i));
            dataset.vocab.id_to_word[i] = std::move(word);
        }
    }
    {
        std::ifstream in = open_in(path("embed.bin"));
        dataset.table.rows = read_matrix(in);
        if (dataset.table.rows.rows() != static_cast<std::size_t>(dataset.vocab.size()))
            throw ValidationError(dir + ": embedding rows do not match vocabulary size");
    }
    dataset.train = load_corpus_bin(path("train.bin"), "train");
    dataset.test = load_corpus_bin(path("test.bin"), "test");
    if (meta.at("has_validation").get<bool>())
        dataset.validation = load_corpus_bin(path("validation.bin"), "validation");
    {
        std::ifstream in = open_in(path("hierarchy.bin"));
        dataset.tree.parent.resize(read_u64(in, "hierarchy size"));
        for (int& p : dataset.tree.parent)
            p = static_cast<int>(static_cast<std::int64_t>(read_u64(in, "parent")));
    }
    {
        std::ifstream in = open_in(path("descriptions.bin"));
        dataset.tree.descriptions.resize(read_u64(in, "description count"));
        for (std::vector<int>& desc : dataset.tree.descriptions) {
            desc.resize(read_u64(in, "description length"));
            for (int& t : desc) t = static_cast<int>(read_u32(in, "description token"));
        }
    }
    if (dataset.tree.label_count() != dataset.label_count)
        throw ValidationError(dir + ": hierarchy size does not match label count");
    return dataset;
}

} // namespace xmtc
