#include "xmtc/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <thread>

#include "xmtc/errors.hpp"

namespace xmtc {

namespace {

constexpr char kCacheMagic[8] = {'X', 'M', 'T', 'C', 'T', 'E', 'B', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& in, const std::string& what) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw ParseError("teacher cache: truncated " + what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

} // namespace

TextVector vectorize_text(const Example& example, const EmbeddingTable& table) {
    if (example.tokens.empty())
        throw ValidationError("vectorize_text: example " + std::to_string(example.id) +
                              " has no tokens");
    TextVector v;
    v.values.assign(table.dim(), 0.0);
    for (int id : example.tokens) {
        const double* row = table.rows.row(static_cast<std::size_t>(id));
        for (std::size_t j = 0; j < table.dim(); ++j) v.values[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(example.tokens.size());
    for (double& x : v.values) x *= inv;
    return v;
}

double cosine_score(const TextVector& a, const TextVector& b) {
    if (a.values.size() != b.values.size())
        throw ShapeError("cosine_score: dimension mismatch " +
                         std::to_string(a.values.size()) + " vs " +
                         std::to_string(b.values.size()));
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    const double score = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(score, -1.0, 1.0);
}

NeighborResult nearest_neighbors(const TextVector& query, long long query_id,
                                 const std::vector<std::pair<long long, TextVector>>& pool,
                                 int k, bool exclude_self) {
    if (k <= 0) throw ConfigError("nearest_neighbors: k must be positive");
    std::vector<std::pair<double, long long>> scored; // (score, id)
    scored.reserve(pool.size());
    for (const auto& [id, vec] : pool) {
        if (exclude_self && id == query_id) continue;
        scored.emplace_back(cosine_score(query, vec), id);
    }
    if (static_cast<std::size_t>(k) > scored.size())
        throw ConfigError("nearest_neighbors: k=" + std::to_string(k) +
                          " exceeds effective pool size " + std::to_string(scored.size()));

    const auto better = [](const std::pair<double, long long>& a,
                           const std::pair<double, long long>& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    };
    std::partial_sort(scored.begin(), scored.begin() + k, scored.end(), better);

    NeighborResult result;
    result.query_id = query_id;
    for (int i = 0; i < k; ++i) {
        result.scores.push_back(scored[static_cast<std::size_t>(i)].first);
        result.neighbor_ids.push_back(scored[static_cast<std::size_t>(i)].second);
    }
    return result;
}

std::vector<int> build_teacher_label_set(const std::vector<int>& neighbor_label_union,
                                         const LabelTree& tree, bool include_roots) {
    std::vector<int> out;
    for (int label : neighbor_label_union) {
        if (label < 0 || label >= tree.label_count())
            throw ValidationError("build_teacher_label_set: label " +
                                  std::to_string(label) + " outside tree");
        if (tree.has_parent(label)) {
            out.push_back(label);
            out.push_back(tree.parent[static_cast<std::size_t>(label)]);
        } else if (include_roots) {
            out.push_back(label);
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

Matrix encode_teacher_knowledge(const std::vector<int>& label_set, const LabelTree& tree,
                                const EmbeddingTable& table) {
    std::vector<std::vector<double>> rows;
    for (int label : label_set) {
        const std::vector<int>& desc = tree.descriptions[static_cast<std::size_t>(label)];
        if (desc.empty()) continue;
        std::vector<double> row(table.dim(), 0.0);
        for (int id : desc) {
            const double* e = table.rows.row(static_cast<std::size_t>(id));
            for (std::size_t j = 0; j < table.dim(); ++j) row[j] += e[j];
        }
        const double inv = 1.0 / static_cast<double>(desc.size());
        for (double& x : row) x *= inv;
        rows.push_back(std::move(row));
    }
    Matrix out(rows.size(), table.dim());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < table.dim(); ++j) out.at(i, j) = rows[i][j];
    return out;
}

std::vector<TeacherKnowledge> build_all_teacher_knowledge(
    const Corpus& corpus, const std::vector<const Corpus*>& pool_corpora,
    std::optional<std::size_t> query_pool_index, const LabelTree& tree,
    const EmbeddingTable& table, const TeacherConfig& config, int threads,
    TeacherBuildStats* stats) {
    if (config.k <= 0) throw ConfigError("teacher: k must be positive");
    if (pool_corpora.empty()) throw ConfigError("teacher: empty neighbor pool");
    if (query_pool_index && *query_pool_index >= pool_corpora.size())
        throw ConfigError("teacher: query_pool_index outside pool list");

    // Flatten the pool with ids unique across corpora. Tie-breaking and
    // self-exclusion both run on these pool-global ids.
    std::vector<std::pair<long long, TextVector>> pool;
    std::vector<const Example*> pool_examples;
    long long query_offset = -1;
    long long offset = 0;
    for (std::size_t c = 0; c < pool_corpora.size(); ++c) {
        if (query_pool_index && *query_pool_index == c) query_offset = offset;
        for (const Example& ex : pool_corpora[c]->examples) {
            pool.emplace_back(offset + ex.id, vectorize_text(ex, table));
            pool_examples.push_back(&ex);
        }
        offset += static_cast<long long>(pool_corpora[c]->size());
    }

    std::size_t zero_norm = 0;
    for (const auto& [id, vec] : pool) {
        double norm = 0.0;
        for (double x : vec.values) norm += x * x;
        if (norm == 0.0) ++zero_norm;
    }

    const bool exclude = config.exclude_self && query_offset >= 0;
    std::vector<TeacherKnowledge> result(corpus.size());

    const auto worker = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Example& ex = corpus.examples[i];
            const TextVector query = vectorize_text(ex, table);
            const long long query_id = exclude ? query_offset + ex.id : -1;
            const NeighborResult nn =
                nearest_neighbors(query, query_id, pool, config.k, exclude);

            std::vector<int> label_union;
            for (long long nid : nn.neighbor_ids) {
                const Example* nex = pool_examples[static_cast<std::size_t>(nid)];
                label_union.insert(label_union.end(), nex->labels.begin(),
                                   nex->labels.end());
            }
            std::sort(label_union.begin(), label_union.end());
            label_union.erase(std::unique(label_union.begin(), label_union.end()),
                              label_union.end());

            TeacherKnowledge tk;
            tk.example_id = ex.id;
            tk.label_set = build_teacher_label_set(label_union, tree, config.include_roots);
            tk.encoding = encode_teacher_knowledge(tk.label_set, tree, table);
            if (config.pooling == TeacherPooling::Global && tk.encoding.rows() > 1)
                tk.encoding = mean_rows(tk.encoding);
            tk.empty = tk.encoding.rows() == 0;
            result[i] = std::move(tk);
        }
    };

    const std::size_t n = corpus.size();
    const std::size_t nthreads =
        std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(n, 1));
    if (nthreads <= 1) {
        worker(0, n);
    } else {
        std::vector<std::thread> workers;
        const std::size_t chunk = (n + nthreads - 1) / nthreads;
        for (std::size_t t = 0; t < nthreads; ++t) {
            const std::size_t begin = t * chunk;
            const std::size_t end = std::min(begin + chunk, n);
            if (begin >= end) break;
            workers.emplace_back(worker, begin, end);
        }
        for (std::thread& w : workers) w.join();
    }

    if (stats) {
        stats->example_count = n;
        stats->zero_norm_vector_count = zero_norm;
        stats->empty_teacher_count = 0;
        double total = 0.0;
        for (const TeacherKnowledge& tk : result) {
            if (tk.empty) ++stats->empty_teacher_count;
            total += static_cast<double>(tk.label_set.size());
        }
        stats->mean_label_set_size = n ? total / static_cast<double>(n) : 0.0;
    }
    return result;
}

void save_teacher_cache(const std::string& stem, const std::vector<TeacherKnowledge>& cache) {
    std::ofstream tsv(stem + ".tsv");
    if (!tsv) throw IoError("cannot write " + stem + ".tsv");
    for (const TeacherKnowledge& tk : cache) {
        tsv << tk.example_id << '\t';
        for (std::size_t i = 0; i < tk.label_set.size(); ++i) {
            if (i) tsv << ',';
            tsv << tk.label_set[i];
        }
        tsv << '\n';
    }

    std::ofstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw IoError("cannot write " + stem + ".bin");
    bin.write(kCacheMagic, sizeof(kCacheMagic));
    write_u64(bin, cache.size());
    for (const TeacherKnowledge& tk : cache) {
        write_u64(bin, static_cast<std::uint64_t>(tk.example_id));
        const char flag = tk.empty ? 1 : 0;
        bin.write(&flag, 1);
        write_matrix(bin, tk.encoding);
    }
}

std::vector<TeacherKnowledge> load_teacher_cache(const std::string& stem) {
    std::ifstream tsv(stem + ".tsv");
    if (!tsv) throw IoError("cannot open " + stem + ".tsv");
    std::vector<std::vector<int>> label_sets;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(tsv, line)) {
        ++line_no;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError(stem + ".tsv:" + std::to_string(line_no) + ": missing TAB");
        std::vector<int> labels;
        std::stringstream ss(line.substr(tab + 1));
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            labels.push_back(std::stoi(item));
        }
        label_sets.push_back(std::move(labels));
    }

    std::ifstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw IoError("cannot open " + stem + ".bin");
    char magic[8];
    bin.read(magic, 8);
    if (!bin || std::memcmp(magic, kCacheMagic, 8) != 0)
        throw ParseError(stem + ".bin: bad magic (not a teacher cache)");
    const std::uint64_t count = read_u64(bin, "record count");
    if (count != label_sets.size())
        throw ValidationError(stem + ": tsv has " + std::to_string(label_sets.size()) +
                              " records, bin has " + std::to_string(count));

    std::vector<TeacherKnowledge> cache(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        TeacherKnowledge& tk = cache[i];
        tk.example_id = static_cast<long long>(read_u64(bin, "record id"));
        char flag = 0;
        bin.read(&flag, 1);
        if (!bin) throw ParseError(stem + ".bin: truncated record flag");
        tk.empty = flag != 0;
        tk.encoding = read_matrix(bin);
        tk.label_set = std::move(label_sets[i]);
    }
    return cache;
}

} // namespace xmtc
