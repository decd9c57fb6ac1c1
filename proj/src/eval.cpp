#include "xmtc/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "xmtc/errors.hpp"

namespace xmtc {

RankedPrediction rank_logits(long long example_id, const Matrix& logits, int top_m) {
    if (logits.rows() != 1) throw ShapeError("rank_logits: logits must be 1 x L");
    if (top_m <= 0) throw ConfigError("rank_logits: top_m must be positive");
    const std::size_t L = logits.cols();
    const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(top_m), L);

    std::vector<int> order(L);
    for (std::size_t i = 0; i < L; ++i) order[i] = static_cast<int>(i);
    const auto better = [&](int a, int b) {
        const double sa = logits.at(0, static_cast<std::size_t>(a));
        const double sb = logits.at(0, static_cast<std::size_t>(b));
        if (sa != sb) return sa > sb;
        return a < b;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m),
                      order.end(), better);

    RankedPrediction pred;
    pred.example_id = example_id;
    pred.labels.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
    return pred;
}

double precision_at_k(const RankedPrediction& pred, const std::vector<int>& truth, int k) {
    if (k <= 0) throw ConfigError("precision_at_k: k must be positive");
    if (static_cast<std::size_t>(k) > pred.labels.size())
        throw ConfigError("precision_at_k: k=" + std::to_string(k) +
                          " exceeds prediction length " + std::to_string(pred.labels.size()));
    const std::set<int> truth_set(truth.begin(), truth.end());
    int hits = 0;
    for (int r = 0; r < k; ++r)
        if (truth_set.count(pred.labels[static_cast<std::size_t>(r)])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(k);
}

std::optional<double> ndcg_at_k(const RankedPrediction& pred, const std::vector<int>& truth,
                                int k) {
    if (k <= 0) throw ConfigError("ndcg_at_k: k must be positive");
    if (static_cast<std::size_t>(k) > pred.labels.size())
        throw ConfigError("ndcg_at_k: k=" + std::to_string(k) +
                          " exceeds prediction length " + std::to_string(pred.labels.size()));
    if (truth.empty()) return std::nullopt;
    const std::set<int> truth_set(truth.begin(), truth.end());
    double dcg = 0.0;
    for (int r = 1; r <= k; ++r)
        if (truth_set.count(pred.labels[static_cast<std::size_t>(r - 1)]))
            dcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    double idcg = 0.0;
    const int ideal = std::min<int>(k, static_cast<int>(truth_set.size()));
    for (int r = 1; r <= ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    return dcg / idcg;
}

PropensityModel fit_propensities(const Corpus& train, double a, double b) {
    if (a <= 0.0 || b < 0.0) throw ConfigError("fit_propensities: need A > 0 and B >= 0");
    if (train.size() < 2) throw ConfigError("fit_propensities: need at least 2 examples");

    PropensityModel model;
    model.a = a;
    model.b = b;
    model.train_size = train.size();

    std::vector<std::size_t> frequency(static_cast<std::size_t>(train.label_count), 0);
    for (const Example& ex : train.examples)
        for (int label : ex.labels) ++frequency[static_cast<std::size_t>(label)];

    const double n = static_cast<double>(train.size());
    const double c = (std::log(n) - 1.0) * std::pow(b + 1.0, a);
    model.propensity.resize(frequency.size());
    for (std::size_t l = 0; l < frequency.size(); ++l) {
        const double nl = static_cast<double>(frequency[l]);
        double p = 1.0 / (1.0 + c * std::exp(-a * std::log(nl + b)));
        // Corpora with N <= e give C <= 0 and push the closed form above 1;
        // saturate so propensities stay in (0, 1].
        if (!(p > 0.0) || p > 1.0) p = 1.0;
        model.propensity[l] = p;
    }
    return model;
}

std::optional<double> psp_at_k(const RankedPrediction& pred, const std::vector<int>& truth,
                               const PropensityModel& model, int k, bool normalized) {
    if (k <= 0) throw ConfigError("psp_at_k: k must be positive");
    if (static_cast<std::size_t>(k) > pred.labels.size())
        throw ConfigError("psp_at_k: k=" + std::to_string(k) +
                          " exceeds prediction length " + std::to_string(pred.labels.size()));
    if (truth.empty()) return std::nullopt;

    const std::set<int> truth_set(truth.begin(), truth.end());
    double raw = 0.0;
    for (int r = 0; r < k; ++r) {
        const int label = pred.labels[static_cast<std::size_t>(r)];
        if (truth_set.count(label))
            raw += 1.0 / model.propensity[static_cast<std::size_t>(label)];
    }
    raw /= static_cast<double>(k);
    if (!normalized) return raw;

    // Best attainable ranking puts the lowest-propensity truth labels first.
    std::vector<double> gains;
    gains.reserve(truth_set.size());
    for (int label : truth_set)
        gains.push_back(1.0 / model.propensity[static_cast<std::size_t>(label)]);
    std::sort(gains.begin(), gains.end(), std::greater<>());
    double best = 0.0;
    for (std::size_t r = 0; r < std::min<std::size_t>(gains.size(), static_cast<std::size_t>(k)); ++r)
        best += gains[r];
    best /= static_cast<double>(k);
    return raw / best;
}

std::string EvalReport::to_table() const {
    std::ostringstream out;
    out << "examples: " << example_count << " (" << empty_truth_count
        << " with empty truth excluded from nDCG/PSP)\n";
    out << "propensity: A=" << propensity_a << " B=" << propensity_b
        << " (tool defaults, not fitted values)\n";
    const auto fmt = [](double v) {
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(4);
        s << v;
        return s.str();
    };
    out << "metric      ";
    for (int k : ks) out << " @" << k << "     ";
    out << '\n';
    out << "P           ";
    for (int k : ks) out << " " << fmt(p.at(k));
    out << '\n';
    out << "nDCG        ";
    for (int k : ks) out << " " << (k == 1 ? "  -   " : fmt(ndcg.at(k)));
    out << '\n';
    out << "PSP         ";
    for (int k : ks) out << " " << fmt(psp.at(k));
    out << '\n';
    return out.str();
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["example_count"] = example_count;
    j["empty_truth_count"] = empty_truth_count;
    j["propensity"] = {{"A", propensity_a}, {"B", propensity_b}, {"note", "tool defaults"}};
    for (int k : ks) {
        j["P@" + std::to_string(k)] = p.at(k);
        if (k > 1) j["nDCG@" + std::to_string(k)] = ndcg.at(k);
        j["PSP@" + std::to_string(k)] = psp.at(k);
    }
    return j.dump(2);
}

EvalReport score_predictions(const std::vector<RankedPrediction>& predictions,
                             const std::vector<std::vector<int>>& truths,
                             const PropensityModel& model, const std::vector<int>& ks) {
    if (predictions.size() != truths.size())
        throw ConfigError("score_predictions: " + std::to_string(predictions.size()) +
                          " predictions vs " + std::to_string(truths.size()) + " truths");
    EvalReport report;
    report.ks = ks;
    report.example_count = predictions.size();
    report.propensity_a = model.a;
    report.propensity_b = model.b;

    for (int k : ks) {
        double p_sum = 0.0, ndcg_sum = 0.0, psp_sum = 0.0;
        std::size_t scored = 0;
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            p_sum += precision_at_k(predictions[i], truths[i], k);
            const auto nd = ndcg_at_k(predictions[i], truths[i], k);
            const auto ps = psp_at_k(predictions[i], truths[i], model, k);
            if (nd) {
                ndcg_sum += *nd;
                psp_sum += *ps;
                ++scored;
            }
        }
        const double denom = static_cast<double>(predictions.size());
        report.p[k] = predictions.empty() ? 0.0 : p_sum / denom;
        report.ndcg[k] = scored ? ndcg_sum / static_cast<double>(scored) : 0.0;
        report.psp[k] = scored ? psp_sum / static_cast<double>(scored) : 0.0;
    }
    report.empty_truth_count = 0;
    for (const auto& truth : truths)
        if (truth.empty()) ++report.empty_truth_count;
    return report;
}

EvalReport evaluate_model(const ModelParams& params, const ModelConfig& config,
                          const Corpus& test, const std::vector<TeacherKnowledge>& teacher,
                          const EmbeddingTable& table, const PropensityModel& model,
                          const std::vector<int>& ks, int threads) {
    validate_config(config);
    if (static_cast<std::size_t>(test.label_count) != config.label_count)
        throw ConfigError("evaluate: corpus has L=" + std::to_string(test.label_count) +
                          ", checkpoint expects L=" + std::to_string(config.label_count));
    int max_k = 1;
    for (int k : ks) max_k = std::max(max_k, k);

    const bool use_teacher = ablation_preset(config.ablation).use_teacher;
    if (use_teacher && teacher.size() < test.size())
        throw ConfigError("evaluate: teacher cache covers " + std::to_string(teacher.size()) +
                          " of " + std::to_string(test.size()) + " examples");

    std::vector<RankedPrediction> predictions(test.size());
    std::vector<std::vector<int>> truths(test.size());

    const auto worker = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Example& ex = test.examples[i];
            const TeacherKnowledge* tk = use_teacher ? &teacher[i] : nullptr;
            ForwardPass pass = model_forward(ex.tokens, table, tk, params, config);
            predictions[i] = rank_logits(ex.id, pass.tape.value(pass.logits), max_k);
            truths[i] = ex.labels;
        }
    };

    const std::size_t n = test.size();
    const std::size_t nthreads =
        std::min<std::size_t>(std::max(threads, 1), std::max<std::size_t>(n, 1));
    if (nthreads <= 1) {
        worker(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + nthreads - 1) / nthreads;
        for (std::size_t t = 0; t < nthreads; ++t) {
            const std::size_t begin = t * chunk;
            const std::size_t end = std::min(begin + chunk, n);
            if (begin >= end) break;
            pool.emplace_back(worker, begin, end);
        }
        for (std::thread& w : pool) w.join();
    }

    return score_predictions(predictions, truths, model, ks);
}

std::vector<RankedPrediction> load_prediction_file(const std::string& path, int label_count,
                                                   int top_m) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open prediction file: " + path);

    std::vector<RankedPrediction> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError(where + ": missing TAB");

        RankedPrediction pred;
        pred.example_id = std::stoll(line.substr(0, tab));

        std::vector<std::pair<double, int>> scored;
        std::stringstream ss(line.substr(tab + 1));
        std::string item;
        std::set<int> seen;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            const std::size_t colon = item.find(':');
            if (colon == std::string::npos)
                throw ParseError(where + ": expected `label:score`, got `" + item + "`");
            int label = 0;
            const std::string label_text = item.substr(0, colon);
            auto [p1, ec1] = std::from_chars(label_text.data(),
                                             label_text.data() + label_text.size(), label);
            if (ec1 != std::errc() || p1 != label_text.data() + label_text.size())
                throw ParseError(where + ": non-integer label `" + label_text + "`");
            if (label < 0 || label >= label_count)
                throw ValidationError(where + ": label " + std::to_string(label) +
                                      " outside [0, " + std::to_string(label_count) + ")");
            if (!seen.insert(label).second)
                throw ValidationError(where + ": duplicate label " + std::to_string(label));
            double score = 0.0;
            try {
                score = std::stod(item.substr(colon + 1));
            } catch (const std::exception&) {
                throw ParseError(where + ": bad score in `" + item + "`");
            }
            scored.emplace_back(score, label);
        }
        if (static_cast<int>(scored.size()) < top_m)
            throw ValidationError(where + ": only " + std::to_string(scored.size()) +
                                  " predictions, need at least " + std::to_string(top_m));
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (int r = 0; r < top_m; ++r)
            pred.labels.push_back(scored[static_cast<std::size_t>(r)].second);
        out.push_back(std::move(pred));
    }
    return out;
}

} // namespace xmtc
