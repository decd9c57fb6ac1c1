#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xmtc/corpus.hpp"
#include "xmtc/model.hpp"
#include "xmtc/teacher.hpp"

namespace xmtc {

// Top-m label ids by descending score, ties broken by ascending label id.
struct RankedPrediction {
    long long example_id = 0;
    std::vector<int> labels;
};

RankedPrediction rank_logits(long long example_id, const Matrix& logits, int top_m);

double precision_at_k(const RankedPrediction& pred, const std::vector<int>& truth, int k);

// Empty truth comes back as nullopt (skip signal; callers exclude the
// example from the mean and count it).
std::optional<double> ndcg_at_k(const RankedPrediction& pred, const std::vector<int>& truth,
                                int k);

// Inverse-propensity model over training label frequencies:
// p_l = 1 / (1 + C exp(-A ln(N_l + B))), C = (ln N - 1)(B + 1)^A.
// Unseen labels get the N_l = 0 value, the minimum over labels.
struct PropensityModel {
    std::vector<double> propensity; // size L, each in (0, 1]
    double a = 0.55;
    double b = 1.5;
    std::size_t train_size = 0;
};

PropensityModel fit_propensities(const Corpus& train, double a, double b);

// Propensity-scored precision; `normalized` divides by the best value any
// ranking of the truth set could reach, so the per-example score is in
// [0, 1]. Empty truth gives nullopt.
std::optional<double> psp_at_k(const RankedPrediction& pred, const std::vector<int>& truth,
                               const PropensityModel& model, int k, bool normalized = true);

struct EvalReport {
    std::vector<int> ks;
    std::map<int, double> p;     // P@k
    std::map<int, double> ndcg;  // nDCG@k for k > 1
    std::map<int, double> psp;   // PSP@k
    std::size_t example_count = 0;
    std::size_t empty_truth_count = 0; // excluded from nDCG/PSP means
    double propensity_a = 0.55;
    double propensity_b = 1.5;

    std::string to_table() const;
    std::string to_json() const;
};

// Macro-averages the three metrics over (prediction, truth) pairs.
EvalReport score_predictions(const std::vector<RankedPrediction>& predictions,
                             const std::vector<std::vector<int>>& truths,
                             const PropensityModel& model, const std::vector<int>& ks);

// Runs the model over every test example, ranks the logits and scores them.
EvalReport evaluate_model(const ModelParams& params, const ModelConfig& config,
                          const Corpus& test, const std::vector<TeacherKnowledge>& teacher,
                          const EmbeddingTable& table, const PropensityModel& model,
                          const std::vector<int>& ks, int threads = 1);

// External prediction file: `example_id<TAB>label:score,label:score,...`.
std::vector<RankedPrediction> load_prediction_file(const std::string& path, int label_count,
                                                   int top_m);

} // namespace xmtc
