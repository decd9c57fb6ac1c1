// Command-line front end: ingest -> teacher -> train -> eval, plus the
// ablation sweep and the gradient-check harness.
//
// Exit codes: 0 success, 1 verification failure, 2 input/config error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xmtc/dataset_io.hpp"
#include "xmtc/errors.hpp"
#include "xmtc/eval.hpp"
#include "xmtc/gradcheck.hpp"
#include "xmtc/manifest.hpp"
#include "xmtc/synth.hpp"
#include "xmtc/teacher.hpp"
#include "xmtc/train.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitVerificationFailure = 1;
constexpr int kExitInputError = 2;

int default_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

struct IngestOptions {
    std::string train_path, test_path, valid_path;
    std::string hierarchy_path, descriptions_path, embeddings_path;
    std::string out_dir;
    std::string preset;
    int labels = 0;
    int max_tokens = 500;
    int desc_tokens = 4;
};

struct TeacherOptions {
    std::string dataset_dir, out_dir;
    int k = 5;
    bool exclude_self = true;
    bool include_roots = false;
    std::string pooling = "per-label";
    int threads = default_threads();
};

struct ModelFlags {
    std::size_t d_model = 0; // 0 = take the embedding dimension
    std::size_t heads = 4;
    std::size_t d_bottleneck = 0; // 0 = d_model / 2
    std::size_t max_text_len = 0; // 0 = dataset max_tokens
    std::size_t max_teacher_rows = 64;
    int ablation = 6;
    bool fusion_attention = true;
    std::uint64_t seed = 42;
};

struct TrainOptions {
    std::string dataset_dir, teacher_dir, out_dir;
    ModelFlags model;
    int epochs = 200;
    int batch_size = 32;
    double lr = 1e-4;
    double decay_factor = 0.5;
    double improve_rel_threshold = 1e-3;
    int patience = 3;
    bool shuffle = true;
    bool mean_reduction = false;
    bool keep_epoch_checkpoints = false;
    int threads = default_threads();
};

struct EvalOptions {
    std::string dataset_dir, teacher_dir, checkpoint_path, score_file, out_dir;
    std::vector<int> ks = {1, 3, 5};
    double propensity_a = 0.55;
    double propensity_b = 1.5;
    bool raw_psp = false;
    int threads = default_threads();
};

struct AblateOptions {
    TrainOptions train;
    std::vector<int> presets = {0, 1, 2, 3, 4, 5, 6};
};

struct GradCheckOptions {
    std::size_t d_model = 8;
    std::size_t heads = 2;
    std::size_t text_len = 5;
    std::size_t teacher_rows = 3;
    std::size_t labels = 7;
    int ablation = 6;
    int trials = 10;
    double eps = 1e-5;
    double tolerance = 1e-4;
    std::uint64_t seed = 42;
    bool corrupt_backward = false; // test fixture
};

struct SynthOptions {
    std::string out_dir;
    xmtc::SynthConfig config;
};

void add_model_flags(CLI::App* cmd, ModelFlags& flags) {
    cmd->add_option("--d-model", flags.d_model,
                    "embedding dimension (default: from the dataset)");
    cmd->add_option("--h,--heads", flags.heads, "attention heads (default 4)");
    cmd->add_option("--d-bottleneck", flags.d_bottleneck,
                    "bottleneck width (default d_model/2)");
    cmd->add_option("--max-text-len", flags.max_text_len,
                    "text rows fed to the model (default: dataset max tokens)");
    cmd->add_option("--max-teacher-rows", flags.max_teacher_rows,
                    "teacher rows fed to the model");
    cmd->add_option("--ablation", flags.ablation, "ablation preset 0..6 (default 6)")
        ->check(CLI::Range(0, 6));
    cmd->add_flag("--fusion-attention,!--no-fusion-attention", flags.fusion_attention,
                  "masked fusion attention before the bottleneck (default on)");
    cmd->add_option("--seed", flags.seed, "parameter init / shuffle seed");
}

void add_train_flags(CLI::App* cmd, TrainOptions& opt) {
    cmd->add_option("--dataset", opt.dataset_dir, "ingested dataset directory")->required();
    cmd->add_option("--teacher", opt.teacher_dir,
                    "teacher cache directory (optional for --ablation 0)");
    cmd->add_option("--out", opt.out_dir, "run directory")->required();
    add_model_flags(cmd, opt.model);
    cmd->add_option("--epochs", opt.epochs, "training epochs (default 200)");
    cmd->add_option("--batch", opt.batch_size, "minibatch size (default 32)");
    cmd->add_option("--lr", opt.lr, "initial learning rate (default 1e-4)");
    cmd->add_option("--decay", opt.decay_factor, "lr decay factor (default 0.5)");
    cmd->add_option("--patience", opt.patience,
                    "stale epochs before decay triggers (default 3)");
    cmd->add_option("--improve-threshold", opt.improve_rel_threshold,
                    "relative mean-loss improvement that resets the decay counter");
    cmd->add_flag("--shuffle,!--no-shuffle", opt.shuffle, "shuffle per epoch (default on)");
    cmd->add_flag("--mean-loss", opt.mean_reduction,
                  "average the batch loss instead of summing it");
    cmd->add_flag("--keep-epoch-checkpoints", opt.keep_epoch_checkpoints,
                  "retain checkpoint_epoch_NNN.bin for every epoch");
    cmd->add_option("--threads", opt.threads, "worker threads (default: cores)");
}

xmtc::ModelConfig resolve_model_config(const ModelFlags& flags, const xmtc::Dataset& dataset) {
    xmtc::ModelConfig config;
    config.d_model = flags.d_model ? flags.d_model : dataset.table.dim();
    config.heads = flags.heads;
    if (config.heads == 0 || config.d_model % config.heads != 0)
        throw xmtc::ConfigError("d_model=" + std::to_string(config.d_model) +
                                " is not divisible by heads=" + std::to_string(config.heads));
    if (flags.d_model && flags.d_model != dataset.table.dim())
        throw xmtc::ConfigError("--d-model " + std::to_string(flags.d_model) +
                                " does not match the embedding dimension " +
                                std::to_string(dataset.table.dim()));
    config.d_bottleneck = flags.d_bottleneck ? flags.d_bottleneck
                                             : std::max<std::size_t>(1, config.d_model / 2);
    config.label_count = static_cast<std::size_t>(dataset.label_count);
    config.max_text_len = flags.max_text_len ? flags.max_text_len
                                             : static_cast<std::size_t>(dataset.max_tokens);
    config.max_teacher_rows = flags.max_teacher_rows;
    config.ablation = flags.ablation;
    config.fusion_attention = flags.fusion_attention;
    config.seed = flags.seed;
    xmtc::validate_config(config);
    return config;
}

json model_config_json(const xmtc::ModelConfig& c) {
    return json{{"d_model", c.d_model},
                {"heads", c.heads},
                {"d_bottleneck", c.d_bottleneck},
                {"label_count", c.label_count},
                {"max_text_len", c.max_text_len},
                {"max_teacher_rows", c.max_teacher_rows},
                {"ablation", c.ablation},
                {"fusion_attention", c.fusion_attention},
                {"seed", c.seed}};
}

// --- ingest -------------------------------------------------------------------

int run_ingest(const IngestOptions& opt_in) {
    IngestOptions opt = opt_in;
    if (!opt.preset.empty()) {
        if (opt.preset == "amazoncat13k") {
            opt.max_tokens = 300;
            opt.desc_tokens = 4;
        } else if (opt.preset == "eurlex") {
            opt.max_tokens = 500;
            opt.desc_tokens = 4;
        } else if (opt.preset == "rcv1") {
            opt.max_tokens = 250;
            opt.desc_tokens = 16;
        } else {
            throw xmtc::ConfigError("unknown preset `" + opt.preset +
                                    "` (amazoncat13k|eurlex|rcv1)");
        }
    }
    if (opt.labels <= 0) throw xmtc::ConfigError("--labels must be positive");

    fs::create_directories(opt.out_dir);
    xmtc::RunManifest manifest;
    manifest.command = "ingest";
    manifest.options = {{"labels", opt.labels},
                        {"max_tokens", opt.max_tokens},
                        {"desc_tokens", opt.desc_tokens},
                        {"preset", opt.preset}};
    for (const std::string& p :
         {opt.train_path, opt.test_path, opt.valid_path, opt.hierarchy_path,
          opt.descriptions_path, opt.embeddings_path})
        if (!p.empty()) manifest.input_digests[p] = xmtc::file_digest_hex(p);
    xmtc::write_manifest(opt.out_dir + "/manifest.json", manifest);

    xmtc::Dataset dataset;
    dataset.label_count = opt.labels;
    dataset.max_tokens = opt.max_tokens;
    dataset.desc_tokens = opt.desc_tokens;

    auto [vocab, table] = xmtc::load_embeddings(opt.embeddings_path);
    dataset.vocab = std::move(vocab);
    dataset.table = std::move(table);
    dataset.train = xmtc::load_text_corpus(opt.train_path, dataset.vocab, opt.max_tokens,
                                           opt.labels, "train");
    dataset.test = xmtc::load_text_corpus(opt.test_path, dataset.vocab, opt.max_tokens,
                                          opt.labels, "test");
    if (!opt.valid_path.empty())
        dataset.validation = xmtc::load_text_corpus(opt.valid_path, dataset.vocab,
                                                    opt.max_tokens, opt.labels, "validation");
    dataset.tree.parent = xmtc::load_label_hierarchy(opt.hierarchy_path, opt.labels);
    dataset.tree.descriptions = xmtc::load_label_descriptions(
        opt.descriptions_path, dataset.vocab, opt.desc_tokens, opt.labels);

    xmtc::save_dataset(opt.out_dir, dataset);

    std::printf("%-14s %-13s %-21s %s\n", "Train Points", "Test Points",
                "Label Dimensionality", "Avg. Labels per Point");
    std::printf("%-14zu %-13zu %-21d %.2f\n", dataset.train.size(), dataset.test.size(),
                dataset.label_count, dataset.train.mean_labels_per_example());
    std::printf("vocabulary: %d words (+1 unknown), embedding dim %zu\n",
                dataset.vocab.size() - 1, dataset.table.dim());
    if (dataset.validation)
        std::printf("validation: %zu examples\n", dataset.validation->size());
    std::printf("dataset written to %s\n", opt.out_dir.c_str());
    return kExitOk;
}

// --- teacher ------------------------------------------------------------------

int run_teacher(const TeacherOptions& opt) {
    if (opt.k <= 0) throw xmtc::ConfigError("--k must be positive");
    const std::string out_dir = opt.out_dir.empty() ? opt.dataset_dir + "/teacher" : opt.out_dir;
    fs::create_directories(out_dir);

    xmtc::TeacherConfig config;
    config.k = opt.k;
    config.exclude_self = opt.exclude_self;
    config.include_roots = opt.include_roots;
    if (opt.pooling == "per-label")
        config.pooling = xmtc::TeacherPooling::PerLabel;
    else if (opt.pooling == "global")
        config.pooling = xmtc::TeacherPooling::Global;
    else
        throw xmtc::ConfigError("--pooling must be per-label or global");

    xmtc::RunManifest manifest;
    manifest.command = "teacher";
    manifest.options = {{"k", opt.k},
                        {"exclude_self", opt.exclude_self},
                        {"include_roots", opt.include_roots},
                        {"pooling", opt.pooling}};
    manifest.input_digests[opt.dataset_dir + "/dataset.json"] =
        xmtc::file_digest_hex(opt.dataset_dir + "/dataset.json");
    xmtc::write_manifest(out_dir + "/manifest.json", manifest);

    const xmtc::Dataset dataset = xmtc::load_dataset(opt.dataset_dir);
    std::vector<const xmtc::Corpus*> pool = {&dataset.train};
    if (dataset.validation) pool.push_back(&*dataset.validation);

    const auto build = [&](const xmtc::Corpus& corpus, std::optional<std::size_t> pool_index,
                           const std::string& stem) {
        xmtc::TeacherBuildStats stats;
        const auto cache = xmtc::build_all_teacher_knowledge(
            corpus, pool, pool_index, dataset.tree, dataset.table, config, opt.threads,
            &stats);
        xmtc::save_teacher_cache(out_dir + "/" + stem, cache);
        std::printf("%s: %zu examples, mean |label set| %.2f, %zu empty teachers",
                    stem.c_str(), stats.example_count, stats.mean_label_set_size,
                    stats.empty_teacher_count);
        if (stats.zero_norm_vector_count > 0)
            std::printf(" (warning: %zu zero-norm text vectors)",
                        stats.zero_norm_vector_count);
        std::printf("\n");
    };

    build(dataset.train, 0, "teacher_train");
    if (dataset.validation) build(*dataset.validation, 1, "teacher_validation");
    build(dataset.test, std::nullopt, "teacher_test");
    std::printf("teacher caches written to %s\n", out_dir.c_str());
    return kExitOk;
}

// --- train ----------------------------------------------------------------------

std::vector<xmtc::TeacherKnowledge> load_teacher_for(const std::string& teacher_dir,
                                                     const std::string& split) {
    return xmtc::load_teacher_cache(teacher_dir + "/teacher_" + split);
}

int run_train(const TrainOptions& opt) {
    fs::create_directories(opt.out_dir);
    const xmtc::Dataset dataset = xmtc::load_dataset(opt.dataset_dir);
    const xmtc::ModelConfig model_config = resolve_model_config(opt.model, dataset);
    const bool use_teacher = xmtc::ablation_preset(model_config.ablation).use_teacher;
    if (use_teacher && opt.teacher_dir.empty())
        throw xmtc::ConfigError("--teacher is required unless --ablation 0");

    xmtc::TrainConfig train_config;
    train_config.epochs = opt.epochs;
    train_config.batch_size = opt.batch_size;
    train_config.lr = opt.lr;
    train_config.decay_factor = opt.decay_factor;
    train_config.improve_rel_threshold = opt.improve_rel_threshold;
    train_config.patience = opt.patience;
    train_config.seed = opt.model.seed;
    train_config.shuffle = opt.shuffle;
    train_config.mean_reduction = opt.mean_reduction;
    train_config.threads = opt.threads;
    train_config.adam.lr = opt.lr;

    xmtc::RunManifest manifest;
    manifest.command = "train";
    manifest.seed = opt.model.seed;
    manifest.options = {{"model", model_config_json(model_config)},
                        {"epochs", opt.epochs},
                        {"batch", opt.batch_size},
                        {"lr", opt.lr},
                        {"decay", opt.decay_factor},
                        {"patience", opt.patience},
                        {"improve_threshold", opt.improve_rel_threshold},
                        {"shuffle", opt.shuffle},
                        {"mean_loss", opt.mean_reduction}};
    manifest.input_digests[opt.dataset_dir + "/dataset.json"] =
        xmtc::file_digest_hex(opt.dataset_dir + "/dataset.json");
    if (use_teacher)
        manifest.input_digests[opt.teacher_dir + "/teacher_train.bin"] =
            xmtc::file_digest_hex(opt.teacher_dir + "/teacher_train.bin");
    xmtc::write_manifest(opt.out_dir + "/manifest.json", manifest);

    std::vector<xmtc::TeacherKnowledge> teacher;
    if (use_teacher) teacher = load_teacher_for(opt.teacher_dir, "train");

    std::ofstream log(opt.out_dir + "/metrics.jsonl");
    if (!log) throw xmtc::IoError("cannot write metrics log");

    double final_lr = opt.lr;
    const auto on_epoch = [&](const xmtc::EpochStats& stats, const xmtc::ModelParams& params,
                              const xmtc::AdamState& adam) {
        json line = {{"epoch", stats.epoch},
                     {"mean_loss", stats.mean_loss},
                     {"lr", stats.lr},
                     {"wall_seconds", stats.wall_seconds}};
        log << line.dump() << '\n';
        log.flush();
        final_lr = stats.lr;
        xmtc::Checkpoint ck{params, adam, model_config, opt.model.seed, adam.step, stats.lr};
        xmtc::save_checkpoint(opt.out_dir + "/checkpoint_last.bin", ck);
        if (opt.keep_epoch_checkpoints) {
            char name[64];
            std::snprintf(name, sizeof(name), "/checkpoint_epoch_%03d.bin", stats.epoch);
            xmtc::save_checkpoint(opt.out_dir + name, ck);
        }
        if (stats.epoch == 1 || stats.epoch % 10 == 0)
            std::printf("epoch %4d  mean loss %.6f  lr %.2e  (%.2fs)\n", stats.epoch,
                        stats.mean_loss, stats.lr, stats.wall_seconds);
    };

    const xmtc::TrainResult result = xmtc::train_model(dataset.train, teacher, dataset.table,
                                                       model_config, train_config, on_epoch);

    xmtc::Checkpoint final_ck{result.params, result.adam, model_config, opt.model.seed,
                              result.adam.step, final_lr};
    xmtc::save_checkpoint(opt.out_dir + "/checkpoint_final.bin", final_ck);
    std::printf("final mean loss %.6f after %d epochs; checkpoint %s/checkpoint_final.bin\n",
                result.log.back().mean_loss, opt.epochs, opt.out_dir.c_str());
    return kExitOk;
}

// --- eval ----------------------------------------------------------------------

int run_eval(const EvalOptions& opt) {
    if (opt.checkpoint_path.empty() == opt.score_file.empty())
        throw xmtc::ConfigError("pass exactly one of --checkpoint or --score-file");
    const xmtc::Dataset dataset = xmtc::load_dataset(opt.dataset_dir);
    const xmtc::PropensityModel propensities =
        xmtc::fit_propensities(dataset.train, opt.propensity_a, opt.propensity_b);

    int max_k = 1;
    for (int k : opt.ks) {
        if (k <= 0) throw xmtc::ConfigError("--ks entries must be positive");
        max_k = std::max(max_k, k);
    }

    xmtc::EvalReport report;
    if (!opt.score_file.empty()) {
        const auto predictions = xmtc::load_prediction_file(opt.score_file,
                                                            dataset.label_count, max_k);
        if (predictions.size() != dataset.test.size())
            throw xmtc::ValidationError("prediction file has " +
                                        std::to_string(predictions.size()) +
                                        " lines, test split has " +
                                        std::to_string(dataset.test.size()));
        std::vector<std::vector<int>> truths;
        truths.reserve(predictions.size());
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            if (predictions[i].example_id != dataset.test.examples[i].id)
                throw xmtc::ValidationError("prediction line " + std::to_string(i) +
                                            " does not match test example id");
            truths.push_back(dataset.test.examples[i].labels);
        }
        report = xmtc::score_predictions(predictions, truths, propensities, opt.ks);
    } else {
        const xmtc::Checkpoint ck = xmtc::load_checkpoint(opt.checkpoint_path);
        if (ck.config.label_count != static_cast<std::size_t>(dataset.label_count))
            throw xmtc::ConfigError("checkpoint expects L=" +
                                    std::to_string(ck.config.label_count) +
                                    ", dataset has L=" +
                                    std::to_string(dataset.label_count));
        std::vector<xmtc::TeacherKnowledge> teacher;
        if (xmtc::ablation_preset(ck.config.ablation).use_teacher) {
            if (opt.teacher_dir.empty())
                throw xmtc::ConfigError("--teacher is required for this checkpoint");
            teacher = load_teacher_for(opt.teacher_dir, "test");
        }
        report = xmtc::evaluate_model(ck.params, ck.config, dataset.test, teacher,
                                      dataset.table, propensities, opt.ks, opt.threads);
    }

    std::printf("%s", report.to_table().c_str());
    if (!opt.out_dir.empty()) {
        fs::create_directories(opt.out_dir);
        std::ofstream json_out(opt.out_dir + "/report.json");
        json_out << report.to_json() << '\n';
        std::ofstream text_out(opt.out_dir + "/report.txt");
        text_out << report.to_table();

        xmtc::RunManifest manifest;
        manifest.command = "eval";
        manifest.options = {{"ks", opt.ks},
                            {"propensity_a", opt.propensity_a},
                            {"propensity_b", opt.propensity_b}};
        if (!opt.checkpoint_path.empty())
            manifest.input_digests[opt.checkpoint_path] =
                xmtc::file_digest_hex(opt.checkpoint_path);
        if (!opt.score_file.empty())
            manifest.input_digests[opt.score_file] = xmtc::file_digest_hex(opt.score_file);
        xmtc::write_manifest(opt.out_dir + "/manifest.json", manifest);
    }
    return kExitOk;
}

// --- ablate --------------------------------------------------------------------

int run_ablate(const AblateOptions& opt) {
    fs::create_directories(opt.train.out_dir);
    const xmtc::Dataset dataset = xmtc::load_dataset(opt.train.dataset_dir);
    const xmtc::PropensityModel propensities = xmtc::fit_propensities(dataset.train, 0.55, 1.5);

    xmtc::RunManifest manifest;
    manifest.command = "ablate";
    manifest.seed = opt.train.model.seed;
    manifest.options = {{"presets", opt.presets},
                        {"epochs", opt.train.epochs},
                        {"batch", opt.train.batch_size},
                        {"lr", opt.train.lr},
                        {"shared_seed", opt.train.model.seed}};
    manifest.input_digests[opt.train.dataset_dir + "/dataset.json"] =
        xmtc::file_digest_hex(opt.train.dataset_dir + "/dataset.json");
    xmtc::write_manifest(opt.train.out_dir + "/manifest.json", manifest);

    std::vector<xmtc::TeacherKnowledge> teacher_train, teacher_test;
    if (!opt.train.teacher_dir.empty()) {
        teacher_train = load_teacher_for(opt.train.teacher_dir, "train");
        teacher_test = load_teacher_for(opt.train.teacher_dir, "test");
    }

    json rows = json::array();
    std::printf("%-7s %-8s %-14s %-8s %-8s %-8s %-8s %-8s %s\n", "Config", "teacher",
                "Reading", "P@1", "P@3", "P@5", "nDCG@3", "nDCG@5", "final-loss");
    for (int preset : opt.presets) {
        ModelFlags flags = opt.train.model;
        flags.ablation = preset;
        const xmtc::ModelConfig model_config = resolve_model_config(flags, dataset);
        if (xmtc::ablation_preset(preset).use_teacher && opt.train.teacher_dir.empty())
            throw xmtc::ConfigError("--teacher is required for preset " +
                                    std::to_string(preset));

        xmtc::TrainConfig train_config;
        train_config.epochs = opt.train.epochs;
        train_config.batch_size = opt.train.batch_size;
        train_config.lr = opt.train.lr;
        train_config.decay_factor = opt.train.decay_factor;
        train_config.improve_rel_threshold = opt.train.improve_rel_threshold;
        train_config.patience = opt.train.patience;
        train_config.seed = opt.train.model.seed; // shared across presets
        train_config.shuffle = opt.train.shuffle;
        train_config.mean_reduction = opt.train.mean_reduction;
        train_config.threads = opt.train.threads;
        train_config.adam.lr = opt.train.lr;

        const xmtc::TrainResult result = xmtc::train_model(
            dataset.train, teacher_train, dataset.table, model_config, train_config);
        const xmtc::EvalReport report =
            xmtc::evaluate_model(result.params, model_config, dataset.test, teacher_test,
                                 dataset.table, propensities, {1, 3, 5}, opt.train.threads);

        const double final_loss = result.log.back().mean_loss;
        std::printf("%-7d %-8s %-14s %-8.4f %-8.4f %-8.4f %-8.4f %-8.4f %.6f\n", preset,
                    xmtc::ablation_teacher_string(preset).c_str(),
                    xmtc::ablation_components_string(preset).c_str(), report.p.at(1),
                    report.p.at(3), report.p.at(5), report.ndcg.at(3), report.ndcg.at(5),
                    final_loss);
        rows.push_back({{"config", preset},
                        {"teacher", xmtc::ablation_teacher_string(preset)},
                        {"reading", xmtc::ablation_components_string(preset)},
                        {"P@1", report.p.at(1)},
                        {"P@3", report.p.at(3)},
                        {"P@5", report.p.at(5)},
                        {"nDCG@3", report.ndcg.at(3)},
                        {"nDCG@5", report.ndcg.at(5)},
                        {"final_train_loss", final_loss}});

        xmtc::Checkpoint ck{result.params, result.adam, model_config, opt.train.model.seed,
                            result.adam.step, train_config.lr};
        char name[64];
        std::snprintf(name, sizeof(name), "/checkpoint_config%d.bin", preset);
        xmtc::save_checkpoint(opt.train.out_dir + name, ck);
    }

    std::ofstream out(opt.train.out_dir + "/ablation.json");
    out << rows.dump(2) << '\n';
    return kExitOk;
}

// --- gradcheck -----------------------------------------------------------------

int run_gradcheck(const GradCheckOptions& opt) {
    if (opt.d_model > 16 || opt.text_len > 8 || opt.labels > 10)
        throw xmtc::ConfigError(
            "gradcheck runs tiny configs only: d_model <= 16, len <= 8, labels <= 10");
    if (opt.trials <= 0) throw xmtc::ConfigError("--trials must be positive");

    xmtc::ModelConfig config;
    config.d_model = opt.d_model;
    config.heads = opt.heads;
    config.d_bottleneck = std::max<std::size_t>(1, opt.d_model / 2);
    config.label_count = opt.labels;
    config.max_text_len = opt.text_len;
    config.max_teacher_rows = std::max<std::size_t>(1, opt.teacher_rows);
    config.ablation = opt.ablation;
    xmtc::validate_config(config);

    std::map<std::string, double> worst;
    for (int trial = 0; trial < opt.trials; ++trial) {
        const xmtc::GradCheckResult result = xmtc::gradient_check_model(
            config, opt.seed + static_cast<std::uint64_t>(trial), opt.text_len,
            opt.teacher_rows, opt.eps, opt.corrupt_backward);
        for (const xmtc::GradCheckBlock& block : result.blocks) {
            auto [it, inserted] = worst.emplace(block.name, block.max_rel_error);
            if (!inserted) it->second = std::max(it->second, block.max_rel_error);
        }
    }

    bool ok = true;
    for (const auto& [name, err] : worst) {
        const bool block_ok = err < opt.tolerance;
        ok = ok && block_ok;
        std::printf("%-18s max rel err %.3e  %s\n", name.c_str(), err,
                    block_ok ? "ok" : "FAIL");
    }
    std::printf("%d trials, tolerance %.1e: %s\n", opt.trials, opt.tolerance,
                ok ? "PASS" : "FAIL");
    return ok ? kExitOk : kExitVerificationFailure;
}

// --- synth ---------------------------------------------------------------------

int run_synth(const SynthOptions& opt) {
    xmtc::write_synthetic_dataset(opt.out_dir, opt.config);
    xmtc::RunManifest manifest;
    manifest.command = "synth";
    manifest.seed = opt.config.seed;
    manifest.options = {{"train_docs", opt.config.train_docs},
                        {"test_docs", opt.config.test_docs},
                        {"vocab_size", opt.config.vocab_size},
                        {"embedding_dim", opt.config.embedding_dim},
                        {"label_count", opt.config.label_count},
                        {"parent_count", opt.config.parent_count}};
    xmtc::write_manifest(opt.out_dir + "/manifest.json", manifest);
    std::printf("synthetic dataset written to %s\n", opt.out_dir.c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"extreme multi-label text classification with neighbor-derived "
                 "label guidance"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from a config file");

    IngestOptions ingest;
    CLI::App* cmd_ingest = app.add_subcommand("ingest", "parse and validate raw data files");
    cmd_ingest->add_option("--train", ingest.train_path, "training corpus")->required();
    cmd_ingest->add_option("--test", ingest.test_path, "test corpus")->required();
    cmd_ingest->add_option("--valid", ingest.valid_path, "optional validation corpus");
    cmd_ingest->add_option("--hierarchy", ingest.hierarchy_path, "label hierarchy edges")
        ->required();
    cmd_ingest->add_option("--descriptions", ingest.descriptions_path, "label descriptions")
        ->required();
    cmd_ingest->add_option("--embeddings", ingest.embeddings_path, "word2vec text embeddings")
        ->required();
    cmd_ingest->add_option("--labels", ingest.labels, "label dimensionality L")->required();
    cmd_ingest->add_option("--max-tokens", ingest.max_tokens, "text truncation (default 500)");
    cmd_ingest->add_option("--desc-tokens", ingest.desc_tokens,
                           "description truncation (default 4)");
    cmd_ingest->add_option("--preset", ingest.preset,
                           "truncation preset: amazoncat13k|eurlex|rcv1");
    cmd_ingest->add_option("--out", ingest.out_dir, "output dataset directory")->required();

    TeacherOptions teacher;
    CLI::App* cmd_teacher = app.add_subcommand("teacher", "build teacher-knowledge caches");
    cmd_teacher->add_option("--dataset", teacher.dataset_dir, "ingested dataset directory")
        ->required();
    cmd_teacher->add_option("--out", teacher.out_dir,
                            "cache directory (default <dataset>/teacher)");
    cmd_teacher->add_option("--k", teacher.k, "neighbors per example (default 5)");
    cmd_teacher->add_flag("--exclude-self,!--include-self", teacher.exclude_self,
                          "skip the query itself in its own pool (default on)");
    cmd_teacher->add_flag("--include-roots", teacher.include_roots,
                          "also admit labels whose parent is absent");
    cmd_teacher->add_option("--pooling", teacher.pooling,
                            "per-label (sequence) or global (single mean row)");
    cmd_teacher->add_option("--threads", teacher.threads, "worker threads");

    TrainOptions train;
    CLI::App* cmd_train = app.add_subcommand("train", "train a model");
    add_train_flags(cmd_train, train);

    EvalOptions eval;
    CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint or a file");
    cmd_eval->add_option("--dataset", eval.dataset_dir, "ingested dataset directory")
        ->required();
    cmd_eval->add_option("--checkpoint", eval.checkpoint_path, "trained checkpoint");
    cmd_eval->add_option("--teacher", eval.teacher_dir, "teacher cache directory");
    cmd_eval->add_option("--score-file", eval.score_file,
                         "score an external prediction file instead of a checkpoint");
    cmd_eval->add_option("--ks", eval.ks, "cutoffs (default 1 3 5)");
    cmd_eval->add_option("--propensity-a", eval.propensity_a, "propensity A (default 0.55)");
    cmd_eval->add_option("--propensity-b", eval.propensity_b, "propensity B (default 1.5)");
    cmd_eval->add_option("--threads", eval.threads, "worker threads");
    cmd_eval->add_option("--out", eval.out_dir, "directory for report.json/report.txt");

    AblateOptions ablate;
    CLI::App* cmd_ablate = app.add_subcommand("ablate", "train and compare presets 0..6");
    add_train_flags(cmd_ablate, ablate.train);
    cmd_ablate->add_option("--presets", ablate.presets, "preset ids (default 0..6)");

    GradCheckOptions gradcheck;
    CLI::App* cmd_gradcheck =
        app.add_subcommand("gradcheck", "finite-difference gradient verification");
    cmd_gradcheck->add_option("--d-model", gradcheck.d_model, "embedding dim (<= 16)");
    cmd_gradcheck->add_option("--h,--heads", gradcheck.heads, "attention heads");
    cmd_gradcheck->add_option("--len", gradcheck.text_len, "text rows (<= 8)");
    cmd_gradcheck->add_option("--teacher-rows", gradcheck.teacher_rows, "teacher rows");
    cmd_gradcheck->add_option("--labels", gradcheck.labels, "label count (<= 10)");
    cmd_gradcheck->add_option("--ablation", gradcheck.ablation, "preset 0..6")
        ->check(CLI::Range(0, 6));
    cmd_gradcheck->add_option("--trials", gradcheck.trials, "random seeds to run (default 10)");
    cmd_gradcheck->add_option("--eps", gradcheck.eps, "finite-difference step");
    cmd_gradcheck->add_option("--tol", gradcheck.tolerance, "max relative error");
    cmd_gradcheck->add_option("--seed", gradcheck.seed, "base seed");
    cmd_gradcheck
        ->add_flag("--corrupt-backward", gradcheck.corrupt_backward,
                   "inject a wrong analytic gradient (harness self-test)")
        ->group(""); // hidden

    SynthOptions synth;
    CLI::App* cmd_synth = app.add_subcommand("synth", "write a deterministic toy dataset");
    cmd_synth->add_option("--out", synth.out_dir, "output directory")->required();
    cmd_synth->add_option("--docs", synth.config.train_docs, "training docs (default 100)");
    cmd_synth->add_option("--test-docs", synth.config.test_docs, "test docs (default 20)");
    cmd_synth->add_option("--vocab", synth.config.vocab_size, "vocabulary size (default 50)");
    cmd_synth->add_option("--dim", synth.config.embedding_dim, "embedding dim (default 16)");
    cmd_synth->add_option("--labels", synth.config.label_count, "label count (default 20)");
    cmd_synth->add_option("--parents", synth.config.parent_count, "root labels (default 5)");
    cmd_synth->add_option("--desc-tokens", synth.config.desc_tokens,
                          "description words per label");
    cmd_synth->add_option("--min-labels", synth.config.min_labels, "labels per doc, lower");
    cmd_synth->add_option("--max-labels", synth.config.max_labels, "labels per doc, upper");
    cmd_synth->add_option("--seed", synth.config.seed, "generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help/--version exit 0 through CLI11; real parse errors are input errors.
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInputError;
    }

    try {
        if (cmd_ingest->parsed()) return run_ingest(ingest);
        if (cmd_teacher->parsed()) return run_teacher(teacher);
        if (cmd_train->parsed()) return run_train(train);
        if (cmd_eval->parsed()) return run_eval(eval);
        if (cmd_ablate->parsed()) return run_ablate(ablate);
        if (cmd_gradcheck->parsed()) return run_gradcheck(gradcheck);
        if (cmd_synth->parsed()) return run_synth(synth);
    } catch (const xmtc::NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitVerificationFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInputError;
    }
    return kExitInputError;
}
