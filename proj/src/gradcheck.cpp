#include "xmtc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "xmtc/train.hpp"

namespace xmtc {

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        m.data()[i] = 2.0 * unit - 1.0;
    }
    return m;
}

double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

} // namespace

GradCheckResult gradient_check_model(const ModelConfig& config, std::uint64_t seed,
                                     std::size_t text_len, std::size_t teacher_rows,
                                     double eps, bool corrupt_backward) {
    validate_config(config);
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + 1);

    const Matrix text = random_matrix(text_len, config.d_model, rng);
    const Matrix teacher = random_matrix(teacher_rows, config.d_model, rng);
    std::vector<int> labels;
    for (std::size_t l = 0; l < config.label_count; ++l)
        if (rng() % 5 < 2) labels.push_back(static_cast<int>(l));
    if (labels.empty()) labels.push_back(0);

    ModelParams params = init_params(config, seed);

    const auto forward_loss = [&](const ModelParams& p) {
        ForwardPass pass = model_forward_embedded(text, teacher, p, config);
        return ova_loss(pass.tape.value(pass.logits), labels).value;
    };

    // Analytic gradients via one taped backward pass.
    ModelParams analytic = zeros_like(params);
    {
        ForwardPass pass = model_forward_embedded(text, teacher, params, config);
        LossResult loss = ova_loss(pass.tape.value(pass.logits), labels);
        pass.tape.backward(pass.logits, loss.logit_grad);
        pass.accumulate_param_grads(analytic);
    }
    if (corrupt_backward) {
        auto entries = param_entries(analytic);
        entries[0].second->data()[0] += 0.5;
    }

    GradCheckResult result;
    const auto analytic_entries = param_entries(analytic);
    const auto param_view = param_entries(params);
    for (std::size_t b = 0; b < param_view.size(); ++b) {
        ModelParams probe_params = params;
        Matrix* target = param_entries(probe_params)[b].second;
        const auto f = [&](const Matrix& x) {
            *target = x;
            return forward_loss(probe_params);
        };
        const Matrix fd = finite_difference_grad(f, *param_view[b].second, eps);

        GradCheckBlock block;
        block.name = param_view[b].first;
        const Matrix& a = *analytic_entries[b].second;
        for (std::size_t i = 0; i < a.size(); ++i)
            block.max_rel_error =
                std::max(block.max_rel_error, relative_error(a.data()[i], fd.data()[i]));
        result.overall_max = std::max(result.overall_max, block.max_rel_error);
        result.blocks.push_back(std::move(block));
    }
    return result;
}

} // namespace xmtc
