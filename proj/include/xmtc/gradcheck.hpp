#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmtc/model.hpp"

namespace xmtc {

struct GradCheckBlock {
    std::string name;
    double max_rel_error = 0.0;
};

struct GradCheckResult {
    std::vector<GradCheckBlock> blocks;
    double overall_max = 0.0;

    bool passed(double tolerance) const { return overall_max < tolerance; }
};

// Compares the taped full-model loss gradient against central finite
// differences, per parameter block. Relative error per entry is
// |a - fd| / max(1, |a|, |fd|). `corrupt_backward` is a test fixture that
// injects a wrong analytic gradient so the harness itself can be checked.
GradCheckResult gradient_check_model(const ModelConfig& config, std::uint64_t seed,
                                     std::size_t text_len, std::size_t teacher_rows,
                                     double eps, bool corrupt_backward = false);

} // namespace xmtc
