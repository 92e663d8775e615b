#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cuci {

enum class GradcheckLevel { Unit, Full };
GradcheckLevel parse_gradcheck_level(std::string_view text);

struct GradcheckCase {
    std::string block;
    double max_relative_error = 0.0;
    double tolerance = 0.0;
    long entries = 0;
    std::string worst_entry;
    bool passed = false;
};

/// Finite-difference checks in double precision at micro dimensions. Unit
/// level covers each block separately (tolerance 1e-4); full level checks the
/// end-to-end training loss (tolerance 1e-3).
std::vector<GradcheckCase> run_gradcheck_suite(GradcheckLevel level);

}  // namespace cuci
