#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gazeforge/tensor.hpp"

namespace gazeforge {

struct GradcheckOptions {
    double epsilon = 1e-6;
    double tolerance = 1e-5;
    // Coordinates with |x_i| <= kink_margin are skipped; central differences
    // straddle the kink of piecewise ops there and compare garbage.
    double kink_margin = 0.0;
    // When positive, the numeric slope is estimated at both epsilon and
    // epsilon/2; coordinates where the two estimates disagree by more than
    // this relative amount are skipped, as some downstream piecewise op
    // changed linear piece inside the window. Detection uses only function
    // values, so it cannot mask a wrong analytic gradient on the
    // coordinates that are compared.
    double kink_detect = 0.0;
    // 0 checks every coordinate; otherwise a deterministic sample of this
    // many coordinates per input, for composite pipelines too large to sweep.
    std::size_t max_coords_per_input = 0;
    std::uint64_t sample_seed = 7;
};

struct GradcheckResult {
    bool passed = true;
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    std::size_t coords_skipped = 0;
    std::string worst_coord;
};

// Compares tape gradients of fn (a scalar-valued function of watched copies
// of `inputs`) against central differences. Relative error per coordinate is
// |a - n| / max(|a|, |n|, 1e-8).
GradcheckResult gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                          const std::vector<Tensor>& inputs, const GradcheckOptions& opts = {});

}  // namespace gazeforge
