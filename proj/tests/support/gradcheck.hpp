#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "llie/autograd.hpp"

namespace llie::testing {

struct GradcheckOptions {
    double step = 1e-3;
    /// Coordinates sampled per parameter tensor (all when the tensor is
    /// smaller).
    int coords_per_tensor = 3;
    /// Cap on the total number of checked coordinates (0 = no cap).
    int max_total = 0;
    /// Errors are |a - n| / max(|a|, |n|, floor); the floor keeps round-off
    /// on vanishing derivatives from reading as a relative error.
    double floor = 1e-6;
    /// A stencil that crosses a kink is retried with the step divided by 10
    /// down to this value; a coordinate still crossing at the smallest step
    /// is replaced by a fresh draw, at most `max_redraws` times per tensor.
    double min_step = 1e-6;
    int max_redraws = 50;
    std::uint64_t seed = 1;
};

struct GradcheckResult {
    double max_rel_error = 0.0;
    int checked = 0;
    int redrawn = 0;
    int reduced_step = 0;  // coordinates checked below the nominal step
    std::string worst;  // "<param>[index] analytic vs numeric"
};

/// Compares reverse-mode gradients of the scalar `loss` against central
/// finite differences for sampled coordinates of every listed leaf.
GradcheckResult gradcheck(const std::function<Var()>& loss, const std::vector<std::pair<std::string, Var>>& leaves,
                          const GradcheckOptions& options = {});

}  // namespace llie::testing
