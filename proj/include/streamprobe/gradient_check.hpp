#pragma once

#include <cstdint>

#include "streamprobe/loss.hpp"

namespace streamprobe {

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_parameter = 0;  // index into [weights..., bias]
    std::size_t parameters_checked = 0;
};

// Compares sequence_loss_gradient against central differences of
// sequence_loss, (L(p + eps) - L(p - eps)) / 2 eps, on every parameter when
// there are at most 50, otherwise on a random subset of 50 (seeded). The
// relative error of one parameter is |analytic - numeric| / max(|analytic|,
// |numeric|, 1e-8). Requires eps in [1e-6, 1e-2]; throws DataError when a
// perturbed loss is non-finite.
GradientCheckResult gradient_check(const ProbeParameters& probe, const LabeledExchange& exchange,
                                   const TrainingConfig& cfg, double eps, std::size_t step = 0,
                                   std::uint64_t seed = 0);

}  // namespace streamprobe
