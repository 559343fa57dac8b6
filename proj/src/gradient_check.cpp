#include "streamprobe/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "streamprobe/errors.hpp"

namespace streamprobe {

GradientCheckResult gradient_check(const ProbeParameters& probe, const LabeledExchange& exchange,
                                   const TrainingConfig& cfg, double eps, std::size_t step, std::uint64_t seed) {
    if (!(eps >= 1e-6 && eps <= 1e-2)) throw ConfigError("gradient_check: eps must lie in [1e-6, 1e-2]");
    const auto analytic = sequence_loss_gradient(probe, exchange, cfg, step);
    const std::size_t d = probe.weights.size();

    std::vector<std::size_t> params(d + 1);
    std::iota(params.begin(), params.end(), std::size_t{0});
    constexpr std::size_t kSubset = 50;
    if (params.size() > kSubset) {
        std::mt19937_64 rng(seed);
        std::shuffle(params.begin(), params.end(), rng);
        params.resize(kSubset);
    }

    GradientCheckResult result;
    ProbeParameters work = probe;
    auto value = [&](std::size_t p, double delta) {
        double& slot = p < d ? work.weights[p] : work.bias;
        const double saved = slot;
        slot = saved + delta;
        const double loss = sequence_loss(work, exchange, cfg, step).total;
        slot = saved;
        if (!std::isfinite(loss)) throw DataError("gradient_check: non-finite loss");
        return loss;
    };
    for (std::size_t p : params) {
        const double numeric = (value(p, eps) - value(p, -eps)) / (2.0 * eps);
        const double exact = p < d ? analytic.d_weights[p] : analytic.d_bias;
        const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
        const double rel = std::abs(exact - numeric) / denom;
        if (rel > result.max_relative_error || result.parameters_checked == 0) {
            result.max_relative_error = rel;
            result.worst_parameter = p;
        }
        ++result.parameters_checked;
    }
    return result;
}

}  // namespace streamprobe
