#include "streamprobe/cost_model.hpp"

#include <stdexcept>

#include "streamprobe/errors.hpp"

namespace streamprobe {

void CostModel::validate() const {
    if (!(probe_layers > 0 && hidden_dim > 0 && stage2_params > 0 && tokens_per_exchange > 0))
        throw ConfigError("cost model constants must all be positive");
}

double per_token_cost(const CostModel& model, CostComponent component) {
    model.validate();
    switch (component) {
        case CostComponent::probe: return 2.0 * model.probe_layers * model.hidden_dim;
        case CostComponent::stage2: return 2.0 * model.stage2_params;
    }
    return 0.0;
}

SystemCost system_cost(const CostModel& model, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("escalation fraction must lie in [0, 1]");
    const double stage2 = per_token_cost(model, CostComponent::stage2);
    SystemCost c;
    c.flops_per_token = per_token_cost(model, CostComponent::probe) + p * stage2;
    c.relative = c.flops_per_token / stage2;
    return c;
}

SystemCost accounted_cost(const CostModel& model, std::span<const std::uint8_t> escalated) {
    if (escalated.empty()) throw std::invalid_argument("accounted_cost needs at least one exchange");
    const double probe = per_token_cost(model, CostComponent::probe);
    const double stage2 = per_token_cost(model, CostComponent::stage2);
    double total = 0.0;
    for (auto e : escalated) total += model.tokens_per_exchange * (probe + (e ? stage2 : 0.0));
    const double tokens = model.tokens_per_exchange * static_cast<double>(escalated.size());
    SystemCost c;
    c.flops_per_token = total / tokens;
    c.relative = total / (tokens * stage2);
    return c;
}

}  // namespace streamprobe
