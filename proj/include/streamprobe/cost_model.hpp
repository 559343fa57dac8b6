#pragma once

#include <cstdint>
#include <span>

namespace streamprobe {

// Classifier-side FLOP accounting. The protected model's own sampling cost is
// not counted.
struct CostModel {
    double probe_layers = 46;    // L
    double hidden_dim = 4096;    // d
    double stage2_params = 4e9;  // N
    double tokens_per_exchange = 1000;

    // Throws ConfigError unless every field is positive.
    void validate() const;
};

enum class CostComponent { probe, stage2 };

// probe: 2 L d; stage2: 2 N.
double per_token_cost(const CostModel& model, CostComponent component);

struct SystemCost {
    double flops_per_token = 0.0;
    // Relative to running the second stage on all traffic.
    double relative = 0.0;
};

// 2 L d + p 2 N per token, where p is the escalated fraction of traffic.
// Throws std::invalid_argument unless 0 <= p <= 1.
SystemCost system_cost(const CostModel& model, double escalation_fraction);

// Sums per-exchange classifier cost over a set of exchanges, each costing
// tokens_per_exchange * (2 L d + escalated * 2 N), and normalizes by the cost
// of sending every exchange to the second stage.
SystemCost accounted_cost(const CostModel& model, std::span<const std::uint8_t> escalated);

}  // namespace streamprobe
