#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "streamprobe/activation.hpp"
#include "streamprobe/probe.hpp"

namespace streamprobe {

struct TrainingConfig {
    LossVariant loss_variant = LossVariant::softmax_swim;
    std::size_t window_size = 16;
    double temperature = 1.0;
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    // Length of the linear 0 -> 1 schedule of the cummax blend weight for
    // annealed_cummax. 0 lets train_probe use the total number of steps.
    std::size_t anneal_steps = 0;
    // Whether gradients flow through the softmax weights.
    bool differentiate_weights = true;

    // Throws ConfigError.
    void validate() const;
};

// Blend weight of the cummax term at optimizer step `step`:
// min(1, step / anneal_steps). Zero for variants other than annealed_cummax.
double anneal_weight(const TrainingConfig& cfg, std::size_t step);

struct PositionRange {
    std::size_t first = 0;  // token index of the first scored position
    std::size_t last = 0;
    bool aggregate = false;  // T < window: one prediction from all tokens
};

// Per-exchange loss as a weighted sum of per-position BCE terms:
// total = sum_t weights[t] * bce[t].
struct LossBreakdown {
    double total = 0.0;
    std::vector<double> per_token_weights;
    std::vector<double> per_token_bce;
    std::vector<double> logits;       // position logits the loss was read from
    std::vector<double> predictions;  // probability the BCE term scores
    PositionRange positions_used;
};

struct LossGradient {
    double loss = 0.0;
    std::vector<double> d_weights;
    double d_bias = 0.0;
};

// The loss of one exchange under cfg.loss_variant, evaluated from the probe's
// raw per-token logits. `step` only matters for annealed_cummax.
LossBreakdown sequence_loss(const ProbeParameters& probe, const LabeledExchange& exchange,
                            const TrainingConfig& cfg, std::size_t step = 0);

// Analytic gradient of sequence_loss with respect to the weights and bias.
LossGradient sequence_loss_gradient(const ProbeParameters& probe, const LabeledExchange& exchange,
                                    const TrainingConfig& cfg, std::size_t step = 0);

namespace detail {

struct HeadOutput {
    LossBreakdown breakdown;
    std::vector<double> d_logits;  // dL / d(position logit)
};

// The variant-specific part of the loss, from position logits to the scalar
// loss and its derivative with respect to each position logit.
HeadOutput loss_head(std::span<const double> logits, double label, LossVariant variant, double temperature,
                     double omega, bool differentiate_weights, bool want_gradient);

// Window means of the standardized feature rows, one row per scored position.
// Position logit s equals bias + weights . row(s) up to rounding.
struct PositionFeatures {
    std::size_t n_positions = 0;
    std::size_t dim = 0;
    std::vector<double> rows;
    PositionRange range;

    std::span<const double> row(std::size_t s) const { return {rows.data() + s * dim, dim}; }
};

PositionFeatures position_features(const ProbeParameters& probe, const ActivationSequence& seq, std::size_t window);

LossGradient gradient_from_positions(std::span<const double> weights, double bias, const PositionFeatures& pos,
                                     double label, const TrainingConfig& cfg, double omega);

}  // namespace detail
}  // namespace streamprobe
