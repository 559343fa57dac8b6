#include "streamprobe/loss.hpp"

#include <cmath>
#include <limits>

#include "streamprobe/errors.hpp"
#include "streamprobe/smoothing.hpp"

namespace streamprobe {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add_exp(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double log_or_neg_inf(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

std::size_t loss_window(const TrainingConfig& cfg) {
    return uses_smoothing(cfg.loss_variant) ? cfg.window_size : 1;
}

PositionRange range_for(std::size_t n_tokens, std::size_t window) {
    if (n_tokens < window) return {n_tokens - 1, n_tokens - 1, true};
    return {window - 1, n_tokens - 1, false};
}

void check_consistent(const ProbeParameters& probe, const TrainingConfig& cfg) {
    cfg.validate();
    if (probe.window_size != cfg.window_size || probe.loss_variant != cfg.loss_variant ||
        probe.temperature != cfg.temperature)
        throw ConfigError("training config does not match the probe's window, temperature or loss variant");
}

}  // namespace

void TrainingConfig::validate() const {
    if (window_size < 1) throw ConfigError("window_size must be >= 1");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

double anneal_weight(const TrainingConfig& cfg, std::size_t step) {
    if (cfg.loss_variant != LossVariant::annealed_cummax) return 0.0;
    if (cfg.anneal_steps < 1) throw ConfigError("anneal_steps must be >= 1 for annealed_cummax");
    if (step >= cfg.anneal_steps) return 1.0;
    return static_cast<double>(step) / static_cast<double>(cfg.anneal_steps);
}

namespace detail {

HeadOutput loss_head(std::span<const double> z, double y, LossVariant variant, double tau, double omega,
                     bool differentiate_weights, bool want_gradient) {
    const std::size_t n = z.size();
    if (n == 0) throw DataError("zero usable positions");
    HeadOutput out;
    auto& b = out.breakdown;
    b.logits.assign(z.begin(), z.end());
    b.per_token_bce.resize(n);
    b.predictions.resize(n);
    if (want_gradient) out.d_logits.assign(n, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);

    switch (variant) {
        case LossVariant::plain_bce:
        case LossVariant::swim_only: {
            b.per_token_weights.assign(n, inv_n);
            for (std::size_t t = 0; t < n; ++t) {
                b.per_token_bce[t] = bce_with_logit(y, z[t]);
                b.predictions[t] = sigmoid(z[t]);
                b.total += inv_n * b.per_token_bce[t];
                if (want_gradient) out.d_logits[t] = inv_n * (b.predictions[t] - y);
            }
            break;
        }
        case LossVariant::softmax_swim:
        case LossVariant::softmax_only: {
            b.per_token_weights = softmax_weights(z, tau);
            for (std::size_t t = 0; t < n; ++t) {
                b.per_token_bce[t] = bce_with_logit(y, z[t]);
                b.predictions[t] = sigmoid(z[t]);
                b.total += b.per_token_weights[t] * b.per_token_bce[t];
            }
            if (want_gradient) {
                for (std::size_t t = 0; t < n; ++t) {
                    const double w = b.per_token_weights[t];
                    out.d_logits[t] = w * (b.predictions[t] - y);
                    if (differentiate_weights) out.d_logits[t] += (w / tau) * (b.per_token_bce[t] - b.total);
                }
            }
            break;
        }
        case LossVariant::cummax: {
            // Only the final position's running maximum is scored.
            b.per_token_weights.assign(n, 0.0);
            b.per_token_weights[n - 1] = 1.0;
            std::size_t arg = 0;
            for (std::size_t t = 0; t < n; ++t) {
                if (z[t] > z[arg]) arg = t;
                b.per_token_bce[t] = bce_with_logit(y, z[arg]);
                b.predictions[t] = sigmoid(z[arg]);
            }
            b.total = b.per_token_bce[n - 1];
            if (want_gradient) out.d_logits[arg] = b.predictions[n - 1] - y;
            break;
        }
        case LossVariant::annealed_cummax: {
            // p_t = (1 - w) s(z_t) + w s(max_{u<=t} z_u), evaluated in log space.
            b.per_token_weights.assign(n, inv_n);
            const double log_keep = log_or_neg_inf(1.0 - omega);
            const double log_omega = log_or_neg_inf(omega);
            std::size_t arg = 0;
            for (std::size_t t = 0; t < n; ++t) {
                if (z[t] > z[arg]) arg = t;
                const double a = z[t];
                const double m = z[arg];
                const double log_p = log_add_exp(log_keep - softplus(-a), log_omega - softplus(-m));
                const double log_q = log_add_exp(log_keep - softplus(a), log_omega - softplus(m));
                b.per_token_bce[t] = y * (-log_p) + (1.0 - y) * (-log_q);
                b.predictions[t] = std::exp(log_p);
                b.total += inv_n * b.per_token_bce[t];
                if (want_gradient) {
                    // dl/dp = -y/p + (1-y)/(1-p); ds(x)/dx = s(x)(1 - s(x)).
                    auto chain = [&](double x) {
                        const double log_ds = -softplus(-x) - softplus(x);
                        return -y * std::exp(log_ds - log_p) + (1.0 - y) * std::exp(log_ds - log_q);
                    };
                    if (omega < 1.0) out.d_logits[t] += inv_n * (1.0 - omega) * chain(a);
                    if (omega > 0.0) out.d_logits[arg] += inv_n * omega * chain(m);
                }
            }
            break;
        }
    }
    return out;
}

PositionFeatures position_features(const ProbeParameters& probe, const ActivationSequence& seq, std::size_t window) {
    check_compatible(probe, seq);
    if (seq.n_tokens == 0) throw DataError("zero usable positions");
    PositionFeatures pf;
    pf.dim = seq.feature_dim;
    pf.range = range_for(seq.n_tokens, window);
    const std::size_t span = pf.range.aggregate ? seq.n_tokens : window;
    pf.n_positions = pf.range.aggregate ? 1 : seq.n_tokens - window + 1;
    pf.rows.assign(pf.n_positions * pf.dim, 0.0);

    std::vector<double> standardized(seq.n_tokens * pf.dim);
    for (std::size_t t = 0; t < seq.n_tokens; ++t) {
        auto r = seq.row(t);
        for (std::size_t j = 0; j < pf.dim; ++j)
            standardized[t * pf.dim + j] = (static_cast<double>(r[j]) - probe.norm_mean[j]) / probe.norm_std[j];
    }
    for (std::size_t s = 0; s < pf.n_positions; ++s) {
        double* dst = pf.rows.data() + s * pf.dim;
        for (std::size_t k = s; k < s + span; ++k)
            for (std::size_t j = 0; j < pf.dim; ++j) dst[j] += standardized[k * pf.dim + j];
        for (std::size_t j = 0; j < pf.dim; ++j) dst[j] /= static_cast<double>(span);
    }
    return pf;
}

LossGradient gradient_from_positions(std::span<const double> weights, double bias, const PositionFeatures& pos,
                                     double label, const TrainingConfig& cfg, double omega) {
    std::vector<double> z(pos.n_positions);
    for (std::size_t s = 0; s < pos.n_positions; ++s) {
        auto r = pos.row(s);
        double acc = bias;
        for (std::size_t j = 0; j < pos.dim; ++j) acc += weights[j] * r[j];
        z[s] = acc;
    }
    auto head = loss_head(z, label, cfg.loss_variant, cfg.temperature, omega, cfg.differentiate_weights, true);
    LossGradient g;
    g.loss = head.breakdown.total;
    g.d_weights.assign(pos.dim, 0.0);
    for (std::size_t s = 0; s < pos.n_positions; ++s) {
        const double gs = head.d_logits[s];
        if (gs == 0.0) continue;
        auto r = pos.row(s);
        for (std::size_t j = 0; j < pos.dim; ++j) g.d_weights[j] += gs * r[j];
        g.d_bias += gs;
    }
    return g;
}

}  // namespace detail

LossBreakdown sequence_loss(const ProbeParameters& probe, const LabeledExchange& exchange, const TrainingConfig& cfg,
                            std::size_t step) {
    check_consistent(probe, cfg);
    const auto& seq = exchange.sequence;
    if (seq.n_tokens == 0) throw DataError("zero usable positions in exchange '" + exchange.id + "'");
    const std::size_t window = loss_window(cfg);
    const auto raw = raw_logits(probe, seq);
    const auto z = window_means(raw, window);
    auto head = detail::loss_head(z, exchange.label, cfg.loss_variant, cfg.temperature, anneal_weight(cfg, step),
                                  cfg.differentiate_weights, false);
    head.breakdown.positions_used = range_for(seq.n_tokens, window);
    return std::move(head.breakdown);
}

LossGradient sequence_loss_gradient(const ProbeParameters& probe, const LabeledExchange& exchange,
                                    const TrainingConfig& cfg, std::size_t step) {
    check_consistent(probe, cfg);
    const auto pos = detail::position_features(probe, exchange.sequence, loss_window(cfg));
    return detail::gradient_from_positions(probe.weights, probe.bias, pos, exchange.label, cfg,
                                           anneal_weight(cfg, step));
}

}  // namespace streamprobe
