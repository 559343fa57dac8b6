#include "streamprobe/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "streamprobe/errors.hpp"
#include "streamprobe/parallel.hpp"

namespace streamprobe {

NormalizationStats compute_normalization(std::span<const LabeledExchange> exchanges) {
    if (exchanges.empty()) throw DataError("cannot compute normalization of an empty dataset");
    const std::size_t d = exchanges.front().sequence.feature_dim;
    NormalizationStats stats;
    stats.mean.assign(d, 0.0);
    stats.std.assign(d, 0.0);
    std::size_t count = 0;
    for (const auto& ex : exchanges) {
        const auto& seq = ex.sequence;
        if (seq.feature_dim != d) throw DimensionError("exchange '" + ex.id + "' has a different feature_dim");
        for (std::size_t t = 0; t < seq.n_tokens; ++t) {
            auto r = seq.row(t);
            for (std::size_t j = 0; j < d; ++j) stats.mean[j] += r[j];
        }
        count += seq.n_tokens;
    }
    if (count == 0) throw DataError("dataset has no tokens");
    for (double& m : stats.mean) m /= static_cast<double>(count);
    for (const auto& ex : exchanges) {
        const auto& seq = ex.sequence;
        for (std::size_t t = 0; t < seq.n_tokens; ++t) {
            auto r = seq.row(t);
            for (std::size_t j = 0; j < d; ++j) {
                const double dev = r[j] - stats.mean[j];
                stats.std[j] += dev * dev;
            }
        }
    }
    for (double& s : stats.std) s = std::max(std::sqrt(s / static_cast<double>(count)), kMinStd);
    return stats;
}

TrainingResult train_probe(std::span<const LabeledExchange> exchanges, const TrainingConfig& cfg_in) {
    cfg_in.validate();
    if (exchanges.empty()) throw DataError("training set is empty");
    const auto& layers = exchanges.front().sequence.layer_map;
    bool has_pos = false, has_neg = false;
    for (const auto& ex : exchanges) {
        if (ex.sequence.layer_map != layers)
            throw DimensionError("exchange '" + ex.id + "' has a different layer map from the first exchange");
        if (ex.sequence.n_tokens == 0) throw DataError("exchange '" + ex.id + "' has no tokens");
        (ex.is_positive() ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) throw DataError("single-class training set: need labels both >= 0.5 and < 0.5");

    const std::size_t n = exchanges.size();
    const std::size_t batches_per_epoch = (n + cfg_in.batch_size - 1) / cfg_in.batch_size;
    TrainingConfig cfg = cfg_in;
    if (cfg.loss_variant == LossVariant::annealed_cummax && cfg.anneal_steps == 0)
        cfg.anneal_steps = std::max<std::size_t>(1, batches_per_epoch * cfg.epochs);

    TrainingResult result;
    auto& probe = result.probe;
    probe = make_probe(layers, cfg.window_size, cfg.temperature, cfg.loss_variant);
    auto norm = compute_normalization(exchanges);
    probe.norm_mean = std::move(norm.mean);
    probe.norm_std = std::move(norm.std);
    const std::size_t d = probe.weights.size();

    const std::size_t window = uses_smoothing(cfg.loss_variant) ? cfg.window_size : 1;
    std::vector<detail::PositionFeatures> positions(n);
    parallel_for(n, [&](std::size_t i) {
        positions[i] = detail::position_features(probe, exchanges[i].sequence, window);
    });

    // Adam state over [weights..., bias].
    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::vector<double> m(d + 1, 0.0), v(d + 1, 0.0), grad(d + 1);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(cfg.seed);
    std::size_t step = 0;
    std::vector<LossGradient> per_example;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            const std::size_t lo = b * cfg.batch_size;
            const std::size_t hi = std::min(n, lo + cfg.batch_size);
            const double omega = anneal_weight(cfg, step);
            per_example.assign(hi - lo, {});
            parallel_for(hi - lo, [&](std::size_t k) {
                const std::size_t i = order[lo + k];
                per_example[k] = detail::gradient_from_positions(probe.weights, probe.bias, positions[i],
                                                                 exchanges[i].label, cfg, omega);
            });
            std::fill(grad.begin(), grad.end(), 0.0);
            const double scale = 1.0 / static_cast<double>(hi - lo);
            for (const auto& g : per_example) {
                for (std::size_t j = 0; j < d; ++j) grad[j] += g.d_weights[j];
                grad[d] += g.d_bias;
                epoch_loss += g.loss;
            }
            ++step;
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t j = 0; j <= d; ++j) {
                const double gj = grad[j] * scale;
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                const double update = cfg.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + adam_eps);
                if (j < d)
                    probe.weights[j] -= update;
                else
                    probe.bias -= update;
            }
        }
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        result.log.push_back({epoch + 1, epoch_loss / static_cast<double>(n), elapsed.count()});
    }
    for (double w : probe.weights)
        if (!std::isfinite(w)) throw InvariantError("training diverged: non-finite probe weight");
    return result;
}

void write_training_log(const std::filesystem::path& path, std::span<const EpochRecord> log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.precision(10);
    for (const auto& r : log) out << r.epoch << '\t' << r.mean_loss << '\t' << r.wall_seconds << '\n';
}

}  // namespace streamprobe
