#include "streamprobe/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "streamprobe/errors.hpp"

namespace streamprobe {

std::vector<double> window_means(std::span<const double> raw, std::size_t window) {
    if (window < 1) throw std::invalid_argument("window must be >= 1");
    if (raw.empty()) throw DataError("cannot smooth an empty logit sequence");
    if (raw.size() < window) {
        double sum = 0.0;
        for (double z : raw) sum += z;
        return {sum / static_cast<double>(raw.size())};
    }
    std::vector<double> out(raw.size() - window + 1);
    for (std::size_t k = 0; k < out.size(); ++k) {
        double sum = 0.0;
        for (std::size_t j = k; j < k + window; ++j) sum += raw[j];
        out[k] = sum / static_cast<double>(window);
    }
    return out;
}

std::vector<double> windowed_logits(const ProbeParameters& probe, const ActivationSequence& seq) {
    return window_means(raw_logits(probe, seq), probe.window_size);
}

std::vector<double> softmax_weights(std::span<const double> logits, double temperature) {
    if (logits.empty()) throw std::invalid_argument("softmax_weights: empty input");
    if (!(temperature > 0.0)) throw std::invalid_argument("softmax_weights: temperature must be > 0");
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> w(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp((logits[i] - top) / temperature);
        sum += w[i];
    }
    for (double& x : w) x /= sum;
    return w;
}

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double bce_with_logit(double y, double logit) {
    // -y log s(z) - (1-y) log(1 - s(z)) with log s(z) = -softplus(-z).
    return y * softplus(-logit) + (1.0 - y) * softplus(logit);
}

}  // namespace streamprobe
