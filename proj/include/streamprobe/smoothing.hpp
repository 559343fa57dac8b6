#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "streamprobe/probe.hpp"

namespace streamprobe {

// Sliding-window means of `raw`: output k is the mean of raw[k .. k+window-1],
// so there are T - window + 1 outputs when T >= window. When T < window the
// result is a single value, the mean of every available logit. Each window is
// summed oldest-first and then divided by its length; the streaming scorer
// uses the same arithmetic so the two agree bitwise.
std::vector<double> window_means(std::span<const double> raw, std::size_t window);

// Window-averaged probe logits of `seq` using probe.window_size.
std::vector<double> windowed_logits(const ProbeParameters& probe, const ActivationSequence& seq);

// Softmax of logits / temperature with max-subtraction. Throws
// std::invalid_argument on empty input or non-positive temperature.
std::vector<double> softmax_weights(std::span<const double> logits, double temperature);

// Numerically stable log(1 + exp(x)).
double softplus(double x);
double sigmoid(double x);

// Binary cross-entropy of a Bernoulli(sigmoid(logit)) prediction against a
// soft label y in [0, 1].
double bce_with_logit(double y, double logit);

}  // namespace streamprobe
