#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace streamprobe {

struct CalibrationResult {
    double threshold = 0.0;
    double target_rate = 0.0;
    double realized_rate = 0.0;
    std::size_t n_benign = 0;
    std::size_t n_exceeding = 0;
    // Index of the threshold in the ascending sort of the scores.
    std::size_t order_statistic_index = 0;
    // q * n < 1: no score may exceed the threshold, so it is the maximum.
    bool insufficient_sample = false;
    std::string warning;
};

// Smallest observed score v with |{s : s > v}| / n <= q. Flagging is
// strictly-greater, so the realized rate on `scores` never exceeds q. Throws
// std::invalid_argument on empty input, NaN scores, or q outside (0, 1).
CalibrationResult calibrate_threshold(std::span<const double> benign_max_scores, double q);

struct BinomialInterval {
    std::size_t lo = 0;  // inclusive count bounds
    std::size_t hi = 0;
};

// Equal-tailed interval of Binomial(n, p) counts: lo is the smallest k with
// P(X <= k) >= (1 - level) / 2 and hi the smallest k with
// P(X <= k) >= (1 + level) / 2.
BinomialInterval binomial_interval(std::size_t n, double p, double level = 0.95);

}  // namespace streamprobe
