#pragma once

#include <optional>
#include <span>
#include <vector>

namespace streamprobe {

struct Outcome {
    bool blocked = false;
    bool is_attack = false;
};

// Fraction of attack exchanges that were not blocked. Benign entries are
// ignored. Throws std::invalid_argument when there are no attacks.
double attack_success_rate(std::span<const Outcome> outcomes);

// Fraction of benign exchanges that were blocked.
double benign_flag_rate(std::span<const Outcome> outcomes);

// 1-based ranks; tied values share the mean of their ranks.
std::vector<double> fractional_ranks(std::span<const double> values);

// Pearson correlation of fractional ranks. Returns nullopt when either input
// is constant (rho undefined). Throws std::invalid_argument on a length
// mismatch or fewer than two points.
std::optional<double> spearman_rank_correlation(std::span<const double> a, std::span<const double> b);

// Probability that a random positive outscores a random negative, ties
// counting one half.
double roc_auc(std::span<const double> positive_scores, std::span<const double> negative_scores);

struct OperatingPoint {
    double threshold = 0.0;
    double attack_success_rate = 0.0;
    double benign_flag_rate = 0.0;  // on the calibration set
    std::size_t attacks_unblocked = 0;
};

// Calibrates a threshold on benign scores to flag rate q and reads the attack
// success rate of the same score at that threshold.
OperatingPoint evaluate_at_flag_rate(std::span<const double> benign_scores, std::span<const double> attack_scores,
                                     double q);

}  // namespace streamprobe
