#include "streamprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "streamprobe/calibration.hpp"

namespace streamprobe {

double attack_success_rate(std::span<const Outcome> outcomes) {
    std::size_t attacks = 0, missed = 0;
    for (const auto& o : outcomes) {
        if (!o.is_attack) continue;
        ++attacks;
        if (!o.blocked) ++missed;
    }
    if (attacks == 0) throw std::invalid_argument("attack_success_rate: no attack exchanges");
    return static_cast<double>(missed) / static_cast<double>(attacks);
}

double benign_flag_rate(std::span<const Outcome> outcomes) {
    std::size_t benign = 0, flagged = 0;
    for (const auto& o : outcomes) {
        if (o.is_attack) continue;
        ++benign;
        if (o.blocked) ++flagged;
    }
    if (benign == 0) throw std::invalid_argument("benign_flag_rate: no benign exchanges");
    return static_cast<double>(flagged) / static_cast<double>(benign);
}

std::vector<double> fractional_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return values[i] < values[j]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman_rank_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
    if (a.size() < 2) throw std::invalid_argument("spearman: need at least two points");
    const auto ra = fractional_ranks(a);
    const auto rb = fractional_ranks(b);
    const double n = static_cast<double>(a.size());
    const double mean = (n + 1.0) / 2.0;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double da = ra[i] - mean, db = rb[i] - mean;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double roc_auc(std::span<const double> pos, std::span<const double> neg) {
    if (pos.empty() || neg.empty()) throw std::invalid_argument("roc_auc: need both classes");
    std::vector<double> all(pos.begin(), pos.end());
    all.insert(all.end(), neg.begin(), neg.end());
    const auto ranks = fractional_ranks(all);
    double pos_rank_sum = 0.0;
    for (std::size_t i = 0; i < pos.size(); ++i) pos_rank_sum += ranks[i];
    const double np = static_cast<double>(pos.size()), nn = static_cast<double>(neg.size());
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

OperatingPoint evaluate_at_flag_rate(std::span<const double> benign, std::span<const double> attacks, double q) {
    if (attacks.empty()) throw std::invalid_argument("evaluate_at_flag_rate: no attack scores");
    const auto cal = calibrate_threshold(benign, q);
    OperatingPoint op;
    op.threshold = cal.threshold;
    op.benign_flag_rate = cal.realized_rate;
    for (double s : attacks)
        if (!(s > cal.threshold)) ++op.attacks_unblocked;
    op.attack_success_rate = static_cast<double>(op.attacks_unblocked) / static_cast<double>(attacks.size());
    return op;
}

}  // namespace streamprobe
