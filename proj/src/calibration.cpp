#include "streamprobe/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace streamprobe {

CalibrationResult calibrate_threshold(std::span<const double> scores, double q) {
    if (scores.empty()) throw std::invalid_argument("calibrate_threshold: empty score list");
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("calibrate_threshold: target rate must lie in (0, 1)");
    std::vector<double> sorted(scores.begin(), scores.end());
    for (double s : sorted)
        if (std::isnan(s)) throw std::invalid_argument("calibrate_threshold: NaN score");
    std::sort(sorted.begin(), sorted.end());

    const std::size_t n = sorted.size();
    // The small slack keeps products such as 0.02 * 100 from rounding below
    // their integer value.
    const double budget = q * static_cast<double>(n);
    const auto allowed = std::min<std::size_t>(n - 1, static_cast<std::size_t>(std::floor(budget + 1e-9)));

    CalibrationResult r;
    r.target_rate = q;
    r.n_benign = n;
    r.order_statistic_index = n - 1 - allowed;
    r.threshold = sorted[r.order_statistic_index];
    const auto above = std::upper_bound(sorted.begin(), sorted.end(), r.threshold);
    r.n_exceeding = static_cast<std::size_t>(sorted.end() - above);
    r.realized_rate = static_cast<double>(r.n_exceeding) / static_cast<double>(n);
    if (budget < 1.0) {
        r.insufficient_sample = true;
        r.warning = "target rate " + std::to_string(q) + " is below 1/n for n = " + std::to_string(n) +
                    "; threshold set to the maximum score";
    }
    return r;
}

BinomialInterval binomial_interval(std::size_t n, double p, double level) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binomial_interval: p must lie in [0, 1]");
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("binomial_interval: level must lie in (0, 1)");
    if (p == 0.0) return {0, 0};
    if (p == 1.0) return {n, n};
    const double lo_tail = (1.0 - level) / 2.0;
    const double hi_tail = (1.0 + level) / 2.0;
    const double log_p = std::log(p);
    const double log_q = std::log1p(-p);
    const double log_n_fact = std::lgamma(static_cast<double>(n) + 1.0);
    BinomialInterval out{n, n};
    bool have_lo = false;
    double cdf = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
        const double kd = static_cast<double>(k);
        const double log_pmf = log_n_fact - std::lgamma(kd + 1.0) - std::lgamma(static_cast<double>(n - k) + 1.0) +
                               kd * log_p + static_cast<double>(n - k) * log_q;
        cdf += std::exp(log_pmf);
        if (!have_lo && cdf >= lo_tail) {
            out.lo = k;
            have_lo = true;
        }
        if (cdf >= hi_tail) {
            out.hi = k;
            break;
        }
    }
    return out;
}

}  // namespace streamprobe
