#include "streamprobe/tradeoff.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "streamprobe/calibration.hpp"
#include "streamprobe/metrics.hpp"
#include "streamprobe/parallel.hpp"

namespace streamprobe {

std::vector<ExchangeScores> collect_scores(std::span<const LabeledExchange> exchanges, const ProbeParameters& probe,
                                           const StreamConfig& stream_cfg, const SecondStageScorer& stage2) {
    std::vector<ExchangeScores> out(exchanges.size());
    parallel_for(exchanges.size(), [&](std::size_t i) {
        out[i].is_attack = exchanges[i].is_positive();
        out[i].stage1_max = max_decision_logit(probe, exchanges[i].sequence, stream_cfg);
        out[i].stage2 = stage2.score(exchanges[i]);
    });
    return out;
}

namespace {

TradeoffPoint evaluate_point(std::span<const ExchangeScores> scores, double alpha, double q, double t1,
                             const CostModel& cost) {
    constexpr double kNever = -std::numeric_limits<double>::infinity();
    TradeoffPoint p;
    p.stage1_threshold = t1;
    std::vector<double> final_scores(scores.size());
    std::vector<double> benign;
    std::size_t escalated = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto& s = scores[i];
        if (s.stage1_max > t1) {
            ++escalated;
            final_scores[i] = ensemble_logit(s.stage1_max, s.stage2, alpha);
        } else {
            final_scores[i] = kNever;
        }
        if (!s.is_attack) benign.push_back(final_scores[i]);
    }
    if (scores.empty()) throw std::invalid_argument("sweep: no exchanges");
    p.escalation_fraction = static_cast<double>(escalated) / static_cast<double>(scores.size());
    p.relative_cost = system_cost(cost, p.escalation_fraction).relative;

    const auto cal = calibrate_threshold(benign, q);
    p.final_threshold = cal.threshold;
    std::vector<Outcome> outcomes(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        // -inf never exceeds any threshold, so unescalated exchanges pass.
        outcomes[i] = {final_scores[i] > cal.threshold, scores[i].is_attack};
    }
    p.attack_success_rate = attack_success_rate(outcomes);
    p.benign_flag_rate = benign_flag_rate(outcomes);
    return p;
}

}  // namespace

std::vector<TradeoffPoint> sweep_tradeoff(std::span<const ExchangeScores> scores, double alpha, double q,
                                          std::span<const double> thresholds, const CostModel& cost) {
    std::vector<TradeoffPoint> points(thresholds.size());
    parallel_for(thresholds.size(), [&](std::size_t k) {
        try {
            points[k] = evaluate_point(scores, alpha, q, thresholds[k], cost);
        } catch (const std::exception& e) {
            points[k] = TradeoffPoint{};
            points[k].stage1_threshold = thresholds[k];
            points[k].valid = false;
            points[k].error = e.what();
        }
    });
    return points;
}

void write_tradeoff(std::ostream& out, std::span<const TradeoffPoint> points) {
    const auto old = out.precision(17);
    out << "#stage1_threshold\tescalation_fraction\trelative_cost\tattack_success_rate\tbenign_flag_rate"
           "\tfinal_threshold\tvalid\n";
    for (const auto& p : points) {
        out << p.stage1_threshold << '\t';
        if (p.valid) {
            out << p.escalation_fraction << '\t' << p.relative_cost << '\t' << p.attack_success_rate << '\t'
                << p.benign_flag_rate << '\t' << p.final_threshold << "\t1";
        } else {
            out << "NA\tNA\tNA\tNA\tNA\t0";
        }
        out << '\n';
    }
    out.precision(old);
}

}  // namespace streamprobe
