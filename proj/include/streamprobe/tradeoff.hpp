#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "streamprobe/activation.hpp"
#include "streamprobe/cascade.hpp"
#include "streamprobe/cost_model.hpp"

namespace streamprobe {

// Per-exchange inputs of a cascade sweep. An exchange escalates at stage-1
// threshold t exactly when stage1_max > t, and the second stage always sees
// the full exchange, so these two numbers decide every sweep point.
struct ExchangeScores {
    bool is_attack = false;
    double stage1_max = 0.0;
    double stage2 = 0.0;
};

std::vector<ExchangeScores> collect_scores(std::span<const LabeledExchange> exchanges, const ProbeParameters& probe,
                                           const StreamConfig& stream_cfg, const SecondStageScorer& stage2);

struct TradeoffPoint {
    double stage1_threshold = 0.0;
    double escalation_fraction = 0.0;
    double relative_cost = 0.0;
    double attack_success_rate = 0.0;
    double benign_flag_rate = 0.0;
    double final_threshold = 0.0;
    bool valid = true;
    std::string error;
};

// One point per stage-1 threshold, in input order. At each point the final
// threshold is recalibrated to benign flag rate q on the ensemble logits of
// the benign exchanges, with non-escalated exchanges scoring -inf. A point
// whose calibration or rate computation fails is returned with valid = false.
std::vector<TradeoffPoint> sweep_tradeoff(std::span<const ExchangeScores> scores, double alpha, double q,
                                          std::span<const double> stage1_thresholds, const CostModel& cost);

// Tab-separated, one point per line, after a '#' header line.
void write_tradeoff(std::ostream& out, std::span<const TradeoffPoint> points);

}  // namespace streamprobe
