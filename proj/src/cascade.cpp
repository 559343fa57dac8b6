#include "streamprobe/cascade.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include "streamprobe/errors.hpp"

namespace streamprobe {

ProbeStageScorer::ProbeStageScorer(ProbeParameters probe, StreamConfig cfg)
    : probe_(std::move(probe)), cfg_(cfg) {
    validate_probe(probe_);
    cfg_.validate();
}

double ProbeStageScorer::score(const LabeledExchange& exchange) const {
    return max_decision_logit(probe_, exchange.sequence, cfg_);
}

void CascadeConfig::validate() const {
    if (!(ensemble_alpha >= 0.0 && ensemble_alpha <= 1.0)) throw ConfigError("ensemble alpha must lie in [0, 1]");
    if (std::isnan(stage1_threshold) || std::isnan(final_threshold)) throw ConfigError("cascade threshold is NaN");
    cost.validate();
}

CascadeConfig load_cascade_config(const KeyValueConfig& kv, const CascadeConfig& defaults) {
    CascadeConfig c = defaults;
    c.stage1_threshold = kv.get_double("stage1_threshold", c.stage1_threshold);
    c.ensemble_alpha = kv.get_double("alpha", c.ensemble_alpha);
    c.final_threshold = kv.get_double("final_threshold", c.final_threshold);
    c.cost.probe_layers = kv.get_double("cost.probe_layers", c.cost.probe_layers);
    c.cost.hidden_dim = kv.get_double("cost.hidden_dim", c.cost.hidden_dim);
    c.cost.stage2_params = kv.get_double("cost.stage2_params", c.cost.stage2_params);
    c.cost.tokens_per_exchange = kv.get_double("cost.tokens_per_exchange", c.cost.tokens_per_exchange);
    c.validate();
    return c;
}

void save_cascade_config(const std::filesystem::path& path, const CascadeConfig& c) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.precision(17);
    out << "stage1_threshold = " << c.stage1_threshold << '\n'
        << "alpha = " << c.ensemble_alpha << '\n'
        << "final_threshold = " << c.final_threshold << '\n'
        << "cost.probe_layers = " << c.cost.probe_layers << '\n'
        << "cost.hidden_dim = " << c.cost.hidden_dim << '\n'
        << "cost.stage2_params = " << c.cost.stage2_params << '\n'
        << "cost.tokens_per_exchange = " << c.cost.tokens_per_exchange << '\n';
}

double ensemble_logit(double z1, double z2, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("ensemble alpha must lie in [0, 1]");
    return alpha * z1 + (1.0 - alpha) * z2;
}

CascadeDecision cascade_decide(const ScoreTrace& trace, const SecondStageScorer& stage2, const CascadeConfig& cfg,
                               const LabeledExchange& exchange) {
    cfg.validate();
    CascadeDecision d;
    d.stage1_max_logit = trace.max_decision_logit();
    d.final_logit = d.stage1_max_logit;
    for (std::size_t t = 0; t < trace.per_token_smoothed.size(); ++t) {
        if (trace.decision_point[t] && trace.per_token_smoothed[t] > cfg.stage1_threshold) {
            d.escalated_at = t;
            break;
        }
    }
    if (!d.escalated_at) return d;
    d.escalated = true;

    double z2;
    try {
        z2 = stage2.score(exchange);
    } catch (const std::exception& e) {
        throw CascadeError(std::string("second-stage scorer '") + std::string(stage2.name()) + "' failed: " + e.what(),
                           d);
    }
    if (!std::isfinite(z2))
        throw CascadeError("second-stage scorer '" + std::string(stage2.name()) + "' returned a non-finite logit", d);
    d.stage2_logit = z2;
    d.final_logit = ensemble_logit(d.stage1_max_logit, z2, cfg.ensemble_alpha);
    d.blocked = d.final_logit > cfg.final_threshold;
    if (d.blocked) d.flagged_at = d.escalated_at;
    return d;
}

CascadeDecision cascade_decide(const ProbeParameters& probe, const StreamConfig& stream_cfg,
                               const SecondStageScorer& stage2, const CascadeConfig& cfg,
                               const LabeledExchange& exchange) {
    StreamConfig s = stream_cfg;
    s.threshold = cfg.stage1_threshold;
    return cascade_decide(score_exchange(probe, exchange.sequence, s), stage2, cfg, exchange);
}

void write_decision(std::ostream& out, std::string_view id, const CascadeDecision& d) {
    const auto old_precision = out.precision(17);
    out << id << '\t' << (d.escalated ? 1 : 0) << '\t' << d.stage1_max_logit << '\t';
    if (d.stage2_logit)
        out << *d.stage2_logit;
    else
        out << "NA";
    out << '\t' << d.final_logit << '\t' << (d.blocked ? 1 : 0) << '\n';
    out.precision(old_precision);
}

}  // namespace streamprobe
