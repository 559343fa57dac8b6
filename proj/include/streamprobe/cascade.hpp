#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "streamprobe/activation.hpp"
#include "streamprobe/cost_model.hpp"
#include "streamprobe/kv_config.hpp"
#include "streamprobe/streaming.hpp"

namespace streamprobe {

// An expensive classifier consulted only for escalated exchanges. It sees the
// whole exchange and returns a logit.
class SecondStageScorer {
public:
    virtual ~SecondStageScorer() = default;
    virtual double score(const LabeledExchange& exchange) const = 0;
    virtual std::string_view name() const = 0;
};

// A second linear probe used as the second stage. Its logit is the largest
// smoothed logit over the exchange's decision points.
class ProbeStageScorer final : public SecondStageScorer {
public:
    ProbeStageScorer(ProbeParameters probe, StreamConfig cfg);
    double score(const LabeledExchange& exchange) const override;
    std::string_view name() const override { return "probe"; }

private:
    ProbeParameters probe_;
    StreamConfig cfg_;
};

struct CascadeConfig {
    double stage1_threshold = 0.0;
    double ensemble_alpha = 0.5;
    double final_threshold = 0.0;
    CostModel cost;

    void validate() const;  // throws ConfigError
};

inline constexpr double kDefaultEnsembleAlpha = 0.5;
inline constexpr double kProductionEnsembleAlpha = 0.55;

// Reads stage1_threshold, alpha, final_threshold and cost.* keys from a
// strict key-value file. Unspecified keys keep `defaults`.
CascadeConfig load_cascade_config(const KeyValueConfig& kv, const CascadeConfig& defaults = {});
void save_cascade_config(const std::filesystem::path& path, const CascadeConfig& cfg);

// alpha * z1 + (1 - alpha) * z2. Throws std::invalid_argument unless
// 0 <= alpha <= 1.
double ensemble_logit(double z1, double z2, double alpha);

struct CascadeDecision {
    bool escalated = false;
    std::optional<std::size_t> escalated_at;
    double stage1_max_logit = 0.0;
    std::optional<double> stage2_logit;
    double final_logit = 0.0;
    bool blocked = false;
    std::optional<std::size_t> flagged_at;
};

// Second-stage failure; carries the stage-1 result computed before it.
class CascadeError : public std::runtime_error {
public:
    CascadeError(const std::string& what, CascadeDecision stage1)
        : std::runtime_error(what), stage1_(std::move(stage1)) {}
    const CascadeDecision& stage1() const noexcept { return stage1_; }

private:
    CascadeDecision stage1_;
};

// Applies the two-stage rule to a probe trace of the exchange: escalate at
// the first decision point whose smoothed logit exceeds stage1_threshold; an
// escalated exchange is blocked when ensemble_logit(stage-1 max, stage-2
// logit, alpha) exceeds final_threshold. Exchanges that never escalate are
// never blocked.
CascadeDecision cascade_decide(const ScoreTrace& probe_trace, const SecondStageScorer& stage2,
                               const CascadeConfig& cfg, const LabeledExchange& exchange);

// Streams the probe over the exchange first, then decides.
CascadeDecision cascade_decide(const ProbeParameters& probe, const StreamConfig& stream_cfg,
                               const SecondStageScorer& stage2, const CascadeConfig& cfg,
                               const LabeledExchange& exchange);

// Tab-separated "id escalated stage1_max stage2 final blocked"; stage2 is NA
// when the exchange was not escalated.
void write_decision(std::ostream& out, std::string_view id, const CascadeDecision& d);

}  // namespace streamprobe
