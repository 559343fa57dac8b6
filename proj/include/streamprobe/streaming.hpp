#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "streamprobe/activation.hpp"
#include "streamprobe/probe.hpp"

namespace streamprobe {

enum class Smoothing { ema, sliding_window };

std::string_view to_string(Smoothing s);
std::optional<Smoothing> parse_smoothing(std::string_view text);

struct StreamConfig {
    Smoothing smoothing = Smoothing::ema;
    std::size_t window_size = 16;
    // EMA decay; unset means 1 - 1/window_size.
    std::optional<double> ema_decay;
    std::size_t batch_size = 8;
    // Flags fire when the smoothed logit is strictly greater than this.
    double threshold = 0.0;
    // Also evaluate a flag decision at the last prompt token.
    bool check_prompt_boundary = true;

    double decay() const;
    // Throws ConfigError.
    void validate() const;
};

// The scorer configuration a probe is meant to be read with: EMA with decay
// 1 - 1/M for smoothed probes, an unsmoothed (window 1) scorer otherwise.
StreamConfig stream_config_for(const ProbeParameters& probe, double threshold = 0.0);

// Online state of one generation stream. In EMA mode it holds one scalar plus
// counters; sliding-window mode adds a fixed ring of window_size logits.
struct StreamState {
    double ema_value = 0.0;
    bool ema_started = false;
    std::vector<double> window_buffer;  // ring, capacity fixed at init
    std::size_t ring_head = 0;          // slot of the oldest logit
    std::size_t ring_count = 0;
    std::size_t tokens_seen = 0;
    std::size_t prompt_tokens = 0;
    double running_cummax_prob = 0.0;
    std::optional<std::size_t> flagged_at;

    // Bytes owned by the state, including the ring buffer.
    std::size_t footprint_bytes() const { return sizeof(*this) + window_buffer.capacity() * sizeof(double); }
};

class StreamFlaggedError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Fresh state for a stream whose first `prompt_tokens` tokens are the prompt.
// Flag decisions are taken at every response token and, when
// cfg.check_prompt_boundary is set, at the last prompt token.
StreamState init_stream(const StreamConfig& cfg, std::size_t prompt_tokens = 0);

// Whether token `t` of a stream with `prompt_tokens` prompt tokens is a flag
// decision point.
bool is_decision_point(const StreamConfig& cfg, std::size_t prompt_tokens, std::size_t t);

struct StreamUpdate {
    std::vector<double> raw;
    std::vector<double> smoothed;
    std::vector<double> cummax_prob;
    std::optional<std::size_t> flag_event;  // absolute token index
};

// Scores a batch of feature rows (row-major, feature_dim columns each) in
// order. Tokens after a flag inside the same batch are still scored, but the
// flag is terminal. Throws StreamFlaggedError when the stream is already
// flagged and DimensionError on a width mismatch.
StreamUpdate update_stream(StreamState& state, const ProbeParameters& probe, const StreamConfig& cfg,
                           std::span<const float> feature_rows);

struct ScoreTrace {
    std::vector<double> per_token_raw_logits;
    std::vector<double> per_token_smoothed;
    std::vector<double> cummax_prob;  // running max of sigmoid(smoothed)
    std::vector<std::uint8_t> decision_point;
    std::optional<std::size_t> flagged_at;
    double threshold_used = 0.0;
    // First token whose smoothed value covers a full window (sliding-window
    // mode); earlier values are prefix means.
    std::size_t first_full_window = 0;

    // Largest smoothed logit over decision points, -inf when there are none.
    // The exchange flags at threshold v exactly when this exceeds v.
    double max_decision_logit() const;
};

// Replays the exchange through update_stream in batches of cfg.batch_size.
ScoreTrace score_exchange(const ProbeParameters& probe, const ActivationSequence& seq, const StreamConfig& cfg);

// score_exchange(...).max_decision_logit() without building the trace.
double max_decision_logit(const ProbeParameters& probe, const ActivationSequence& seq, const StreamConfig& cfg);

// Line-delimited "id t raw smoothed cummax flagged" records (tab-separated);
// flagged is 1 from the flag token onward.
void write_trace(std::ostream& out, std::string_view id, const ScoreTrace& trace);

}  // namespace streamprobe
