#include "streamprobe/streaming.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "streamprobe/errors.hpp"
#include "streamprobe/smoothing.hpp"

namespace streamprobe {
namespace {

// Advances the smoother by one raw logit and returns the smoothed value.
double smooth_step(StreamState& s, const StreamConfig& cfg, double z) {
    double out;
    if (cfg.smoothing == Smoothing::ema) {
        if (!s.ema_started) {
            s.ema_value = z;
            s.ema_started = true;
        } else {
            const double lambda = cfg.decay();
            s.ema_value = lambda * s.ema_value + (1.0 - lambda) * z;
        }
        out = s.ema_value;
    } else {
        const std::size_t cap = s.window_buffer.size();
        if (s.ring_count < cap) {
            s.window_buffer[(s.ring_head + s.ring_count) % cap] = z;
            ++s.ring_count;
        } else {
            s.window_buffer[s.ring_head] = z;
            s.ring_head = (s.ring_head + 1) % cap;
        }
        double sum = 0.0;
        for (std::size_t k = 0; k < s.ring_count; ++k) sum += s.window_buffer[(s.ring_head + k) % cap];
        out = sum / static_cast<double>(s.ring_count);
    }
    s.running_cummax_prob = std::max(s.running_cummax_prob, sigmoid(out));
    ++s.tokens_seen;
    return out;
}

void check_width(const ProbeParameters& probe, std::span<const float> rows) {
    const std::size_t d = probe.feature_dim();
    if (d == 0 || rows.size() % d != 0)
        throw DimensionError("feature batch of " + std::to_string(rows.size()) + " values is not a multiple of " +
                             std::to_string(d) + " features");
}

// Shared token loop; the first decision point above threshold sets the flag.
template <typename Sink>
void run_tokens(StreamState& state, const ProbeParameters& probe, const StreamConfig& cfg,
                std::span<const float> rows, Sink&& sink) {
    const std::size_t d = probe.feature_dim();
    const std::size_t n = rows.size() / d;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t t = state.tokens_seen;
        const double z = raw_logit(probe, rows.subspan(k * d, d));
        const double s = smooth_step(state, cfg, z);
        const bool decide = is_decision_point(cfg, state.prompt_tokens, t);
        if (!state.flagged_at && decide && s > cfg.threshold) state.flagged_at = t;
        sink(t, z, s, decide);
    }
}

}  // namespace

std::string_view to_string(Smoothing s) {
    return s == Smoothing::ema ? "ema" : "sliding_window";
}

std::optional<Smoothing> parse_smoothing(std::string_view text) {
    if (text == "ema") return Smoothing::ema;
    if (text == "sliding_window") return Smoothing::sliding_window;
    return std::nullopt;
}

double StreamConfig::decay() const {
    if (ema_decay) return *ema_decay;
    return 1.0 - 1.0 / static_cast<double>(window_size);
}

void StreamConfig::validate() const {
    if (window_size < 1) throw ConfigError("stream window_size must be >= 1");
    if (batch_size < 1) throw ConfigError("stream batch_size must be >= 1");
    if (smoothing == Smoothing::ema) {
        const double lambda = decay();
        if (!(lambda > 0.0 && lambda < 1.0))
            throw ConfigError("ema_decay must lie strictly between 0 and 1, got " + std::to_string(lambda));
    }
    if (std::isnan(threshold)) throw ConfigError("stream threshold is NaN");
}

StreamConfig stream_config_for(const ProbeParameters& probe, double threshold) {
    StreamConfig cfg;
    const std::size_t m = effective_window(probe);
    cfg.window_size = m;
    cfg.smoothing = m > 1 ? Smoothing::ema : Smoothing::sliding_window;
    cfg.threshold = threshold;
    return cfg;
}

StreamState init_stream(const StreamConfig& cfg, std::size_t prompt_tokens) {
    cfg.validate();
    StreamState s;
    s.prompt_tokens = prompt_tokens;
    if (cfg.smoothing == Smoothing::sliding_window) s.window_buffer.assign(cfg.window_size, 0.0);
    return s;
}

bool is_decision_point(const StreamConfig& cfg, std::size_t prompt_tokens, std::size_t t) {
    if (t >= prompt_tokens) return true;
    return cfg.check_prompt_boundary && t + 1 == prompt_tokens;
}

StreamUpdate update_stream(StreamState& state, const ProbeParameters& probe, const StreamConfig& cfg,
                           std::span<const float> rows) {
    if (state.flagged_at) throw StreamFlaggedError("update on a flagged stream");
    check_width(probe, rows);
    StreamUpdate up;
    run_tokens(state, probe, cfg, rows, [&](std::size_t t, double z, double s, bool) {
        up.raw.push_back(z);
        up.smoothed.push_back(s);
        up.cummax_prob.push_back(state.running_cummax_prob);
        if (state.flagged_at == t) up.flag_event = t;
    });
    return up;
}

double ScoreTrace::max_decision_logit() const {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < per_token_smoothed.size(); ++t)
        if (decision_point[t]) best = std::max(best, per_token_smoothed[t]);
    return best;
}

ScoreTrace score_exchange(const ProbeParameters& probe, const ActivationSequence& seq, const StreamConfig& cfg) {
    check_compatible(probe, seq);
    auto state = init_stream(cfg, seq.prompt_length());
    ScoreTrace trace;
    trace.threshold_used = cfg.threshold;
    trace.first_full_window = cfg.smoothing == Smoothing::sliding_window ? cfg.window_size - 1 : 0;
    const std::size_t d = seq.feature_dim;
    auto sink = [&](std::size_t, double z, double s, bool decide) {
        trace.per_token_raw_logits.push_back(z);
        trace.per_token_smoothed.push_back(s);
        trace.cummax_prob.push_back(state.running_cummax_prob);
        trace.decision_point.push_back(decide ? 1 : 0);
    };
    for (std::size_t t0 = 0; t0 < seq.n_tokens; t0 += cfg.batch_size) {
        const std::size_t count = std::min(cfg.batch_size, seq.n_tokens - t0);
        const std::span<const float> rows(seq.features.data() + t0 * d, count * d);
        if (!state.flagged_at) {
            auto up = update_stream(state, probe, cfg, rows);
            trace.per_token_raw_logits.insert(trace.per_token_raw_logits.end(), up.raw.begin(), up.raw.end());
            trace.per_token_smoothed.insert(trace.per_token_smoothed.end(), up.smoothed.begin(), up.smoothed.end());
            trace.cummax_prob.insert(trace.cummax_prob.end(), up.cummax_prob.begin(), up.cummax_prob.end());
            for (std::size_t k = 0; k < count; ++k)
                trace.decision_point.push_back(is_decision_point(cfg, state.prompt_tokens, t0 + k) ? 1 : 0);
        } else {
            // Flagged streams are traced to the end for analysis only.
            run_tokens(state, probe, cfg, rows, sink);
        }
    }
    trace.flagged_at = state.flagged_at;
    return trace;
}

double max_decision_logit(const ProbeParameters& probe, const ActivationSequence& seq, const StreamConfig& cfg) {
    check_compatible(probe, seq);
    auto state = init_stream(cfg, seq.prompt_length());
    double best = -std::numeric_limits<double>::infinity();
    run_tokens(state, probe, cfg, seq.features, [&](std::size_t, double, double s, bool decide) {
        if (decide) best = std::max(best, s);
    });
    return best;
}

void write_trace(std::ostream& out, std::string_view id, const ScoreTrace& trace) {
    const auto old_precision = out.precision(17);
    for (std::size_t t = 0; t < trace.per_token_raw_logits.size(); ++t) {
        const bool flagged = trace.flagged_at && t >= *trace.flagged_at;
        out << id << '\t' << t << '\t' << trace.per_token_raw_logits[t] << '\t' << trace.per_token_smoothed[t] << '\t'
            << trace.cummax_prob[t] << '\t' << (flagged ? 1 : 0) << '\n';
    }
    out.precision(old_precision);
}

}  // namespace streamprobe
