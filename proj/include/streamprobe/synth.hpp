#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streamprobe/activation.hpp"
#include "streamprobe/cascade.hpp"
#include "streamprobe/kv_config.hpp"
#include "streamprobe/probe.hpp"
#include "streamprobe/streaming.hpp"

namespace streamprobe {

// Synthetic benchmark. Every token is isotropic Gaussian noise. Any token may
// carry a one-token spike along the harm direction u; attack exchanges add a
// contiguous run of tokens shifted by harm_strength * u inside the response,
// after a harmless prefix of at least min_prefix tokens.
struct SynthSpec {
    std::uint32_t feature_dim = 256;
    std::uint32_t n_layers = 2;  // feature_dim is split evenly across layers
    std::size_t n_benign = 250;
    std::size_t n_attack = 250;
    std::size_t seq_len_min = 96;
    std::size_t seq_len_max = 192;
    // Long prompts let the EMA settle before the first decision point.
    std::size_t prompt_len_min = 32;
    std::size_t prompt_len_max = 64;
    std::size_t min_prefix = 16;
    std::uint64_t harm_direction_seed = 7;
    double harm_segment_fraction = 0.25;
    double harm_strength = 2.0;
    double spike_rate = 0.02;
    double spike_strength = 3.0;
    double noise_std = 1.0;
    std::uint64_t seed = 0;

    // Throws ConfigError on a broken invariant or when some admissible
    // (length, prompt length) pair cannot hold the harm segment.
    void validate() const;
    std::size_t size() const { return n_benign + n_attack; }
    LayerMap layer_map() const;
};

SynthSpec load_synth_spec(const KeyValueConfig& kv, const SynthSpec& defaults = {});
void write_synth_spec(std::ostream& out, const SynthSpec& spec);

// Unit vector derived from a seed; used for the harm direction u and the stub
// direction v.
std::vector<double> unit_direction(std::uint64_t seed, std::size_t dim);

struct SynthMetadata {
    std::string id;
    bool attack = false;
    std::size_t n_tokens = 0;
    std::size_t prompt_tokens = 0;
    // Harm segment [harm_begin, harm_end); empty for benign exchanges.
    std::size_t harm_begin = 0;
    std::size_t harm_end = 0;
    std::vector<std::size_t> spikes;
};

struct SynthExchange {
    LabeledExchange exchange;
    SynthMetadata meta;
};

// Exchange `index` of the dataset: indices below n_benign are benign, the
// rest attacks. Each class member draws from its own stream seeded by
// (seed, class, index within class), so benign exchange k is the same for any
// n_attack.
SynthExchange generate_exchange(const SynthSpec& spec, std::size_t index);

struct SynthDataset {
    std::vector<LabeledExchange> exchanges;
    std::vector<SynthMetadata> metadata;
};

SynthDataset generate_dataset(const SynthSpec& spec);

// Dataset file, its index and a "<path>.meta" sidecar with the planted
// parameters and one line per exchange.
void write_synth_dataset(const std::filesystem::path& path, const SynthSpec& spec, const SynthDataset& data);
std::filesystem::path metadata_path_for(const std::filesystem::path& data_path);
std::vector<SynthMetadata> read_synth_metadata(const std::filesystem::path& meta_path);

struct StubScorerSpec {
    std::uint64_t direction_seed = 7;
    double signal_gain = 1.0;
    double noise_std = 0.2;
    // Target Spearman correlation with the reference probe's score within
    // each class.
    double correlation_with_probe = 0.0;
    std::uint64_t seed = 0;
    // Window length as a fraction of the response; 1 averages the whole
    // response.
    double window_fraction = 0.25;

    void validate() const;  // throws ConfigError
};

StubScorerSpec load_stub_spec(const KeyValueConfig& kv, const StubScorerSpec& defaults = {});

// Stand-in for an external classifier:
//   logit = signal_gain * scan(x . v) + noise_std * (m * r + sqrt(1 - m^2) * e)
// scan is the largest mean of x . v over windows of window_fraction of the
// response.
// e is standard normal, seeded by (seed, id). r is the reference probe's
// score standardized with the statistics of the exchange's own class, so it
// carries the probe's idiosyncratic error but no class information. The
// weight m is fitted per class so the whole logit has Gaussian Spearman
// correlation correlation_with_probe with the probe score; the signal term
// already shares some of the probe's within-class variation.
class StubScorer final : public SecondStageScorer {
public:
    StubScorer(StubScorerSpec spec, std::size_t feature_dim);

    // Fits per-class statistics of the probe's maximum decision logit on
    // `reference` and the mixing weights. Required when
    // correlation_with_probe != 0; throws ConfigError when the target cannot
    // be reached with |m| <= 1.
    void fit_reference(const ProbeParameters& probe, const StreamConfig& cfg,
                       std::span<const LabeledExchange> reference);
    bool has_reference() const { return reference_.has_value(); }
    // Fitted noise mixing weight for the class (0 benign, 1 attack).
    double mix(int cls) const { return reference_ ? reference_->mix[cls] : 0.0; }

    double score(const LabeledExchange& exchange) const override;
    std::string_view name() const override { return "stub"; }

    // Same as score() with the probe statistic supplied by the caller.
    double score_with_probe(const LabeledExchange& exchange, double probe_score) const;

    const StubScorerSpec& spec() const { return spec_; }

private:
    struct Reference {
        ProbeParameters probe;
        StreamConfig cfg;
        double mean[2];
        double std[2];
        double mix[2];
    };

    double projection(const LabeledExchange& exchange) const;
    double stub_noise(const LabeledExchange& exchange) const;

    StubScorerSpec spec_;
    std::vector<double> direction_;
    std::optional<Reference> reference_;
};

}  // namespace streamprobe
