#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace streamprobe {

// One block of the concatenated feature vector: activations of a single
// model layer, `width` values wide.
struct LayerSpec {
    std::uint32_t layer_index = 0;
    std::uint32_t width = 0;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

using LayerMap = std::vector<LayerSpec>;

std::size_t total_width(const LayerMap& layers);

enum class Role : std::uint8_t { prompt = 0, response = 1 };

// prompt_end value for a sequence with no prompt tokens.
inline constexpr std::uint32_t kNoPrompt = std::numeric_limits<std::uint32_t>::max();

// Per-token feature vectors for one exchange. Row t holds the concatenated
// layer activations of token t; rows are stored contiguously.
struct ActivationSequence {
    std::size_t n_tokens = 0;
    std::size_t feature_dim = 0;
    LayerMap layer_map;
    std::vector<float> features;  // n_tokens * feature_dim, row-major
    std::vector<Role> roles;
    std::uint32_t prompt_end = kNoPrompt;  // index of the last prompt token

    std::span<const float> row(std::size_t t) const {
        return {features.data() + t * feature_dim, feature_dim};
    }
    std::span<float> row(std::size_t t) { return {features.data() + t * feature_dim, feature_dim}; }

    // Number of leading prompt tokens implied by prompt_end.
    std::size_t prompt_length() const { return prompt_end == kNoPrompt ? 0 : std::size_t{prompt_end} + 1; }
};

enum class Source : std::uint8_t { synthetic, extracted, imported };

const char* to_string(Source s);
std::optional<Source> parse_source(std::string_view text);

struct LabeledExchange {
    ActivationSequence sequence;
    double label = 0.0;  // soft harmfulness label in [0, 1]
    Source source = Source::synthetic;
    std::string id;

    bool is_positive() const { return label >= 0.5; }
};

// Builds a sequence whose first `prompt_tokens` rows are prompt tokens and the
// rest response tokens. Features are zero-initialized.
ActivationSequence make_sequence(const LayerMap& layers, std::size_t n_tokens, std::size_t prompt_tokens);

enum class ViolationKind {
    dimension_mismatch,
    feature_size_mismatch,
    role_count_mismatch,
    roles_not_prefix_partitioned,
    prompt_end_mismatch,
    non_finite_value,
};

struct Violation {
    ViolationKind kind;
    std::string message;
    std::optional<std::size_t> token;
    std::optional<std::size_t> dim;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    bool has(ViolationKind kind) const;
    std::string summary() const;
};

ValidationReport validate_sequence(const ActivationSequence& seq);

// Keeps only the blocks of `seq` whose layer_index is listed in `layers`, in
// the original concatenation order. Throws DimensionError on an unknown layer.
ActivationSequence select_layers(const ActivationSequence& seq, std::span<const std::uint32_t> layers);

}  // namespace streamprobe
