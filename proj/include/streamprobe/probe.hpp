#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "streamprobe/activation.hpp"

namespace streamprobe {

enum class LossVariant : std::uint8_t {
    softmax_swim = 0,  // softmax-weighted BCE over window-averaged logits
    plain_bce = 1,     // uniform BCE over raw per-token logits
    swim_only = 2,     // uniform BCE over window-averaged logits
    softmax_only = 3,  // softmax-weighted BCE over raw logits
    cummax = 4,        // BCE of the running max probability at the last position
    annealed_cummax = 5,
};

std::string_view to_string(LossVariant v);
std::optional<LossVariant> parse_loss_variant(std::string_view text);

bool uses_smoothing(LossVariant v);
bool uses_softmax_weighting(LossVariant v);

// A linear probe over standardized concatenated activations:
//   z_t = W . ((x_t - norm_mean) / norm_std) + b
struct ProbeParameters {
    std::vector<double> weights;
    double bias = 0.0;
    LayerMap layer_map;
    std::vector<double> norm_mean;
    std::vector<double> norm_std;
    std::size_t window_size = 16;
    double temperature = 1.0;
    LossVariant loss_variant = LossVariant::softmax_swim;

    std::size_t feature_dim() const { return weights.size(); }
};

// Zero weights, identity standardization.
ProbeParameters make_probe(const LayerMap& layers, std::size_t window_size = 16, double temperature = 1.0,
                           LossVariant variant = LossVariant::softmax_swim);

// Throws InvariantError when the probe breaks its own invariants.
void validate_probe(const ProbeParameters& probe);

// Window length the probe was trained to be read with; 1 for variants
// without logit smoothing.
std::size_t effective_window(const ProbeParameters& probe);

// Throws DimensionError when `seq` was not produced with the probe's layer map.
void check_compatible(const ProbeParameters& probe, const ActivationSequence& seq);
void check_compatible(const ProbeParameters& probe, std::size_t feature_dim);

double raw_logit(const ProbeParameters& probe, std::span<const float> features);
std::vector<double> raw_logits(const ProbeParameters& probe, const ActivationSequence& seq);

// Probe checkpoint ("PROBE1"): magic | u32 feature_dim | u16 n_layers
// | n_layers x (u32 layer_index, u32 width) | u32 window | f64 temperature
// | u8 loss_variant | f32 norm_mean[d] | f32 norm_std[d] | f32 W[d] | f64 b.
// Vectors are stored at single precision, so a reloaded probe carries the
// float-rounded values.
void save_probe(const std::filesystem::path& path, const ProbeParameters& probe);
ProbeParameters load_probe(const std::filesystem::path& path);

}  // namespace streamprobe
