#include "streamprobe/probe.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "binary_io.hpp"
#include "streamprobe/errors.hpp"

namespace streamprobe {
namespace {

constexpr std::string_view kProbeMagic = "PROBE1";

constexpr std::pair<LossVariant, std::string_view> kVariantNames[] = {
    {LossVariant::softmax_swim, "softmax_swim"}, {LossVariant::plain_bce, "plain_bce"},
    {LossVariant::swim_only, "swim_only"},       {LossVariant::softmax_only, "softmax_only"},
    {LossVariant::cummax, "cummax"},             {LossVariant::annealed_cummax, "annealed_cummax"},
};

}  // namespace

std::string_view to_string(LossVariant v) {
    for (auto [variant, name] : kVariantNames)
        if (variant == v) return name;
    return "unknown";
}

std::optional<LossVariant> parse_loss_variant(std::string_view text) {
    for (auto [variant, name] : kVariantNames)
        if (name == text) return variant;
    return std::nullopt;
}

bool uses_smoothing(LossVariant v) {
    return v != LossVariant::plain_bce && v != LossVariant::softmax_only;
}

bool uses_softmax_weighting(LossVariant v) {
    return v == LossVariant::softmax_swim || v == LossVariant::softmax_only;
}

ProbeParameters make_probe(const LayerMap& layers, std::size_t window_size, double temperature, LossVariant variant) {
    ProbeParameters p;
    const auto d = total_width(layers);
    p.layer_map = layers;
    p.weights.assign(d, 0.0);
    p.norm_mean.assign(d, 0.0);
    p.norm_std.assign(d, 1.0);
    p.window_size = window_size;
    p.temperature = temperature;
    p.loss_variant = variant;
    return p;
}

void validate_probe(const ProbeParameters& p) {
    const auto d = total_width(p.layer_map);
    if (p.weights.size() != d)
        throw InvariantError("probe weight dimension " + std::to_string(p.weights.size()) +
                             " does not match layer map width " + std::to_string(d));
    if (p.norm_mean.size() != d || p.norm_std.size() != d)
        throw InvariantError("probe normalization statistics have the wrong dimension");
    for (double s : p.norm_std)
        if (!(s > 0.0)) throw InvariantError("probe norm_std must be strictly positive");
    if (p.window_size < 1) throw InvariantError("probe window size must be >= 1");
    if (!(p.temperature > 0.0)) throw InvariantError("probe temperature must be > 0");
}

std::size_t effective_window(const ProbeParameters& probe) {
    return uses_smoothing(probe.loss_variant) ? probe.window_size : 1;
}

void check_compatible(const ProbeParameters& probe, std::size_t feature_dim) {
    if (feature_dim != probe.weights.size())
        throw DimensionError("probe expects " + std::to_string(probe.weights.size()) + " features, got " +
                             std::to_string(feature_dim));
}

void check_compatible(const ProbeParameters& probe, const ActivationSequence& seq) {
    check_compatible(probe, seq.feature_dim);
    if (seq.layer_map != probe.layer_map) throw DimensionError("probe and sequence layer maps differ");
}

double raw_logit(const ProbeParameters& probe, std::span<const float> x) {
    const auto& w = probe.weights;
    const auto& mu = probe.norm_mean;
    const auto& sd = probe.norm_std;
    double z = probe.bias;
    for (std::size_t j = 0; j < x.size(); ++j) z += w[j] * ((static_cast<double>(x[j]) - mu[j]) / sd[j]);
    return z;
}

std::vector<double> raw_logits(const ProbeParameters& probe, const ActivationSequence& seq) {
    check_compatible(probe, seq);
    std::vector<double> z(seq.n_tokens);
    for (std::size_t t = 0; t < seq.n_tokens; ++t) z[t] = raw_logit(probe, seq.row(t));
    return z;
}

void save_probe(const std::filesystem::path& path, const ProbeParameters& p) {
    validate_probe(p);
    detail::ByteWriter w;
    w.put_bytes(kProbeMagic);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.weights.size()));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(p.layer_map.size()));
    for (const auto& l : p.layer_map) {
        w.put<std::uint32_t>(l.layer_index);
        w.put<std::uint32_t>(l.width);
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.window_size));
    w.put<double>(p.temperature);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.loss_variant));
    for (const auto* vec : {&p.norm_mean, &p.norm_std, &p.weights})
        for (double v : *vec) w.put<float>(static_cast<float>(v));
    w.put<double>(p.bias);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.size()));
    if (!out) throw DataError("write failed on " + path.string());
}

ProbeParameters load_probe(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open probe checkpoint " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    detail::ByteReader r(bytes);
    if (r.get_string(kProbeMagic.size()) != kProbeMagic) throw FormatError("magic", "expected \"PROBE1\"");
    ProbeParameters p;
    const auto d = r.get<std::uint32_t>();
    const auto n_layers = r.get<std::uint16_t>();
    if (!r.ok()) throw FormatError("feature_dim", "checkpoint truncated");
    for (std::uint16_t i = 0; i < n_layers; ++i) {
        LayerSpec l;
        l.layer_index = r.get<std::uint32_t>();
        l.width = r.get<std::uint32_t>();
        p.layer_map.push_back(l);
    }
    if (!r.ok()) throw FormatError("layer_map", "checkpoint truncated");
    if (total_width(p.layer_map) != d) throw FormatError("feature_dim", "does not equal the sum of layer widths");
    p.window_size = r.get<std::uint32_t>();
    p.temperature = r.get<double>();
    const auto tag = r.get<std::uint8_t>();
    if (!r.ok()) throw FormatError("loss_variant", "checkpoint truncated");
    if (tag > static_cast<std::uint8_t>(LossVariant::annealed_cummax))
        throw FormatError("loss_variant", "unknown tag " + std::to_string(tag));
    p.loss_variant = static_cast<LossVariant>(tag);
    std::vector<float> buf(d);
    for (auto* vec : {&p.norm_mean, &p.norm_std, &p.weights}) {
        if (!r.get_array(std::span<float>(buf))) throw FormatError("parameters", "checkpoint truncated");
        vec->assign(buf.begin(), buf.end());
    }
    p.bias = r.get<double>();
    if (!r.ok()) throw FormatError("bias", "checkpoint truncated");
    if (r.remaining() != 0) throw FormatError("bias", "trailing bytes after checkpoint");
    try {
        validate_probe(p);
    } catch (const InvariantError& e) {
        throw FormatError("parameters", e.what());
    }
    return p;
}

}  // namespace streamprobe
