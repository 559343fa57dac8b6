#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "streamprobe/activation.hpp"
#include "streamprobe/probe.hpp"

namespace testsupport {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "streamprobe-XXXXXX").string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline streamprobe::LayerMap layers_of(std::initializer_list<std::uint32_t> widths) {
    streamprobe::LayerMap m;
    std::uint32_t i = 0;
    for (auto w : widths) m.push_back({i++, w});
    return m;
}

inline streamprobe::LabeledExchange random_exchange(std::mt19937_64& rng, const streamprobe::LayerMap& layers,
                                                    std::size_t T, std::size_t prompt_tokens, double label,
                                                    std::string id) {
    std::normal_distribution<float> normal;
    streamprobe::LabeledExchange ex;
    ex.sequence = streamprobe::make_sequence(layers, T, prompt_tokens);
    for (auto& x : ex.sequence.features) x = normal(rng);
    ex.label = label;
    ex.id = std::move(id);
    return ex;
}

// A one-feature sequence whose raw logits under unit_probe() are `values`.
inline streamprobe::ActivationSequence sequence_of(const std::vector<double>& values, std::size_t prompt_tokens = 0) {
    auto seq = streamprobe::make_sequence({{0, 1}}, values.size(), prompt_tokens);
    for (std::size_t t = 0; t < values.size(); ++t) seq.features[t] = static_cast<float>(values[t]);
    return seq;
}

// z_t = x_t on one-feature sequences.
inline streamprobe::ProbeParameters unit_probe(std::size_t window = 16,
                                               streamprobe::LossVariant v = streamprobe::LossVariant::softmax_swim) {
    auto p = streamprobe::make_probe({{0, 1}}, window, 1.0, v);
    p.weights[0] = 1.0;
    return p;
}

// Random probe with non-trivial normalization.
inline streamprobe::ProbeParameters random_probe(std::mt19937_64& rng, const streamprobe::LayerMap& layers,
                                                 std::size_t window, streamprobe::LossVariant v, double scale = 0.5) {
    auto p = streamprobe::make_probe(layers, window, 1.0, v);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> pos(0.5, 2.0);
    for (std::size_t j = 0; j < p.weights.size(); ++j) {
        p.weights[j] = scale * normal(rng);
        p.norm_mean[j] = 0.1 * normal(rng);
        p.norm_std[j] = pos(rng);
    }
    p.bias = 0.3 * normal(rng);
    return p;
}

}  // namespace testsupport
