#include "streamprobe/activation.hpp"

#include <cmath>
#include <sstream>

#include "streamprobe/errors.hpp"

namespace streamprobe {

std::size_t total_width(const LayerMap& layers) {
    std::size_t sum = 0;
    for (const auto& l : layers) sum += l.width;
    return sum;
}

const char* to_string(Source s) {
    switch (s) {
        case Source::synthetic: return "synthetic";
        case Source::extracted: return "extracted";
        case Source::imported: return "imported";
    }
    return "imported";
}

std::optional<Source> parse_source(std::string_view text) {
    if (text == "synthetic") return Source::synthetic;
    if (text == "extracted") return Source::extracted;
    if (text == "imported") return Source::imported;
    return std::nullopt;
}

ActivationSequence make_sequence(const LayerMap& layers, std::size_t n_tokens, std::size_t prompt_tokens) {
    ActivationSequence seq;
    seq.layer_map = layers;
    seq.feature_dim = total_width(layers);
    seq.n_tokens = n_tokens;
    seq.features.assign(n_tokens * seq.feature_dim, 0.0f);
    seq.roles.assign(n_tokens, Role::response);
    for (std::size_t t = 0; t < prompt_tokens && t < n_tokens; ++t) seq.roles[t] = Role::prompt;
    seq.prompt_end = prompt_tokens == 0 ? kNoPrompt : static_cast<std::uint32_t>(prompt_tokens - 1);
    return seq;
}

bool ValidationReport::has(ViolationKind kind) const {
    for (const auto& v : violations)
        if (v.kind == kind) return true;
    return false;
}

std::string ValidationReport::summary() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < violations.size(); ++i) {
        if (i) out << "; ";
        out << violations[i].message;
    }
    return out.str();
}

ValidationReport validate_sequence(const ActivationSequence& seq) {
    ValidationReport report;
    auto add = [&](ViolationKind kind, std::string msg, std::optional<std::size_t> t = {},
                   std::optional<std::size_t> d = {}) {
        report.violations.push_back({kind, std::move(msg), t, d});
    };

    const std::size_t widths = total_width(seq.layer_map);
    if (widths != seq.feature_dim) {
        add(ViolationKind::dimension_mismatch, "feature_dim " + std::to_string(seq.feature_dim) +
                                                   " != sum of layer widths " + std::to_string(widths));
    }
    const bool sized = seq.features.size() == seq.n_tokens * seq.feature_dim;
    if (!sized) {
        add(ViolationKind::feature_size_mismatch, "feature matrix holds " + std::to_string(seq.features.size()) +
                                                      " values, expected " +
                                                      std::to_string(seq.n_tokens * seq.feature_dim));
    }
    if (seq.roles.size() != seq.n_tokens) {
        add(ViolationKind::role_count_mismatch, "roles has " + std::to_string(seq.roles.size()) +
                                                    " entries for " + std::to_string(seq.n_tokens) + " tokens");
    } else {
        std::size_t prompt_count = 0;
        bool seen_response = false;
        for (std::size_t t = 0; t < seq.roles.size(); ++t) {
            if (seq.roles[t] == Role::response) {
                seen_response = true;
            } else if (seen_response) {
                add(ViolationKind::roles_not_prefix_partitioned,
                    "roles not prefix-partitioned: prompt token at " + std::to_string(t) + " follows a response token",
                    t);
                break;
            } else {
                ++prompt_count;
            }
        }
        const std::uint32_t expected_end =
            prompt_count == 0 ? kNoPrompt : static_cast<std::uint32_t>(prompt_count - 1);
        if (!report.has(ViolationKind::roles_not_prefix_partitioned) && seq.prompt_end != expected_end) {
            add(ViolationKind::prompt_end_mismatch, "prompt_end " + std::to_string(seq.prompt_end) +
                                                        " does not mark the last of " +
                                                        std::to_string(prompt_count) + " prompt tokens");
        }
        if (seq.prompt_end != kNoPrompt && seq.n_tokens > 0 && seq.prompt_end >= seq.n_tokens) {
            add(ViolationKind::prompt_end_mismatch, "prompt_end " + std::to_string(seq.prompt_end) +
                                                        " is beyond the last token");
        }
    }
    if (sized && seq.feature_dim > 0) {
        for (std::size_t t = 0; t < seq.n_tokens; ++t) {
            auto r = seq.row(t);
            for (std::size_t d = 0; d < r.size(); ++d) {
                if (!std::isfinite(r[d])) {
                    add(ViolationKind::non_finite_value,
                        "non-finite value at (t=" + std::to_string(t) + ", dim=" + std::to_string(d) + ")", t, d);
                }
            }
        }
    }
    return report;
}

ActivationSequence select_layers(const ActivationSequence& seq, std::span<const std::uint32_t> layers) {
    for (auto want : layers) {
        bool found = false;
        for (const auto& l : seq.layer_map) found = found || l.layer_index == want;
        if (!found) throw DimensionError("layer " + std::to_string(want) + " is not present in the sequence");
    }
    LayerMap kept;
    std::vector<std::pair<std::size_t, std::size_t>> blocks;  // (offset, width)
    std::size_t offset = 0;
    for (const auto& l : seq.layer_map) {
        bool keep = false;
        for (auto want : layers) keep = keep || l.layer_index == want;
        if (keep) {
            kept.push_back(l);
            blocks.emplace_back(offset, l.width);
        }
        offset += l.width;
    }
    ActivationSequence out;
    out.layer_map = kept;
    out.feature_dim = total_width(kept);
    out.n_tokens = seq.n_tokens;
    out.roles = seq.roles;
    out.prompt_end = seq.prompt_end;
    out.features.reserve(out.n_tokens * out.feature_dim);
    for (std::size_t t = 0; t < seq.n_tokens; ++t) {
        auto r = seq.row(t);
        for (auto [off, w] : blocks) out.features.insert(out.features.end(), r.begin() + off, r.begin() + off + w);
    }
    return out;
}

}  // namespace streamprobe
