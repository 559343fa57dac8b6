#include "streamprobe/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "streamprobe/dataset_io.hpp"
#include "streamprobe/errors.hpp"
#include "streamprobe/parallel.hpp"

namespace streamprobe {

namespace {

constexpr std::uint64_t kBenignStream = 0x62656e69676eULL;
constexpr std::uint64_t kAttackStream = 0x61747461636bULL;
constexpr std::uint64_t kStubStream = 0x73747562ULL;

std::seed_seq make_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return std::seed_seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                         static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                         static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::size_t segment_length(double fraction, std::size_t response_tokens) {
    const auto len = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(response_tokens) - 1e-9));
    return std::max<std::size_t>(1, len);
}

std::string make_id(bool attack, std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%07zu", attack ? 'a' : 'b', k);
    return buf;
}

}  // namespace

void SynthSpec::validate() const {
    if (feature_dim == 0) throw ConfigError("synth: feature_dim must be positive");
    if (n_layers == 0 || feature_dim % n_layers != 0)
        throw ConfigError("synth: feature_dim must split evenly into n_layers");
    if (seq_len_min < 4) throw ConfigError("synth: seq_len_min must be at least 4");
    if (seq_len_max < seq_len_min) throw ConfigError("synth: seq_len_max < seq_len_min");
    if (prompt_len_max < prompt_len_min) throw ConfigError("synth: prompt_len_max < prompt_len_min");
    if (prompt_len_min >= seq_len_min) throw ConfigError("synth: every exchange needs at least one response token");
    if (!(harm_segment_fraction > 0.0 && harm_segment_fraction <= 1.0))
        throw ConfigError("synth: harm_segment_fraction must lie in (0, 1]");
    if (!(harm_strength >= 0.0) || !(spike_strength >= 0.0) || !(noise_std >= 0.0))
        throw ConfigError("synth: strengths and noise_std must be non-negative");
    if (!(spike_rate >= 0.0 && spike_rate <= 1.0)) throw ConfigError("synth: spike_rate must lie in [0, 1]");
    if (n_attack == 0) return;
    for (std::size_t t = seq_len_min; t <= seq_len_max; ++t) {
        for (std::size_t p = prompt_len_min; p <= std::min(prompt_len_max, t - 1); ++p) {
            const std::size_t start = std::max(p, min_prefix);
            if (start + segment_length(harm_segment_fraction, t - p) > t) {
                throw ConfigError("synth: infeasible spec, a harm segment of fraction " +
                                  std::to_string(harm_segment_fraction) + " after a " + std::to_string(start) +
                                  "-token prefix does not fit in " + std::to_string(t) + " tokens");
            }
        }
    }
}

LayerMap SynthSpec::layer_map() const {
    LayerMap layers;
    for (std::uint32_t l = 0; l < n_layers; ++l) layers.push_back({l, feature_dim / n_layers});
    return layers;
}

SynthSpec load_synth_spec(const KeyValueConfig& kv, const SynthSpec& d) {
    SynthSpec s = d;
    s.feature_dim = static_cast<std::uint32_t>(kv.get_uint("synth.feature_dim", s.feature_dim));
    s.n_layers = static_cast<std::uint32_t>(kv.get_uint("synth.n_layers", s.n_layers));
    s.n_benign = kv.get_uint("synth.n_benign", s.n_benign);
    s.n_attack = kv.get_uint("synth.n_attack", s.n_attack);
    s.seq_len_min = kv.get_uint("synth.seq_len_min", s.seq_len_min);
    s.seq_len_max = kv.get_uint("synth.seq_len_max", s.seq_len_max);
    s.prompt_len_min = kv.get_uint("synth.prompt_len_min", s.prompt_len_min);
    s.prompt_len_max = kv.get_uint("synth.prompt_len_max", s.prompt_len_max);
    s.min_prefix = kv.get_uint("synth.min_prefix", s.min_prefix);
    s.harm_direction_seed = kv.get_uint("synth.harm_direction_seed", s.harm_direction_seed);
    s.harm_segment_fraction = kv.get_double("synth.harm_segment_fraction", s.harm_segment_fraction);
    s.harm_strength = kv.get_double("synth.harm_strength", s.harm_strength);
    s.spike_rate = kv.get_double("synth.spike_rate", s.spike_rate);
    s.spike_strength = kv.get_double("synth.spike_strength", s.spike_strength);
    s.noise_std = kv.get_double("synth.noise_std", s.noise_std);
    s.seed = kv.get_uint("synth.seed", s.seed);
    s.validate();
    return s;
}

void write_synth_spec(std::ostream& out, const SynthSpec& s) {
    const auto old = out.precision(17);
    out << "synth.feature_dim = " << s.feature_dim << '\n'
        << "synth.n_layers = " << s.n_layers << '\n'
        << "synth.n_benign = " << s.n_benign << '\n'
        << "synth.n_attack = " << s.n_attack << '\n'
        << "synth.seq_len_min = " << s.seq_len_min << '\n'
        << "synth.seq_len_max = " << s.seq_len_max << '\n'
        << "synth.prompt_len_min = " << s.prompt_len_min << '\n'
        << "synth.prompt_len_max = " << s.prompt_len_max << '\n'
        << "synth.min_prefix = " << s.min_prefix << '\n'
        << "synth.harm_direction_seed = " << s.harm_direction_seed << '\n'
        << "synth.harm_segment_fraction = " << s.harm_segment_fraction << '\n'
        << "synth.harm_strength = " << s.harm_strength << '\n'
        << "synth.spike_rate = " << s.spike_rate << '\n'
        << "synth.spike_strength = " << s.spike_strength << '\n'
        << "synth.noise_std = " << s.noise_std << '\n'
        << "synth.seed = " << s.seed << '\n';
    out.precision(old);
}

std::vector<double> unit_direction(std::uint64_t seed, std::size_t dim) {
    auto seq = make_seed(seed, 0x64697265ULL, dim);
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    std::vector<double> v(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& x : v) {
            x = normal(rng);
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

SynthExchange generate_exchange(const SynthSpec& spec, std::size_t index) {
    if (index >= spec.size()) throw std::out_of_range("generate_exchange: index past the end of the dataset");
    const bool attack = index >= spec.n_benign;
    const std::size_t k = attack ? index - spec.n_benign : index;
    auto seq = make_seed(spec.seed, attack ? kAttackStream : kBenignStream, k);
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit;

    const std::size_t T = std::uniform_int_distribution<std::size_t>(spec.seq_len_min, spec.seq_len_max)(rng);
    const std::size_t P =
        std::uniform_int_distribution<std::size_t>(spec.prompt_len_min, std::min(spec.prompt_len_max, T - 1))(rng);
    const auto u = unit_direction(spec.harm_direction_seed, spec.feature_dim);
    const std::size_t d = spec.feature_dim;

    SynthExchange out;
    auto& ex = out.exchange;
    ex.id = make_id(attack, k);
    ex.label = attack ? 1.0 : 0.0;
    ex.source = Source::synthetic;
    ex.sequence = make_sequence(spec.layer_map(), T, P);
    auto& meta = out.meta;
    meta.id = ex.id;
    meta.attack = attack;
    meta.n_tokens = T;
    meta.prompt_tokens = P;

    if (attack) {
        const std::size_t len = segment_length(spec.harm_segment_fraction, T - P);
        const std::size_t lo = std::max(P, spec.min_prefix);
        if (lo + len > T) throw ConfigError("synth: harm segment does not fit in exchange " + ex.id);
        meta.harm_begin = std::uniform_int_distribution<std::size_t>(lo, T - len)(rng);
        meta.harm_end = meta.harm_begin + len;
    }

    std::vector<double> row(d);
    for (std::size_t t = 0; t < T; ++t) {
        for (auto& x : row) x = spec.noise_std * normal(rng);
        double shift = 0.0;
        if (spec.spike_rate > 0.0 && unit(rng) < spec.spike_rate) {
            meta.spikes.push_back(t);
            shift += spec.spike_strength;
        }
        if (t >= meta.harm_begin && t < meta.harm_end) shift += spec.harm_strength;
        auto dst = ex.sequence.row(t);
        for (std::size_t j = 0; j < d; ++j) dst[j] = static_cast<float>(row[j] + shift * u[j]);
    }
    return out;
}

SynthDataset generate_dataset(const SynthSpec& spec) {
    spec.validate();
    SynthDataset data;
    data.exchanges.resize(spec.size());
    data.metadata.resize(spec.size());
    parallel_for(spec.size(), [&](std::size_t i) {
        auto ex = generate_exchange(spec, i);
        data.exchanges[i] = std::move(ex.exchange);
        data.metadata[i] = std::move(ex.meta);
    });
    return data;
}

std::filesystem::path metadata_path_for(const std::filesystem::path& data_path) {
    auto p = data_path;
    p += ".meta";
    return p;
}

void write_synth_dataset(const std::filesystem::path& path, const SynthSpec& spec, const SynthDataset& data) {
    write_dataset(path, data.exchanges);
    const auto meta_path = metadata_path_for(path);
    std::ofstream out(meta_path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + meta_path.string() + " for writing");
    std::ostringstream params;
    write_synth_spec(params, spec);
    std::istringstream lines(params.str());
    for (std::string line; std::getline(lines, line);) out << "#spec " << line << '\n';
    out << "#id\tlabel\tn_tokens\tprompt_tokens\tharm_begin\tharm_end\tspikes\n";
    for (const auto& m : data.metadata) {
        out << m.id << '\t' << (m.attack ? 1 : 0) << '\t' << m.n_tokens << '\t' << m.prompt_tokens << '\t';
        if (m.attack)
            out << m.harm_begin << '\t' << m.harm_end;
        else
            out << "-\t-";
        out << '\t';
        if (m.spikes.empty()) out << '-';
        for (std::size_t i = 0; i < m.spikes.size(); ++i) out << (i ? "," : "") << m.spikes[i];
        out << '\n';
    }
    if (!out) throw DataError("failed writing " + meta_path.string());
}

std::vector<SynthMetadata> read_synth_metadata(const std::filesystem::path& meta_path) {
    std::ifstream in(meta_path);
    if (!in) throw DataError("cannot open " + meta_path.string());
    std::vector<SynthMetadata> out;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        SynthMetadata m;
        std::string attack, begin, end, spikes;
        if (!(fields >> m.id >> attack >> m.n_tokens >> m.prompt_tokens >> begin >> end >> spikes))
            throw FormatError("meta", meta_path.string() + ":" + std::to_string(line_no) + ": malformed line");
        m.attack = attack == "1";
        if (m.attack) {
            m.harm_begin = std::stoul(begin);
            m.harm_end = std::stoul(end);
        }
        if (spikes != "-") {
            std::istringstream list(spikes);
            for (std::string tok; std::getline(list, tok, ',');) m.spikes.push_back(std::stoul(tok));
        }
        out.push_back(std::move(m));
    }
    return out;
}

void StubScorerSpec::validate() const {
    if (!(signal_gain >= 0.0) || !(noise_std >= 0.0)) throw ConfigError("stub: gain and noise_std must be non-negative");
    if (!(correlation_with_probe >= -1.0 && correlation_with_probe <= 1.0))
        throw ConfigError("stub: correlation_with_probe must lie in [-1, 1]");
    if (!(window_fraction > 0.0 && window_fraction <= 1.0)) throw ConfigError("stub: window_fraction must lie in (0, 1]");
}

StubScorerSpec load_stub_spec(const KeyValueConfig& kv, const StubScorerSpec& d) {
    StubScorerSpec s = d;
    s.direction_seed = kv.get_uint("stub.direction_seed", s.direction_seed);
    s.signal_gain = kv.get_double("stub.signal_gain", s.signal_gain);
    s.noise_std = kv.get_double("stub.noise_std", s.noise_std);
    s.correlation_with_probe = kv.get_double("stub.correlation", s.correlation_with_probe);
    s.window_fraction = kv.get_double("stub.window_fraction", s.window_fraction);
    s.seed = kv.get_uint("stub.seed", s.seed);
    s.validate();
    return s;
}

StubScorer::StubScorer(StubScorerSpec spec, std::size_t feature_dim)
    : spec_(spec), direction_(unit_direction(spec.direction_seed, feature_dim)) {
    spec_.validate();
}

double StubScorer::projection(const LabeledExchange& exchange) const {
    const auto& seq = exchange.sequence;
    if (seq.feature_dim != direction_.size())
        throw DimensionError("stub: exchange " + exchange.id + " has feature_dim " + std::to_string(seq.feature_dim) +
                             ", scorer expects " + std::to_string(direction_.size()));
    std::size_t first = seq.prompt_length();
    if (first >= seq.n_tokens) first = 0;
    const std::size_t n = seq.n_tokens - first;
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const auto row = seq.row(first + k);
        double dot = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) dot += static_cast<double>(row[j]) * direction_[j];
        prefix[k + 1] = prefix[k] + dot;
    }
    if (n == 0) return 0.0;
    const std::size_t len = segment_length(spec_.window_fraction, n);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = len; k <= n; ++k) best = std::max(best, prefix[k] - prefix[k - len]);
    return best / static_cast<double>(len);
}

double StubScorer::stub_noise(const LabeledExchange& exchange) const {
    auto seed = make_seed(spec_.seed, kStubStream, fnv1a64(exchange.id));
    std::mt19937_64 rng(seed);
    return std::normal_distribution<double>()(rng);
}

void StubScorer::fit_reference(const ProbeParameters& probe, const StreamConfig& cfg,
                               std::span<const LabeledExchange> reference) {
    check_compatible(probe, direction_.size());
    std::vector<double> scores(reference.size()), proj(reference.size());
    parallel_for(reference.size(), [&](std::size_t i) {
        scores[i] = max_decision_logit(probe, reference[i].sequence, cfg);
        proj[i] = projection(reference[i]);
    });
    // Gaussian Pearson value whose Spearman correlation is rho.
    const double target = 2.0 * std::sin(std::numbers::pi * spec_.correlation_with_probe / 6.0);
    Reference ref{probe, cfg, {0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
    for (int c = 0; c < 2; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < reference.size(); ++i)
            if (static_cast<int>(reference[i].is_positive()) == c) idx.push_back(i);
        if (idx.size() < 2) throw DataError("stub: reference set needs at least two exchanges of each class");
        const double n = static_cast<double>(idx.size());
        double ms = 0.0, mp = 0.0;
        for (auto i : idx) {
            ms += scores[i];
            mp += proj[i];
        }
        ms /= n;
        mp /= n;
        double vs = 0.0, vp = 0.0, cov = 0.0;
        for (auto i : idx) {
            vs += (scores[i] - ms) * (scores[i] - ms);
            vp += (proj[i] - mp) * (proj[i] - mp);
            cov += (scores[i] - ms) * (proj[i] - mp);
        }
        vs /= n - 1.0;
        vp /= n - 1.0;
        cov /= n - 1.0;
        if (!(vs > 0.0)) throw DataError("stub: reference probe scores are constant within a class");
        ref.mean[c] = ms;
        ref.std[c] = std::sqrt(vs);

        // The signal term g * proj is already correlated with the probe score
        // r (standardized). Pick the mixing weight m of the noise term so
        // corr(g proj + s (m r + sqrt(1 - m^2) e), r) hits the target:
        //   s^2 m^2 + 2 s a (1 - P^2) m + a^2 - P^2 b = 0
        // with a = g cov(proj, r) and b = g^2 var(proj) + s^2.
        const double g = spec_.signal_gain, s = spec_.noise_std, P = target;
        const double a = g * cov / ref.std[c];
        const double b = g * g * vp + s * s;
        double m = 0.0;
        if (s > 0.0) {
            const double disc = P * P * (b - 2.0 * a * a + a * a * P * P);
            if (disc >= 0.0) m = (-a * (1.0 - P * P) + (P < 0 ? -1.0 : 1.0) * std::sqrt(disc)) / s;
            if (disc < 0.0 || std::abs(m) > 1.0)
                throw ConfigError("stub: correlation target " + std::to_string(spec_.correlation_with_probe) +
                                  " is unreachable for class " + std::to_string(c) + " (signal term alone gives " +
                                  std::to_string(a / std::sqrt(b)) + ")");
        } else if (std::abs(a / std::sqrt(b) - P) > 1e-12 && g > 0.0) {
            throw ConfigError("stub: noise_std = 0 leaves no room to set the correlation");
        }
        ref.mix[c] = m;
    }
    reference_ = std::move(ref);
}

double StubScorer::score(const LabeledExchange& exchange) const {
    if (!reference_) {
        if (spec_.correlation_with_probe != 0.0)
            throw InvariantError("stub: correlation_with_probe is set but no reference probe was fitted");
        return score_with_probe(exchange, 0.0);
    }
    return score_with_probe(exchange, max_decision_logit(reference_->probe, exchange.sequence, reference_->cfg));
}

double StubScorer::score_with_probe(const LabeledExchange& exchange, double probe_score) const {
    const double proj = projection(exchange);
    double mix = 0.0, shared = 0.0;
    if (reference_) {
        const int c = exchange.is_positive() ? 1 : 0;
        mix = reference_->mix[c];
        shared = (probe_score - reference_->mean[c]) / reference_->std[c];
    } else if (spec_.correlation_with_probe != 0.0) {
        throw InvariantError("stub: correlation_with_probe is set but no reference probe was fitted");
    }
    const double noise = mix * shared + std::sqrt(std::max(0.0, 1.0 - mix * mix)) * stub_noise(exchange);
    return spec_.signal_gain * proj + spec_.noise_std * noise;
}

}  // namespace streamprobe
