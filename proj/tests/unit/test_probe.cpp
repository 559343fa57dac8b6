#include <fstream>

#include "doctest.h"
#include "streamprobe/errors.hpp"
#include "streamprobe/probe.hpp"
#include "support.hpp"

using namespace streamprobe;
using testsupport::layers_of;

TEST_CASE("raw logit standardizes then projects") {
    auto p = make_probe(layers_of({2}));
    p.weights = {2.0, -1.0};
    p.bias = 0.5;
    p.norm_mean = {1.0, 0.0};
    p.norm_std = {2.0, 4.0};
    const float x[] = {3.0f, 8.0f};
    // 2 * (3 - 1) / 2 - 1 * 8 / 4 + 0.5
    CHECK(raw_logit(p, x) == doctest::Approx(0.5));
}

TEST_CASE("probe invariants") {
    auto p = make_probe(layers_of({3}));
    CHECK_NOTHROW(validate_probe(p));
    SUBCASE("weight dimension") {
        p.weights.push_back(0.0);
        CHECK_THROWS_AS(validate_probe(p), InvariantError);
    }
    SUBCASE("non-positive std") {
        p.norm_std[1] = 0.0;
        CHECK_THROWS_AS(validate_probe(p), InvariantError);
    }
    SUBCASE("window") {
        p.window_size = 0;
        CHECK_THROWS_AS(validate_probe(p), InvariantError);
    }
    SUBCASE("temperature") {
        p.temperature = 0.0;
        CHECK_THROWS_AS(validate_probe(p), InvariantError);
    }
}

TEST_CASE("compatibility checks layer maps") {
    const auto p = make_probe(layers_of({2, 2}));
    auto same = make_sequence(layers_of({2, 2}), 3, 1);
    auto other = make_sequence({{0, 2}, {5, 2}}, 3, 1);
    CHECK_NOTHROW(check_compatible(p, same));
    CHECK_THROWS_AS(check_compatible(p, other), DimensionError);
    CHECK_THROWS_AS(check_compatible(p, 5), DimensionError);
}

TEST_CASE("effective window") {
    CHECK(effective_window(make_probe(layers_of({1}), 16, 1.0, LossVariant::softmax_swim)) == 16);
    CHECK(effective_window(make_probe(layers_of({1}), 16, 1.0, LossVariant::swim_only)) == 16);
    CHECK(effective_window(make_probe(layers_of({1}), 16, 1.0, LossVariant::plain_bce)) == 1);
    CHECK(effective_window(make_probe(layers_of({1}), 16, 1.0, LossVariant::softmax_only)) == 1);
}

TEST_CASE("loss variant names round-trip") {
    for (int i = 0; i <= 5; ++i) {
        const auto v = static_cast<LossVariant>(i);
        CHECK(parse_loss_variant(to_string(v)) == v);
    }
    CHECK_FALSE(parse_loss_variant("hinge").has_value());
    CHECK(uses_smoothing(LossVariant::softmax_swim));
    CHECK_FALSE(uses_smoothing(LossVariant::softmax_only));
    CHECK(uses_softmax_weighting(LossVariant::softmax_only));
    CHECK_FALSE(uses_softmax_weighting(LossVariant::swim_only));
}

TEST_CASE("checkpoint round-trip stores single-precision vectors") {
    testsupport::TempDir dir;
    std::mt19937_64 rng(3);
    auto p = testsupport::random_probe(rng, layers_of({3, 2}), 8, LossVariant::annealed_cummax);
    p.temperature = 0.25;
    p.bias = 0.1234567890123;
    save_probe(dir / "p.bin", p);
    const auto q = load_probe(dir / "p.bin");
    CHECK(q.layer_map == p.layer_map);
    CHECK(q.window_size == 8);
    CHECK(q.temperature == 0.25);
    CHECK(q.loss_variant == LossVariant::annealed_cummax);
    CHECK(q.bias == p.bias);
    for (std::size_t j = 0; j < p.weights.size(); ++j) {
        CHECK(q.weights[j] == static_cast<double>(static_cast<float>(p.weights[j])));
        CHECK(q.norm_mean[j] == static_cast<double>(static_cast<float>(p.norm_mean[j])));
        CHECK(q.norm_std[j] == static_cast<double>(static_cast<float>(p.norm_std[j])));
    }
    // Saving the reloaded probe is a fixed point.
    save_probe(dir / "q.bin", q);
    const auto r = load_probe(dir / "q.bin");
    CHECK(r.weights == q.weights);
}

TEST_CASE("corrupt checkpoints are format errors") {
    testsupport::TempDir dir;
    save_probe(dir / "p.bin", make_probe(layers_of({2})));
    std::ifstream in(dir / "p.bin", std::ios::binary);
    std::string bytes{std::istreambuf_iterator<char>(in), {}};
    in.close();
    auto write = [&](const std::string& b) {
        std::ofstream out(dir / "p.bin", std::ios::binary | std::ios::trunc);
        out << b;
    };
    SUBCASE("magic") {
        auto b = bytes;
        b[0] = 'Q';
        write(b);
        CHECK_THROWS_AS(load_probe(dir / "p.bin"), FormatError);
    }
    SUBCASE("trailing bytes") {
        write(bytes + "x");
        CHECK_THROWS_AS(load_probe(dir / "p.bin"), FormatError);
    }
    SUBCASE("truncated") {
        write(bytes.substr(0, bytes.size() - 3));
        CHECK_THROWS_AS(load_probe(dir / "p.bin"), FormatError);
    }
}
