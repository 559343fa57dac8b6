#include <cmath>
#include <sstream>

#include "doctest.h"
#include "streamprobe/errors.hpp"
#include "streamprobe/smoothing.hpp"
#include "streamprobe/streaming.hpp"
#include "support.hpp"

using namespace streamprobe;
using testsupport::sequence_of;
using testsupport::unit_probe;

namespace {

StreamConfig ema(double lambda, double threshold = 0.0) {
    StreamConfig c;
    c.ema_decay = lambda;
    c.threshold = threshold;
    return c;
}

}  // namespace

TEST_CASE("EMA recursion") {
    const auto probe = unit_probe();
    SUBCASE("half decay") {
        const auto tr = score_exchange(probe, sequence_of({0, 4}), ema(0.5));
        CHECK(tr.per_token_smoothed == std::vector<double>{0.0, 2.0});
    }
    SUBCASE("constant logits are a fixed point") {
        const auto tr = score_exchange(probe, sequence_of(std::vector<double>(30, 1.25)), ema(0.9));
        for (double s : tr.per_token_smoothed) CHECK(s == doctest::Approx(1.25).epsilon(1e-12));
    }
    SUBCASE("flag at first crossing") {
        const auto tr = score_exchange(probe, sequence_of({0, 2, 3}), ema(0.0001, 1.9));
        REQUIRE(tr.flagged_at.has_value());
        CHECK(*tr.flagged_at == 1);
    }
    SUBCASE("default decay") {
        StreamConfig c;
        c.window_size = 16;
        CHECK(c.decay() == 0.9375);
    }
}

TEST_CASE("stream configuration validation") {
    CHECK_THROWS_AS(ema(1.2).validate(), ConfigError);
    CHECK_THROWS_AS(ema(1.0).validate(), ConfigError);
    CHECK_THROWS_AS(ema(0.0).validate(), ConfigError);
    StreamConfig c;
    c.window_size = 1;  // decay 0 is not a valid EMA
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.smoothing = Smoothing::sliding_window;
    CHECK_NOTHROW(c.validate());
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(parse_smoothing("ema") == Smoothing::ema);
    CHECK_FALSE(parse_smoothing("median").has_value());
}

TEST_CASE("stream_config_for") {
    auto p = unit_probe(32, LossVariant::softmax_swim);
    auto c = stream_config_for(p, 1.5);
    CHECK(c.smoothing == Smoothing::ema);
    CHECK(c.window_size == 32);
    CHECK(c.threshold == 1.5);
    p.loss_variant = LossVariant::plain_bce;
    c = stream_config_for(p);
    CHECK(c.smoothing == Smoothing::sliding_window);
    CHECK(c.window_size == 1);
}

TEST_CASE("batch size does not change the trace") {
    std::mt19937_64 rng(11);
    const auto layers = testsupport::layers_of({5, 3});
    const auto probe = testsupport::random_probe(rng, layers, 8, LossVariant::softmax_swim);
    for (int rep = 0; rep < 20; ++rep) {
        const auto ex = testsupport::random_exchange(rng, layers, 1 + rng() % 100, rng() % 10, 0.0, "x");
        for (auto mode : {Smoothing::ema, Smoothing::sliding_window}) {
            StreamConfig c;
            c.smoothing = mode;
            c.window_size = 8;
            c.threshold = 0.7;
            c.batch_size = 1;
            const auto ref = score_exchange(probe, ex.sequence, c);
            for (std::size_t b : {8, 64}) {
                c.batch_size = b;
                const auto tr = score_exchange(probe, ex.sequence, c);
                CHECK(tr.per_token_smoothed == ref.per_token_smoothed);
                CHECK(tr.flagged_at == ref.flagged_at);
                CHECK(tr.cummax_prob == ref.cummax_prob);
            }
            CHECK(max_decision_logit(probe, ex.sequence, c) == ref.max_decision_logit());
        }
    }
}

TEST_CASE("cummax probability is non-decreasing") {
    std::mt19937_64 rng(3);
    const auto layers = testsupport::layers_of({4});
    const auto probe = testsupport::random_probe(rng, layers, 4, LossVariant::softmax_swim, 2.0);
    const auto ex = testsupport::random_exchange(rng, layers, 200, 20, 0.0, "x");
    const auto tr = score_exchange(probe, ex.sequence, stream_config_for(probe, 1e9));
    for (std::size_t t = 1; t < tr.cummax_prob.size(); ++t) CHECK(tr.cummax_prob[t] >= tr.cummax_prob[t - 1]);
    CHECK(tr.cummax_prob[0] == doctest::Approx(sigmoid(tr.per_token_smoothed[0])));
}

TEST_CASE("sliding window matches window means once full") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal;
    std::vector<double> z(50);
    for (auto& v : z) v = normal(rng);
    const auto seq = sequence_of(z);
    // Round-trip through float so both sides see the same inputs.
    std::vector<double> zf;
    for (float f : seq.features) zf.push_back(f);
    StreamConfig c;
    c.smoothing = Smoothing::sliding_window;
    c.window_size = 6;
    const auto tr = score_exchange(unit_probe(), seq, c);
    const auto means = window_means(zf, 6);
    REQUIRE(means.size() == 45);
    CHECK(tr.first_full_window == 5);
    for (std::size_t t = 5; t < 50; ++t) CHECK(tr.per_token_smoothed[t] == doctest::Approx(means[t - 5]).epsilon(1e-12));
    // Before the window fills the value is the prefix mean.
    CHECK(tr.per_token_smoothed[1] == doctest::Approx((zf[0] + zf[1]) / 2));
}

TEST_CASE("flag is terminal for the stream") {
    const auto probe = unit_probe();
    auto c = ema(0.5, 1.0);
    auto st = init_stream(c);
    const std::vector<float> rows = {0.0f, 5.0f, -20.0f};
    const auto up = update_stream(st, probe, c, rows);
    REQUIRE(up.flag_event.has_value());
    CHECK(*up.flag_event == 1);
    // Tokens after the flag inside the batch are still scored.
    CHECK(up.smoothed.size() == 3);
    const std::vector<float> more = {0.0f};
    CHECK_THROWS_AS(update_stream(st, probe, c, more), StreamFlaggedError);

    // Trace keeps going after the flag.
    const auto tr = score_exchange(probe, sequence_of({0, 5, -20, -20}), c);
    CHECK(tr.per_token_smoothed.size() == 4);
    CHECK(tr.flagged_at == 1u);
}

TEST_CASE("width mismatch") {
    auto p = unit_probe();
    auto c = ema(0.5);
    auto st = init_stream(c);
    const std::vector<float> rows = {1.0f};
    auto p2 = make_probe(testsupport::layers_of({2}));
    const std::vector<float> odd = {1.0f, 2.0f, 3.0f};
    CHECK_THROWS_AS(update_stream(st, p2, c, odd), DimensionError);
    CHECK_NOTHROW(update_stream(st, p, c, rows));
}

TEST_CASE("EMA footprint does not grow with stream length") {
    const auto probe = unit_probe();
    auto c = ema(0.9, 1e9);
    auto st = init_stream(c);
    const auto before = st.footprint_bytes();
    std::vector<float> chunk(1000, 0.5f);
    for (int i = 0; i < 100; ++i) update_stream(st, probe, c, chunk);
    CHECK(st.tokens_seen == 100000);
    CHECK(st.footprint_bytes() == before);

    StreamConfig w;
    w.smoothing = Smoothing::sliding_window;
    w.window_size = 32;
    w.threshold = 1e9;
    auto sw = init_stream(w);
    const auto sw_before = sw.footprint_bytes();
    for (int i = 0; i < 20; ++i) update_stream(sw, probe, w, chunk);
    CHECK(sw.footprint_bytes() == sw_before);
}

TEST_CASE("flag on the last token") {
    const auto tr = score_exchange(unit_probe(), sequence_of({0, 0, 0, 10}, 1), ema(0.5, 4.0));
    CHECK(tr.flagged_at == 3u);
}

TEST_CASE("decision points") {
    StreamConfig c;
    CHECK(is_decision_point(c, 3, 2));
    CHECK_FALSE(is_decision_point(c, 3, 1));
    CHECK(is_decision_point(c, 3, 3));
    CHECK(is_decision_point(c, 0, 0));
    c.check_prompt_boundary = false;
    CHECK_FALSE(is_decision_point(c, 3, 2));

    // A spike inside the prompt does not flag; the same spike at the boundary does.
    const auto probe = unit_probe();
    auto e = ema(0.01, 5.0);
    CHECK_FALSE(score_exchange(probe, sequence_of({9, 0, 0, 0}, 2), e).flagged_at);
    CHECK(score_exchange(probe, sequence_of({0, 9, 0, 0}, 2), e).flagged_at == 1u);
    CHECK(score_exchange(probe, sequence_of({0, 0, 0}, 3), e).max_decision_logit() == 0.0);
    CHECK(std::isinf(score_exchange(probe, sequence_of({1, 1}, 2), [] {
                         auto c2 = ema(0.5);
                         c2.check_prompt_boundary = false;
                         return c2;
                     }())
                         .max_decision_logit()));
}

TEST_CASE("flag position is monotone in the threshold") {
    std::mt19937_64 rng(9);
    const auto layers = testsupport::layers_of({6});
    const auto probe = testsupport::random_probe(rng, layers, 8, LossVariant::softmax_swim, 1.0);
    for (int rep = 0; rep < 10; ++rep) {
        const auto ex = testsupport::random_exchange(rng, layers, 80, 10, 0.0, "x");
        std::optional<std::size_t> prev = 0;
        for (double v = -2.0; v <= 2.0; v += 0.1) {
            const auto f = score_exchange(probe, ex.sequence, stream_config_for(probe, v)).flagged_at;
            if (!prev) CHECK_FALSE(f.has_value());
            if (prev && f) CHECK(*f >= *prev);
            prev = f;
        }
    }
}

TEST_CASE("a stream prefix sees the same values as the full stream") {
    std::mt19937_64 rng(10);
    const auto layers = testsupport::layers_of({3});
    const auto probe = testsupport::random_probe(rng, layers, 4, LossVariant::softmax_swim);
    const auto ex = testsupport::random_exchange(rng, layers, 60, 5, 0.0, "x");
    auto prefix = ex.sequence;
    prefix.n_tokens = 30;
    prefix.features.resize(30 * prefix.feature_dim);
    prefix.roles.resize(30);
    const auto c = stream_config_for(probe, 1e9);
    const auto full = score_exchange(probe, ex.sequence, c);
    const auto part = score_exchange(probe, prefix, c);
    for (std::size_t t = 0; t < 30; ++t) CHECK(part.per_token_smoothed[t] == full.per_token_smoothed[t]);
}

TEST_CASE("trace output") {
    std::ostringstream out;
    const auto tr = score_exchange(unit_probe(), sequence_of({0, 4, 0}), ema(0.5, 1.5));
    write_trace(out, "ex1", tr);
    std::istringstream in(out.str());
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0].rfind("ex1\t0\t0\t0\t0.5\t0", 0) == 0);
    CHECK(lines[1].substr(0, 10) == "ex1\t1\t4\t2\t");
    CHECK(lines[1].back() == '1');
    CHECK(lines[2].back() == '1');
}
