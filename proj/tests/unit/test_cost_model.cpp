#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "streamprobe/cost_model.hpp"
#include "streamprobe/errors.hpp"

using namespace streamprobe;

TEST_CASE("per-token costs") {
    CostModel m;
    CHECK(per_token_cost(m, CostComponent::probe) == 376832.0);
    CHECK(per_token_cost(m, CostComponent::stage2) == 8e9);
    CostModel tiny{1, 1, 1, 1};
    CHECK(per_token_cost(tiny, CostComponent::probe) == 2.0);
    CostModel bad = m;
    bad.hidden_dim = 0;
    CHECK_THROWS_AS(per_token_cost(bad, CostComponent::probe), ConfigError);
}

TEST_CASE("system cost") {
    CostModel m;
    const double ratio = 46.0 * 4096.0 / 4e9;
    CHECK(system_cost(m, 0.0).relative == doctest::Approx(ratio).epsilon(1e-12));
    CHECK(system_cost(m, 1.0).relative == doctest::Approx(1.0 + ratio).epsilon(1e-12));
    CHECK(system_cost(m, 0.055).relative == doctest::Approx(0.055 + ratio).epsilon(1e-12));
    CHECK(system_cost(m, 0.055).flops_per_token == doctest::Approx(376832.0 + 0.055 * 8e9));
    CHECK_THROWS_AS(system_cost(m, -0.01), std::invalid_argument);
    CHECK_THROWS_AS(system_cost(m, 1.01), std::invalid_argument);
    double prev = -1.0;
    for (int i = 0; i <= 100; ++i) {
        const double r = system_cost(m, i / 100.0).relative;
        CHECK(r > prev);
        prev = r;
    }
}

TEST_CASE("accounted cost agrees with the closed form") {
    CostModel m;
    std::mt19937_64 rng(5);
    for (double p : {0.0, 0.01, 0.055, 0.3, 1.0}) {
        std::bernoulli_distribution coin(p);
        std::vector<std::uint8_t> esc(10000);
        std::size_t k = 0;
        for (auto& e : esc) k += (e = coin(rng));
        const double frac = static_cast<double>(k) / esc.size();
        CHECK(accounted_cost(m, esc).relative == doctest::Approx(system_cost(m, frac).relative).epsilon(1e-9));
    }
    CHECK_THROWS_AS(accounted_cost(m, {}), std::invalid_argument);
}
