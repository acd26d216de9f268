#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dovis/error.hpp"
#include "dovis/metrics.hpp"
#include "dovis/rng.hpp"

using namespace dovis;
using namespace dovis::metrics;

TEST_CASE("top_k ordering") {
    const std::vector<double> r{0.1, 0.4, 0.4, 0.05};
    CHECK(top_k(r, 2) == std::vector<std::size_t>{1, 2});
    CHECK(top_k(r, 4) == std::vector<std::size_t>{1, 2, 0, 3});
}

TEST_CASE("quality, regret and sybil mass examples") {
    const std::vector<double> rank{0.4, 0.3, 0.2, 0.1};
    const std::vector<double> truth{0.2, 0.9, 0.5, 0.7};
    const EvalInput in{rank, truth, 2};
    CHECK(quality_at_k(in) == doctest::Approx(0.55));
    CHECK(regret_at_k(in) == doctest::Approx(0.35));
    const std::vector<std::size_t> excluded{0};
    CHECK(quality_at_k_excluding(in, excluded) == doctest::Approx(0.7));
    const std::vector<std::size_t> clique{1, 3};
    CHECK(sybil_mass(rank, clique) == doctest::Approx(0.4));
    CHECK(sybil_mass(rank, {}) == 0.0);
}

TEST_CASE("ndcg example") {
    const std::vector<double> truth{0.9, 0.5, 0.1};
    const std::vector<double> reversed{0.1, 0.2, 0.7};
    CHECK(ndcg_at_k({reversed, truth, 3}) == doctest::Approx(0.6839106265706899).epsilon(1e-14));
    CHECK(ndcg_at_k({truth, truth, 3}) == doctest::Approx(1.0));
    const std::vector<double> zeros{0.0, 0.0, 0.0};
    CHECK(ndcg_at_k({reversed, zeros, 2}) == 1.0);
}

TEST_CASE("correlation examples against reference values") {
    const std::vector<double> r{0.3, 0.1, 0.25, 0.05, 0.3, 0.12, 0.18};
    const std::vector<double> t{0.9, 0.2, 0.6, 0.6, 0.7, 0.1, 0.5};
    const auto c = rank_correlations(r, t);
    REQUIRE(c.spearman.has_value());
    REQUIRE(c.kendall.has_value());
    CHECK(*c.spearman == doctest::Approx(0.6727272727272727).epsilon(1e-14));
    CHECK(*c.kendall == doctest::Approx(0.5499999999999999).epsilon(1e-14));

    const std::vector<double> flat{0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2};
    const auto none = rank_correlations(flat, t);
    CHECK_FALSE(none.spearman.has_value());
    CHECK_FALSE(none.kendall.has_value());
}

TEST_CASE("input validation") {
    const std::vector<double> a{0.5, 0.5};
    const std::vector<double> b{0.1, 0.2, 0.3};
    CHECK_THROWS_AS(quality_at_k({a, b, 1}), DimensionError);
    CHECK_THROWS_AS(quality_at_k({a, a, 0}), InvalidArgument);
    CHECK_THROWS_AS(quality_at_k({a, a, 3}), InvalidArgument);
    CHECK_THROWS_AS(rank_correlations(a, b), DimensionError);
}

TEST_CASE("property: metric invariants") {
    Rng rng(77);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(60);
        const std::size_t k = 1 + rng.uniform_index(n);
        std::vector<double> rank(n), truth(n);
        for (std::size_t i = 0; i < n; ++i) {
            rank[i] = rng.bernoulli(0.1) ? 0.0 : rng.uniform();
            truth[i] = rng.uniform();
        }
        const EvalInput in{rank, truth, k};
        const double q = quality_at_k(in);
        const double best = *std::max_element(truth.begin(), truth.end());
        const double worst = *std::min_element(truth.begin(), truth.end());
        CHECK(q <= best + 1e-15);
        CHECK(q >= worst - 1e-15);
        CHECK(regret_at_k(in) >= -1e-15);
        const double nd = ndcg_at_k(in);
        CHECK(nd >= 0.0);
        CHECK(nd <= 1.0 + 1e-12);

        // The oracle ordering is optimal on every metric.
        const EvalInput oracle{truth, truth, k};
        CHECK(quality_at_k(oracle) >= q - 1e-15);
        CHECK(ndcg_at_k(oracle) == doctest::Approx(1.0).epsilon(1e-12));

        // A strictly increasing transform of the scores changes nothing.
        std::vector<double> squashed(n);
        std::transform(rank.begin(), rank.end(), squashed.begin(), [](double x) { return std::exp(3.0 * x); });
        CHECK(quality_at_k({squashed, truth, k}) == q);
        const auto c1 = rank_correlations(rank, truth);
        const auto c2 = rank_correlations(squashed, truth);
        REQUIRE(c1.spearman.has_value() == c2.spearman.has_value());
        if (c1.spearman) {
            CHECK(*c1.spearman == doctest::Approx(*c2.spearman).epsilon(1e-12));
            CHECK(*c1.kendall == doctest::Approx(*c2.kendall).epsilon(1e-12));
            CHECK(std::abs(*c1.spearman) <= 1.0 + 1e-12);
            CHECK(std::abs(*c1.kendall) <= 1.0 + 1e-12);
        }
        const auto self = rank_correlations(truth, truth);
        CHECK(*self.spearman == doctest::Approx(1.0));
        CHECK(*self.kendall == doctest::Approx(1.0));
    }
}
