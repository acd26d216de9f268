#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dovis/error.hpp"
#include "dovis/rank.hpp"
#include "dovis/rng.hpp"

using namespace dovis;
using kernel::StochasticKernel;

namespace {

SimplexVector random_simplex(std::size_t n, Rng &rng) {
    std::vector<double> v(n);
    for (auto &x : v) {
        x = rng.uniform(0.05, 1.0);
    }
    return SimplexVector::normalized(v);
}

StochasticKernel random_kernel(std::size_t n, Rng &rng, const SimplexVector &prior) {
    std::vector<std::vector<double>> rows(n, std::vector<double>(n, 0.0));
    for (auto &row : rows) {
        if (rng.bernoulli(0.15)) {
            continue; // dangling row
        }
        double total = 0.0;
        for (auto &x : row) {
            x = rng.bernoulli(0.4) ? rng.uniform() : 0.0;
            total += x;
        }
        if (total == 0.0) {
            row[rng.uniform_index(n)] = 1.0;
            total = 1.0;
        }
        for (auto &x : row) {
            x /= total;
        }
    }
    return StochasticKernel::from_dense(rows, prior);
}

} // namespace

TEST_CASE("two-node fixed point") {
    const auto v = SimplexVector::uniform(2);
    const auto k = StochasticKernel::from_dense({{0.0, 1.0}, {0.0, 1.0}}, v);
    const auto r = rank::fixed_point(k, 0.85, v);
    CHECK(r.vector[0] == doctest::Approx(0.075).epsilon(1e-9));
    CHECK(r.vector[1] == doctest::Approx(0.925).epsilon(1e-9));
    const auto c = rank::closed_form_rank(k, 0.85, v);
    CHECK(c[0] == doctest::Approx(0.075).epsilon(1e-12));
    CHECK(c[1] == doctest::Approx(0.925).epsilon(1e-12));
}

TEST_CASE("uniform kernel and prior leave the prior fixed") {
    const std::size_t n = 7;
    const auto v = SimplexVector::uniform(n);
    const auto k = StochasticKernel::from_dense(std::vector<std::vector<double>>(n, v.vec()), v);
    const auto r = rank::fixed_point(k, 0.85, v);
    for (double x : r.vector) {
        CHECK(x == doctest::Approx(1.0 / n).epsilon(1e-14));
    }
    CHECK(r.iterations <= 1);
}

TEST_CASE("all-backoff kernel returns the prior") {
    Rng rng(2);
    const auto v = random_simplex(9, rng);
    const auto k = StochasticKernel::from_dense(std::vector<std::vector<double>>(9, std::vector<double>(9, 0.0)), v);
    const auto r = rank::fixed_point(k, 0.85, v);
    CHECK(l1_distance(r.vector.values(), v.values()) <= 1e-12);
}

TEST_CASE("property: iteration matches the closed form") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(30);
        const auto v = random_simplex(n, rng);
        const auto k = random_kernel(n, rng, v);
        const double a = rng.uniform(0.05, 0.95);
        const auto it = rank::fixed_point(k, a, v, {1e-13, 2000, false});
        const auto cf = rank::closed_form_rank(k, a, v);
        CHECK(l1_distance(it.vector.values(), cf.values()) <= 1e-9);
        CHECK(it.iterations <= rank::iteration_bound(a, 1e-13));
        for (double x : it.vector) {
            CHECK(x >= (1.0 - a) * v.min() - 1e-15);
        }
    }
}

TEST_CASE("closed form equals the truncated Neumann series") {
    Rng rng(4);
    const std::size_t n = 6;
    const auto v = random_simplex(n, rng);
    const auto k = random_kernel(n, rng, v);
    const double a = 0.7;
    std::vector<double> term(v.vec()), acc(n, 0.0), next(n);
    for (int m = 0; m < 200; ++m) {
        for (std::size_t i = 0; i < n; ++i) {
            acc[i] += (1.0 - a) * term[i];
        }
        k.apply_transpose(term, next);
        for (std::size_t i = 0; i < n; ++i) {
            term[i] = a * next[i];
        }
    }
    const auto cf = rank::closed_form_rank(k, a, v);
    CHECK(l1_distance(acc, cf.values()) <= 1e-12);
}

TEST_CASE("iteration bound") {
    CHECK(rank::iteration_bound(0.85, 1e-10) == 146);
    CHECK(rank::iteration_bound(0.5, 0.5) == 2);
    CHECK_THROWS_AS(rank::iteration_bound(1.0, 1e-10), InvalidArgument);
    CHECK_THROWS_AS(rank::iteration_bound(0.85, 0.0), InvalidArgument);
}

TEST_CASE("convergence failure carries the last iterate") {
    Rng rng(6);
    const auto v = random_simplex(5, rng);
    const auto k = random_kernel(5, rng, v);
    try {
        rank::fixed_point(k, 0.99, v, {1e-14, 3, false});
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError &e) {
        CHECK(e.best_iterate().size() == 5);
        CHECK(e.iterations() == 3);
    }
}

TEST_CASE("trajectory recording") {
    const auto v = SimplexVector::uniform(2);
    const auto k = StochasticKernel::from_dense({{0.0, 1.0}, {1.0, 0.0}}, v);
    const auto r = rank::fixed_point(k, 0.5, v, {1e-10, 200, true});
    REQUIRE_FALSE(r.trajectory.empty());
    CHECK(r.trajectory.front() == v.vec());
    CHECK(r.trajectory.size() == static_cast<std::size_t>(r.iterations) + 1);
}

TEST_CASE("fixed_point rejects invalid input") {
    const auto v = SimplexVector::uniform(2);
    const auto k = StochasticKernel::from_dense({{0.0, 1.0}, {0.0, 1.0}}, v);
    CHECK_THROWS_AS(rank::fixed_point(k, 1.0, v), InvalidArgument);
    CHECK_THROWS_AS(rank::fixed_point(k, 0.0, v), InvalidArgument);
    CHECK_THROWS_AS(rank::fixed_point(k, 0.85, SimplexVector::uniform(3)), DimensionError);
    const auto bad = StochasticKernel::unchecked_from_dense({{0.0, 0.7}, {0.0, 1.0}}, v);
    CHECK_THROWS_AS(rank::fixed_point(bad, 0.85, v), InvalidArgument);
}

TEST_CASE("fuse examples") {
    const SimplexVector x({0.7, 0.2, 0.1});
    const SimplexVector y({0.1, 0.3, 0.6});
    CHECK(rank::fuse(x, y, 1.0) == x);
    CHECK(rank::fuse(x, y, 0.0) == y);

    const auto half = rank::fuse(x, y, 0.5);
    const double z = std::sqrt(0.07) + std::sqrt(0.06) + std::sqrt(0.06);
    CHECK(half[0] == doctest::Approx(std::sqrt(0.07) / z).epsilon(1e-14));
    CHECK(half[1] == doctest::Approx(half[2]).epsilon(1e-14));

    // Tiny entries survive fusion in log space.
    const SimplexVector a({1e-300, 1.0 - 1e-300});
    const SimplexVector b({1e-300, 1.0 - 1e-300});
    const auto f = rank::fuse(a, b, 0.5);
    CHECK(f[0] > 0.0);
    CHECK(f[0] == doctest::Approx(1e-300).epsilon(1e-9));
    CHECK_THROWS_AS(rank::fuse(x, y, 1.5), InvalidArgument);
    CHECK_THROWS_AS(rank::fuse(x, SimplexVector::uniform(2), 0.5), DimensionError);
}

TEST_CASE("property: fusion stays on the simplex and is symmetric in p") {
    Rng rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(20);
        const auto x = random_simplex(n, rng);
        const auto y = random_simplex(n, rng);
        const double p = rng.uniform();
        const auto f = rank::fuse(x, y, p);
        const auto g = rank::fuse(y, x, 1.0 - p);
        CHECK(l1_distance(f.values(), g.values()) <= 1e-14);
        double total = 0.0;
        for (double v : f) {
            CHECK(v > 0.0);
            total += v;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("hyperparameter validation") {
    rank::RankHyperparams hp;
    CHECK_NOTHROW(hp.validate());
    hp.alpha = 1.0;
    CHECK_THROWS_AS(hp.validate(), InvalidArgument);
    hp = {};
    hp.p = -0.1;
    CHECK_THROWS_AS(hp.validate(), InvalidArgument);
    hp = {};
    hp.max_iter = 0;
    CHECK_THROWS_AS(hp.validate(), InvalidArgument);
}

TEST_CASE("order_by_score breaks ties by index") {
    const std::vector<double> s{0.2, 0.5, 0.2, 0.1, 0.5};
    CHECK(rank::order_by_score(s) == std::vector<std::size_t>{1, 4, 0, 2, 3});
}

TEST_CASE("rank_pipeline and ranks CSV") {
    const IdIndex ids({"a", "b", "c"});
    oat::AggregateSnapshot snap;
    snap[{"a", "b", "t1"}] = oat::SufficientStats{10, 9, {}, {}, {}, {}};
    snap[{"b", "c", "t2"}] = oat::SufficientStats{10, 1, {}, {}, {}, {}};
    const auto priors = rank::Priors::uniform(3);
    const rank::RankHyperparams hp;
    const auto set = rank::rank_pipeline(snap, ids, {"t1", "t2"}, kernel::UtilityWeights{}, priors, hp);
    REQUIRE(set.per_task.size() == 2);
    CHECK(rank::order_by_score(set.per_task.at("t1").fused.values()).front() == 1);
    CHECK(rank::order_by_score(set.per_task.at("t2").usage.values()).front() == 2);

    // Each task only sees its own edges.
    kernel::KernelOptions only_t1{"t1", false};
    const auto k1 = kernel::build_kernels(snap, ids, kernel::UtilityWeights{}, priors.usage, priors.competence, only_t1);
    const auto direct = rank::rank_kernels(k1, priors, hp);
    CHECK(l1_distance(direct.fused.values(), set.per_task.at("t1").fused.values()) <= 1e-15);

    std::ostringstream csv;
    rank::write_ranks_csv(csv, set, ids);
    const auto text = csv.str();
    CHECK(text.rfind("task,agent,rank\n", 0) == 0);
    CHECK(text.find("GLOBAL,") < text.find("t1,"));
    CHECK(text.find("t1,") < text.find("t2,"));
    std::size_t lines = 0;
    for (char ch : text) {
        lines += ch == '\n';
    }
    CHECK(lines == 1 + 3 * 3);

    const auto global_only = rank::rank_pipeline(snap, ids, {}, kernel::UtilityWeights{}, priors, hp);
    CHECK(global_only.per_task.empty());
    CHECK(global_only.global.fused == set.global.fused);
}
