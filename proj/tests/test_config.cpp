#include <doctest.h>

#include <filesystem>

#include "dovis/config.hpp"
#include "dovis/error.hpp"

using namespace dovis;
using config::parse_config;

namespace {

int error_line(std::string_view text) {
    try {
        parse_config(text);
    } catch (const ConfigError &e) {
        return e.line();
    }
    FAIL("expected ConfigError");
    return -2;
}

} // namespace

TEST_CASE("empty document keeps defaults") {
    const auto cfg = parse_config("");
    CHECK(cfg.world.n == 100);
    CHECK(cfg.hp.alpha == 0.85);
    CHECK(cfg.experiment.world.n == 100);
    CHECK(cfg.verify.trials == 50);
}

TEST_CASE("realistic regime selects its defaults before overrides") {
    const auto cfg = parse_config("world:\n  regime: realistic\n  record_drop_rate: 0.1\n");
    const auto ref = sim::WorldConfig::for_regime(sim::Regime::kRealistic);
    CHECK(cfg.world.regime == sim::Regime::kRealistic);
    CHECK(cfg.world.record_drop_rate == 0.1);
    CHECK(cfg.world.sybil.size == ref.sybil.size);
    CHECK(cfg.world.caller_theta_sd == ref.caller_theta_sd);
    CHECK(cfg.world.pre_rank.proxy_noise == ref.pre_rank.proxy_noise);
}

TEST_CASE("top-level seed reaches world and verify") {
    const auto cfg = parse_config("seed: 42\n");
    CHECK(cfg.world.seed == 42);
    CHECK(cfg.verify.seed == 42);
    CHECK(cfg.experiment.world.seed == 42);
}

TEST_CASE("sections mirror into the experiment config") {
    const auto cfg = parse_config("rank:\n  p: 0.25\nutility:\n  risk: 0.1\n");
    CHECK(cfg.experiment.hp.p == 0.25);
    CHECK(cfg.experiment.weights.risk == 0.1);
}

TEST_CASE("shocks and census") {
    const auto cfg = parse_config(R"(world:
  n: 10
  census: {BS: 4, PbM: 3, NbE: 3}
  shocks:
    - {epoch: 5, target: "PbM#0", kind: degrade, delta: -0.2}
    - {epoch: 6, target: "NbE/1#0", kind: improve, delta: 0.1, tasks: [1]}
)");
    REQUIRE(cfg.world.shocks.size() == 2);
    CHECK(cfg.world.shocks[0].kind == sim::ShockKind::kDegrade);
    CHECK(cfg.world.shocks[1].tasks == std::vector<std::size_t>{1});
    CHECK(cfg.world.census.at(sim::Archetype::kPbM) == 3);
    CHECK_FALSE(cfg.world.census.contains(sim::Archetype::kSY));
}

TEST_CASE("errors carry the offending line") {
    CHECK(error_line("world:\n  n: 10\n  bogus: 3\n") == 3);
    CHECK(error_line("rank:\n  alpha: high\n") == 2);
    CHECK(error_line("rank:\n  alpha: [1, 2\n") >= 2);
    CHECK(error_line("seed: 1\nextra: true\n") == 2);
    CHECK(error_line("world:\n  calls_per_epoch: -5\n") == 2);
    CHECK(error_line("world:\n  census: {BS: 2, XX: 1}\n") == 2);
    CHECK(error_line("world:\n  shocks:\n    - {epoch: 1, kind: degrade}\n") == 3);
}

TEST_CASE("out-of-range settings are rejected") {
    CHECK_THROWS_AS(parse_config("rank:\n  alpha: 1.0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("world:\n  n: 50\n"), ConfigError); // census no longer sums to n
    CHECK_THROWS_AS(parse_config("utility:\n  alpha0: 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("experiment:\n  seeds: []\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("experiment:\n  p_grid: [0.5, 1.5]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("verify:\n  trials: 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("telemetry:\n  grace_epochs: -1\n"), ConfigError);
}

TEST_CASE("missing file") {
    try {
        config::load_config("/nonexistent/config.yaml");
        FAIL("expected ConfigError");
    } catch (const ConfigError &e) {
        CHECK(e.line() == -1);
    }
}

TEST_CASE("shipped configs parse") {
    const std::filesystem::path dir = DOVIS_CONFIG_DIR;
    int count = 0;
    for (const auto &entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".yaml") {
            CHECK_NOTHROW(config::load_config(entry.path()));
            ++count;
        }
    }
    CHECK(count >= 3);
    const auto small = config::load_config(dir / "small.yaml");
    CHECK(small.world.n == 30);
    CHECK(small.experiment.seeds == std::vector<std::uint64_t>{1, 2});
    CHECK(small.verify.sizes == std::vector<std::size_t>{10, 30});
}
