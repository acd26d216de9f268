#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using dovis::cli::run;

namespace {

const fs::path kConfigs = DOVIS_CONFIG_DIR;

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string &name) {
    const auto dir = fs::temp_directory_path() / ("dovis-cli-test-" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t line_count(const std::string &text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

fs::path simulated() {
    static const fs::path dir = [] {
        const auto d = scratch("sim");
        REQUIRE(invoke({"simulate", "-c", (kConfigs / "small.yaml").string(), "-o", d.string()}).code == 0);
        return d;
    }();
    return dir;
}

} // namespace

TEST_CASE("usage errors and help") {
    CHECK(invoke({}).code == 2);
    CHECK(invoke({"--help"}).code == 0);
    const auto v = invoke({"--version"});
    CHECK(v.code == 0);
    CHECK(v.out.find(DOVIS_VERSION) != std::string::npos);
    CHECK(invoke({"frobnicate"}).code == 2);
    CHECK(invoke({"simulate", "-c", "/no/such/file.yaml"}).code == 2);
}

TEST_CASE("simulate writes every artifact and a manifest") {
    const auto dir = simulated();
    for (const auto *f : {"reports.jsonl", "ground_truth.csv", "ranks.csv", "metrics.csv", "agents.csv", "keys.csv"}) {
        CHECK_MESSAGE(fs::exists(dir / f), f);
    }
    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["status"] == "ok");
    CHECK(manifest["command"] == "simulate");
    CHECK(manifest["config_sha256"].get<std::string>().size() == 64);
    CHECK(manifest["seeds"] == nlohmann::json::array({7}));
    CHECK_FALSE(manifest["finished_at"].is_null());
    CHECK(slurp(dir / "ground_truth.csv").rfind("agent,task,theta,epoch\n", 0) == 0);
    CHECK(slurp(dir / "ranks.csv").rfind("task,agent,rank\n", 0) == 0);
}

TEST_CASE("simulate is reproducible for a fixed seed") {
    const auto a = scratch("det-a"), b = scratch("det-b"), c = scratch("det-c");
    const auto cfg = (kConfigs / "small.yaml").string();
    REQUIRE(invoke({"simulate", "-c", cfg, "--seed", "11", "-o", a.string()}).code == 0);
    REQUIRE(invoke({"simulate", "-c", cfg, "--seed", "11", "-o", b.string()}).code == 0);
    REQUIRE(invoke({"simulate", "-c", cfg, "--seed", "12", "-o", c.string()}).code == 0);
    for (const auto *f : {"metrics.csv", "ranks.csv", "reports.jsonl"}) {
        CHECK(slurp(a / f) == slurp(b / f));
    }
    CHECK(slurp(a / "metrics.csv") != slurp(c / "metrics.csv"));
}

TEST_CASE("rank reproduces the simulated ranks from the report stream") {
    const auto sim = simulated();
    const auto out = scratch("rank");
    const auto r = invoke({"rank", (sim / "reports.jsonl").string(), "-c", (kConfigs / "small.yaml").string(), "--keys",
                           (sim / "keys.csv").string(), "--agents", (sim / "agents.csv").string(), "-o", out.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(slurp(out / "ranks.csv") == slurp(sim / "ranks.csv"));

    SUBCASE("replaying every record twice changes nothing") {
        const auto doubled = scratch("doubled") / "reports.jsonl";
        fs::create_directories(doubled.parent_path());
        std::ofstream(doubled) << slurp(sim / "reports.jsonl") << slurp(sim / "reports.jsonl");
        const auto out2 = scratch("rank-doubled");
        REQUIRE(invoke({"rank", doubled.string(), "-c", (kConfigs / "small.yaml").string(), "--keys",
                        (sim / "keys.csv").string(), "--agents", (sim / "agents.csv").string(), "-o", out2.string()})
                    .code == 0);
        CHECK(slurp(out2 / "ranks.csv") == slurp(sim / "ranks.csv"));
    }
}

TEST_CASE("rank argument and data errors") {
    const auto sim = simulated();
    const auto stream = (sim / "reports.jsonl").string();
    const auto out = scratch("rank-errors").string();
    CHECK(invoke({"rank", stream, "-o", out}).code == 2); // neither --keys nor --skip-signatures
    CHECK(invoke({"rank", stream, "--skip-signatures", "--keys", (sim / "keys.csv").string(), "-o", out}).code == 2);
    CHECK(invoke({"rank", stream, "--skip-signatures", "--strict", "--lenient", "-o", out}).code == 2);

    const auto bad = scratch("bad-stream") / "reports.jsonl";
    fs::create_directories(bad.parent_path());
    std::ofstream(bad) << slurp(sim / "reports.jsonl") << "{\"kind\": \"report\", \"garbage\": true}\n";
    CHECK(invoke({"rank", bad.string(), "--skip-signatures", "-o", out}).code == 3);
    CHECK(invoke({"rank", bad.string(), "--skip-signatures", "--lenient", "-o", out}).code == 0);

    // A forged signature fails verification.
    auto text = slurp(sim / "reports.jsonl");
    const std::string field = "\"signature\":\"1:";
    const auto at = text.find(field) + field.size();
    REQUIRE(at > field.size());
    text[at] = text[at] == 'a' ? 'b' : 'a';
    const auto forged = scratch("forged") / "reports.jsonl";
    fs::create_directories(forged.parent_path());
    std::ofstream(forged) << text;
    CHECK(invoke({"rank", forged.string(), "--keys", (sim / "keys.csv").string(), "-o", out}).code == 3);

    SUBCASE("an empty stream with a roster ranks every agent at its prior") {
        const auto empty = scratch("empty") / "reports.jsonl";
        fs::create_directories(empty.parent_path());
        std::ofstream(empty) << "";
        const auto o = scratch("rank-empty");
        REQUIRE(invoke({"rank", empty.string(), "--skip-signatures", "--agents", (sim / "agents.csv").string(), "-o",
                        o.string()})
                    .code == 0);
        const auto ranks = slurp(o / "ranks.csv");
        CHECK(line_count(ranks) == 1 + 30);
        CHECK(ranks.find("GLOBAL,") != std::string::npos);
        CHECK(invoke({"rank", empty.string(), "--skip-signatures", "-o", o.string()}).code == 2);
    }
}

TEST_CASE("output root from the environment") {
    const auto root = scratch("env-root");
    ::setenv(dovis::cli::kOutRootEnv, root.string().c_str(), 1);
    const auto r = invoke({"verify-bounds", "-c", (kConfigs / "small.yaml").string()});
    ::unsetenv(dovis::cli::kOutRootEnv);
    CHECK(r.code == 0);
    CHECK(fs::exists(root / "verify-bounds" / "bounds.txt"));
    CHECK(fs::exists(root / "verify-bounds" / "manifest.json"));
}

TEST_CASE("config failures are usage errors") {
    const auto dir = scratch("bad-config");
    fs::create_directories(dir);
    std::ofstream(dir / "broken.yaml") << "world:\n  n: [1, 2\n";
    std::ofstream(dir / "unknown.yaml") << "world:\n  colour: blue\n";
    std::ofstream(dir / "empty-suite.yaml") << "verify:\n  trials: 0\n";
    const auto a = invoke({"simulate", "-c", (dir / "broken.yaml").string(), "-o", (dir / "o").string()});
    CHECK(a.code == 2);
    CHECK(a.err.find("line") != std::string::npos);
    const auto b = invoke({"simulate", "-c", (dir / "unknown.yaml").string(), "-o", (dir / "o").string()});
    CHECK(b.code == 2);
    CHECK(b.err.find("line 2") != std::string::npos);
    CHECK(invoke({"verify-bounds", "-c", (dir / "empty-suite.yaml").string(), "-o", (dir / "o").string()}).code == 2);
}

TEST_CASE("verify-bounds exit codes") {
    const auto cfg = (kConfigs / "small.yaml").string();
    const auto ok = invoke({"verify-bounds", "-c", cfg, "-o", scratch("vb").string()});
    CHECK(ok.code == 0);
    CHECK(ok.out.find(" 0 violated") != std::string::npos);
    const auto dir = scratch("vb-bad");
    const auto bad = invoke({"verify-bounds", "-c", cfg, "--corrupt-kernel", "-o", dir.string()});
    CHECK(bad.code == 1);
    CHECK(slurp(dir / "bounds.txt").find("# witness:") != std::string::npos);
}

TEST_CASE("experiment subcommand") {
    const auto cfg = (kConfigs / "small.yaml").string();
    const auto unknown = invoke({"experiment", "exp9", "-c", cfg});
    CHECK(unknown.code == 2);
    CHECK(unknown.err.find("exp1") != std::string::npos);

    SUBCASE("exp5 writes the sybil table") {
        const auto dir = scratch("exp5");
        REQUIRE(invoke({"experiment", "exp5", "-c", cfg, "-o", dir.string()}).code == 0);
        const auto table = slurp(dir / "sybil_mass.csv");
        CHECK(table.rfind("task,method,sybil_mass,quality_at_5_exclSY\n", 0) == 0);
        CHECK(line_count(table) == 1 + 3 * 4);
        CHECK(table.find(",,") == std::string::npos);
        CHECK(fs::exists(dir / "summary.csv"));
    }
    SUBCASE("exp2 writes the p sweep") {
        const auto dir = scratch("exp2");
        REQUIRE(invoke({"experiment", "exp2", "-c", cfg, "--seed", "3", "-o", dir.string()}).code == 0);
        const auto sweep = slurp(dir / "p_sweep.csv");
        std::istringstream lines(sweep);
        std::string line;
        std::getline(lines, line);
        CHECK(line == "regime,metric,p,value");
        std::map<std::string, int> per_group;
        while (std::getline(lines, line)) {
            const auto second = line.find(',', line.find(',') + 1);
            ++per_group[line.substr(0, second)];
        }
        CHECK(per_group.size() == 4);
        for (const auto &[group, count] : per_group) {
            CHECK_MESSAGE(count == 9, group);
        }
        const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
        CHECK(manifest["seeds"] == nlohmann::json::array({3}));
    }
}
