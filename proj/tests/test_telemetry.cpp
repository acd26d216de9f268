#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dovis/error.hpp"
#include "dovis/rng.hpp"
#include "dovis/signing.hpp"
#include "dovis/telemetry.hpp"
#include "dovis/wire.hpp"

using namespace dovis;
using namespace dovis::oat;

namespace {

HmacKeyring keyring_for(std::initializer_list<const char *> agents) {
    HmacKeyring ring;
    for (const char *a : agents) {
        ring.register_key(a, HmacKeyring::derive_key("test-secret", a));
    }
    return ring;
}

CallerReport report(std::int64_t epoch, double n, double s, const char *callee = "b") {
    CallerReport r;
    r.epoch_id = epoch;
    r.caller_id = "a";
    r.callee_id = callee;
    r.task_id = "t";
    r.n_calls = n;
    r.n_success = s;
    r.sum_quality = s;
    r.sum_latency = 250.0 * n;
    r.sum_cost = n;
    r.sum_risk = 0.05 * n;
    return r;
}

} // namespace

TEST_CASE("decay params relate rate and half-life") {
    const auto d = DecayParams::from_half_life(8.0);
    CHECK(d.half_life() == doctest::Approx(8.0).epsilon(1e-14));
    CHECK(d.lambda == doctest::Approx(std::log(2.0) / 8.0).epsilon(1e-14));
    CHECK_THROWS_AS(DecayParams{0.0}, InvalidArgument);
    CHECK_THROWS_AS(DecayParams{-1.0}, InvalidArgument);
    CHECK_THROWS_AS(DecayParams{std::numeric_limits<double>::infinity()}, InvalidArgument);
}

TEST_CASE("fold_decay examples") {
    const auto h8 = DecayParams::from_half_life(8.0);
    SufficientStats carried{8.0, 0.0, {}, {}, {}, {}};
    const auto out = fold_decay(carried, SufficientStats{}, h8);
    // 8 * 2^(-1/8) evaluated to 30 digits.
    CHECK(out.n == doctest::Approx(7.33603234563736985).epsilon(1e-14));

    SufficientStats raw{5.0, 3.0, {}, {}, {}, {}};
    const auto fresh = fold_decay(SufficientStats{}, raw, h8);
    CHECK(fresh.n == 5.0);
    CHECK(fresh.s == 3.0);

    // Very fast decay forgets the carried mass.
    const auto forget = fold_decay(SufficientStats{100.0, 50.0, 40.0, {}, {}, {}}, raw, DecayParams(800.0));
    CHECK(forget.n == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(forget.s == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("fold_decay keeps absent fields absent") {
    const auto d = DecayParams::from_half_life(4.0);
    SufficientStats a{2.0, 1.0, 1.0, std::nullopt, 3.0, std::nullopt};
    SufficientStats b{1.0, 1.0, std::nullopt, std::nullopt, 0.5, 0.2};
    const auto out = fold_decay(a, b, d);
    REQUIRE(out.sum_q.has_value());
    CHECK_FALSE(out.sum_l.has_value());
    REQUIRE(out.sum_r.has_value());
    CHECK(*out.sum_r == doctest::Approx(0.2));
    CHECK(*out.sum_q == doctest::Approx(d.factor()));
}

TEST_CASE("property: epoch-by-epoch folding equals direct weighted summation") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const auto d = DecayParams::from_half_life(rng.uniform(0.5, 32.0));
        const int epochs = 1 + static_cast<int>(rng.uniform_index(60));
        SufficientStats folded;
        std::vector<std::pair<double, double>> events; // (epoch, n) with successes = n/2
        for (int t = 0; t < epochs; ++t) {
            SufficientStats raw;
            if (rng.bernoulli(0.7)) {
                raw.n = std::floor(rng.uniform(0.0, 20.0));
                raw.s = std::floor(raw.n / 2.0);
                raw.sum_l = 300.0 * raw.n;
                events.emplace_back(t, raw.n);
            }
            folded = fold_decay(folded, raw, d);
        }
        const int T = epochs - 1;
        double n = 0.0, s = 0.0, l = 0.0;
        for (auto [t, cnt] : events) {
            const double w = std::exp(-d.lambda * (T - t));
            n += w * cnt;
            s += w * std::floor(cnt / 2.0);
            l += w * 300.0 * cnt;
        }
        CHECK(std::abs(folded.n - n) <= 1e-9 * std::max(1.0, n));
        CHECK(std::abs(folded.s - s) <= 1e-9 * std::max(1.0, s));
        if (folded.sum_l) {
            CHECK(std::abs(*folded.sum_l - l) <= 1e-9 * std::max(1.0, l));
        }
    }
}

TEST_CASE("property: monotone forgetting without events") {
    const auto d = DecayParams::from_half_life(3.0);
    SufficientStats st{10.0, 6.0, 5.0, 3000.0, 9.0, 0.4};
    for (int t = 0; t < 30; ++t) {
        const auto next = fold_decay(st, SufficientStats{}, d);
        CHECK(next.n < st.n);
        CHECK(next.s < st.s);
        CHECK(*next.sum_l < *st.sum_l);
        CHECK(next.n == doctest::Approx(st.n * d.factor()).epsilon(1e-15));
        st = next;
    }
}

TEST_CASE("ingest: happy path, replacement, staleness and ranges") {
    const auto ring = keyring_for({"a", "b"});
    TelemetryStore store(5);

    auto r = report(5, 4.0, 3.0);
    ring.sign(r, 100);
    CHECK(store.ingest(r, ring).status == IngestStatus::kAccepted);

    auto newer = report(5, 6.0, 3.0);
    ring.sign(newer, 101);
    CHECK(store.ingest(newer, ring).status == IngestStatus::kReplaced);
    REQUIRE(store.reports_for(5).size() == 1);
    CHECK(store.reports_for(5)[0].n_calls == 6.0);

    auto older = report(5, 1.0, 1.0);
    ring.sign(older, 99);
    const auto res = store.ingest(older, ring);
    CHECK(res.status == IngestStatus::kRejected);
    CHECK(res.reason == RejectReason::kSuperseded);

    auto stale = report(2, 1.0, 1.0);
    ring.sign(stale, 100);
    CHECK(store.ingest(stale, ring).reason == RejectReason::kStaleEpoch);

    auto late_ok = report(3, 1.0, 1.0);
    ring.sign(late_ok, 100);
    CHECK(store.ingest(late_ok, ring).ok());

    auto future = report(6, 1.0, 1.0);
    ring.sign(future, 100);
    CHECK(store.ingest(future, ring).reason == RejectReason::kFutureEpoch);

    auto bad = report(5, 3.0, 5.0, "c");
    ring.sign(bad, 100);
    CHECK(store.ingest(bad, ring).reason == RejectReason::kRangeViolation);

    auto negative = report(5, 3.0, 1.0, "c");
    negative.sum_cost = -1.0;
    ring.sign(negative, 100);
    CHECK(store.ingest(negative, ring).reason == RejectReason::kRangeViolation);

    auto schema = report(5, 3.0, 1.0, "c");
    schema.schema_version = "oat-lite/0";
    ring.sign(schema, 100);
    CHECK(store.ingest(schema, ring).reason == RejectReason::kSchemaMismatch);
}

TEST_CASE("ingest: signatures bind every field and the signer") {
    const auto ring = keyring_for({"a", "b"});
    TelemetryStore store(0);
    auto r = report(0, 4.0, 3.0);
    ring.sign(r, 10);
    auto tampered = r;
    tampered.n_success = 4.0;
    CHECK(store.ingest(tampered, ring).reason == RejectReason::kBadSignature);

    auto wrong_time = r;
    wrong_time.signature.signed_at = 11;
    CHECK(store.ingest(wrong_time, ring).reason == RejectReason::kBadSignature);

    auto unknown = r;
    unknown.caller_id = "mallory";
    CHECK(store.ingest(unknown, ring).reason == RejectReason::kBadSignature);

    CHECK(store.ingest(r, ring).status == IngestStatus::kAccepted);
}

TEST_CASE("property: ingestion is idempotent") {
    const auto ring = keyring_for({"a", "b", "c"});
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        TelemetryStore once(0), twice(0);
        for (int k = 0; k < 20; ++k) {
            auto r = report(0, 1.0 + static_cast<double>(rng.uniform_index(10)), 1.0,
                            rng.bernoulli(0.5) ? "b" : "c");
            r.task_id = "t" + std::to_string(rng.uniform_index(3));
            ring.sign(r, rng.uniform_index(1000));
            once.ingest(r, ring);
            twice.ingest(r, ring);
            twice.ingest(r, ring);
        }
        CHECK(once == twice);
    }
}

TEST_CASE("property: last write wins under any arrival order") {
    const auto ring = keyring_for({"a", "b"});
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + rng.uniform_index(6);
        std::vector<CallerReport> versions;
        for (std::size_t v = 0; v < k; ++v) {
            auto r = report(0, 1.0 + static_cast<double>(v), 1.0);
            ring.sign(r, 1000 + rng.uniform_index(50));
            versions.push_back(r);
        }
        const auto best = *std::max_element(versions.begin(), versions.end(), [](const auto &x, const auto &y) {
            return x.signature < y.signature;
        });
        std::shuffle(versions.begin(), versions.end(), rng.engine());
        TelemetryStore store(0);
        for (const auto &r : versions) {
            store.ingest(r, ring);
        }
        REQUIRE(store.reports_for(0).size() == 1);
        CHECK(store.reports_for(0)[0] == best);
    }
}

TEST_CASE("grace window drops old epochs on close") {
    const auto ring = keyring_for({"a", "b"});
    TelemetryStore store(0, 2);
    for (int e = 0; e < 5; ++e) {
        auto r = report(e, 2.0, 1.0);
        ring.sign(r, 1);
        REQUIRE(store.ingest(r, ring).ok());
        const auto snap = store.close_epoch();
        CHECK(snap.size() == 1);
    }
    CHECK(store.current_epoch() == 5);
    CHECK(store.report_count() == 2); // epochs 3 and 4 remain
    auto r = report(2, 2.0, 1.0);
    ring.sign(r, 1);
    CHECK(store.ingest(r, ring).reason == RejectReason::kStaleEpoch);
}

TEST_CASE("close_epoch: empty store, dedup and missing features") {
    TelemetryStore empty(0);
    CHECK(empty.close_epoch().empty());
    CHECK(empty.current_epoch() == 1);

    AcceptAllVerifier any;
    TelemetryStore store(0);
    auto r = report(0, 4.0, 2.0);
    r.sum_cost.reset();
    r.signature = {1, ""};
    store.ingest(r, any);
    auto r2 = r;
    r2.signature = {2, ""};
    store.ingest(r2, any);
    const auto snap = store.close_epoch();
    REQUIRE(snap.size() == 1);
    const auto &st = snap.begin()->second;
    CHECK(st.n == 4.0);
    CHECK(st.s == 2.0);
    CHECK_FALSE(st.sum_c.has_value());
    CHECK_FALSE(st.mean_cost().has_value());
    CHECK(*st.mean_latency() == doctest::Approx(250.0));
}

TEST_CASE("cross_check examples") {
    std::vector<CallerReport> reports{report(0, 60.0, 0.0), report(0, 40.0, 0.0)};
    reports[1].caller_id = "z";
    CalleeAck ack;
    ack.callee_id = "b";
    ack.task_id = "t";
    ack.n_calls_received = 100.0;
    CHECK(cross_check(reports, std::vector{ack}, 0.05).empty());
    ack.n_calls_received = 80.0;
    const auto d = cross_check(reports, std::vector{ack}, 0.05);
    REQUIRE(d.size() == 1);
    CHECK(d[0].caller_total == 100.0);
    CHECK(d[0].ack_total == 80.0);
    CHECK(cross_check(reports, std::vector<CalleeAck>{}, 0.05).empty());
}

TEST_CASE("sample_audits") {
    std::vector<EdgeKey> edges;
    for (int i = 0; i < 10000; ++i) {
        edges.push_back({"c" + std::to_string(i), "x", "t"});
    }
    Rng rng(42);
    CHECK(sample_audits(edges, 1.0, rng).size() == edges.size());
    Rng a(5), b(5);
    const auto s1 = sample_audits(edges, 0.05, a);
    const auto s2 = sample_audits(edges, 0.05, b);
    CHECK(s1 == s2);
    // Binomial(10000, 0.05): mean 500, sd ~21.8.
    CHECK(s1.size() >= 400);
    CHECK(s1.size() <= 600);
    CHECK(sample_audits(std::vector<EdgeKey>{}, 0.05, rng).empty());
    CHECK_THROWS_AS(sample_audits(edges, 0.0, rng), InvalidArgument);
}

TEST_CASE("wire round trip preserves every field bit for bit") {
    const auto ring = keyring_for({"a", "b"});
    auto r = report(3, 7.123456789012345, 2.0 / 3.0);
    r.sum_risk.reset();
    ring.sign(r, 77);
    const auto back = std::get<CallerReport>(parse_record(to_json_line(r)));
    CHECK(back == r);

    CalleeAck ack;
    ack.epoch_id = 3;
    ack.callee_id = "b";
    ack.task_id = "t";
    ack.n_calls_received = 0.1 + 0.2;
    ring.sign(ack, 78);
    CHECK(std::get<CalleeAck>(parse_record(to_json_line(ack))) == ack);

    CHECK_THROWS_AS(parse_record("{not json"), ValidationError);
    CHECK_THROWS_AS(parse_record(R"({"epoch_id":1})"), ValidationError);
    CHECK_THROWS_AS(parse_record(R"({"epoch_id":"x","caller_id":"a","callee_id":"b","task_id":"t",)"
                                 R"("n_calls":1,"n_success":1,"schema_version":"oat-lite/1","signature":"1:ab"})"),
                    ValidationError);
}

TEST_CASE("snapshot csv marks absent sums as empty cells") {
    AggregateSnapshot snap;
    snap[{"a", "b", "t"}] = SufficientStats{2.0, 1.0, 1.0, std::nullopt, 0.5, std::nullopt};
    std::ostringstream out;
    write_snapshot_csv(out, snap);
    CHECK(out.str() == "caller,callee,task,N,S,sum_q,sum_l,sum_c,sum_r\na,b,t,2,1,1,,0.5,\n");
}

TEST_CASE("number formatting round trips") {
    Rng rng(9);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.uniform(0.0, 1e6) * std::pow(10.0, static_cast<double>(rng.uniform_index(20)) - 10.0);
        CHECK(std::stod(format_number(v)) == v);
    }
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(2.0) == "2");
}
