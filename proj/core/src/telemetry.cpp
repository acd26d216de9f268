#include "dovis/telemetry.hpp"

#include <charconv>
#include <cmath>
#include <set>

#include "dovis/error.hpp"
#include "dovis/signing.hpp"

namespace dovis::oat {

std::string Signature::encode() const { return std::to_string(signed_at) + ":" + mac; }

Signature Signature::decode(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) {
        throw ValidationError("signature is not of the form <signed_at>:<mac>");
    }
    Signature sig;
    const auto head = text.substr(0, colon);
    const auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), sig.signed_at);
    if (ec != std::errc{} || ptr != head.data() + head.size()) {
        throw ValidationError("signature timestamp is not an unsigned integer");
    }
    sig.mac = std::string(text.substr(colon + 1));
    return sig;
}

// ---------------------------------------------------------------------------

DecayParams::DecayParams(double rate) : lambda(rate) {
    if (!(rate > 0.0) || !std::isfinite(rate)) {
        throw InvalidArgument("decay rate must be positive and finite");
    }
}

DecayParams DecayParams::from_half_life(double half_life_epochs) {
    if (!(half_life_epochs > 0.0)) {
        throw InvalidArgument("half-life must be positive");
    }
    return DecayParams(std::log(2.0) / half_life_epochs);
}

double DecayParams::half_life() const { return std::log(2.0) / lambda; }

double DecayParams::factor() const { return std::exp(-lambda); }

SufficientStats SufficientStats::from_report(const CallerReport &report) {
    SufficientStats st;
    st.n = report.n_calls;
    st.s = report.n_success;
    st.sum_q = report.sum_quality;
    st.sum_l = report.sum_latency;
    st.sum_c = report.sum_cost;
    st.sum_r = report.sum_risk;
    return st;
}

namespace {

std::optional<double> fold_field(const std::optional<double> &carried, const std::optional<double> &raw,
                                 double factor) {
    if (!carried && !raw) {
        return std::nullopt;
    }
    return factor * carried.value_or(0.0) + raw.value_or(0.0);
}

SufficientStats fold_with(const SufficientStats &carried, const SufficientStats &raw, double f) {
    SufficientStats out;
    out.n = f * carried.n + raw.n;
    out.s = f * carried.s + raw.s;
    out.sum_q = fold_field(carried.sum_q, raw.sum_q, f);
    out.sum_l = fold_field(carried.sum_l, raw.sum_l, f);
    out.sum_c = fold_field(carried.sum_c, raw.sum_c, f);
    out.sum_r = fold_field(carried.sum_r, raw.sum_r, f);
    return out;
}

} // namespace

SufficientStats fold_decay(const SufficientStats &carried, const SufficientStats &raw,
                           const DecayParams &decay) {
    return fold_with(carried, raw, decay.factor());
}

AggregateSnapshot fold_decay(const AggregateSnapshot &carried, const AggregateSnapshot &raw,
                             const DecayParams &decay) {
    const double f = decay.factor();
    static const SufficientStats kZero{};
    AggregateSnapshot out;
    auto c = carried.begin();
    auto r = raw.begin();
    // Merge of two sorted maps.
    while (c != carried.end() || r != raw.end()) {
        if (r == raw.end() || (c != carried.end() && c->first < r->first)) {
            out.emplace_hint(out.end(), c->first, fold_with(c->second, kZero, f));
            ++c;
        } else if (c == carried.end() || r->first < c->first) {
            out.emplace_hint(out.end(), r->first, fold_with(kZero, r->second, f));
            ++r;
        } else {
            out.emplace_hint(out.end(), c->first, fold_with(c->second, r->second, f));
            ++c;
            ++r;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(RejectReason reason) {
    switch (reason) {
    case RejectReason::kNone:
        return "none";
    case RejectReason::kBadSignature:
        return "bad_signature";
    case RejectReason::kStaleEpoch:
        return "stale_epoch";
    case RejectReason::kFutureEpoch:
        return "future_epoch";
    case RejectReason::kRangeViolation:
        return "range_violation";
    case RejectReason::kSchemaMismatch:
        return "schema_mismatch";
    case RejectReason::kSuperseded:
        return "superseded";
    }
    return "unknown";
}

namespace {

// Decayed S and N are scaled by the same factor, so S <= N can be broken by
// one rounding step. Allow that much and no more.
bool leq_with_rounding(double a, double b) { return a <= b + 1e-12 * std::max(1.0, std::abs(b)); }

std::optional<std::string> check_optional_sum(const std::optional<double> &sum, std::string_view name) {
    if (sum && (!std::isfinite(*sum) || *sum < 0.0)) {
        return std::string(name) + " must be finite and non-negative";
    }
    return std::nullopt;
}

} // namespace

std::optional<std::string> check_ranges(const CallerReport &report) {
    if (!std::isfinite(report.n_calls) || report.n_calls < 0.0) {
        return "n_calls must be finite and non-negative";
    }
    if (!std::isfinite(report.n_success) || report.n_success < 0.0) {
        return "n_success must be finite and non-negative";
    }
    if (!leq_with_rounding(report.n_success, report.n_calls)) {
        return "n_success exceeds n_calls";
    }
    for (const auto &[sum, name] : {std::pair{&report.sum_quality, "sum_quality"},
                                    std::pair{&report.sum_latency, "sum_latency"},
                                    std::pair{&report.sum_cost, "sum_cost"},
                                    std::pair{&report.sum_risk, "sum_risk"}}) {
        if (auto err = check_optional_sum(*sum, name)) {
            return err;
        }
    }
    if (report.sum_quality && !leq_with_rounding(*report.sum_quality, report.n_calls)) {
        return "sum_quality exceeds n_calls";
    }
    if (report.sum_risk && !leq_with_rounding(*report.sum_risk, report.n_calls)) {
        return "sum_risk exceeds n_calls";
    }
    if (report.epoch_id < 0) {
        return "epoch_id must be non-negative";
    }
    return std::nullopt;
}

std::optional<std::string> check_ranges(const CalleeAck &ack) {
    if (!std::isfinite(ack.n_calls_received) || ack.n_calls_received < 0.0) {
        return "n_calls_received must be finite and non-negative";
    }
    if (ack.epoch_id < 0) {
        return "epoch_id must be non-negative";
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------

TelemetryStore::TelemetryStore(std::int64_t current_epoch, int grace_epochs)
    : current_epoch_(current_epoch), grace_epochs_(grace_epochs) {
    if (grace_epochs < 0) {
        throw InvalidArgument("grace_epochs must be non-negative");
    }
}

std::optional<RejectReason> TelemetryStore::check_epoch(std::int64_t epoch) const {
    if (epoch < current_epoch_ - grace_epochs_) {
        return RejectReason::kStaleEpoch;
    }
    if (epoch > current_epoch_) {
        return RejectReason::kFutureEpoch;
    }
    return std::nullopt;
}

namespace {

template <typename Record>
IngestResult validate(const Record &record, std::string_view signer, const SignatureVerifier &verifier) {
    if (record.schema_version != kSchemaVersion) {
        return {IngestStatus::kRejected, RejectReason::kSchemaMismatch,
                "unsupported schema_version '" + record.schema_version + "'"};
    }
    if (!verifier.verify(signer, canonical_payload(record), record.signature)) {
        return {IngestStatus::kRejected, RejectReason::kBadSignature, "signature does not verify"};
    }
    if (auto err = check_ranges(record)) {
        return {IngestStatus::kRejected, RejectReason::kRangeViolation, *err};
    }
    return {};
}

// Latest signature timestamp wins; the tag breaks exact timestamp ties so the
// retained version is independent of arrival order.
template <typename Map, typename Key, typename Record>
IngestResult upsert(Map &bucket, Key key, const Record &record) {
    auto it = bucket.find(key);
    if (it == bucket.end()) {
        bucket.emplace(std::move(key), record);
        return {IngestStatus::kAccepted, RejectReason::kNone, {}};
    }
    if (it->second == record) {
        return {IngestStatus::kReplaced, RejectReason::kNone, "identical resubmission"};
    }
    if (record.signature > it->second.signature) {
        it->second = record;
        return {IngestStatus::kReplaced, RejectReason::kNone, {}};
    }
    return {IngestStatus::kRejected, RejectReason::kSuperseded, "a newer version is already retained"};
}

} // namespace

IngestResult TelemetryStore::ingest(const CallerReport &report, const SignatureVerifier &verifier) {
    if (auto res = validate(report, report.caller_id, verifier); !res.ok()) {
        return res;
    }
    if (auto bad = check_epoch(report.epoch_id)) {
        return {IngestStatus::kRejected, *bad,
                "epoch " + std::to_string(report.epoch_id) + " outside [" +
                    std::to_string(current_epoch_ - grace_epochs_) + ", " + std::to_string(current_epoch_) + "]"};
    }
    return upsert(reports_[report.epoch_id], EdgeKey{report.caller_id, report.callee_id, report.task_id}, report);
}

IngestResult TelemetryStore::ingest(const CalleeAck &ack, const SignatureVerifier &verifier) {
    if (auto res = validate(ack, ack.callee_id, verifier); !res.ok()) {
        return res;
    }
    if (auto bad = check_epoch(ack.epoch_id)) {
        return {IngestStatus::kRejected, *bad, "acknowledgment epoch outside grace window"};
    }
    return upsert(acks_[ack.epoch_id], AckKey{ack.callee_id, ack.task_id}, ack);
}

AggregateSnapshot TelemetryStore::assemble(std::int64_t epoch) const {
    AggregateSnapshot snapshot;
    auto it = reports_.find(epoch);
    if (it == reports_.end()) {
        return snapshot;
    }
    for (const auto &[key, report] : it->second) {
        snapshot.emplace_hint(snapshot.end(), key, SufficientStats::from_report(report));
    }
    return snapshot;
}

AggregateSnapshot TelemetryStore::close_epoch() {
    AggregateSnapshot snapshot = assemble(current_epoch_);
    ++current_epoch_;
    const auto oldest = current_epoch_ - grace_epochs_;
    std::erase_if(reports_, [oldest](const auto &kv) { return kv.first < oldest; });
    std::erase_if(acks_, [oldest](const auto &kv) { return kv.first < oldest; });
    return snapshot;
}

std::vector<CallerReport> TelemetryStore::reports_for(std::int64_t epoch) const {
    std::vector<CallerReport> out;
    if (auto it = reports_.find(epoch); it != reports_.end()) {
        out.reserve(it->second.size());
        for (const auto &[key, report] : it->second) {
            out.push_back(report);
        }
    }
    return out;
}

std::vector<CalleeAck> TelemetryStore::acks_for(std::int64_t epoch) const {
    std::vector<CalleeAck> out;
    if (auto it = acks_.find(epoch); it != acks_.end()) {
        for (const auto &[key, ack] : it->second) {
            out.push_back(ack);
        }
    }
    return out;
}

std::size_t TelemetryStore::report_count() const noexcept {
    std::size_t total = 0;
    for (const auto &[epoch, bucket] : reports_) {
        total += bucket.size();
    }
    return total;
}

// ---------------------------------------------------------------------------

std::vector<Discrepancy> cross_check(std::span<const CallerReport> reports, std::span<const CalleeAck> acks,
                                     double tolerance) {
    if (!(tolerance >= 0.0)) {
        throw InvalidArgument("cross_check tolerance must be non-negative");
    }
    std::map<std::pair<std::string, std::string>, double> caller_totals;
    for (const auto &r : reports) {
        caller_totals[{r.callee_id, r.task_id}] += r.n_calls;
    }
    std::map<std::pair<std::string, std::string>, double> ack_totals;
    for (const auto &a : acks) {
        ack_totals[{a.callee_id, a.task_id}] += a.n_calls_received;
    }
    std::vector<Discrepancy> out;
    for (const auto &[key, received] : ack_totals) {
        const auto it = caller_totals.find(key);
        const double reported = it == caller_totals.end() ? 0.0 : it->second;
        if (std::abs(reported - received) > tolerance * std::max(1.0, received)) {
            out.push_back({key.first, key.second, reported, received});
        }
    }
    return out;
}

std::vector<EdgeKey> sample_audits(std::span<const EdgeKey> edges, double rate, Rng &rng) {
    if (!(rate > 0.0 && rate <= 1.0)) {
        throw InvalidArgument("audit rate must lie in (0, 1]");
    }
    std::vector<EdgeKey> out;
    for (const auto &e : edges) {
        if (rng.bernoulli(rate)) {
            out.push_back(e);
        }
    }
    return out;
}

} // namespace dovis::oat
