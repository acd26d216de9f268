#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dovis/rng.hpp"

namespace dovis::oat {

inline constexpr std::string_view kSchemaVersion = "oat-lite/1";

/// Signature attached to a record. `signed_at` orders competing versions of
/// the same key; `mac` is the lowercase hex authentication tag.
struct Signature {
    std::uint64_t signed_at = 0;
    std::string mac;

    /// Wire form "<signed_at>:<mac>".
    std::string encode() const;
    static Signature decode(std::string_view text);

    friend auto operator<=>(const Signature &, const Signature &) = default;
};

/// Caller-side aggregate snapshot for one (caller, callee, task, epoch).
/// Numeric fields are decayed values as of the epoch close. Missing optional
/// features are represented as nullopt, never as zero.
struct CallerReport {
    std::int64_t epoch_id = 0;
    std::string caller_id;
    std::string callee_id;
    std::string task_id;
    double n_calls = 0.0;
    double n_success = 0.0;
    std::optional<double> sum_quality;
    std::optional<double> sum_latency; // milliseconds
    std::optional<double> sum_cost;    // normalized credits
    std::optional<double> sum_risk;
    std::string schema_version{kSchemaVersion};
    Signature signature;

    friend bool operator==(const CallerReport &, const CallerReport &) = default;
};

struct CalleeAck {
    std::int64_t epoch_id = 0;
    std::string callee_id;
    std::string task_id;
    double n_calls_received = 0.0;
    std::string schema_version{kSchemaVersion};
    Signature signature;

    friend bool operator==(const CalleeAck &, const CalleeAck &) = default;
};

struct EdgeKey {
    std::string caller;
    std::string callee;
    std::string task;

    friend auto operator<=>(const EdgeKey &, const EdgeKey &) = default;
};

struct DecayParams {
    double lambda = 0.0;

    /// Throws InvalidArgument unless lambda > 0 and finite.
    explicit DecayParams(double rate);
    static DecayParams from_half_life(double half_life_epochs);

    double half_life() const;
    /// Per-epoch carry factor e^{-lambda}.
    double factor() const;
};

/// Decayed per-edge-per-task aggregates. Means are defined only when n > 0
/// and the corresponding sum is present.
struct SufficientStats {
    double n = 0.0;
    double s = 0.0;
    std::optional<double> sum_q;
    std::optional<double> sum_l;
    std::optional<double> sum_c;
    std::optional<double> sum_r;

    static SufficientStats from_report(const CallerReport &report);

    std::optional<double> mean_quality() const { return mean(sum_q); }
    std::optional<double> mean_latency() const { return mean(sum_l); }
    std::optional<double> mean_cost() const { return mean(sum_c); }
    std::optional<double> mean_risk() const { return mean(sum_r); }

    friend bool operator==(const SufficientStats &, const SufficientStats &) = default;

private:
    std::optional<double> mean(const std::optional<double> &sum) const {
        if (!sum || !(n > 0.0)) {
            return std::nullopt;
        }
        return *sum / n;
    }
};

/// One entry per reported (caller, callee, task). Absent keys carry zero mass.
using AggregateSnapshot = std::map<EdgeKey, SufficientStats>;

/// carried * e^{-lambda} + raw, field by field. A field absent on both sides
/// stays absent; absent on one side counts as zero.
SufficientStats fold_decay(const SufficientStats &carried, const SufficientStats &raw,
                           const DecayParams &decay);
AggregateSnapshot fold_decay(const AggregateSnapshot &carried, const AggregateSnapshot &raw,
                             const DecayParams &decay);

// ---------------------------------------------------------------------------
// Ingestion

enum class IngestStatus { kAccepted, kReplaced, kRejected };

enum class RejectReason {
    kNone,
    kBadSignature,
    kStaleEpoch,
    kFutureEpoch,
    kRangeViolation,
    kSchemaMismatch,
    kSuperseded, // an equal-or-newer version of the key is already retained
};

std::string_view to_string(RejectReason reason);

struct IngestResult {
    IngestStatus status = IngestStatus::kAccepted;
    RejectReason reason = RejectReason::kNone;
    std::string detail;

    bool ok() const noexcept { return status != IngestStatus::kRejected; }
};

/// Verifies a record's signature against the signer's registered key.
class SignatureVerifier {
public:
    virtual ~SignatureVerifier() = default;
    virtual bool verify(std::string_view signer_id, std::string_view payload,
                        const Signature &signature) const = 0;
};

/// Returns a description of the first violated range invariant, if any.
std::optional<std::string> check_ranges(const CallerReport &report);
std::optional<std::string> check_ranges(const CalleeAck &ack);

/// Deduplicating, grace-windowed report store for one indexer. Single writer.
class TelemetryStore {
public:
    static constexpr int kDefaultGraceEpochs = 2;

    explicit TelemetryStore(std::int64_t current_epoch = 0, int grace_epochs = kDefaultGraceEpochs);

    IngestResult ingest(const CallerReport &report, const SignatureVerifier &verifier);
    IngestResult ingest(const CalleeAck &ack, const SignatureVerifier &verifier);

    /// Snapshot of the retained reports for `epoch` (need not be closed yet).
    AggregateSnapshot assemble(std::int64_t epoch) const;

    /// Assembles the current epoch, advances the epoch counter and drops
    /// everything that has fallen out of the grace window.
    AggregateSnapshot close_epoch();

    std::vector<CallerReport> reports_for(std::int64_t epoch) const;
    std::vector<CalleeAck> acks_for(std::int64_t epoch) const;

    std::int64_t current_epoch() const noexcept { return current_epoch_; }
    int grace_epochs() const noexcept { return grace_epochs_; }
    std::size_t report_count() const noexcept;

    friend bool operator==(const TelemetryStore &, const TelemetryStore &) = default;

private:
    struct AckKey {
        std::string callee;
        std::string task;
        friend auto operator<=>(const AckKey &, const AckKey &) = default;
    };

    std::optional<RejectReason> check_epoch(std::int64_t epoch) const;

    std::int64_t current_epoch_;
    int grace_epochs_;
    std::map<std::int64_t, std::map<EdgeKey, CallerReport>> reports_;
    std::map<std::int64_t, std::map<AckKey, CalleeAck>> acks_;
};

// ---------------------------------------------------------------------------
// Verification

inline constexpr double kDefaultCrossCheckTolerance = 0.05;

struct Discrepancy {
    std::string callee;
    std::string task;
    double caller_total = 0.0;
    double ack_total = 0.0;

    friend bool operator==(const Discrepancy &, const Discrepancy &) = default;
};

/// Compares per-(callee, task) caller totals with callee acknowledgments.
/// Callees without an acknowledgment are skipped.
std::vector<Discrepancy> cross_check(std::span<const CallerReport> reports,
                                     std::span<const CalleeAck> acks,
                                     double tolerance = kDefaultCrossCheckTolerance);

/// Independent Bernoulli(rate) selection of edges for deep audit.
std::vector<EdgeKey> sample_audits(std::span<const EdgeKey> edges, double rate, Rng &rng);

} // namespace dovis::oat
