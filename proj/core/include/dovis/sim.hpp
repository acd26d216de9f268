#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dovis/ids.hpp"
#include "dovis/kernel.hpp"
#include "dovis/rank.hpp"
#include "dovis/rng.hpp"
#include "dovis/signing.hpp"
#include "dovis/telemetry.hpp"

namespace dovis::sim {

enum class Archetype { kBS, kPbM, kNbE, kCbR, kSY, kNC };

inline constexpr Archetype kAllArchetypes[] = {Archetype::kBS,  Archetype::kPbM, Archetype::kNbE,
                                               Archetype::kCbR, Archetype::kSY,  Archetype::kNC};

std::string_view to_string(Archetype a);
/// Accepts the short tags (BS, PbM, ...) case-insensitively.
Archetype archetype_from_string(std::string_view tag);

enum class Regime { kClean, kRealistic };

std::string_view to_string(Regime r);
Regime regime_from_string(std::string_view text);

/// Centers around which per-agent profiles are jittered.
struct ArchetypeCenter {
    double theta = 0.5;           // off-specialty for NbE
    double theta_specialty = 0.5; // NbE only
    double latency_ms = 300.0;
    double cost = 1.0;
    double risk = 0.05;
};

ArchetypeCenter archetype_center(Archetype a);

struct AgentProfile {
    std::string id;
    Archetype archetype = Archetype::kBS;
    std::vector<double> theta; // per task
    std::vector<double> latency_ms;
    std::vector<double> cost;
    std::vector<double> risk;
    double popularity = 0.0; // Zipf weight, sums to 1 over all agents
    int entry_epoch = 0;
    std::optional<std::size_t> specialty; // NbE only
};

struct RoutingParams {
    double rho = 0.3;
    double gamma = 0.0;
    double epsilon = 0.05;
    double tau = 0.1;
    double proxy_noise = 0.1;

    void validate() const;
};

struct Interaction {
    std::size_t caller = 0;
    std::size_t callee = 0;
    std::size_t task = 0;
    int epoch = 0;
    std::uint64_t timestamp = 0;
    bool success = false;
    double quality = 0.0;
    double latency_ms = 0.0;
    double cost = 0.0;
    double risk = 0.0;
};

enum class ShockKind { kDegrade, kImprove, kNewcomerEntry };

std::string_view to_string(ShockKind k);
ShockKind shock_kind_from_string(std::string_view text);

/// `target` is an agent id or a selector `<ARCH>#<i>` (the i-th agent of an
/// archetype by descending popularity) or `NbE/<task>#<i>` (the i-th
/// specialist of a task). Empty `tasks` means every task.
struct Shock {
    int epoch = 0;
    std::string target;
    ShockKind kind = ShockKind::kDegrade;
    double delta = 0.0;
    std::vector<std::size_t> tasks;
};

struct SybilSpec {
    int size = 0;            // colluding SY agents; 0 disables collusion
    double intra_bias = 0.5; // probability a clique caller targets the clique
};

struct WorldConfig {
    int n = 100;
    int d = 3;
    std::map<Archetype, int> census{{Archetype::kBS, 22},  {Archetype::kPbM, 25}, {Archetype::kNbE, 15},
                                    {Archetype::kCbR, 28}, {Archetype::kSY, 8},   {Archetype::kNC, 2}};
    std::uint64_t seed = 1;
    int epochs = 40;
    int calls_per_epoch = 200;
    int burn_in = 5;
    Regime regime = Regime::kClean;
    double half_life = 8.0;
    SybilSpec sybil;
    std::vector<Shock> shocks;
    RoutingParams pre_rank{0.3, 0.0, 0.05, 0.1, 0.1};
    RoutingParams rank_informed{0.2, 0.4, 0.05, 0.1, 0.1};
    /// Publish ranks into routing after burn-in. False keeps pre-rank routing throughout.
    bool rank_feedback = true;
    double record_drop_rate = 0.0;
    double caller_theta_sd = 0.0;
    int newcomer_entry = 18;
    double zipf_exponent = 1.0;
    double theta_jitter = 0.05;
    double scale_jitter = 0.10;
    /// Prior mass of each newcomer as a multiple of the uniform share.
    double newcomer_prior_boost = 1.0;
    /// Keep interaction logs, reports, acks and per-epoch snapshots. When
    /// false only the final snapshot is retained.
    bool keep_logs = true;

    /// Defaults for a regime: realistic turns on record drops, doubled proxy
    /// noise, caller-dependent competence and an 8-agent clique.
    static WorldConfig for_regime(Regime regime);

    /// Throws InvalidArgument on an inconsistent configuration.
    void validate() const;
};

/// Agent population plus mutable per-run state (current competence, proxies).
class World {
public:
    explicit World(const WorldConfig &config);

    std::size_t size() const noexcept { return agents_.size(); }
    std::size_t tasks() const noexcept { return static_cast<std::size_t>(tasks_); }
    const AgentProfile &agent(std::size_t j) const { return agents_.at(j); }
    const std::vector<AgentProfile> &agents() const noexcept { return agents_; }
    const IdIndex &ids() const noexcept { return ids_; }
    const std::vector<std::string> &task_ids() const noexcept { return task_ids_; }
    const std::vector<std::size_t> &clique() const noexcept { return clique_; }
    bool in_clique(std::size_t j) const { return in_clique_.at(j); }
    double intra_bias() const noexcept { return intra_bias_; }

    bool active(std::size_t j, int epoch) const { return agents_.at(j).entry_epoch <= epoch; }
    std::vector<std::size_t> active_agents(int epoch) const;

    /// Competence experienced by `caller`, including the caller-dependent offset.
    double effective_theta(std::size_t caller, std::size_t callee, std::size_t task) const;
    /// Ground truth theta[task][agent].
    std::vector<std::vector<double>> truth() const;

    /// Redraws the noisy competence proxies for the next epoch.
    void draw_proxies(double noise_sd, Rng &rng);
    double proxy(std::size_t j, std::size_t task) const { return proxy_.at(task).at(j); }

    /// Applies a shock; returns the resolved agent index.
    std::size_t apply(const Shock &shock);
    /// Agent index named by an id or selector (see Shock).
    std::size_t resolve(std::string_view target) const;

private:
    int tasks_ = 0;
    std::vector<AgentProfile> agents_;
    IdIndex ids_;
    std::vector<std::string> task_ids_;
    std::vector<std::size_t> clique_;
    std::vector<bool> in_clique_;
    double intra_bias_ = 0.0;
    std::vector<double> caller_offset_;      // [(caller * n + callee) * d + task]
    std::vector<std::vector<double>> proxy_; // [task][agent]
};

World build_world(const WorldConfig &config);

/// Samples a callee for (caller, task). Without `ranks` the rank weight is
/// folded into popularity. Each mixture term is normalized over eligible
/// callees before mixing; the draw is a softmax of mixture / tau.
std::size_t select_callee(std::size_t caller, std::size_t task, int epoch, const World &world,
                          std::optional<std::span<const double>> ranks, const RoutingParams &rp, Rng &rng);

/// One call outcome drawn from the callee's latent profile.
Interaction sample_outcome(std::size_t caller, std::size_t callee, std::size_t task, int epoch,
                           const World &world, Rng &rng);

struct EpochRecord {
    int epoch = 0;
    std::vector<Interaction> interactions; // logged calls (drops excluded)
    std::size_t routed = 0;
    std::size_t dropped = 0;
    std::vector<oat::CallerReport> reports;
    std::vector<oat::CalleeAck> acks;
    oat::AggregateSnapshot snapshot;
    rank::RankSet ranks;
    bool ranks_published = false; // visible to routing in the next epoch
    std::vector<std::vector<double>> truth; // [task][agent] during this epoch
    /// Raw (undecayed) per-task call and success counts accumulated so far.
    std::vector<std::vector<double>> cumulative_calls;
    std::vector<std::vector<double>> cumulative_successes;
};

struct Timeline {
    WorldConfig config;
    std::vector<std::string> agent_ids;
    std::vector<std::string> task_ids;
    std::vector<Archetype> archetypes;
    std::vector<std::size_t> clique;
    rank::Priors priors;
    oat::HmacKeyring keyring;
    std::vector<EpochRecord> epochs;
};

/// Priors with each newcomer scaled to `boost` times the uniform share.
rank::Priors newcomer_priors(const World &world, double boost);

/// Runs the full epoch loop. Deterministic in (config, hp, weights).
Timeline run_simulation(const WorldConfig &config, const rank::RankHyperparams &hp,
                        const kernel::UtilityWeights &weights);

/// Per-callee empirical success rate from raw counts; agents never called score 0.
std::vector<double> success_rate_scores(std::span<const double> calls, std::span<const double> successes);

/// Master secret used to derive agent keys for a seed.
std::string master_secret(std::uint64_t seed);

} // namespace dovis::sim
