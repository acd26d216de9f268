#include "dovis/sim.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numeric>

#include "dovis/error.hpp"

namespace dovis::sim {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto &c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

std::string agent_id(std::size_t j) {
    std::string digits = std::to_string(j);
    return "agent-" + std::string(digits.size() < 3 ? 3 - digits.size() : 0, '0') + digits;
}

} // namespace

std::string_view to_string(Archetype a) {
    switch (a) {
    case Archetype::kBS: return "BS";
    case Archetype::kPbM: return "PbM";
    case Archetype::kNbE: return "NbE";
    case Archetype::kCbR: return "CbR";
    case Archetype::kSY: return "SY";
    case Archetype::kNC: return "NC";
    }
    return "?";
}

Archetype archetype_from_string(std::string_view tag) {
    const auto t = lower(tag);
    for (auto a : kAllArchetypes) {
        if (lower(to_string(a)) == t) {
            return a;
        }
    }
    throw InvalidArgument("unknown archetype '" + std::string(tag) + "'");
}

std::string_view to_string(Regime r) { return r == Regime::kClean ? "clean" : "realistic"; }

Regime regime_from_string(std::string_view text) {
    const auto t = lower(text);
    if (t == "clean") {
        return Regime::kClean;
    }
    if (t == "realistic") {
        return Regime::kRealistic;
    }
    throw InvalidArgument("regime must be 'clean' or 'realistic', got '" + std::string(text) + "'");
}

std::string_view to_string(ShockKind k) {
    switch (k) {
    case ShockKind::kDegrade: return "degrade";
    case ShockKind::kImprove: return "improve";
    case ShockKind::kNewcomerEntry: return "newcomer_entry";
    }
    return "?";
}

ShockKind shock_kind_from_string(std::string_view text) {
    const auto t = lower(text);
    for (auto k : {ShockKind::kDegrade, ShockKind::kImprove, ShockKind::kNewcomerEntry}) {
        if (to_string(k) == t) {
            return k;
        }
    }
    throw InvalidArgument("unknown shock kind '" + std::string(text) + "'");
}

ArchetypeCenter archetype_center(Archetype a) {
    switch (a) {
    case Archetype::kBS: return {0.80, 0.80, 300.0, 1.0, 0.05};
    case Archetype::kPbM: return {0.55, 0.55, 300.0, 1.0, 0.05};
    case Archetype::kNbE: return {0.50, 0.90, 270.0, 0.9, 0.05};
    case Archetype::kCbR: return {0.65, 0.65, 180.0, 0.6, 0.15};
    case Archetype::kSY: return {0.50, 0.50, 320.0, 1.0, 0.10};
    case Archetype::kNC: return {0.85, 0.85, 280.0, 1.0, 0.05};
    }
    return {};
}

void RoutingParams::validate() const {
    if (!(rho >= 0.0) || !(gamma >= 0.0) || !(epsilon >= 0.0) || rho + gamma + epsilon > 1.0 + 1e-12) {
        throw InvalidArgument("routing weights must be non-negative with rho + gamma + epsilon <= 1");
    }
    if (!(tau > 0.0)) {
        throw InvalidArgument("routing temperature tau must be positive");
    }
    if (!(proxy_noise >= 0.0)) {
        throw InvalidArgument("proxy noise must be non-negative");
    }
}

WorldConfig WorldConfig::for_regime(Regime regime) {
    WorldConfig c;
    c.regime = regime;
    if (regime == Regime::kRealistic) {
        c.record_drop_rate = 0.05;
        c.caller_theta_sd = 0.05;
        c.pre_rank.proxy_noise = 0.2;
        c.rank_informed.proxy_noise = 0.2;
        c.sybil = {8, 0.5};
    }
    return c;
}

void WorldConfig::validate() const {
    if (n < 2 || d < 1) {
        throw InvalidArgument("world needs n >= 2 agents and d >= 1 tasks");
    }
    int total = 0;
    for (const auto &[a, count] : census) {
        if (count < 0) {
            throw InvalidArgument("census counts must be non-negative");
        }
        total += count;
    }
    if (total != n) {
        throw InvalidArgument("census sums to " + std::to_string(total) + " but n = " + std::to_string(n));
    }
    if (epochs < 1 || calls_per_epoch < 0) {
        throw InvalidArgument("epochs must be positive and calls_per_epoch non-negative");
    }
    if (burn_in < 0 || burn_in >= epochs) {
        throw InvalidArgument("burn-in must satisfy 0 <= burn_in < epochs");
    }
    if (!(half_life > 0.0)) {
        throw InvalidArgument("half-life must be positive");
    }
    const auto sy = census.contains(Archetype::kSY) ? census.at(Archetype::kSY) : 0;
    if (sybil.size < 0 || sybil.size > sy) {
        throw InvalidArgument("sybil clique size must lie in [0, census SY]");
    }
    if (!(sybil.intra_bias >= 0.0 && sybil.intra_bias <= 1.0)) {
        throw InvalidArgument("sybil intra-call bias must lie in [0, 1]");
    }
    pre_rank.validate();
    rank_informed.validate();
    if (!(record_drop_rate >= 0.0 && record_drop_rate < 1.0)) {
        throw InvalidArgument("record drop rate must lie in [0, 1)");
    }
    if (!(caller_theta_sd >= 0.0) || !(theta_jitter >= 0.0) || !(scale_jitter >= 0.0 && scale_jitter < 1.0)) {
        throw InvalidArgument("jitter and perturbation scales must be non-negative (scale jitter < 1)");
    }
    if (newcomer_entry < 1) {
        throw InvalidArgument("newcomer entry epoch must be positive");
    }
    if (!(zipf_exponent >= 0.0)) {
        throw InvalidArgument("Zipf exponent must be non-negative");
    }
    if (!(newcomer_prior_boost > 0.0)) {
        throw InvalidArgument("newcomer prior boost must be positive");
    }
    for (const auto &s : shocks) {
        if (s.epoch < 0 || s.epoch >= epochs) {
            throw InvalidArgument("shock epoch outside the run");
        }
        if (s.kind == ShockKind::kDegrade && s.delta > 0.0) {
            throw InvalidArgument("degrade shocks need delta <= 0");
        }
        if (s.kind == ShockKind::kImprove && s.delta < 0.0) {
            throw InvalidArgument("improve shocks need delta >= 0");
        }
        if (s.kind == ShockKind::kNewcomerEntry && s.epoch < 1) {
            throw InvalidArgument("newcomer entry shocks need epoch >= 1");
        }
        for (auto k : s.tasks) {
            if (k >= static_cast<std::size_t>(d)) {
                throw InvalidArgument("shock task index out of range");
            }
        }
    }
}

// ---------------------------------------------------------------------------

World::World(const WorldConfig &config) : tasks_(config.d) {
    config.validate();
    const auto n = static_cast<std::size_t>(config.n);
    const auto d = static_cast<std::size_t>(config.d);
    Rng rng = Rng(config.seed).split(0xB01D);

    std::vector<Archetype> tags;
    for (auto a : kAllArchetypes) {
        if (auto it = config.census.find(a); it != config.census.end()) {
            tags.insert(tags.end(), static_cast<std::size_t>(it->second), a);
        }
    }
    std::shuffle(tags.begin(), tags.end(), rng.engine());

    // Popularity order: PbM first, NbE last, everyone else shuffled between.
    std::vector<std::size_t> head;
    std::vector<std::size_t> middle;
    std::vector<std::size_t> tail;
    for (std::size_t j = 0; j < n; ++j) {
        (tags[j] == Archetype::kPbM ? head : tags[j] == Archetype::kNbE ? tail : middle).push_back(j);
    }
    for (auto *group : {&head, &middle, &tail}) {
        std::shuffle(group->begin(), group->end(), rng.engine());
    }
    std::vector<std::size_t> order = head;
    order.insert(order.end(), middle.begin(), middle.end());
    order.insert(order.end(), tail.begin(), tail.end());

    agents_.resize(n);
    std::size_t nbe_seen = 0;
    for (std::size_t j = 0; j < n; ++j) {
        auto &a = agents_[j];
        a.id = agent_id(j);
        a.archetype = tags[j];
        a.entry_epoch = tags[j] == Archetype::kNC ? config.newcomer_entry : 0;
        if (tags[j] == Archetype::kNbE) {
            a.specialty = nbe_seen++ % d;
        }
        const auto c = archetype_center(tags[j]);
        auto scale = [&](double center) { return center * (1.0 + rng.uniform(-config.scale_jitter, config.scale_jitter)); };
        for (std::size_t k = 0; k < d; ++k) {
            const double center = a.specialty == k ? c.theta_specialty : c.theta;
            a.theta.push_back(std::clamp(center + rng.uniform(-config.theta_jitter, config.theta_jitter), 0.0, 1.0));
            a.latency_ms.push_back(scale(c.latency_ms));
            a.cost.push_back(scale(c.cost));
            a.risk.push_back(std::clamp(scale(c.risk), 0.0, 1.0));
        }
    }
    double zsum = 0.0;
    for (std::size_t pos = 0; pos < n; ++pos) {
        const double w = std::pow(static_cast<double>(pos + 1), -config.zipf_exponent);
        agents_[order[pos]].popularity = w;
        zsum += w;
    }
    for (auto &a : agents_) {
        a.popularity /= zsum;
    }

    std::vector<std::string> names;
    for (const auto &a : agents_) {
        names.push_back(a.id);
    }
    ids_ = IdIndex(std::move(names));
    for (std::size_t k = 0; k < d; ++k) {
        task_ids_.push_back("task" + std::to_string(k));
    }

    in_clique_.assign(n, false);
    for (std::size_t j = 0; j < n && clique_.size() < static_cast<std::size_t>(config.sybil.size); ++j) {
        if (agents_[j].archetype == Archetype::kSY) {
            clique_.push_back(j);
            in_clique_[j] = true;
        }
    }
    intra_bias_ = clique_.empty() ? 0.0 : config.sybil.intra_bias;

    if (config.caller_theta_sd > 0.0) {
        Rng prng = Rng(config.seed).split(0xCA11);
        caller_offset_.resize(n * n * d);
        for (auto &x : caller_offset_) {
            x = prng.normal(0.0, config.caller_theta_sd);
        }
    }

    proxy_.assign(d, std::vector<double>(n, 0.0));
    for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
            proxy_[k][j] = agents_[j].theta[k];
        }
    }

    for (const auto &s : config.shocks) {
        if (s.kind == ShockKind::kNewcomerEntry) {
            agents_[resolve(s.target)].entry_epoch = s.epoch;
        }
    }
}

std::vector<std::size_t> World::active_agents(int epoch) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < agents_.size(); ++j) {
        if (active(j, epoch)) {
            out.push_back(j);
        }
    }
    return out;
}

double World::effective_theta(std::size_t caller, std::size_t callee, std::size_t task) const {
    const double base = agents_.at(callee).theta.at(task);
    if (caller_offset_.empty()) {
        return base;
    }
    const std::size_t n = agents_.size();
    return std::clamp(base + caller_offset_[(caller * n + callee) * tasks() + task], 0.0, 1.0);
}

std::vector<std::vector<double>> World::truth() const {
    std::vector<std::vector<double>> out(tasks(), std::vector<double>(agents_.size()));
    for (std::size_t k = 0; k < tasks(); ++k) {
        for (std::size_t j = 0; j < agents_.size(); ++j) {
            out[k][j] = agents_[j].theta[k];
        }
    }
    return out;
}

void World::draw_proxies(double noise_sd, Rng &rng) {
    for (std::size_t k = 0; k < tasks(); ++k) {
        for (std::size_t j = 0; j < agents_.size(); ++j) {
            proxy_[k][j] = std::clamp(rng.normal(agents_[j].theta[k], noise_sd), 0.0, 1.0);
        }
    }
}

std::size_t World::resolve(std::string_view target) const {
    if (auto j = ids_.find(target)) {
        return *j;
    }
    const auto hash = target.find('#');
    if (hash == std::string_view::npos) {
        throw InvalidArgument("unknown shock target '" + std::string(target) + "'");
    }
    std::size_t rank = 0;
    const auto tail = target.substr(hash + 1);
    if (auto [p, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), rank);
        ec != std::errc() || p != tail.data() + tail.size()) {
        throw InvalidArgument("bad selector index in '" + std::string(target) + "'");
    }
    auto head = target.substr(0, hash);
    std::optional<std::size_t> task;
    if (const auto slash = head.find('/'); slash != std::string_view::npos) {
        const auto t = head.substr(slash + 1);
        std::size_t k = 0;
        if (auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), k);
            ec != std::errc() || p != t.data() + t.size() || k >= tasks()) {
            throw InvalidArgument("bad selector task in '" + std::string(target) + "'");
        }
        task = k;
        head = head.substr(0, slash);
    }
    const auto arch = archetype_from_string(head);
    std::vector<std::size_t> pool;
    for (std::size_t j = 0; j < agents_.size(); ++j) {
        if (agents_[j].archetype == arch && (!task || agents_[j].specialty == task)) {
            pool.push_back(j);
        }
    }
    std::stable_sort(pool.begin(), pool.end(),
                     [&](std::size_t a, std::size_t b) { return agents_[a].popularity > agents_[b].popularity; });
    if (rank >= pool.size()) {
        throw InvalidArgument("selector '" + std::string(target) + "' matches no agent");
    }
    return pool[rank];
}

std::size_t World::apply(const Shock &shock) {
    const std::size_t j = resolve(shock.target);
    if (shock.kind == ShockKind::kNewcomerEntry) {
        return j;
    }
    auto &a = agents_[j];
    for (std::size_t k = 0; k < tasks(); ++k) {
        if (shock.tasks.empty() || std::find(shock.tasks.begin(), shock.tasks.end(), k) != shock.tasks.end()) {
            a.theta[k] = std::clamp(a.theta[k] + shock.delta, 0.0, 1.0);
        }
    }
    return j;
}

World build_world(const WorldConfig &config) { return World(config); }

// ---------------------------------------------------------------------------

std::size_t select_callee(std::size_t caller, std::size_t task, int epoch, const World &world,
                          std::optional<std::span<const double>> ranks, const RoutingParams &rp, Rng &rng) {
    rp.validate();
    if (ranks && ranks->size() != world.size()) {
        throw DimensionError("rank vector does not cover the world");
    }
    if (world.in_clique(caller) && world.intra_bias() > 0.0) {
        std::vector<std::size_t> mates;
        for (auto j : world.clique()) {
            if (j != caller && world.active(j, epoch)) {
                mates.push_back(j);
            }
        }
        if (!mates.empty() && rng.uniform() < world.intra_bias()) {
            return mates[rng.uniform_index(mates.size())];
        }
    }

    std::vector<std::size_t> eligible;
    for (std::size_t j = 0; j < world.size(); ++j) {
        if (j != caller && world.active(j, epoch)) {
            eligible.push_back(j);
        }
    }
    if (eligible.empty()) {
        throw InvalidArgument("no eligible callee");
    }
    const auto m = eligible.size();
    auto normalized_term = [&](auto value) {
        std::vector<double> t(m);
        double sum = 0.0;
        for (std::size_t e = 0; e < m; ++e) {
            t[e] = value(eligible[e]);
            sum += t[e];
        }
        for (auto &x : t) {
            x = sum > 0.0 ? x / sum : 1.0 / static_cast<double>(m);
        }
        return t;
    };
    const auto pop = normalized_term([&](std::size_t j) { return world.agent(j).popularity; });
    const auto prox = normalized_term([&](std::size_t j) { return world.proxy(j, task); });
    const double gamma = ranks ? rp.gamma : 0.0;
    std::vector<double> rk;
    if (ranks) {
        rk = normalized_term([&](std::size_t j) { return (*ranks)[j]; });
    }
    const double w_pop = 1.0 - rp.rho - gamma - rp.epsilon;
    std::vector<double> score(m);
    for (std::size_t e = 0; e < m; ++e) {
        score[e] = w_pop * pop[e] + rp.rho * prox[e] + rp.epsilon / static_cast<double>(m);
        if (ranks) {
            score[e] += gamma * rk[e];
        }
        score[e] /= rp.tau;
    }
    const double top = *std::max_element(score.begin(), score.end());
    for (auto &s : score) {
        s = std::exp(s - top);
    }
    return eligible[rng.categorical(score)];
}

Interaction sample_outcome(std::size_t caller, std::size_t callee, std::size_t task, int epoch,
                           const World &world, Rng &rng) {
    const auto &a = world.agent(callee);
    const double theta = world.effective_theta(caller, callee, task);
    Interaction it;
    it.caller = caller;
    it.callee = callee;
    it.task = task;
    it.epoch = epoch;
    it.timestamp = static_cast<std::uint64_t>(epoch) + 1;
    it.success = rng.uniform() < theta;

    double q = rng.normal(theta, 0.1);
    for (int tries = 0; (q < 0.0 || q > 1.0) && tries < 64; ++tries) {
        q = rng.normal(theta, 0.1);
    }
    it.quality = std::clamp(q, 0.0, 1.0);

    constexpr double kLogSd = 0.25;
    it.latency_ms = rng.lognormal(std::log(a.latency_ms[task]) - 0.5 * kLogSd * kLogSd, kLogSd);
    it.cost = rng.gamma(2.0, a.cost[task] / 2.0);
    const double r = a.risk[task];
    constexpr double kConcentration = 20.0;
    it.risk = r <= 0.0 ? 0.0 : r >= 1.0 ? 1.0 : rng.beta(r * kConcentration, (1.0 - r) * kConcentration);
    return it;
}

// ---------------------------------------------------------------------------

rank::Priors newcomer_priors(const World &world, double boost) {
    std::vector<double> v(world.size(), 1.0);
    for (std::size_t j = 0; j < world.size(); ++j) {
        if (world.agent(j).archetype == Archetype::kNC) {
            v[j] = boost;
        }
    }
    auto p = SimplexVector::normalized(std::move(v));
    return {p, p};
}

std::string master_secret(std::uint64_t seed) { return "dovis-sim-" + std::to_string(seed); }

std::vector<double> success_rate_scores(std::span<const double> calls, std::span<const double> successes) {
    if (calls.size() != successes.size()) {
        throw DimensionError("calls and successes differ in length");
    }
    std::vector<double> out(calls.size(), 0.0);
    for (std::size_t j = 0; j < calls.size(); ++j) {
        if (calls[j] > 0.0) {
            out[j] = successes[j] / calls[j];
        }
    }
    return out;
}

Timeline run_simulation(const WorldConfig &config, const rank::RankHyperparams &hp,
                        const kernel::UtilityWeights &weights) {
    hp.validate();
    weights.validate();
    World world(config);
    const std::size_t n = world.size();
    const std::size_t d = world.tasks();

    Timeline tl;
    tl.config = config;
    tl.agent_ids = world.ids().names();
    tl.task_ids = world.task_ids();
    for (const auto &a : world.agents()) {
        tl.archetypes.push_back(a.archetype);
    }
    tl.clique = world.clique();
    tl.priors = newcomer_priors(world, config.newcomer_prior_boost);
    const auto secret = master_secret(config.seed);
    for (const auto &id : tl.agent_ids) {
        tl.keyring.register_key(id, oat::HmacKeyring::derive_key(secret, id));
    }

    oat::TelemetryStore store(0);
    const auto decay = oat::DecayParams::from_half_life(config.half_life);
    oat::AggregateSnapshot caller_state;
    std::map<std::pair<std::size_t, std::size_t>, double> received_state; // (callee, task)
    std::vector<std::vector<double>> cum_calls(d, std::vector<double>(n, 0.0));
    std::vector<std::vector<double>> cum_succ(d, std::vector<double>(n, 0.0));
    std::optional<rank::RankSet> published;
    const Rng root(config.seed);

    for (int t = 0; t < config.epochs; ++t) {
        const Rng erng = root.split(static_cast<std::uint64_t>(t) + 1);
        for (const auto &s : config.shocks) {
            if (s.epoch == t && s.kind != ShockKind::kNewcomerEntry) {
                world.apply(s);
            }
        }
        const bool informed = config.rank_feedback && published.has_value();
        const RoutingParams &rp = informed ? config.rank_informed : config.pre_rank;
        Rng proxy_rng = erng.split(1);
        world.draw_proxies(rp.proxy_noise, proxy_rng);

        EpochRecord rec;
        rec.epoch = t;
        rec.truth = world.truth();
        const auto active = world.active_agents(t);
        Rng call_rng = erng.split(2);
        oat::AggregateSnapshot raw;
        std::map<std::pair<std::size_t, std::size_t>, double> received_raw;
        for (int c = 0; c < config.calls_per_epoch; ++c) {
            const std::size_t caller = active[call_rng.uniform_index(active.size())];
            const std::size_t task = call_rng.uniform_index(d);
            std::optional<std::span<const double>> ranks;
            if (informed) {
                ranks = published->per_task.at(world.task_ids()[task]).fused.values();
            }
            const std::size_t callee = select_callee(caller, task, t, world, ranks, rp, call_rng);
            const auto it = sample_outcome(caller, callee, task, t, world, call_rng);
            ++rec.routed;
            received_raw[{callee, task}] += 1.0;
            if (config.record_drop_rate > 0.0 && call_rng.uniform() < config.record_drop_rate) {
                ++rec.dropped;
                continue;
            }
            auto &st = raw[{tl.agent_ids[caller], tl.agent_ids[callee], tl.task_ids[task]}];
            st.n += 1.0;
            st.s += it.success ? 1.0 : 0.0;
            st.sum_q = st.sum_q.value_or(0.0) + it.quality;
            st.sum_l = st.sum_l.value_or(0.0) + it.latency_ms;
            st.sum_c = st.sum_c.value_or(0.0) + it.cost;
            st.sum_r = st.sum_r.value_or(0.0) + it.risk;
            cum_calls[task][callee] += 1.0;
            cum_succ[task][callee] += it.success ? 1.0 : 0.0;
            if (config.keep_logs) {
                rec.interactions.push_back(it);
            }
        }

        caller_state = oat::fold_decay(caller_state, raw, decay);
        for (auto &[key, value] : received_state) {
            value *= decay.factor();
        }
        for (const auto &[key, value] : received_raw) {
            received_state[key] += value;
        }

        const auto signed_at = static_cast<std::uint64_t>(t) + 1;
        for (const auto &[key, st] : caller_state) {
            if (!(st.n > 0.0)) {
                continue;
            }
            oat::CallerReport r;
            r.epoch_id = t;
            r.caller_id = key.caller;
            r.callee_id = key.callee;
            r.task_id = key.task;
            r.n_calls = st.n;
            r.n_success = std::min(st.s, st.n);
            r.sum_quality = st.sum_q;
            r.sum_latency = st.sum_l;
            r.sum_cost = st.sum_c;
            r.sum_risk = st.sum_r;
            tl.keyring.sign(r, signed_at);
            if (auto res = store.ingest(r, tl.keyring); !res.ok()) {
                throw ValidationError("simulator emitted an invalid report: " + res.detail);
            }
            if (config.keep_logs) {
                rec.reports.push_back(std::move(r));
            }
        }
        for (const auto &[key, value] : received_state) {
            oat::CalleeAck a;
            a.epoch_id = t;
            a.callee_id = tl.agent_ids[key.first];
            a.task_id = tl.task_ids[key.second];
            a.n_calls_received = value;
            tl.keyring.sign(a, signed_at);
            if (auto res = store.ingest(a, tl.keyring); !res.ok()) {
                throw ValidationError("simulator emitted an invalid acknowledgment: " + res.detail);
            }
            if (config.keep_logs) {
                rec.acks.push_back(std::move(a));
            }
        }

        rec.snapshot = store.close_epoch();
        rec.ranks = rank::rank_pipeline(rec.snapshot, world.ids(), world.task_ids(), weights, tl.priors, hp);
        if (!config.keep_logs && t + 1 < config.epochs) {
            rec.snapshot.clear();
        }
        rec.ranks_published = config.rank_feedback && t + 1 >= config.burn_in;
        if (rec.ranks_published) {
            published = rec.ranks;
        }
        rec.cumulative_calls = cum_calls;
        rec.cumulative_successes = cum_succ;
        tl.epochs.push_back(std::move(rec));
    }
    return tl;
}

} // namespace dovis::sim
