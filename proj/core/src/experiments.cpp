#include "dovis/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <tuple>

#include "dovis/error.hpp"
#include "dovis/metrics.hpp"
#include "dovis/signing.hpp"

namespace dovis::exp {

std::string_view to_string(Method m) {
    switch (m) {
    case Method::kUC: return "UC";
    case Method::kUsage: return "Usage";
    case Method::kComp: return "Comp";
    case Method::kOracle: return "Oracle";
    }
    return "?";
}

std::vector<SummaryRow> ExperimentResult::summary() const {
    using Key = std::tuple<std::string, std::string, std::string, std::string>;
    std::map<Key, std::vector<double>> groups;
    std::vector<Key> order;
    for (const auto &r : rows) {
        Key key{r.regime, r.task, r.method, r.metric};
        auto [it, fresh] = groups.try_emplace(key);
        if (fresh) {
            order.push_back(key);
        }
        it->second.push_back(r.value);
    }
    std::vector<SummaryRow> out;
    for (const auto &key : order) {
        const auto &v = groups.at(key);
        SummaryRow s{id, std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key)};
        s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        s.min = *std::min_element(v.begin(), v.end());
        s.max = *std::max_element(v.begin(), v.end());
        s.count = static_cast<int>(v.size());
        out.push_back(std::move(s));
    }
    return out;
}

std::optional<double> ExperimentResult::mean(std::string_view regime, std::string_view task, std::string_view method,
                                             std::string_view metric) const {
    double acc = 0.0;
    int count = 0;
    for (const auto &r : rows) {
        if (r.regime == regime && r.task == task && r.method == method && r.metric == metric) {
            acc += r.value;
            ++count;
        }
    }
    if (count == 0) {
        return std::nullopt;
    }
    return acc / count;
}

// ---------------------------------------------------------------------------

sim::WorldConfig regime_world(const ExperimentConfig &config, sim::Regime regime, std::uint64_t seed) {
    auto defaults = sim::WorldConfig::for_regime(regime);
    sim::WorldConfig w = config.world;
    w.regime = regime;
    w.seed = seed;
    w.epochs = config.epochs;
    w.record_drop_rate = defaults.record_drop_rate;
    w.caller_theta_sd = defaults.caller_theta_sd;
    // Base noise is the clean-regime value even when the base world is itself realistic.
    const double unscale = config.world.regime == sim::Regime::kRealistic ? 0.5 : 1.0;
    const double scale = regime == sim::Regime::kRealistic ? 2.0 : 1.0;
    w.pre_rank.proxy_noise = config.world.pre_rank.proxy_noise * unscale * scale;
    w.rank_informed.proxy_noise = config.world.rank_informed.proxy_noise * unscale * scale;
    w.sybil = regime == sim::Regime::kRealistic ? config.sybil : sim::SybilSpec{0, config.sybil.intra_bias};
    w.keep_logs = false;
    return w;
}

kernel::UtilityWeights regime_weights(const ExperimentConfig &config, sim::Regime regime) {
    auto w = config.weights;
    if (regime == sim::Regime::kClean) {
        w.latency = 0.0;
        w.cost = 0.0;
        w.risk = 0.0;
    }
    return w;
}

std::vector<double> oracle_scores(std::span<const double> calls, std::span<const double> successes) {
    auto s = sim::success_rate_scores(calls, successes);
    const double total = std::accumulate(s.begin(), s.end(), 0.0);
    if (total <= 0.0) {
        std::fill(s.begin(), s.end(), 1.0 / static_cast<double>(s.size()));
        return s;
    }
    for (auto &x : s) {
        x /= total;
    }
    return s;
}

std::vector<double> method_scores(const sim::Timeline &tl, std::size_t epoch_index, std::size_t task,
                                  Method method) {
    const auto &rec = tl.epochs.at(epoch_index);
    const auto &tr = rec.ranks.per_task.at(tl.task_ids.at(task));
    switch (method) {
    case Method::kUC: return tr.fused.vec();
    case Method::kUsage: return tr.usage.vec();
    case Method::kComp: return tr.competence.vec();
    case Method::kOracle: return oracle_scores(rec.cumulative_calls.at(task), rec.cumulative_successes.at(task));
    }
    return {};
}

std::size_t position_of(std::span<const double> scores, std::size_t agent) {
    const auto order = rank::order_by_score(scores);
    return static_cast<std::size_t>(std::find(order.begin(), order.end(), agent) - order.begin()) + 1;
}

namespace {

std::string metric_name(std::string_view base, std::size_t k) { return std::string(base) + "_at_" + std::to_string(k); }

std::string tagged(std::string_view base, std::string_view key, double value) {
    return std::string(base) + ":" + std::string(key) + "=" + oat::format_number(value);
}

// Mean over every row matching (regime, method, metric), across tasks and seeds.
double pooled_mean(const std::vector<MetricRow> &rows, std::string_view regime, std::string_view method,
                   std::string_view metric, std::optional<int> epoch = std::nullopt) {
    double acc = 0.0;
    int count = 0;
    for (const auto &r : rows) {
        if (r.regime == regime && r.method == method && r.metric == metric && (!epoch || r.epoch == *epoch)) {
            acc += r.value;
            ++count;
        }
    }
    return count == 0 ? std::nan("") : acc / count;
}

struct RowSink {
    std::string experiment;
    std::vector<MetricRow> &rows;

    void add(std::string_view regime, std::uint64_t seed, int epoch, std::string_view task, std::string_view method,
             std::string metric, double value) {
        rows.push_back({experiment, std::string(regime), seed, epoch, std::string(task), std::string(method),
                        std::move(metric), value});
    }
};

void ranking_metrics(RowSink &sink, std::string_view regime, std::uint64_t seed, int epoch, std::string_view task,
                     std::string_view method, std::span<const double> scores, std::span<const double> truth,
                     std::size_t k) {
    const metrics::EvalInput in{scores, truth, k};
    sink.add(regime, seed, epoch, task, method, metric_name("quality", k), metrics::quality_at_k(in));
    sink.add(regime, seed, epoch, task, method, metric_name("ndcg", k), metrics::ndcg_at_k(in));
    sink.add(regime, seed, epoch, task, method, metric_name("regret", k), metrics::regret_at_k(in));
    const auto corr = metrics::rank_correlations(scores, truth);
    if (corr.spearman) {
        sink.add(regime, seed, epoch, task, method, "spearman", *corr.spearman);
    }
    if (corr.kendall) {
        sink.add(regime, seed, epoch, task, method, "kendall", *corr.kendall);
    }
}

constexpr sim::Regime kRegimes[] = {sim::Regime::kClean, sim::Regime::kRealistic};

} // namespace

// ---------------------------------------------------------------------------

ExperimentResult exp1_baselines(const ExperimentConfig &config) {
    ExperimentResult res{"exp1", {}, {}};
    RowSink sink{res.id, res.rows};
    for (auto regime : kRegimes) {
        const auto regime_name = sim::to_string(regime);
        for (auto seed : config.seeds) {
            const auto tl = sim::run_simulation(regime_world(config, regime, seed), config.hp,
                                                regime_weights(config, regime));
            const std::size_t last = tl.epochs.size() - 1;
            const int epoch = tl.epochs[last].epoch;
            for (std::size_t k = 0; k < tl.task_ids.size(); ++k) {
                const auto &truth = tl.epochs[last].truth[k];
                for (auto m : kAllMethods) {
                    ranking_metrics(sink, regime_name, seed, epoch, tl.task_ids[k], to_string(m),
                                    method_scores(tl, last, k, m), truth, config.k);
                }
            }
        }
        for (const auto *base : {"quality", "ndcg"}) {
            for (auto m : kAllMethods) {
                res.plot.push_back({metric_name(base, config.k), std::string(to_string(m)), std::string(regime_name),
                                    pooled_mean(res.rows, regime_name, to_string(m), metric_name(base, config.k))});
            }
        }
    }
    return res;
}

ExperimentResult exp2_p_sweep_frozen(const ExperimentConfig &config) {
    ExperimentResult res{"exp2", {}, {}};
    RowSink sink{res.id, res.rows};
    const auto q_name = metric_name("quality", config.k);
    const auto n_name = metric_name("ndcg", config.k);
    for (auto regime : kRegimes) {
        const auto regime_name = sim::to_string(regime);
        for (auto seed : config.seeds) {
            auto world = regime_world(config, regime, seed);
            world.epochs = config.exp2_epochs;
            world.rank_feedback = false;
            const auto tl = sim::run_simulation(world, config.hp, regime_weights(config, regime));
            const auto &rec = tl.epochs.back();
            for (std::size_t k = 0; k < tl.task_ids.size(); ++k) {
                const auto &tr = rec.ranks.per_task.at(tl.task_ids[k]);
                const auto &truth = rec.truth[k];
                auto emit = [&](std::string_view method, std::span<const double> scores) {
                    const metrics::EvalInput in{scores, truth, config.k};
                    sink.add(regime_name, seed, rec.epoch, tl.task_ids[k], method, q_name, metrics::quality_at_k(in));
                    sink.add(regime_name, seed, rec.epoch, tl.task_ids[k], method, n_name, metrics::ndcg_at_k(in));
                };
                emit("Usage", tr.usage.values());
                emit("Comp", tr.competence.values());
                for (double p : config.p_grid) {
                    const auto r = rank::fuse(tr.usage, tr.competence, p);
                    emit(tagged("UC", "p", p), r.values());
                }
            }
        }
        for (const auto &metric : {q_name, n_name}) {
            const std::string figure = "p_sweep_" + metric + ":" + std::string(regime_name);
            for (double p : config.p_grid) {
                const auto x = oat::format_number(p);
                res.plot.push_back({figure, "UC", x, pooled_mean(res.rows, regime_name, tagged("UC", "p", p), metric)});
                res.plot.push_back({figure, "Usage", x, pooled_mean(res.rows, regime_name, "Usage", metric)});
                res.plot.push_back({figure, "Comp", x, pooled_mean(res.rows, regime_name, "Comp", metric)});
            }
        }
    }
    return res;
}

ExperimentResult exp3_shock_halflife(const ExperimentConfig &config) {
    ExperimentResult res{"exp3", {}, {}};
    RowSink sink{res.id, res.rows};
    const auto focal = config.focal_task;
    const std::string pbm_target = "PbM#0";
    const std::string nbe_target = "NbE/" + std::to_string(focal) + "#0";
    for (double h : config.half_lives) {
        const auto regime_name = tagged("clean", "H", h);
        for (auto seed : config.seeds) {
            auto world = regime_world(config, sim::Regime::kClean, seed);
            world.half_life = h;
            world.shocks = {{config.shock_epoch, pbm_target, sim::ShockKind::kDegrade, config.degrade_delta, {}},
                            {config.shock_epoch, nbe_target, sim::ShockKind::kImprove, config.improve_delta, {focal}}};
            const sim::World probe(world);
            const auto pbm = probe.resolve(pbm_target);
            const auto nbe = probe.resolve(nbe_target);
            const auto tl = sim::run_simulation(world, config.hp, regime_weights(config, sim::Regime::kClean));
            const auto &task = tl.task_ids.at(focal);
            std::optional<int> demoted;
            for (std::size_t e = 0; e < tl.epochs.size(); ++e) {
                const auto scores = method_scores(tl, e, focal, Method::kUC);
                const int epoch = tl.epochs[e].epoch;
                const auto pos_pbm = position_of(scores, pbm);
                sink.add(regime_name, seed, epoch, task, "UC", "pbm_position", static_cast<double>(pos_pbm));
                sink.add(regime_name, seed, epoch, task, "UC", "nbe_position",
                         static_cast<double>(position_of(scores, nbe)));
                sink.add(regime_name, seed, epoch, task, "UC", "pbm_mass", scores[pbm]);
                sink.add(regime_name, seed, epoch, task, "UC", "nbe_mass", scores[nbe]);
                if (epoch >= config.shock_epoch && !demoted && pos_pbm > config.k) {
                    demoted = epoch;
                }
            }
            const int last = tl.epochs.back().epoch;
            const double to_demotion = (demoted ? *demoted : last + 1) - config.shock_epoch + 1;
            sink.add(regime_name, seed, config.shock_epoch, task, "UC", "epochs_to_demotion", to_demotion);
        }
        for (const auto *metric : {"pbm_position", "nbe_position"}) {
            for (int e = 0; e < config.epochs; ++e) {
                res.plot.push_back({std::string(metric), "H=" + oat::format_number(h), std::to_string(e),
                                    pooled_mean(res.rows, regime_name, "UC", metric, e)});
            }
        }
        res.plot.push_back({"epochs_to_demotion", "UC", oat::format_number(h),
                            pooled_mean(res.rows, regime_name, "UC", "epochs_to_demotion")});
    }
    return res;
}

std::vector<MetricRow> timeline_metrics(const sim::Timeline &tl, std::string_view experiment, std::size_t k) {
    std::vector<MetricRow> rows;
    RowSink sink{std::string(experiment), rows};
    const auto regime = sim::to_string(tl.config.regime);
    for (std::size_t e = 0; e < tl.epochs.size(); ++e) {
        const auto &rec = tl.epochs[e];
        for (std::size_t t = 0; t < tl.task_ids.size(); ++t) {
            for (auto m : kAllMethods) {
                const auto scores = method_scores(tl, e, t, m);
                ranking_metrics(sink, regime, tl.config.seed, rec.epoch, tl.task_ids[t], to_string(m), scores,
                                rec.truth[t], k);
                if (!tl.clique.empty()) {
                    sink.add(regime, tl.config.seed, rec.epoch, tl.task_ids[t], to_string(m), "sybil_mass",
                             metrics::sybil_mass(scores, tl.clique));
                }
            }
        }
    }
    return rows;
}

void inject_success(oat::AggregateSnapshot &snapshot, const oat::EdgeKey &key, double latency_ms, double cost,
                    double risk) {
    auto [it, fresh] = snapshot.try_emplace(key);
    auto &st = it->second;
    if (fresh || !(st.n > 0.0)) {
        st = oat::SufficientStats{};
        st.sum_q = 0.0;
        st.sum_l = 0.0;
        st.sum_c = 0.0;
        st.sum_r = 0.0;
    } else {
        latency_ms = st.mean_latency().value_or(latency_ms);
        cost = st.mean_cost().value_or(cost);
        risk = st.mean_risk().value_or(risk);
    }
    st.n += 1.0;
    st.s += 1.0;
    if (st.sum_q) {
        *st.sum_q += 1.0;
    }
    if (st.sum_l) {
        *st.sum_l += latency_ms;
    }
    if (st.sum_c) {
        *st.sum_c += cost;
    }
    if (st.sum_r) {
        *st.sum_r += risk;
    }
}

ExperimentResult exp4_monotonicity_coldstart(const ExperimentConfig &config) {
    ExperimentResult res{"exp4", {}, {}};
    RowSink sink{res.id, res.rows};
    if (config.seeds.empty()) {
        throw InvalidArgument("experiment needs at least one seed");
    }

    // (a) Monotonicity on frozen post-burn-in telemetry.
    const auto regime = sim::Regime::kRealistic;
    const auto weights = regime_weights(config, regime);
    std::map<std::uint64_t, sim::Timeline> frozen;
    for (auto seed : config.seeds) {
        auto world = regime_world(config, regime, seed);
        world.epochs = std::max(world.burn_in, 1);
        world.burn_in = 0;
        world.rank_feedback = false;
        frozen.emplace(seed, sim::run_simulation(world, config.hp, weights));
    }
    int strict_existing = 0;
    int strict_new = 0;
    for (int trial = 0; trial < config.injection_trials; ++trial) {
        const auto seed = config.seeds[static_cast<std::size_t>(trial) % config.seeds.size()];
        const auto &tl = frozen.at(seed);
        const sim::World world(regime_world(config, regime, seed));
        Rng rng = Rng(seed).split(0x1A7EC7 + static_cast<std::uint64_t>(trial));
        const std::size_t k = rng.uniform_index(tl.task_ids.size());
        const auto &task = tl.task_ids[k];
        auto snapshot = tl.epochs.back().snapshot;
        const auto active = world.active_agents(0);
        const std::size_t j = active[rng.uniform_index(active.size())];

        std::vector<std::size_t> existing_callers;
        for (const auto &[key, st] : snapshot) {
            if (key.task == task && key.callee == tl.agent_ids[j] && st.n > 0.0) {
                existing_callers.push_back(*world.ids().find(key.caller));
            }
        }
        bool existing = trial % 2 == 0 && !existing_callers.empty();
        std::size_t i = 0;
        if (existing) {
            i = existing_callers[rng.uniform_index(existing_callers.size())];
        } else {
            do {
                i = active[rng.uniform_index(active.size())];
            } while (i == j);
            existing = snapshot.contains({tl.agent_ids[i], tl.agent_ids[j], task});
        }
        const oat::EdgeKey key{tl.agent_ids[i], tl.agent_ids[j], task};
        const auto &prof = world.agent(j);

        auto focal_rank = [&] {
            const kernel::KernelOptions opts{task, false};
            const auto kernels = kernel::build_kernels(snapshot, world.ids(), weights, tl.priors.usage,
                                                       tl.priors.competence, opts);
            return rank::rank_kernels(kernels, tl.priors, config.hp).fused[j];
        };
        std::vector<double> path{focal_rank()};
        for (int step = 0; step < config.injection_steps; ++step) {
            inject_success(snapshot, key, prof.latency_ms[k], prof.cost[k], prof.risk[k]);
            path.push_back(focal_rank());
        }
        double min_delta = INFINITY;
        int strict = 0;
        for (std::size_t s = 0; s + 1 < path.size(); ++s) {
            const double delta = path[s + 1] - path[s];
            min_delta = std::min(min_delta, delta);
            strict += delta > 1e-12;
        }
        (existing ? strict_existing : strict_new) += strict > 0;
        const std::string family = existing ? "injection:existing_edge" : "injection:new_edge";
        const int epoch = tl.epochs.back().epoch;
        sink.add(family, seed, epoch, task, "UC", "min_step_delta", min_delta);
        sink.add(family, seed, epoch, task, "UC", "strict_steps", strict);
        sink.add(family, seed, epoch, task, "UC", "total_gain", path.back() - path.front());
        if (trial < 5) {
            for (std::size_t s = 0; s < path.size(); ++s) {
                res.plot.push_back({"monotonicity", "trial" + std::to_string(trial), std::to_string(s), path[s]});
            }
        }
    }
    sink.add("injection:existing_edge", 0, -1, "ALL", "UC", "trials_with_strict_increase", strict_existing);
    sink.add("injection:new_edge", 0, -1, "ALL", "UC", "trials_with_strict_increase", strict_new);

    // (b) Cold start of a newcomer under uniform and informative priors.
    const auto focal = config.focal_task;
    for (double boost : {1.0, config.newcomer_boost}) {
        const auto regime_name = std::string(boost == 1.0 ? "clean:prior=uniform" : "clean:prior=informative");
        for (auto seed : config.seeds) {
            auto world = regime_world(config, sim::Regime::kClean, seed);
            world.newcomer_entry = config.shock_epoch;
            world.newcomer_prior_boost = boost;
            const sim::World probe(world);
            const auto nc = probe.resolve("NC#0");
            const auto tl = sim::run_simulation(world, config.hp, regime_weights(config, sim::Regime::kClean));
            for (std::size_t e = 0; e < tl.epochs.size(); ++e) {
                const auto scores = method_scores(tl, e, focal, Method::kUC);
                const int epoch = tl.epochs[e].epoch;
                sink.add(regime_name, seed, epoch, tl.task_ids[focal], "UC", "newcomer_mass", scores[nc]);
                sink.add(regime_name, seed, epoch, tl.task_ids[focal], "UC", "newcomer_position",
                         static_cast<double>(position_of(scores, nc)));
            }
        }
        const auto series = regime_name.substr(regime_name.find('=') + 1);
        for (int e = 0; e < config.epochs; ++e) {
            res.plot.push_back({"newcomer_mass", series, std::to_string(e),
                                pooled_mean(res.rows, regime_name, "UC", "newcomer_mass", e)});
            res.plot.push_back({"newcomer_position", series, std::to_string(e),
                                pooled_mean(res.rows, regime_name, "UC", "newcomer_position", e)});
        }
    }
    return res;
}

ExperimentResult exp5_sybil(const ExperimentConfig &config) {
    ExperimentResult res{"exp5", {}, {}};
    RowSink sink{res.id, res.rows};
    const auto regime = sim::Regime::kRealistic;
    const auto regime_name = sim::to_string(regime);
    int epochs = config.exp5_epochs;
    for (auto seed : config.seeds) {
        auto world = regime_world(config, regime, seed);
        world.epochs = config.exp5_epochs;
        const auto tl = sim::run_simulation(world, config.hp, regime_weights(config, regime));
        epochs = static_cast<int>(tl.epochs.size());
        const std::size_t last = tl.epochs.size() - 1;
        for (std::size_t k = 0; k < tl.task_ids.size(); ++k) {
            const auto &truth = tl.epochs[last].truth[k];
            for (auto m : kAllMethods) {
                const auto scores = method_scores(tl, last, k, m);
                sink.add(regime_name, seed, tl.epochs[last].epoch, tl.task_ids[k], to_string(m), "sybil_mass",
                         metrics::sybil_mass(scores, tl.clique));
                sink.add(regime_name, seed, tl.epochs[last].epoch, tl.task_ids[k], to_string(m),
                         metric_name("quality", config.k) + "_exclSY",
                         metrics::quality_at_k_excluding({scores, truth, config.k}, tl.clique));
            }
        }
        for (std::size_t e = 0; e < tl.epochs.size(); ++e) {
            for (auto m : {Method::kUC, Method::kUsage}) {
                double acc = 0.0;
                for (std::size_t k = 0; k < tl.task_ids.size(); ++k) {
                    acc += metrics::sybil_mass(method_scores(tl, e, k, m), tl.clique);
                }
                sink.add(regime_name, seed, tl.epochs[e].epoch, "ALL", to_string(m), "sybil_mass_over_epochs",
                         acc / static_cast<double>(tl.task_ids.size()));
            }
        }
    }
    for (auto m : kAllMethods) {
        res.plot.push_back({"sybil_mass_by_method", std::string(to_string(m)), "final",
                            pooled_mean(res.rows, regime_name, to_string(m), "sybil_mass")});
    }
    for (int e = 0; e < epochs; ++e) {
        for (auto m : {Method::kUC, Method::kUsage}) {
            res.plot.push_back({"sybil_mass_over_epochs", std::string(to_string(m)), std::to_string(e),
                                pooled_mean(res.rows, regime_name, to_string(m), "sybil_mass_over_epochs", e)});
        }
    }
    return res;
}

ExperimentResult run_experiment(std::string_view name, const ExperimentConfig &config) {
    if (name == "exp1") {
        return exp1_baselines(config);
    }
    if (name == "exp2") {
        return exp2_p_sweep_frozen(config);
    }
    if (name == "exp3") {
        return exp3_shock_halflife(config);
    }
    if (name == "exp4") {
        return exp4_monotonicity_coldstart(config);
    }
    if (name == "exp5") {
        return exp5_sybil(config);
    }
    std::string valid;
    for (auto n : kExperimentNames) {
        valid += (valid.empty() ? "" : ", ") + std::string(n);
    }
    throw InvalidArgument("unknown experiment '" + std::string(name) + "' (valid: " + valid + ")");
}

// ---------------------------------------------------------------------------

void write_metrics_csv(std::ostream &out, const std::vector<MetricRow> &rows) {
    out << "experiment,regime,seed,epoch,task,method,metric,value\n";
    for (const auto &r : rows) {
        out << r.experiment << ',' << r.regime << ',' << r.seed << ',' << r.epoch << ',' << r.task << ','
            << r.method << ',' << r.metric << ',' << oat::format_number(r.value) << '\n';
    }
}

void write_plot_csv(std::ostream &out, const std::vector<PlotPoint> &plot) {
    out << "figure,series,x,y\n";
    for (const auto &p : plot) {
        out << p.figure << ',' << p.series << ',' << p.x << ',' << oat::format_number(p.y) << '\n';
    }
}

void write_summary_csv(std::ostream &out, const std::vector<SummaryRow> &rows) {
    out << "experiment,regime,task,method,metric,mean,min,max,count\n";
    for (const auto &s : rows) {
        out << s.experiment << ',' << s.regime << ',' << s.task << ',' << s.method << ',' << s.metric << ','
            << oat::format_number(s.mean) << ',' << oat::format_number(s.min) << ',' << oat::format_number(s.max)
            << ',' << s.count << '\n';
    }
}

} // namespace dovis::exp
