#include "dovis/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "dovis/error.hpp"

namespace dovis::config {
namespace {

int line_of(const YAML::Node &node) {
    const auto mark = node.Mark();
    return mark.line >= 0 ? mark.line + 1 : -1;
}

template <class T>
constexpr const char *type_name() {
    if constexpr (std::is_same_v<T, bool>) {
        return "a boolean";
    } else if constexpr (std::is_integral_v<T>) {
        return "an integer";
    } else if constexpr (std::is_floating_point_v<T>) {
        return "a number";
    } else {
        return "a string";
    }
}

template <class T>
T scalar(const YAML::Node &node, const std::string &where) {
    if (!node.IsScalar()) {
        throw ConfigError(where + ": expected " + type_name<T>(), line_of(node));
    }
    try {
        if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
            const auto v = node.as<long long>();
            if (v < 0) {
                throw ConfigError(where + ": must be non-negative", line_of(node));
            }
            return static_cast<T>(v);
        } else {
            return node.as<T>();
        }
    } catch (const YAML::Exception &) {
        throw ConfigError(where + ": expected " + type_name<T>(), line_of(node));
    }
}

template <class T>
std::vector<T> sequence(const YAML::Node &node, const std::string &where) {
    if (!node.IsSequence()) {
        throw ConfigError(where + ": expected a list", line_of(node));
    }
    std::vector<T> out;
    for (const auto &item : node) {
        out.push_back(scalar<T>(item, where));
    }
    return out;
}

/// A mapping whose keys must all be consumed; leftovers are reported.
class Section {
public:
    Section(const YAML::Node &node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.IsMap()) {
            throw ConfigError((path_.empty() ? std::string("document") : path_) + " must be a mapping",
                              line_of(node_));
        }
    }

    int line() const { return line_of(node_); }

    std::string where(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

    /// The value at `key`, or an undefined node.
    YAML::Node at(const std::string &key) {
        seen_.insert(key);
        return node_[key];
    }

    template <class T>
    void read(const std::string &key, T &out) {
        if (const auto n = at(key)) {
            out = scalar<T>(n, where(key));
        }
    }

    template <class T>
    void read_list(const std::string &key, std::vector<T> &out) {
        if (const auto n = at(key)) {
            out = sequence<T>(n, where(key));
        }
    }

    void finish() const {
        for (const auto &kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!seen_.contains(key)) {
                throw ConfigError("unknown key '" + where(key) + "'", line_of(kv.first));
            }
        }
    }

private:
    const YAML::Node node_;
    std::string path_;
    std::set<std::string> seen_;
};

/// Runs a library validator, reattributing its message to a config line.
template <class F>
void checked(int line, F &&validate) {
    try {
        validate();
    } catch (const InvalidArgument &e) {
        throw ConfigError(e.what(), line);
    }
}

void read_routing(Section &parent, const std::string &key, sim::RoutingParams &rp) {
    const auto node = parent.at(key);
    if (!node) {
        return;
    }
    Section s(node, parent.where(key));
    s.read("rho", rp.rho);
    s.read("gamma", rp.gamma);
    s.read("epsilon", rp.epsilon);
    s.read("tau", rp.tau);
    s.read("proxy_noise", rp.proxy_noise);
    s.finish();
    checked(s.line(), [&] { rp.validate(); });
}

void read_sybil(Section &parent, sim::SybilSpec &spec) {
    const auto node = parent.at("sybil");
    if (!node) {
        return;
    }
    Section s(node, parent.where("sybil"));
    s.read("size", spec.size);
    s.read("intra_bias", spec.intra_bias);
    s.finish();
}

std::vector<sim::Shock> read_shocks(const YAML::Node &node, const std::string &where) {
    if (!node.IsSequence()) {
        throw ConfigError(where + ": expected a list", line_of(node));
    }
    std::vector<sim::Shock> shocks;
    for (const auto &item : node) {
        Section s(item, where + "[]");
        sim::Shock shock;
        s.read("epoch", shock.epoch);
        s.read("target", shock.target);
        std::string kind = "degrade";
        s.read("kind", kind);
        checked(s.line(), [&] { shock.kind = sim::shock_kind_from_string(kind); });
        s.read("delta", shock.delta);
        s.read_list("tasks", shock.tasks);
        s.finish();
        if (shock.target.empty()) {
            throw ConfigError(where + ": shock needs a target", s.line());
        }
        shocks.push_back(std::move(shock));
    }
    return shocks;
}

void read_world(Section &root, sim::WorldConfig &w) {
    const auto node = root.at("world");
    if (!node) {
        return;
    }
    Section s(node, "world");
    // Regime first: it selects the defaults the other keys override.
    if (const auto r = s.at("regime")) {
        const auto text = scalar<std::string>(r, "world.regime");
        sim::Regime regime{};
        checked(line_of(r), [&] { regime = sim::regime_from_string(text); });
        const auto seed = w.seed;
        w = sim::WorldConfig::for_regime(regime);
        w.seed = seed;
    }
    s.read("n", w.n);
    s.read("tasks", w.d);
    s.read("seed", w.seed);
    s.read("epochs", w.epochs);
    s.read("calls_per_epoch", w.calls_per_epoch);
    s.read("burn_in", w.burn_in);
    s.read("half_life", w.half_life);
    s.read("rank_feedback", w.rank_feedback);
    s.read("record_drop_rate", w.record_drop_rate);
    s.read("caller_theta_sd", w.caller_theta_sd);
    s.read("newcomer_entry", w.newcomer_entry);
    s.read("zipf_exponent", w.zipf_exponent);
    s.read("theta_jitter", w.theta_jitter);
    s.read("scale_jitter", w.scale_jitter);
    s.read("newcomer_prior_boost", w.newcomer_prior_boost);
    if (const auto c = s.at("census")) {
        Section cs(c, "world.census");
        std::map<sim::Archetype, int> census;
        for (const auto &kv : c) {
            const auto tag = kv.first.as<std::string>();
            sim::Archetype a{};
            checked(line_of(kv.first), [&] { a = sim::archetype_from_string(tag); });
            cs.read(tag, census[a]);
        }
        cs.finish();
        w.census = census;
    }
    read_sybil(s, w.sybil);
    if (const auto r = s.at("routing")) {
        Section rs(r, "world.routing");
        read_routing(rs, "pre_rank", w.pre_rank);
        read_routing(rs, "rank_informed", w.rank_informed);
        rs.finish();
    }
    if (const auto sh = s.at("shocks")) {
        w.shocks = read_shocks(sh, "world.shocks");
    }
    s.finish();
    checked(s.line(), [&] { w.validate(); });
}

void read_rank(Section &root, rank::RankHyperparams &hp) {
    const auto node = root.at("rank");
    if (!node) {
        return;
    }
    Section s(node, "rank");
    s.read("alpha", hp.alpha);
    s.read("beta", hp.beta);
    s.read("p", hp.p);
    s.read("tol", hp.tol);
    s.read("max_iter", hp.max_iter);
    s.finish();
    checked(s.line(), [&] { hp.validate(); });
}

void read_utility(Section &root, kernel::UtilityWeights &u) {
    const auto node = root.at("utility");
    if (!node) {
        return;
    }
    Section s(node, "utility");
    s.read("success", u.success);
    s.read("latency", u.latency);
    s.read("cost", u.cost);
    s.read("risk", u.risk);
    s.read("quality", u.quality);
    s.read("alpha0", u.alpha0);
    s.read("beta0", u.beta0);
    s.finish();
    checked(s.line(), [&] { u.validate(); });
}

void read_experiment(Section &root, exp::ExperimentConfig &e) {
    const auto node = root.at("experiment");
    if (!node) {
        return;
    }
    Section s(node, "experiment");
    s.read_list("seeds", e.seeds);
    s.read("k", e.k);
    s.read("epochs", e.epochs);
    s.read("exp2_epochs", e.exp2_epochs);
    s.read("exp5_epochs", e.exp5_epochs);
    s.read_list("p_grid", e.p_grid);
    s.read("shock_epoch", e.shock_epoch);
    s.read("degrade_delta", e.degrade_delta);
    s.read("improve_delta", e.improve_delta);
    s.read("focal_task", e.focal_task);
    s.read_list("half_lives", e.half_lives);
    s.read("injection_trials", e.injection_trials);
    s.read("injection_steps", e.injection_steps);
    s.read("newcomer_boost", e.newcomer_boost);
    read_sybil(s, e.sybil);
    s.finish();

    const auto fail = [&](const std::string &msg) { throw ConfigError("experiment: " + msg, s.line()); };
    if (e.seeds.empty()) {
        fail("seeds must not be empty");
    }
    if (e.k == 0) {
        fail("k must be positive");
    }
    if (e.epochs < 1 || e.exp2_epochs < 1 || e.exp5_epochs < 1) {
        fail("epoch counts must be positive");
    }
    for (double p : e.p_grid) {
        if (!(p >= 0.0 && p <= 1.0)) {
            fail("p_grid values must lie in [0, 1]");
        }
    }
    for (double h : e.half_lives) {
        if (!(h > 0.0)) {
            fail("half_lives must be positive");
        }
    }
    if (e.injection_trials < 1 || e.injection_steps < 1) {
        fail("injection trials and steps must be positive");
    }
    if (!(e.newcomer_boost > 0.0)) {
        fail("newcomer_boost must be positive");
    }
}

void read_verify(Section &root, guarantees::SuiteConfig &v) {
    const auto node = root.at("verify");
    if (!node) {
        return;
    }
    Section s(node, "verify");
    s.read("trials", v.trials);
    s.read("perturbation_trials", v.perturbation_trials);
    s.read("sybil_trials", v.sybil_trials);
    s.read_list("sizes", v.sizes);
    s.read("alpha", v.alpha);
    s.read("beta", v.beta);
    s.read("tol", v.tol);
    s.read_list("fusion_p", v.fusion_p);
    s.read("seed", v.seed);
    s.finish();
    if (v.trials < 1) {
        throw ConfigError("verify.trials must be at least 1 (an empty suite proves nothing)", s.line());
    }
    if (v.perturbation_trials < 0 || v.sybil_trials < 0) {
        throw ConfigError("verify trial counts must be non-negative", s.line());
    }
    if (v.sizes.empty()) {
        throw ConfigError("verify.sizes must not be empty", s.line());
    }
}

} // namespace

RunConfig parse_config(std::string_view text) {
    YAML::Node doc;
    try {
        doc = YAML::Load(std::string(text));
    } catch (const YAML::ParserException &e) {
        throw ConfigError("malformed YAML: " + e.msg, e.mark.line >= 0 ? e.mark.line + 1 : -1);
    }

    RunConfig cfg;
    if (doc.IsNull()) {
        cfg.experiment.world = cfg.world;
        return cfg;
    }
    Section root(doc, "");
    if (const auto seed = root.at("seed")) {
        cfg.world.seed = scalar<std::uint64_t>(seed, "seed");
        cfg.verify.seed = cfg.world.seed;
    }
    read_world(root, cfg.world);
    read_rank(root, cfg.hp);
    read_utility(root, cfg.weights);
    read_experiment(root, cfg.experiment);
    read_verify(root, cfg.verify);
    if (const auto t = root.at("telemetry")) {
        Section s(t, "telemetry");
        s.read("grace_epochs", cfg.grace_epochs);
        s.finish();
        if (cfg.grace_epochs < 0) {
            throw ConfigError("telemetry.grace_epochs must be non-negative", s.line());
        }
    }
    root.finish();

    cfg.experiment.world = cfg.world;
    cfg.experiment.hp = cfg.hp;
    cfg.experiment.weights = cfg.weights;
    return cfg;
}

RunConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

} // namespace dovis::config
