#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "dovis/config.hpp"
#include "dovis/error.hpp"
#include "dovis/experiments.hpp"
#include "dovis/guarantees.hpp"
#include "dovis/rank.hpp"
#include "dovis/signing.hpp"
#include "dovis/sim.hpp"
#include "dovis/wire.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;

namespace dovis::cli {
namespace {

/// Raised once a command has already reported a failure and only needs to exit.
struct Exit {
    int code;
};

struct Loaded {
    config::RunConfig cfg;
    fs::path path;
    std::string text;
};

Loaded load(const std::string &path) {
    Loaded l;
    if (path.empty()) {
        l.cfg = config::parse_config("");
        return l;
    }
    l.path = path;
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read config file " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    l.text = buf.str();
    l.cfg = config::parse_config(l.text);
    return l;
}

fs::path resolve_out(const std::string &flag, const std::string &leaf) {
    fs::path dir;
    if (!flag.empty()) {
        dir = flag;
    } else if (const char *root = std::getenv(kOutRootEnv); root && *root) {
        dir = fs::path(root) / leaf;
    } else {
        dir = fs::path("dovis-out") / leaf;
    }
    fs::create_directories(dir);
    return dir;
}

std::ofstream open_out(const fs::path &path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw InvalidArgument("cannot write " + path.string());
    }
    return out;
}

std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        cells.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) {
            return cells;
        }
        start = pos + 1;
    }
}

/// Rows of a CSV with a header; each row is keyed by column name.
std::vector<std::map<std::string, std::string>> read_csv(const fs::path &path,
                                                         std::initializer_list<const char *> required) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidArgument("cannot read " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ValidationError(path.string() + ": missing header");
    }
    const auto header = split(line, ',');
    for (const char *col : required) {
        if (std::find(header.begin(), header.end(), col) == header.end()) {
            throw ValidationError(path.string() + ": missing column '" + col + "'");
        }
    }
    std::vector<std::map<std::string, std::string>> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        const auto cells = split(line, ',');
        if (cells.size() != header.size()) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(header.size()) + " cells");
        }
        auto &row = rows.emplace_back();
        for (std::size_t c = 0; c < cells.size(); ++c) {
            row[header[c]] = cells[c];
        }
    }
    return rows;
}

double parse_double(const std::string &text, const std::string &what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size()) {
            return v;
        }
    } catch (const std::exception &) {
    }
    throw ValidationError(what + ": not a number: '" + text + "'");
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

int cmd_simulate(const SimulateArgs &a, std::ostream &out) {
    auto l = load(a.config);
    auto &cfg = l.cfg;
    if (a.seed) {
        cfg.world.seed = *a.seed;
    }
    cfg.world.keep_logs = true;
    const auto dir = resolve_out(a.out, "simulate");
    RunManifest manifest(dir, "simulate", l.path, l.text, {cfg.world.seed});

    const auto weights = exp::regime_weights(cfg.experiment, cfg.world.regime);
    const auto tl = sim::run_simulation(cfg.world, cfg.hp, weights);
    const IdIndex ids(tl.agent_ids);

    {
        auto f = open_out(dir / "reports.jsonl");
        for (const auto &rec : tl.epochs) {
            for (const auto &r : rec.reports) {
                f << oat::to_json_line(r) << '\n';
            }
            for (const auto &ack : rec.acks) {
                f << oat::to_json_line(ack) << '\n';
            }
        }
    }
    {
        auto f = open_out(dir / "ground_truth.csv");
        f << "agent,task,theta,epoch\n";
        for (const auto &rec : tl.epochs) {
            for (std::size_t k = 0; k < tl.task_ids.size(); ++k) {
                for (std::size_t j = 0; j < tl.agent_ids.size(); ++j) {
                    f << tl.agent_ids[j] << ',' << tl.task_ids[k] << ',' << oat::format_number(rec.truth[k][j])
                      << ',' << rec.epoch << '\n';
                }
            }
        }
    }
    {
        auto f = open_out(dir / "ranks.csv");
        rank::write_ranks_csv(f, tl.epochs.back().ranks, ids);
    }
    {
        auto f = open_out(dir / "metrics.csv");
        exp::write_metrics_csv(f, exp::timeline_metrics(tl, "simulate", cfg.experiment.k));
    }
    {
        const sim::World world(cfg.world);
        std::set<std::size_t> clique(tl.clique.begin(), tl.clique.end());
        auto f = open_out(dir / "agents.csv");
        f << "agent,archetype,popularity,entry_epoch,in_clique,usage_prior,competence_prior\n";
        for (std::size_t j = 0; j < tl.agent_ids.size(); ++j) {
            f << tl.agent_ids[j] << ',' << sim::to_string(tl.archetypes[j]) << ','
              << oat::format_number(world.agent(j).popularity) << ',' << world.agent(j).entry_epoch << ','
              << (clique.contains(j) ? 1 : 0) << ',' << oat::format_number(tl.priors.usage[j]) << ','
              << oat::format_number(tl.priors.competence[j]) << '\n';
        }
    }
    {
        auto f = open_out(dir / "keys.csv");
        f << "agent,key\n";
        for (const auto &[agent, key] : tl.keyring.keys()) {
            f << agent << ',' << oat::to_hex(key.data(), key.size()) << '\n';
        }
    }
    const std::vector<std::string> files{"reports.jsonl", "ground_truth.csv", "ranks.csv",
                                         "metrics.csv",   "agents.csv",       "keys.csv"};
    manifest.finish("ok", files);
    out << "simulated " << tl.epochs.size() << " epochs, " << tl.agent_ids.size() << " agents, seed "
        << cfg.world.seed << " -> " << dir.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// rank

struct RankArgs {
    std::string reports;
    std::string config;
    std::string out;
    std::string keys;
    std::string agents;
    std::string tasks;
    bool skip_signatures = false;
    bool strict = false;
    bool lenient = false;
};

int cmd_rank(const RankArgs &a, std::ostream &out, std::ostream &err) {
    if (a.keys.empty() == !a.skip_signatures) {
        err << "rank: pass exactly one of --keys or --skip-signatures\n";
        return kUsageError;
    }
    const bool strict = !a.lenient;
    auto l = load(a.config);
    const auto &cfg = l.cfg;
    const auto dir = resolve_out(a.out, "rank");
    RunManifest manifest(dir, "rank", l.path, l.text, {});

    std::size_t skipped = 0;
    const auto reject = [&](const std::string &why) {
        if (strict) {
            err << "rank: " << why << '\n';
            manifest.finish("data-error", {});
            throw Exit{kDataError};
        }
        ++skipped;
    };

    // Read the whole stream first: the agent and task universe may come from it.
    std::vector<std::pair<int, oat::WireRecord>> records;
    {
        std::ifstream in(a.reports);
        if (!in) {
            throw InvalidArgument("cannot read " + a.reports);
        }
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) {
                continue;
            }
            try {
                records.emplace_back(lineno, oat::parse_record(line));
            } catch (const ValidationError &e) {
                reject(a.reports + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }

    std::vector<std::string> agent_ids;
    std::optional<rank::Priors> priors;
    if (!a.agents.empty()) {
        std::vector<double> v;
        std::vector<double> w;
        for (const auto &row : read_csv(a.agents, {"agent"})) {
            agent_ids.push_back(row.at("agent"));
            if (row.contains("usage_prior") && row.contains("competence_prior")) {
                v.push_back(parse_double(row.at("usage_prior"), "usage_prior"));
                w.push_back(parse_double(row.at("competence_prior"), "competence_prior"));
            }
        }
        if (!v.empty()) {
            try {
                priors = rank::Priors{SimplexVector(v), SimplexVector(w)};
            } catch (const InvalidArgument &e) {
                throw ValidationError(a.agents + ": invalid priors: " + e.what());
            }
        }
    } else {
        std::set<std::string> seen;
        for (const auto &[_, rec] : records) {
            std::visit(
                [&](const auto &r) {
                    if constexpr (std::is_same_v<std::decay_t<decltype(r)>, oat::CallerReport>) {
                        seen.insert(r.caller_id);
                    }
                    seen.insert(r.callee_id);
                },
                rec);
        }
        agent_ids.assign(seen.begin(), seen.end());
    }
    IdIndex ids;
    try {
        ids = IdIndex(agent_ids);
    } catch (const InvalidArgument &e) {
        throw ValidationError(std::string("agent list: ") + e.what());
    }
    if (ids.size() == 0) {
        throw InvalidArgument("no agents: the stream is empty, pass --agents");
    }
    if (!priors) {
        priors = rank::Priors::uniform(ids.size());
    }

    std::vector<std::string> tasks;
    if (!a.tasks.empty()) {
        tasks = split(a.tasks, ',');
    } else {
        std::set<std::string> seen;
        for (const auto &[_, rec] : records) {
            std::visit([&](const auto &r) { seen.insert(r.task_id); }, rec);
        }
        tasks.assign(seen.begin(), seen.end());
    }

    oat::HmacKeyring keyring;
    oat::AcceptAllVerifier accept_all;
    if (!a.keys.empty()) {
        for (const auto &row : read_csv(a.keys, {"agent", "key"})) {
            try {
                keyring.register_key(row.at("agent"), oat::key_from_hex(row.at("key")));
            } catch (const InvalidArgument &e) {
                throw ValidationError(a.keys + ": " + e.what());
            }
        }
    }
    const oat::SignatureVerifier &verifier =
        a.skip_signatures ? static_cast<const oat::SignatureVerifier &>(accept_all) : keyring;

    // Stable by epoch so the file order decides within an epoch.
    std::stable_sort(records.begin(), records.end(), [](const auto &x, const auto &y) {
        const auto ex = std::visit([](const auto &r) { return r.epoch_id; }, x.second);
        const auto ey = std::visit([](const auto &r) { return r.epoch_id; }, y.second);
        return ex < ey;
    });
    const std::int64_t first =
        records.empty() ? 0 : std::visit([](const auto &r) { return r.epoch_id; }, records.front().second);
    oat::TelemetryStore store(first, cfg.grace_epochs);
    std::size_t accepted = 0;
    std::size_t duplicates = 0;
    std::vector<oat::CallerReport> last_reports;
    std::vector<oat::CalleeAck> last_acks;
    for (const auto &[lineno, rec] : records) {
        const auto epoch = std::visit([](const auto &r) { return r.epoch_id; }, rec);
        while (store.current_epoch() < epoch) {
            store.close_epoch();
        }
        const bool known = std::visit(
            [&](const auto &r) {
                if constexpr (std::is_same_v<std::decay_t<decltype(r)>, oat::CallerReport>) {
                    if (!ids.find(r.caller_id)) {
                        return false;
                    }
                }
                return ids.find(r.callee_id).has_value();
            },
            rec);
        if (!known) {
            reject(a.reports + ":" + std::to_string(lineno) + ": unknown agent id");
            continue;
        }
        const auto res = std::visit([&](const auto &r) { return store.ingest(r, verifier); }, rec);
        if (res.status == oat::IngestStatus::kAccepted) {
            ++accepted;
        } else if (res.ok() || res.reason == oat::RejectReason::kSuperseded) {
            ++duplicates;
        } else {
            reject(a.reports + ":" + std::to_string(lineno) + ": " + std::string(oat::to_string(res.reason)) +
                   (res.detail.empty() ? "" : ": " + res.detail));
        }
    }
    const auto final_epoch = store.current_epoch();
    const auto discrepancies = oat::cross_check(store.reports_for(final_epoch), store.acks_for(final_epoch));
    const auto snapshot = store.close_epoch();

    const auto weights = exp::regime_weights(cfg.experiment, cfg.world.regime);
    const auto ranks = rank::rank_pipeline(snapshot, ids, tasks, weights, *priors, cfg.hp);
    {
        auto f = open_out(dir / "ranks.csv");
        rank::write_ranks_csv(f, ranks, ids);
    }
    manifest.finish("ok", {"ranks.csv"});
    out << "ranked epoch " << final_epoch << ": " << accepted << " accepted, " << duplicates << " resubmitted, "
        << skipped << " skipped, " << discrepancies.size() << " ack discrepancies -> " << (dir / "ranks.csv").string()
        << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// experiment

struct ExperimentArgs {
    std::string name;
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void write_p_sweep(const fs::path &path, const exp::ExperimentResult &res) {
    auto f = open_out(path);
    f << "regime,metric,p,value\n";
    const std::string prefix = "p_sweep_";
    for (const auto &pt : res.plot) {
        if (pt.series != "UC" || pt.figure.rfind(prefix, 0) != 0) {
            continue;
        }
        const auto colon = pt.figure.find(':');
        const auto metric = pt.figure.substr(prefix.size(), colon - prefix.size());
        const auto regime = pt.figure.substr(colon + 1);
        f << regime << ',' << metric << ',' << pt.x << ',' << oat::format_number(pt.y) << '\n';
    }
}

void write_sybil_table(const fs::path &path, const exp::ExperimentResult &res, std::size_t k) {
    const auto quality = "quality_at_" + std::to_string(k) + "_exclSY";
    auto f = open_out(path);
    f << "task,method,sybil_mass," << quality << '\n';
    std::set<std::string> tasks;
    for (const auto &r : res.rows) {
        if (r.metric == "sybil_mass" && r.task != "ALL") {
            tasks.insert(r.task);
        }
    }
    for (const auto &task : tasks) {
        for (auto m : exp::kAllMethods) {
            const auto method = exp::to_string(m);
            const auto mass = res.mean("realistic", task, method, "sybil_mass");
            const auto q = res.mean("realistic", task, method, quality);
            f << task << ',' << method << ',' << (mass ? oat::format_number(*mass) : "") << ','
              << (q ? oat::format_number(*q) : "") << '\n';
        }
    }
}

int cmd_experiment(const ExperimentArgs &a, std::ostream &out, std::ostream &err) {
    const auto &names = exp::kExperimentNames;
    if (std::find(std::begin(names), std::end(names), a.name) == std::end(names)) {
        err << "experiment: unknown name '" << a.name << "'; valid names:";
        for (auto n : names) {
            err << ' ' << n;
        }
        err << '\n';
        return kUsageError;
    }
    auto l = load(a.config);
    auto &ec = l.cfg.experiment;
    if (a.seed) {
        ec.seeds = {*a.seed};
    }
    const auto dir = resolve_out(a.out, "experiment-" + a.name);
    RunManifest manifest(dir, "experiment " + a.name, l.path, l.text, ec.seeds);

    const auto res = exp::run_experiment(a.name, ec);
    std::vector<std::string> files{"metrics.csv", "plot.csv", "summary.csv"};
    {
        auto f = open_out(dir / "metrics.csv");
        exp::write_metrics_csv(f, res.rows);
    }
    {
        auto f = open_out(dir / "plot.csv");
        exp::write_plot_csv(f, res.plot);
    }
    {
        auto f = open_out(dir / "summary.csv");
        exp::write_summary_csv(f, res.summary());
    }
    if (a.name == "exp2") {
        write_p_sweep(dir / "p_sweep.csv", res);
        files.push_back("p_sweep.csv");
    }
    if (a.name == "exp5") {
        write_sybil_table(dir / "sybil_mass.csv", res, ec.k);
        files.push_back("sybil_mass.csv");
    }
    manifest.finish("ok", files);
    out << a.name << ": " << res.rows.size() << " metric rows over " << ec.seeds.size() << " seeds -> "
        << dir.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------
// verify-bounds

struct VerifyArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool corrupt_kernel = false;
};

int cmd_verify_bounds(const VerifyArgs &a, std::ostream &out) {
    auto l = load(a.config);
    auto &suite = l.cfg.verify;
    if (a.seed) {
        suite.seed = *a.seed;
    }
    suite.corrupt_kernel = a.corrupt_kernel;
    const auto dir = resolve_out(a.out, "verify-bounds");
    RunManifest manifest(dir, "verify-bounds", l.path, l.text, {suite.seed});

    const auto reports = guarantees::run_bound_suite(suite);
    std::size_t violations = 0;
    {
        auto f = open_out(dir / "bounds.txt");
        for (const auto &r : reports) {
            guarantees::write_report_line(f, r);
            if (!r.holds) {
                ++violations;
                guarantees::write_report_line(out, r);
            }
        }
    }
    manifest.finish(violations == 0 ? "ok" : "violated", {"bounds.txt"});
    out << reports.size() << " checks, " << violations << " violated -> " << (dir / "bounds.txt").string() << '\n';
    return violations == 0 ? kOk : kBoundViolation;
}

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Decentralized agent telemetry and usage-competence ranking"};
    app.name("dovis");
    app.require_subcommand(1);
    app.set_version_flag("--version", DOVIS_VERSION);

    SimulateArgs sim_args;
    auto *sim_cmd = app.add_subcommand("simulate", "Run the agent world and emit telemetry, truth and ranks");
    sim_cmd->add_option("-c,--config", sim_args.config, "YAML config file")->check(CLI::ExistingFile);
    sim_cmd->add_option("--seed", sim_args.seed, "Override the world seed");
    sim_cmd->add_option("-o,--out", sim_args.out, "Output directory");

    RankArgs rank_args;
    auto *rank_cmd = app.add_subcommand("rank", "Ingest a report stream and rank its final epoch");
    rank_cmd->add_option("reports", rank_args.reports, "JSONL report stream")->required()->check(CLI::ExistingFile);
    rank_cmd->add_option("-c,--config", rank_args.config, "YAML config file")->check(CLI::ExistingFile);
    rank_cmd->add_option("-o,--out", rank_args.out, "Output directory");
    rank_cmd->add_option("--keys", rank_args.keys, "CSV agent,key of hex signing keys")->check(CLI::ExistingFile);
    rank_cmd->add_flag("--skip-signatures", rank_args.skip_signatures, "Accept records without verifying signatures");
    rank_cmd->add_option("--agents", rank_args.agents, "CSV with an agent column and optional priors")
        ->check(CLI::ExistingFile);
    rank_cmd->add_option("--tasks", rank_args.tasks, "Comma-separated task list (default: tasks in the stream)");
    auto *strict = rank_cmd->add_flag("--strict", rank_args.strict, "Fail on the first invalid record (default)");
    rank_cmd->add_flag("--lenient", rank_args.lenient, "Skip and count invalid records")->excludes(strict);

    ExperimentArgs exp_args;
    auto *exp_cmd = app.add_subcommand("experiment", "Run one experiment (exp1..exp5)");
    exp_cmd->add_option("name", exp_args.name, "Experiment name")->required();
    exp_cmd->add_option("-c,--config", exp_args.config, "YAML config file")->check(CLI::ExistingFile);
    exp_cmd->add_option("--seed", exp_args.seed, "Run a single seed instead of the configured list");
    exp_cmd->add_option("-o,--out", exp_args.out, "Output directory");

    VerifyArgs verify_args;
    auto *verify_cmd = app.add_subcommand("verify-bounds", "Check the ranking guarantees on generated instances");
    verify_cmd->add_option("-c,--config", verify_args.config, "YAML config file")->check(CLI::ExistingFile);
    verify_cmd->add_option("--seed", verify_args.seed, "Override the suite seed");
    verify_cmd->add_option("-o,--out", verify_args.out, "Output directory");
    // Negative control for tests; hidden from help.
    verify_cmd->add_flag("--corrupt-kernel", verify_args.corrupt_kernel)->group("");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::Success &e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError &e) {
        app.exit(e, out, err);
        return kUsageError;
    }

    try {
        if (sim_cmd->parsed()) {
            return cmd_simulate(sim_args, out);
        }
        if (rank_cmd->parsed()) {
            return cmd_rank(rank_args, out, err);
        }
        if (exp_cmd->parsed()) {
            return cmd_experiment(exp_args, out, err);
        }
        return cmd_verify_bounds(verify_args, out);
    } catch (const Exit &e) {
        return e.code;
    } catch (const ConfigError &e) {
        err << "config error: " << e.what() << '\n';
        return kUsageError;
    } catch (const ValidationError &e) {
        err << "validation error: " << e.what() << '\n';
        return kDataError;
    } catch (const ConvergenceError &e) {
        err << "convergence failure: " << e.what() << '\n';
        return kBoundViolation;
    } catch (const Error &e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    }
}

} // namespace dovis::cli
