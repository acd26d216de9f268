#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dovis/kernel.hpp"
#include "dovis/rank.hpp"
#include "dovis/sim.hpp"

namespace dovis::exp {

enum class Method { kUC, kUsage, kComp, kOracle };

inline constexpr Method kAllMethods[] = {Method::kUC, Method::kUsage, Method::kComp, Method::kOracle};

std::string_view to_string(Method m);

/// One line of the metrics table.
struct MetricRow {
    std::string experiment;
    std::string regime;
    std::uint64_t seed = 0;
    int epoch = 0;
    std::string task;
    std::string method;
    std::string metric;
    double value = 0.0;
};

/// One point of a plotted series.
struct PlotPoint {
    std::string figure;
    std::string series;
    std::string x;
    double y = 0.0;
};

struct SummaryRow {
    std::string experiment;
    std::string regime;
    std::string task;
    std::string method;
    std::string metric;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    int count = 0;
};

struct ExperimentResult {
    std::string id;
    std::vector<MetricRow> rows;
    std::vector<PlotPoint> plot;

    /// Mean/min/max across seeds of every (regime, task, method, metric) group.
    std::vector<SummaryRow> summary() const;
    /// Mean across seeds for one group; nullopt when absent.
    std::optional<double> mean(std::string_view regime, std::string_view task, std::string_view method,
                               std::string_view metric) const;
};

struct ExperimentConfig {
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    /// Base world; experiments override regime-specific fields and epochs.
    sim::WorldConfig world;
    rank::RankHyperparams hp;
    /// Full utility; the clean regime zeroes latency, cost and risk.
    kernel::UtilityWeights weights;
    std::size_t k = 10;

    int epochs = 40;
    int exp2_epochs = 35;
    int exp5_epochs = 36;
    std::vector<double> p_grid{0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0};

    int shock_epoch = 18;
    double degrade_delta = -0.2;
    double improve_delta = 0.07;
    std::size_t focal_task = 0;
    std::vector<double> half_lives{4.0, 8.0, 16.0};

    int injection_trials = 100;
    int injection_steps = 10;
    double newcomer_boost = 3.0;

    sim::SybilSpec sybil{8, 0.5};
};

/// World defaults for a regime layered over the base config.
sim::WorldConfig regime_world(const ExperimentConfig &config, sim::Regime regime, std::uint64_t seed);
kernel::UtilityWeights regime_weights(const ExperimentConfig &config, sim::Regime regime);

/// Scores of a method for one task at one epoch of a timeline.
std::vector<double> method_scores(const sim::Timeline &timeline, std::size_t epoch_index, std::size_t task,
                                  Method method);

/// Oracle baseline: normalized per-callee success rate from raw counts.
std::vector<double> oracle_scores(std::span<const double> calls, std::span<const double> successes);

/// 1-based position of `agent` under descending score, ties by index.
std::size_t position_of(std::span<const double> scores, std::size_t agent);

ExperimentResult exp1_baselines(const ExperimentConfig &config);
ExperimentResult exp2_p_sweep_frozen(const ExperimentConfig &config);
ExperimentResult exp3_shock_halflife(const ExperimentConfig &config);
ExperimentResult exp4_monotonicity_coldstart(const ExperimentConfig &config);
ExperimentResult exp5_sybil(const ExperimentConfig &config);

inline constexpr std::string_view kExperimentNames[] = {"exp1", "exp2", "exp3", "exp4", "exp5"};

/// Ranking metrics of every method, task and epoch of one simulation, plus
/// SybilMass when the world has a clique. Rows are tagged with `experiment`.
std::vector<MetricRow> timeline_metrics(const sim::Timeline &timeline, std::string_view experiment, std::size_t k);

/// Dispatch by name; throws InvalidArgument listing the valid names.
ExperimentResult run_experiment(std::string_view name, const ExperimentConfig &config);

/// Success injection used by the monotonicity study: one more call and one
/// more success with quality 1 on (caller, callee, task); latency, cost and
/// risk enter at the edge's current means (or the given fallbacks for a new edge).
void inject_success(oat::AggregateSnapshot &snapshot, const oat::EdgeKey &key, double latency_ms, double cost,
                    double risk);

void write_metrics_csv(std::ostream &out, const std::vector<MetricRow> &rows);
void write_plot_csv(std::ostream &out, const std::vector<PlotPoint> &plot);
void write_summary_csv(std::ostream &out, const std::vector<SummaryRow> &rows);

} // namespace dovis::exp
