#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dovis/ids.hpp"
#include "dovis/kernel.hpp"
#include "dovis/simplex.hpp"
#include "dovis/telemetry.hpp"

namespace dovis::rank {

struct RankHyperparams {
    double alpha = 0.85; // usage teleport weight
    double beta = 0.85;  // competence teleport weight
    double p = 0.5;      // fusion balance: 1 = usage only, 0 = competence only
    double tol = 1e-10;
    int max_iter = 200;

    void validate() const;
};

struct SolverOptions {
    double tol = 1e-10;
    int max_iter = 200;
    /// Keep every iterate, starting with the initial prior.
    bool record = false;
};

struct FixedPointResult {
    SimplexVector vector;
    int iterations = 0;
    double final_residual = 0.0;
    std::vector<std::vector<double>> trajectory;
};

/// Power iteration x <- teleport * P^T x + (1 - teleport) * prior from x = prior,
/// stopped when the l1 step falls to `tol`. Throws InvalidArgument for a
/// non-stochastic kernel and ConvergenceError (carrying the last iterate)
/// when `max_iter` is exhausted.
FixedPointResult fixed_point(const kernel::StochasticKernel &kernel, double teleport, const SimplexVector &prior,
                             const SolverOptions &options = {});

/// Iterations sufficient to reach `tol` from the prior: ceil(ln(tol/2) / ln teleport).
int iteration_bound(double teleport, double tol);

/// Largest dimension accepted by the dense solvers.
inline constexpr std::size_t kMaxDenseDimension = 2000;

/// Exact fixed point (1 - teleport)(I - teleport P^T)^{-1} prior via LU.
SimplexVector closed_form_rank(const kernel::StochasticKernel &kernel, double teleport, const SimplexVector &prior);

/// Dense solve without validating the kernel or the result. Lets diagnostics
/// evaluate deliberately corrupted kernels.
std::vector<double> solve_dense_unchecked(const kernel::StochasticKernel &kernel, double teleport,
                                          const SimplexVector &prior);

/// normalize(x^p * y^(1-p)), computed in log space. p = 1 returns x and p = 0
/// returns y unchanged.
SimplexVector fuse(const SimplexVector &x, const SimplexVector &y, double p);

struct TaskRanks {
    SimplexVector usage;      // x
    SimplexVector competence; // y
    SimplexVector fused;      // r
};

struct Priors {
    SimplexVector usage;      // v
    SimplexVector competence; // w

    static Priors uniform(std::size_t n);
};

struct RankSet {
    std::map<std::string, TaskRanks> per_task;
    TaskRanks global;
};

inline constexpr std::string_view kGlobalTask = "GLOBAL";

TaskRanks rank_kernels(const kernel::KernelPair &kernels, const Priors &priors, const RankHyperparams &hp);

/// Per-task ranks from task-filtered kernels plus a global rank from the
/// unfiltered snapshot. An empty task list yields the global rank only.
RankSet rank_pipeline(const oat::AggregateSnapshot &snapshot, const IdIndex &agents,
                      const std::vector<std::string> &tasks, const kernel::UtilityWeights &weights,
                      const Priors &priors, const RankHyperparams &hp, bool drop_self_edges = false);

/// CSV `task,agent,rank`; tasks in lexicographic order (GLOBAL included),
/// descending rank within a task, ties by ascending agent index.
void write_ranks_csv(std::ostream &out, const RankSet &ranks, const IdIndex &agents);

/// Indices sorted by descending score, ties by ascending index.
std::vector<std::size_t> order_by_score(std::span<const double> scores);

} // namespace dovis::rank
