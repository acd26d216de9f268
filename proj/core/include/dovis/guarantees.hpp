#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dovis/kernel.hpp"
#include "dovis/rng.hpp"
#include "dovis/simplex.hpp"

namespace dovis::guarantees {

/// Absolute slack for every inequality check.
inline constexpr double kSlack = 1e-10;
/// Per-step slack of the contraction check.
inline constexpr double kStepSlack = 1e-12;

/// One evaluated inequality lhs <= rhs + slack.
struct BoundReport {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = true;
    double slack = kSlack;
    std::string witness; // filled only on violation

    static BoundReport make(std::string name, double lhs, double rhs, double slack = kSlack);
};

/// Fixed points and masses for a colluding subset S.
struct SybilScenario {
    std::vector<std::size_t> clique;
    SimplexVector x;
    SimplexVector y;
    SimplexVector v;
    double alpha = 0.85;
    double p = 0.5;

    /// Solves both fixed points with the dense solver.
    static SybilScenario solve(const kernel::StochasticKernel &usage, const kernel::StochasticKernel &competence,
                               std::vector<std::size_t> clique, double alpha, double beta, double p);

    double v_clique() const;
    double v_min_outside() const;
    double x_clique() const;
    double y_clique() const;
    double r_clique() const;

    void validate() const;
};

/// (1 - alpha) v_S <= x_S  and  x_S <= alpha + (1 - alpha) v_S.
std::pair<BoundReport, BoundReport> check_usage_sandwich(const SybilScenario &scenario);

/// Closed-form ceiling on the fused clique mass.
double fused_clique_ceiling(double alpha, double v_clique, double v_min_outside, double y_clique, double p);

/// r_S against fused_clique_ceiling. Throws InvalidArgument when y_S >= 1 - 1e-12
/// or p is outside (0, 1].
BoundReport check_fused_bound(const SybilScenario &scenario);

/// Per-step contraction ||x_{t+1} - x*|| <= alpha ||x_t - x*|| and the
/// geometric envelope alpha^t ||x_0 - x*||; reports the worst margin.
BoundReport check_contraction_trajectory(const kernel::StochasticKernel &kernel, double alpha,
                                         const SimplexVector &prior,
                                         const std::vector<std::vector<double>> &iterates);

/// ||x* - x~*||_1 <= alpha / (1 - alpha) * max_i ||P_i - P~_i||_1.
BoundReport check_perturbation(const kernel::StochasticKernel &p, const kernel::StochasticKernel &p_tilde,
                               double alpha, const SimplexVector &prior);

/// min_j (x*_j - (1 - alpha) v_j) >= 0, reported as (1 - alpha) v_j <= x*_j at the tightest j.
BoundReport check_cold_start_floor(std::span<const double> fixed_point, double alpha, const SimplexVector &prior);

/// Largest row-sum defect against zero.
BoundReport check_row_stochastic(const kernel::StochasticKernel &kernel);

// ---------------------------------------------------------------------------
// Instance generators

/// Random row-stochastic kernel; each entry is present with probability
/// `density` (at least one per row) with uniform weights.
kernel::StochasticKernel random_kernel(std::size_t n, double density, Rng &rng, const SimplexVector &prior);

SimplexVector random_prior(std::size_t n, Rng &rng);

/// Every row sends all mass uniformly into `clique`.
kernel::StochasticKernel all_into_clique_kernel(std::size_t n, const std::vector<std::size_t> &clique,
                                                const SimplexVector &prior);

/// No row sends any mass into `clique`.
kernel::StochasticKernel isolated_clique_kernel(std::size_t n, const std::vector<std::size_t> &clique,
                                                const SimplexVector &prior);

// ---------------------------------------------------------------------------
// Diagnostic suite

struct SuiteConfig {
    int trials = 50;             // per size, convergence family
    int perturbation_trials = 100;
    int sybil_trials = 100;
    std::vector<std::size_t> sizes{10, 100};
    double alpha = 0.85;
    double beta = 0.85;
    double tol = 1e-10;
    std::vector<double> fusion_p{0.25, 0.5, 0.75, 1.0};
    std::uint64_t seed = 1;
    /// Scale one row of one kernel by 0.9 (negative control).
    bool corrupt_kernel = false;
};

/// Runs every bound family on random and constructed instances.
std::vector<BoundReport> run_bound_suite(const SuiteConfig &config);

/// `name lhs rhs holds slack`, plus a `# witness:` line when violated.
void write_report_line(std::ostream &out, const BoundReport &report);

} // namespace dovis::guarantees
