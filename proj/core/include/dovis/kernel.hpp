#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dovis/ids.hpp"
#include "dovis/simplex.hpp"
#include "dovis/telemetry.hpp"

namespace dovis::kernel {

/// Coefficients of the per-edge competence utility and the Beta-Bernoulli
/// pseudo-counts. All coefficients are non-negative; pseudo-counts positive.
struct UtilityWeights {
    double success = 1.0;
    double latency = 0.2;
    double cost = 0.2;
    double risk = 0.5;
    double quality = 0.5;
    double alpha0 = 1.0;
    double beta0 = 1.0;

    void validate() const;
};

/// (alpha0 + S) / (alpha0 + beta0 + N). Strictly inside (0, 1).
double success_posterior(double successes, double count, double alpha0, double beta0);

double logit(double p);

/// log(1 + e^x), evaluated without overflow for large |x|.
double softplus(double x);

/// Per-edge decayed means; nullopt marks a feature the reporter omitted.
struct EdgeMeans {
    std::optional<double> latency;
    std::optional<double> cost;
    std::optional<double> risk;
    std::optional<double> quality;
};

/// Absent latency, cost and risk contribute nothing; absent quality falls back to p_hat.
double edge_utility(double p_hat, const EdgeMeans &means, const UtilityWeights &weights);

/// Sparse non-negative n x n matrix.
class WeightMatrix {
public:
    explicit WeightMatrix(std::size_t n) : rows_(n) {}

    void add(std::size_t i, std::size_t j, double weight);
    std::size_t size() const noexcept { return rows_.size(); }
    const std::map<std::uint32_t, double> &row(std::size_t i) const { return rows_.at(i); }
    double row_sum(std::size_t i) const;

private:
    std::vector<std::map<std::uint32_t, double>> rows_;
};

/// Row-stochastic kernel. Each row is either an explicit sparse distribution
/// or a backoff marker that stands for the prior.
class StochasticKernel {
public:
    struct Entry {
        std::uint32_t col;
        double value;
    };

    /// Rows whose mass does not exceed kRowFloor back off to the prior.
    static constexpr double kRowFloor = 1e-12;
    static constexpr double kRowTolerance = 1e-12;

    StochasticKernel() = default;

    static StochasticKernel from_weights(const WeightMatrix &weights, SimplexVector prior);

    /// Dense rows; an all-zero row becomes a backoff row. Throws InvalidArgument
    /// if any other row is not stochastic within kRowTolerance.
    static StochasticKernel from_dense(const std::vector<std::vector<double>> &rows, SimplexVector prior);

    /// Same as from_dense but skips validation. Only for negative controls.
    static StochasticKernel unchecked_from_dense(const std::vector<std::vector<double>> &rows, SimplexVector prior);

    std::size_t size() const noexcept { return rows_.size(); }
    bool is_backoff(std::size_t i) const { return backoff_.at(i); }
    std::span<const Entry> row(std::size_t i) const { return rows_.at(i); }
    const SimplexVector &prior() const noexcept { return prior_; }
    std::vector<std::size_t> backoff_rows() const;

    double row_sum(std::size_t i) const;
    /// Largest |row_sum - 1| over materialized rows.
    double max_row_defect() const;
    /// Throws InvalidArgument when max_row_defect() exceeds kRowTolerance or an entry is negative.
    void validate() const;

    /// out = P^T x.
    void apply_transpose(std::span<const double> x, std::span<double> out) const;

    /// Dense copy with backoff rows expanded to the prior.
    std::vector<std::vector<double>> dense() const;

    /// Copy in which every backoff row is an explicit copy of the prior.
    StochasticKernel materialized() const;

private:
    std::vector<std::vector<Entry>> rows_;
    std::vector<bool> backoff_;
    SimplexVector prior_;
};

struct KernelPair {
    StochasticKernel usage;      // P
    StochasticKernel competence; // Q
};

struct KernelOptions {
    /// Restrict the snapshot to one task.
    std::optional<std::string> task;
    bool drop_self_edges = false;
};

/// Usage weights U_ij = sum_k N and competence weights C_ij = sum_k N softplus(u),
/// row-normalized with backoff to `v` (usage) and `w` (competence).
/// Throws ValidationError when the snapshot references an agent missing from `agents`.
KernelPair build_kernels(const oat::AggregateSnapshot &snapshot, const IdIndex &agents,
                         const UtilityWeights &weights, const SimplexVector &v, const SimplexVector &w,
                         const KernelOptions &options = {});

/// `i,j,value` triplets followed by a `# backoff:` line listing backoff rows.
void write_kernel_triplets(std::ostream &out, const StochasticKernel &kernel);

/// max_i sum_j |A_ij - B_ij| over the dense expansions.
double max_row_l1_difference(const StochasticKernel &a, const StochasticKernel &b);

} // namespace dovis::kernel
