#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace dovis::metrics {

/// A ranking for one task scored against latent truth. `rank` may contain
/// zeros (baselines are not required to be strictly positive).
struct EvalInput {
    std::span<const double> rank;
    std::span<const double> truth;
    std::size_t k = 10;

    /// Throws DimensionError on size mismatch, InvalidArgument unless 1 <= k <= n.
    void validate() const;
};

/// Agents ordered by descending score; ties by ascending index.
std::vector<std::size_t> top_k(std::span<const double> rank, std::size_t k);

/// Mean truth over the top-k agents.
double quality_at_k(const EvalInput &input);

/// Quality@k after removing `excluded` agents from both vectors.
double quality_at_k_excluding(const EvalInput &input, std::span<const std::size_t> excluded);

/// DCG@k with raw-truth gains and 1/log2(position + 1) discount, over the
/// ideal DCG@k. An all-zero truth scores 1.
double ndcg_at_k(const EvalInput &input);

struct Correlations {
    std::optional<double> spearman;
    std::optional<double> kendall;
};

/// Tie-adjusted Spearman rho and Kendall tau-b. Absent when either input is constant.
Correlations rank_correlations(std::span<const double> rank, std::span<const double> truth);

/// max truth - Quality@k.
double regret_at_k(const EvalInput &input);

double sybil_mass(std::span<const double> rank, std::span<const std::size_t> clique);

} // namespace dovis::metrics
