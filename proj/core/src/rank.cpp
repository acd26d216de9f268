#include "dovis/rank.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "dovis/error.hpp"
#include "dovis/signing.hpp"

namespace dovis::rank {

void RankHyperparams::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0)) {
        throw InvalidArgument("teleport weights alpha and beta must lie strictly inside (0, 1)");
    }
    if (!(p >= 0.0 && p <= 1.0)) {
        throw InvalidArgument("fusion balance p must lie in [0, 1]");
    }
    if (!(tol > 0.0) || max_iter <= 0) {
        throw InvalidArgument("tol must be positive and max_iter at least 1");
    }
}

namespace {

void check_teleport(double teleport) {
    if (!(teleport > 0.0 && teleport < 1.0)) {
        throw InvalidArgument("teleport weight must lie strictly inside (0, 1)");
    }
}

} // namespace

FixedPointResult fixed_point(const kernel::StochasticKernel &kernel, double teleport, const SimplexVector &prior,
                             const SolverOptions &options) {
    check_teleport(teleport);
    if (kernel.size() != prior.size()) {
        throw DimensionError("prior dimension does not match kernel");
    }
    kernel.validate();
    const std::size_t n = prior.size();
    std::vector<double> x = prior.vec();
    std::vector<double> next(n);
    FixedPointResult result;
    if (options.record) {
        result.trajectory.push_back(x);
    }
    double residual = 0.0;
    for (int t = 1; t <= options.max_iter; ++t) {
        kernel.apply_transpose(x, next);
        residual = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            next[j] = teleport * next[j] + (1.0 - teleport) * prior[j];
            residual += std::abs(next[j] - x[j]);
        }
        x.swap(next);
        if (options.record) {
            result.trajectory.push_back(x);
        }
        if (residual <= options.tol) {
            result.vector = SimplexVector::normalized(std::move(x));
            result.iterations = t;
            result.final_residual = residual;
            return result;
        }
    }
    throw ConvergenceError("fixed point did not reach tol " + std::to_string(options.tol) + " in " +
                               std::to_string(options.max_iter) + " iterations",
                           std::move(x), options.max_iter, residual);
}

int iteration_bound(double teleport, double tol) {
    check_teleport(teleport);
    if (!(tol > 0.0)) {
        throw InvalidArgument("tol must be positive");
    }
    return static_cast<int>(std::ceil(std::log(tol / 2.0) / std::log(teleport)));
}

std::vector<double> solve_dense_unchecked(const kernel::StochasticKernel &kernel, double teleport,
                                          const SimplexVector &prior) {
    check_teleport(teleport);
    const std::size_t n = kernel.size();
    if (n != prior.size()) {
        throw DimensionError("prior dimension does not match kernel");
    }
    if (n > kMaxDenseDimension) {
        throw DimensionError("dense solve limited to n <= " + std::to_string(kMaxDenseDimension));
    }
    const auto dense = kernel.dense();
    const auto dim = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(dim, dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            // (I - a P^T)_{ji} = delta_ji - a P_ij
            system(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) -= teleport * dense[i][j];
        }
    }
    Eigen::VectorXd rhs(dim);
    for (std::size_t j = 0; j < n; ++j) {
        rhs(static_cast<Eigen::Index>(j)) = (1.0 - teleport) * prior[j];
    }
    const Eigen::VectorXd sol = system.partialPivLu().solve(rhs);
    return std::vector<double>(sol.data(), sol.data() + n);
}

SimplexVector closed_form_rank(const kernel::StochasticKernel &kernel, double teleport, const SimplexVector &prior) {
    kernel.validate();
    return SimplexVector::normalized(solve_dense_unchecked(kernel, teleport, prior));
}

SimplexVector fuse(const SimplexVector &x, const SimplexVector &y, double p) {
    if (x.size() != y.size()) {
        throw DimensionError("fuse: x and y differ in dimension");
    }
    if (!(p >= 0.0 && p <= 1.0)) {
        throw InvalidArgument("fusion balance p must lie in [0, 1]");
    }
    if (p == 1.0) {
        return x;
    }
    if (p == 0.0) {
        return y;
    }
    const std::size_t n = x.size();
    std::vector<double> logs(n);
    for (std::size_t i = 0; i < n; ++i) {
        logs[i] = p * std::log(x[i]) + (1.0 - p) * std::log(y[i]);
    }
    const double top = *std::max_element(logs.begin(), logs.end());
    for (auto &l : logs) {
        l = std::exp(l - top);
    }
    return SimplexVector::normalized(std::move(logs));
}

Priors Priors::uniform(std::size_t n) { return {SimplexVector::uniform(n), SimplexVector::uniform(n)}; }

TaskRanks rank_kernels(const kernel::KernelPair &kernels, const Priors &priors, const RankHyperparams &hp) {
    hp.validate();
    const SolverOptions opts{hp.tol, hp.max_iter, false};
    auto x = fixed_point(kernels.usage, hp.alpha, priors.usage, opts).vector;
    auto y = fixed_point(kernels.competence, hp.beta, priors.competence, opts).vector;
    auto r = fuse(x, y, hp.p);
    return {std::move(x), std::move(y), std::move(r)};
}

RankSet rank_pipeline(const oat::AggregateSnapshot &snapshot, const IdIndex &agents,
                      const std::vector<std::string> &tasks, const kernel::UtilityWeights &weights,
                      const Priors &priors, const RankHyperparams &hp, bool drop_self_edges) {
    RankSet out;
    for (const auto &task : tasks) {
        kernel::KernelOptions opts{task, drop_self_edges};
        const auto kernels = kernel::build_kernels(snapshot, agents, weights, priors.usage, priors.competence, opts);
        out.per_task.insert_or_assign(task, rank_kernels(kernels, priors, hp));
    }
    kernel::KernelOptions all{std::nullopt, drop_self_edges};
    out.global =
        rank_kernels(kernel::build_kernels(snapshot, agents, weights, priors.usage, priors.competence, all), priors, hp);
    return out;
}

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

void write_ranks_csv(std::ostream &out, const RankSet &ranks, const IdIndex &agents) {
    std::map<std::string, const SimplexVector *> groups;
    for (const auto &[task, tr] : ranks.per_task) {
        groups.emplace(task, &tr.fused);
    }
    groups.emplace(std::string(kGlobalTask), &ranks.global.fused);
    out << "task,agent,rank\n";
    for (const auto &[task, vec] : groups) {
        for (auto j : order_by_score(vec->values())) {
            out << task << ',' << agents.name(j) << ',' << oat::format_number((*vec)[j]) << '\n';
        }
    }
}

} // namespace dovis::rank
