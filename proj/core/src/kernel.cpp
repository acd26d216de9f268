#include "dovis/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "dovis/error.hpp"
#include "dovis/signing.hpp"

namespace dovis::kernel {

void UtilityWeights::validate() const {
    for (double t : {success, latency, cost, risk, quality}) {
        if (!(t >= 0.0) || !std::isfinite(t)) {
            throw InvalidArgument("utility coefficients must be finite and non-negative");
        }
    }
    if (!(alpha0 > 0.0) || !(beta0 > 0.0)) {
        throw InvalidArgument("pseudo-counts alpha0 and beta0 must be positive");
    }
}

double success_posterior(double successes, double count, double alpha0, double beta0) {
    return (alpha0 + successes) / (alpha0 + beta0 + count);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double softplus(double x) {
    if (x > 0.0) {
        return x + std::log1p(std::exp(-x));
    }
    return std::log1p(std::exp(x));
}

double edge_utility(double p_hat, const EdgeMeans &means, const UtilityWeights &w) {
    const double latency = means.latency.value_or(0.0);
    const double cost = means.cost.value_or(0.0);
    const double risk = means.risk.value_or(0.0);
    const double quality = means.quality.value_or(p_hat);
    return w.success * logit(p_hat) - w.latency * std::log1p(latency) - w.cost * std::log1p(cost) -
           w.risk * risk + w.quality * quality;
}

// ---------------------------------------------------------------------------

void WeightMatrix::add(std::size_t i, std::size_t j, double weight) {
    if (!(weight >= 0.0) || !std::isfinite(weight)) {
        throw InvalidArgument("edge weights must be finite and non-negative");
    }
    if (j >= rows_.size()) {
        throw DimensionError("column index out of range");
    }
    rows_.at(i)[static_cast<std::uint32_t>(j)] += weight;
}

double WeightMatrix::row_sum(std::size_t i) const {
    double acc = 0.0;
    for (const auto &[j, w] : rows_.at(i)) {
        acc += w;
    }
    return acc;
}

// ---------------------------------------------------------------------------

StochasticKernel StochasticKernel::from_weights(const WeightMatrix &weights, SimplexVector prior) {
    const std::size_t n = weights.size();
    if (prior.size() != n) {
        throw DimensionError("prior dimension does not match kernel");
    }
    StochasticKernel k;
    k.rows_.resize(n);
    k.backoff_.assign(n, false);
    k.prior_ = std::move(prior);
    for (std::size_t i = 0; i < n; ++i) {
        const double total = weights.row_sum(i);
        if (!(total > kRowFloor)) {
            k.backoff_[i] = true;
            continue;
        }
        auto &row = k.rows_[i];
        row.reserve(weights.row(i).size());
        for (const auto &[j, w] : weights.row(i)) {
            if (w > 0.0) {
                row.push_back({j, w / total});
            }
        }
    }
    return k;
}

StochasticKernel StochasticKernel::unchecked_from_dense(const std::vector<std::vector<double>> &rows,
                                                        SimplexVector prior) {
    const std::size_t n = rows.size();
    if (prior.size() != n) {
        throw DimensionError("prior dimension does not match kernel");
    }
    StochasticKernel k;
    k.rows_.resize(n);
    k.backoff_.assign(n, false);
    k.prior_ = std::move(prior);
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != n) {
            throw DimensionError("kernel must be square");
        }
        bool any = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (rows[i][j] != 0.0) {
                k.rows_[i].push_back({static_cast<std::uint32_t>(j), rows[i][j]});
                any = true;
            }
        }
        k.backoff_[i] = !any;
    }
    return k;
}

StochasticKernel StochasticKernel::from_dense(const std::vector<std::vector<double>> &rows, SimplexVector prior) {
    auto k = unchecked_from_dense(rows, std::move(prior));
    k.validate();
    return k;
}

std::vector<std::size_t> StochasticKernel::backoff_rows() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < backoff_.size(); ++i) {
        if (backoff_[i]) {
            out.push_back(i);
        }
    }
    return out;
}

double StochasticKernel::row_sum(std::size_t i) const {
    if (backoff_.at(i)) {
        return 1.0;
    }
    double acc = 0.0;
    for (const auto &e : rows_[i]) {
        acc += e.value;
    }
    return acc;
}

double StochasticKernel::max_row_defect() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        if (!backoff_[i]) {
            worst = std::max(worst, std::abs(row_sum(i) - 1.0));
        }
    }
    return worst;
}

void StochasticKernel::validate() const {
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        for (const auto &e : rows_[i]) {
            if (!(e.value >= 0.0)) {
                throw InvalidArgument("kernel row " + std::to_string(i) + " has a negative entry");
            }
        }
    }
    const double defect = max_row_defect();
    if (defect > kRowTolerance) {
        throw InvalidArgument("kernel is not row-stochastic (max row defect " + std::to_string(defect) + ")");
    }
}

void StochasticKernel::apply_transpose(std::span<const double> x, std::span<double> out) const {
    const std::size_t n = rows_.size();
    if (x.size() != n || out.size() != n) {
        throw DimensionError("apply_transpose: dimension mismatch");
    }
    std::fill(out.begin(), out.end(), 0.0);
    double backoff_mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (backoff_[i]) {
            backoff_mass += x[i];
            continue;
        }
        const double xi = x[i];
        for (const auto &e : rows_[i]) {
            out[e.col] += xi * e.value;
        }
    }
    if (backoff_mass != 0.0) {
        for (std::size_t j = 0; j < n; ++j) {
            out[j] += backoff_mass * prior_[j];
        }
    }
}

std::vector<std::vector<double>> StochasticKernel::dense() const {
    const std::size_t n = rows_.size();
    std::vector<std::vector<double>> out(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        if (backoff_[i]) {
            out[i] = prior_.vec();
            continue;
        }
        for (const auto &e : rows_[i]) {
            out[i][e.col] += e.value;
        }
    }
    return out;
}

StochasticKernel StochasticKernel::materialized() const {
    StochasticKernel k = *this;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        if (!backoff_[i]) {
            continue;
        }
        k.rows_[i].clear();
        for (std::size_t j = 0; j < prior_.size(); ++j) {
            k.rows_[i].push_back({static_cast<std::uint32_t>(j), prior_[j]});
        }
        k.backoff_[i] = false;
    }
    return k;
}

// ---------------------------------------------------------------------------

KernelPair build_kernels(const oat::AggregateSnapshot &snapshot, const IdIndex &agents,
                         const UtilityWeights &weights, const SimplexVector &v, const SimplexVector &w,
                         const KernelOptions &options) {
    weights.validate();
    const std::size_t n = agents.size();
    if (v.size() != n || w.size() != n) {
        throw InvalidArgument("priors must cover every agent");
    }
    WeightMatrix usage(n);
    WeightMatrix competence(n);
    for (const auto &[key, st] : snapshot) {
        if (options.task && key.task != *options.task) {
            continue;
        }
        const std::size_t i = agents.at(key.caller);
        const std::size_t j = agents.at(key.callee);
        if (options.drop_self_edges && i == j) {
            continue;
        }
        if (!(st.n > 0.0)) {
            continue;
        }
        const double p_hat = success_posterior(st.s, st.n, weights.alpha0, weights.beta0);
        const EdgeMeans means{st.mean_latency(), st.mean_cost(), st.mean_risk(), st.mean_quality()};
        const double u = edge_utility(p_hat, means, weights);
        usage.add(i, j, st.n);
        competence.add(i, j, st.n * softplus(u));
    }
    return {StochasticKernel::from_weights(usage, v), StochasticKernel::from_weights(competence, w)};
}

void write_kernel_triplets(std::ostream &out, const StochasticKernel &kernel) {
    out << "i,j,value\n";
    for (std::size_t i = 0; i < kernel.size(); ++i) {
        if (kernel.is_backoff(i)) {
            continue;
        }
        for (const auto &e : kernel.row(i)) {
            out << i << ',' << e.col << ',' << oat::format_number(e.value) << '\n';
        }
    }
    out << "# backoff:";
    for (auto i : kernel.backoff_rows()) {
        out << ' ' << i;
    }
    out << '\n';
}

double max_row_l1_difference(const StochasticKernel &a, const StochasticKernel &b) {
    if (a.size() != b.size()) {
        throw DimensionError("kernels differ in dimension");
    }
    const auto da = a.dense();
    const auto db = b.dense();
    double worst = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < da.size(); ++j) {
            row += std::abs(da[i][j] - db[i][j]);
        }
        worst = std::max(worst, row);
    }
    return worst;
}

} // namespace dovis::kernel
