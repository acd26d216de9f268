#include "dovis/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dovis/error.hpp"
#include "dovis/rank.hpp"

namespace dovis::metrics {

void EvalInput::validate() const {
    if (rank.size() != truth.size()) {
        throw DimensionError("rank and truth cover different agent sets");
    }
    if (k < 1 || k > rank.size()) {
        throw InvalidArgument("cutoff k must satisfy 1 <= k <= n");
    }
}

std::vector<std::size_t> top_k(std::span<const double> rank, std::size_t k) {
    auto order = rank::order_by_score(rank);
    order.resize(std::min(k, order.size()));
    return order;
}

double quality_at_k(const EvalInput &input) {
    input.validate();
    double acc = 0.0;
    for (auto j : top_k(input.rank, input.k)) {
        acc += input.truth[j];
    }
    return acc / static_cast<double>(input.k);
}

double quality_at_k_excluding(const EvalInput &input, std::span<const std::size_t> excluded) {
    if (input.rank.size() != input.truth.size()) {
        throw DimensionError("rank and truth cover different agent sets");
    }
    std::vector<bool> drop(input.rank.size(), false);
    for (auto j : excluded) {
        drop.at(j) = true;
    }
    std::vector<double> rank;
    std::vector<double> truth;
    for (std::size_t j = 0; j < input.rank.size(); ++j) {
        if (!drop[j]) {
            rank.push_back(input.rank[j]);
            truth.push_back(input.truth[j]);
        }
    }
    return quality_at_k({rank, truth, input.k});
}

namespace {

double dcg(std::span<const double> truth, std::span<const std::size_t> order) {
    double acc = 0.0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        acc += truth[order[pos]] / std::log2(static_cast<double>(pos) + 2.0);
    }
    return acc;
}

// Average ranks (1-based) with ties sharing the mean position.
std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) {
            ++j;
        }
        const double mean = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) {
            out[idx[t]] = mean;
        }
        i = j + 1;
    }
    return out;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) {
        return std::nullopt;
    }
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

int sign(double x) { return (x > 0.0) - (x < 0.0); }

} // namespace

double ndcg_at_k(const EvalInput &input) {
    input.validate();
    const auto ideal_order = top_k(input.truth, input.k);
    const double ideal = dcg(input.truth, ideal_order);
    if (ideal == 0.0) {
        return 1.0;
    }
    const auto order = top_k(input.rank, input.k);
    return std::min(1.0, dcg(input.truth, order) / ideal);
}

Correlations rank_correlations(std::span<const double> rank, std::span<const double> truth) {
    if (rank.size() != truth.size()) {
        throw DimensionError("rank and truth cover different agent sets");
    }
    if (rank.size() < 2) {
        throw InvalidArgument("rank correlation needs at least two agents");
    }
    Correlations out;
    const auto ra = average_ranks(rank);
    const auto rb = average_ranks(truth);
    out.spearman = pearson(ra, rb);

    long long concordant_minus_discordant = 0;
    long long untied_a = 0;
    long long untied_b = 0;
    for (std::size_t i = 0; i < rank.size(); ++i) {
        for (std::size_t j = i + 1; j < rank.size(); ++j) {
            const int sa = sign(rank[i] - rank[j]);
            const int sb = sign(truth[i] - truth[j]);
            concordant_minus_discordant += sa * sb;
            untied_a += sa != 0;
            untied_b += sb != 0;
        }
    }
    if (untied_a > 0 && untied_b > 0) {
        const double tau = static_cast<double>(concordant_minus_discordant) /
                           std::sqrt(static_cast<double>(untied_a) * static_cast<double>(untied_b));
        out.kendall = std::clamp(tau, -1.0, 1.0);
    }
    return out;
}

double regret_at_k(const EvalInput &input) {
    const double q = quality_at_k(input);
    const double best = *std::max_element(input.truth.begin(), input.truth.end());
    return std::max(0.0, best - q);
}

double sybil_mass(std::span<const double> rank, std::span<const std::size_t> clique) {
    double acc = 0.0;
    for (auto j : clique) {
        if (j >= rank.size()) {
            throw InvalidArgument("clique member outside the agent set");
        }
        acc += rank[j];
    }
    return acc;
}

} // namespace dovis::metrics
