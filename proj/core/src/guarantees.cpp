#include "dovis/guarantees.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "dovis/error.hpp"
#include "dovis/rank.hpp"
#include "dovis/signing.hpp"

namespace dovis::guarantees {

BoundReport BoundReport::make(std::string name, double lhs, double rhs, double slack) {
    BoundReport r;
    r.name = std::move(name);
    r.lhs = lhs;
    r.rhs = rhs;
    r.slack = slack;
    r.holds = lhs <= rhs + slack;
    return r;
}

// ---------------------------------------------------------------------------

SybilScenario SybilScenario::solve(const kernel::StochasticKernel &usage, const kernel::StochasticKernel &competence,
                                   std::vector<std::size_t> clique, double alpha, double beta, double p) {
    SybilScenario s;
    s.clique = std::move(clique);
    s.x = rank::closed_form_rank(usage, alpha, usage.prior());
    s.y = rank::closed_form_rank(competence, beta, competence.prior());
    s.v = usage.prior();
    s.alpha = alpha;
    s.p = p;
    s.validate();
    return s;
}

void SybilScenario::validate() const {
    const std::size_t n = x.size();
    if (y.size() != n || v.size() != n) {
        throw DimensionError("scenario vectors differ in dimension");
    }
    if (clique.empty() || clique.size() >= n) {
        throw InvalidArgument("clique must be a non-empty proper subset");
    }
    std::vector<bool> seen(n, false);
    for (auto j : clique) {
        if (j >= n || seen[j]) {
            throw InvalidArgument("clique has an out-of-range or repeated member");
        }
        seen[j] = true;
    }
}

double SybilScenario::v_clique() const { return mass_of(v.values(), clique); }

double SybilScenario::v_min_outside() const {
    std::vector<bool> in(v.size(), false);
    for (auto j : clique) {
        in[j] = true;
    }
    double lo = 1.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
        if (!in[j]) {
            lo = std::min(lo, v[j]);
        }
    }
    return lo;
}

double SybilScenario::x_clique() const { return mass_of(x.values(), clique); }
double SybilScenario::y_clique() const { return mass_of(y.values(), clique); }
double SybilScenario::r_clique() const { return mass_of(rank::fuse(x, y, p).values(), clique); }

std::pair<BoundReport, BoundReport> check_usage_sandwich(const SybilScenario &s) {
    const double floor = (1.0 - s.alpha) * s.v_clique();
    const double x_s = s.x_clique();
    return {BoundReport::make("usage_sandwich_lower", floor, x_s),
            BoundReport::make("usage_sandwich_upper", x_s, s.alpha + floor)};
}

double fused_clique_ceiling(double alpha, double v_clique, double v_min_outside, double y_clique, double p) {
    const double inside = std::pow(alpha + (1.0 - alpha) * v_clique, p) * std::pow(y_clique, 1.0 - p);
    const double outside =
        std::pow(1.0 - alpha, p) * std::pow(v_min_outside, p) * std::pow(1.0 - y_clique, 1.0 - p);
    return inside / (inside + outside);
}

BoundReport check_fused_bound(const SybilScenario &s) {
    if (!(s.p > 0.0 && s.p <= 1.0)) {
        throw InvalidArgument("fused clique bound requires p in (0, 1]");
    }
    const double y_s = s.y_clique();
    if (y_s >= 1.0 - 1e-12) {
        throw InvalidArgument("fused clique bound undefined: competence mass of clique is 1");
    }
    const double ceiling = fused_clique_ceiling(s.alpha, s.v_clique(), s.v_min_outside(), y_s, s.p);
    return BoundReport::make("fused_clique_bound", s.r_clique(), ceiling);
}

BoundReport check_contraction_trajectory(const kernel::StochasticKernel &kernel, double alpha,
                                         const SimplexVector &prior,
                                         const std::vector<std::vector<double>> &iterates) {
    const auto star = rank::closed_form_rank(kernel, alpha, prior);
    if (iterates.empty()) {
        return BoundReport::make("contraction", 0.0, 0.0);
    }
    std::vector<double> err(iterates.size());
    for (std::size_t t = 0; t < iterates.size(); ++t) {
        err[t] = l1_distance(iterates[t], star.values());
    }
    BoundReport worst = BoundReport::make("contraction_geometric", err[0], err[0]);
    double worst_margin = -INFINITY;
    for (std::size_t t = 0; t < err.size(); ++t) {
        const double envelope = std::pow(alpha, static_cast<double>(t)) * err[0];
        if (double m = err[t] - envelope - kSlack; m > worst_margin) {
            worst_margin = m;
            worst = BoundReport::make("contraction_geometric", err[t], envelope, kSlack);
        }
        if (t + 1 < err.size()) {
            const double step = alpha * err[t];
            if (double m = err[t + 1] - step - kStepSlack; m > worst_margin) {
                worst_margin = m;
                worst = BoundReport::make("contraction_step", err[t + 1], step, kStepSlack);
            }
        }
    }
    return worst;
}

BoundReport check_perturbation(const kernel::StochasticKernel &p, const kernel::StochasticKernel &p_tilde,
                               double alpha, const SimplexVector &prior) {
    if (p.size() != p_tilde.size() || p.size() != prior.size()) {
        throw DimensionError("perturbation check: dimension mismatch");
    }
    const auto a = rank::closed_form_rank(p, alpha, prior);
    const auto b = rank::closed_form_rank(p_tilde, alpha, prior);
    const double diff = kernel::max_row_l1_difference(p, p_tilde);
    return BoundReport::make("perturbation", l1_distance(a.values(), b.values()), alpha / (1.0 - alpha) * diff);
}

BoundReport check_cold_start_floor(std::span<const double> fixed_point, double alpha, const SimplexVector &prior) {
    if (fixed_point.size() != prior.size()) {
        throw DimensionError("cold-start check: dimension mismatch");
    }
    std::size_t tightest = 0;
    double margin = INFINITY;
    for (std::size_t j = 0; j < prior.size(); ++j) {
        const double m = fixed_point[j] - (1.0 - alpha) * prior[j];
        if (m < margin) {
            margin = m;
            tightest = j;
        }
    }
    return BoundReport::make("cold_start_floor", (1.0 - alpha) * prior[tightest], fixed_point[tightest], 1e-12);
}

BoundReport check_row_stochastic(const kernel::StochasticKernel &kernel) {
    return BoundReport::make("row_stochastic", kernel.max_row_defect(), 0.0, kernel::StochasticKernel::kRowTolerance);
}

// ---------------------------------------------------------------------------

kernel::StochasticKernel random_kernel(std::size_t n, double density, Rng &rng, const SimplexVector &prior) {
    kernel::WeightMatrix w(n);
    for (std::size_t i = 0; i < n; ++i) {
        bool any = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (rng.bernoulli(density)) {
                w.add(i, j, rng.uniform(0.01, 1.0));
                any = true;
            }
        }
        if (!any) {
            w.add(i, rng.uniform_index(n), 1.0);
        }
    }
    return kernel::StochasticKernel::from_weights(w, prior);
}

SimplexVector random_prior(std::size_t n, Rng &rng) {
    std::vector<double> v(n);
    for (auto &x : v) {
        x = rng.uniform(0.2, 1.0);
    }
    return SimplexVector::normalized(std::move(v));
}

kernel::StochasticKernel all_into_clique_kernel(std::size_t n, const std::vector<std::size_t> &clique,
                                                const SimplexVector &prior) {
    kernel::WeightMatrix w(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto j : clique) {
            w.add(i, j, 1.0);
        }
    }
    return kernel::StochasticKernel::from_weights(w, prior);
}

kernel::StochasticKernel isolated_clique_kernel(std::size_t n, const std::vector<std::size_t> &clique,
                                                const SimplexVector &prior) {
    std::vector<bool> in(n, false);
    for (auto j : clique) {
        in[j] = true;
    }
    kernel::WeightMatrix w(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (!in[j]) {
                w.add(i, j, 1.0);
            }
        }
    }
    return kernel::StochasticKernel::from_weights(w, prior);
}

// ---------------------------------------------------------------------------

namespace {

double density_for(std::size_t n) { return std::min(0.5, 5.0 / static_cast<double>(n)); }

std::string describe(std::string_view family, std::uint64_t seed, std::size_t n, int trial) {
    std::ostringstream os;
    os << family << " seed=" << seed << " n=" << n << " trial=" << trial;
    return os.str();
}

void push(std::vector<BoundReport> &out, BoundReport r, std::string label, std::string witness) {
    r.name += "[" + label + "]";
    if (!r.holds) {
        r.witness = std::move(witness);
    }
    out.push_back(std::move(r));
}

// Random clique that pumps usage internally: clique rows send most mass to S.
kernel::StochasticKernel pumped_kernel(std::size_t n, const std::vector<std::size_t> &clique, double pump, Rng &rng,
                                       const SimplexVector &prior) {
    std::vector<bool> in(n, false);
    for (auto j : clique) {
        in[j] = true;
    }
    kernel::WeightMatrix w(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (!rng.bernoulli(density_for(n) * 2.0)) {
                continue;
            }
            double weight = rng.uniform(0.01, 1.0);
            if (in[i] && in[j]) {
                weight *= pump;
            }
            w.add(i, j, weight);
        }
        if (w.row(i).empty()) {
            w.add(i, rng.uniform_index(n), 1.0);
        }
    }
    return kernel::StochasticKernel::from_weights(w, prior);
}

std::vector<std::size_t> random_clique(std::size_t n, std::size_t size, Rng &rng) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) {
        all[i] = i;
    }
    std::shuffle(all.begin(), all.end(), rng.engine());
    all.resize(size);
    std::sort(all.begin(), all.end());
    return all;
}

} // namespace

std::vector<BoundReport> run_bound_suite(const SuiteConfig &config) {
    if (config.trials <= 0 || config.perturbation_trials < 0 || config.sybil_trials < 0) {
        throw InvalidArgument("bound suite needs at least one trial");
    }
    if (config.sizes.empty()) {
        throw InvalidArgument("bound suite needs at least one size");
    }
    std::vector<BoundReport> out;
    const Rng root(config.seed);

    // Convergence family: contraction, iteration count, closed-form agreement, floor.
    for (std::size_t n : config.sizes) {
        for (int t = 0; t < config.trials; ++t) {
            Rng rng = root.split(1000 * n + static_cast<std::uint64_t>(t));
            const auto prior = random_prior(n, rng);
            const auto k = random_kernel(n, density_for(n), rng, prior);
            const std::string label = "n=" + std::to_string(n) + ",trial=" + std::to_string(t);
            const std::string witness = describe("convergence", config.seed, n, t);
            const auto res = rank::fixed_point(k, config.alpha, prior, {config.tol, 10'000, true});
            push(out, check_contraction_trajectory(k, config.alpha, prior, res.trajectory), label, witness);
            push(out,
                 BoundReport::make("iteration_count", res.iterations,
                                   rank::iteration_bound(config.alpha, config.tol), 0.0),
                 label, witness);
            const auto exact = rank::closed_form_rank(k, config.alpha, prior);
            push(out, BoundReport::make("closed_form_agreement", l1_distance(res.vector.values(), exact.values()), 1e-9, 0.0),
                 label, witness);
            push(out, check_cold_start_floor(exact.values(), config.alpha, prior), label, witness);
        }
    }

    // Perturbation family.
    for (int t = 0; t < config.perturbation_trials; ++t) {
        Rng rng = root.split(500'000 + static_cast<std::uint64_t>(t));
        const std::size_t n = config.sizes[static_cast<std::size_t>(t) % config.sizes.size()];
        const auto prior = random_prior(n, rng);
        const auto a = random_kernel(n, density_for(n), rng, prior);
        const auto b = t % 2 == 0 ? random_kernel(n, density_for(n), rng, prior) : [&] {
            // Local change: redraw a handful of rows.
            auto dense = a.dense();
            for (int r = 0; r < 3; ++r) {
                auto &row = dense[rng.uniform_index(n)];
                std::fill(row.begin(), row.end(), 0.0);
                row[rng.uniform_index(n)] = 1.0;
            }
            return kernel::StochasticKernel::from_dense(dense, prior);
        }();
        push(out, check_perturbation(a, b, config.alpha, prior), "trial=" + std::to_string(t),
             describe("perturbation", config.seed, n, t));
    }

    // Sybil family: tight constructions, then random pumped cliques.
    {
        const std::size_t n = 100;
        std::vector<std::size_t> clique(10);
        for (std::size_t j = 0; j < clique.size(); ++j) {
            clique[j] = j;
        }
        const auto v = SimplexVector::uniform(n);
        const auto q = isolated_clique_kernel(n, clique, v);
        for (const auto &[label, p_kernel] : {std::pair{"all_into_clique", all_into_clique_kernel(n, clique, v)},
                                              std::pair{"isolated_clique", isolated_clique_kernel(n, clique, v)}}) {
            const auto scn = SybilScenario::solve(p_kernel, q, clique, config.alpha, config.beta, 0.5);
            auto [lo, hi] = check_usage_sandwich(scn);
            push(out, lo, label, label);
            push(out, hi, label, label);
        }
    }
    for (int t = 0; t < config.sybil_trials; ++t) {
        Rng rng = root.split(900'000 + static_cast<std::uint64_t>(t));
        const std::size_t n = config.sizes[static_cast<std::size_t>(t) % config.sizes.size()];
        const auto clique = random_clique(n, 1 + rng.uniform_index(std::max<std::size_t>(1, n / 5)), rng);
        const auto v = random_prior(n, rng);
        const auto w = random_prior(n, rng);
        const auto usage = pumped_kernel(n, clique, 50.0, rng, v);
        const auto competence = random_kernel(n, density_for(n), rng, w);
        for (double p : config.fusion_p) {
            const auto scn = SybilScenario::solve(usage, competence, clique, config.alpha, config.beta, p);
            const std::string label = "trial=" + std::to_string(t) + ",p=" + oat::format_number(p);
            const std::string witness = describe("sybil", config.seed, n, t) + " p=" + oat::format_number(p);
            auto [lo, hi] = check_usage_sandwich(scn);
            push(out, lo, label, witness);
            push(out, hi, label, witness);
            if (scn.y_clique() < 1.0 - 1e-12) {
                push(out, check_fused_bound(scn), label, witness);
            }
        }
    }

    if (config.corrupt_kernel) {
        Rng rng = root.split(42);
        const std::size_t n = config.sizes.front();
        const auto prior = SimplexVector::uniform(n);
        auto dense = random_kernel(n, density_for(n), rng, prior).dense();
        for (auto &x : dense[0]) {
            x *= 0.9;
        }
        const auto bad = kernel::StochasticKernel::unchecked_from_dense(dense, prior);
        push(out, check_row_stochastic(bad), "corrupted",
             "negative control: row 0 of a random n=" + std::to_string(n) + " kernel scaled by 0.9");
    }
    return out;
}

void write_report_line(std::ostream &out, const BoundReport &r) {
    out << r.name << ' ' << oat::format_number(r.lhs) << ' ' << oat::format_number(r.rhs) << ' '
        << (r.holds ? "true" : "false") << ' ' << oat::format_number(r.slack) << '\n';
    if (!r.holds && !r.witness.empty()) {
        out << "# witness: " << r.witness << '\n';
    }
}

} // namespace dovis::guarantees
