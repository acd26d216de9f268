#include "dovis/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dovis/error.hpp"

namespace dovis {

namespace {

void check_positive(const std::vector<double> &values) {
    if (values.empty()) {
        throw InvalidArgument("simplex vector must be non-empty");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] > 0.0) || !std::isfinite(values[i])) {
            throw InvalidArgument("simplex vector entry " + std::to_string(i) +
                                  " is not strictly positive");
        }
    }
}

} // namespace

SimplexVector::SimplexVector(std::vector<double> values) : values_(std::move(values)) {
    check_positive(values_);
    const double sum = std::accumulate(values_.begin(), values_.end(), 0.0);
    if (std::abs(sum - 1.0) > kSumTolerance) {
        throw InvalidArgument("simplex vector sums to " + std::to_string(sum));
    }
}

SimplexVector SimplexVector::normalized(std::vector<double> values) {
    check_positive(values);
    const double sum = std::accumulate(values.begin(), values.end(), 0.0);
    for (auto &v : values) {
        v /= sum;
    }
    return SimplexVector(std::move(values));
}

SimplexVector SimplexVector::uniform(std::size_t n) {
    if (n == 0) {
        throw InvalidArgument("uniform simplex needs n > 0");
    }
    return SimplexVector(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

double SimplexVector::min() const { return *std::min_element(values_.begin(), values_.end()); }

double l1_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("l1_distance: size mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += std::abs(a[i] - b[i]);
    }
    return acc;
}

double mass_of(std::span<const double> v, std::span<const std::size_t> subset) {
    double acc = 0.0;
    for (auto j : subset) {
        acc += v[j];
    }
    return acc;
}

} // namespace dovis
