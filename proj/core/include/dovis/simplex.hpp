#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dovis {

/// Strictly positive probability vector. Every instance satisfies
/// entries > 0 and |sum - 1| <= kSumTolerance.
class SimplexVector {
public:
    static constexpr double kSumTolerance = 1e-12;

    SimplexVector() = default;

    /// Validates without rescaling. Throws InvalidArgument on a
    /// non-positive entry or a sum outside tolerance.
    explicit SimplexVector(std::vector<double> values);

    /// Rescales a strictly positive vector onto the simplex.
    static SimplexVector normalized(std::vector<double> values);
    static SimplexVector uniform(std::size_t n);

    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const double> values() const noexcept { return values_; }
    const std::vector<double> &vec() const noexcept { return values_; }
    double min() const;

    auto begin() const noexcept { return values_.begin(); }
    auto end() const noexcept { return values_.end(); }

    friend bool operator==(const SimplexVector &, const SimplexVector &) = default;

private:
    std::vector<double> values_;
};

/// Sum of |a_i - b_i|.
double l1_distance(std::span<const double> a, std::span<const double> b);

/// Sum of entries indexed by `subset`.
double mass_of(std::span<const double> v, std::span<const std::size_t> subset);

} // namespace dovis
