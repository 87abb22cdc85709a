#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "pos2fs/common.hpp"

namespace pos2fs {

// ============================================================================
// Partial correlation
// ============================================================================

struct PartialCorrelation {
    double r = 0.0;
    bool degenerate = false;     // a residual had zero variance; r reported as 0
    bool rank_deficient = false; // conditioning design was singular (pseudo-inverse used)
};

// Correlation of the residuals of x and y after least-squares projection onto
// [1, Z]. Z holds one conditioning variable per column; an empty Z gives the
// Pearson correlation. Rank-deficient designs use the minimum-norm solution.
inline PartialCorrelation partial_correlation(const Vector& x, const Vector& y, const Matrix& z) {
    const Eigen::Index n = x.size();
    if (y.size() != n || (z.cols() > 0 && z.rows() != n))
        throw ValidationError("partial_correlation: length mismatch");
    if (n <= z.cols() + 3)
        throw TestError("partial_correlation: need more than |conditioning| + 3 samples (n = " +
                        std::to_string(n) + ", |conditioning| = " + std::to_string(z.cols()) + ")");

    PartialCorrelation out;
    Vector rx, ry;
    if (z.cols() == 0) {
        rx = x.array() - x.mean();
        ry = y.array() - y.mean();
    } else {
        Matrix design(n, z.cols() + 1);
        design.col(0).setOnes();
        design.rightCols(z.cols()) = z;
        const Eigen::CompleteOrthogonalDecomposition<Matrix> cod(design);
        out.rank_deficient = cod.rank() < design.cols();
        rx = x - design * cod.solve(x);
        ry = y - design * cod.solve(y);
    }

    const double tss_x = (x.array() - x.mean()).square().sum();
    const double tss_y = (y.array() - y.mean()).square().sum();
    const double sx = rx.squaredNorm();
    const double sy = ry.squaredNorm();
    constexpr double kRelativeFloor = 1e-20;
    if (tss_x <= 0.0 || tss_y <= 0.0 || sx <= kRelativeFloor * tss_x ||
        sy <= kRelativeFloor * tss_y) {
        out.degenerate = true;
        return out;
    }
    out.r = std::clamp(rx.dot(ry) / std::sqrt(sx * sy), -1.0, 1.0);
    return out;
}

// ============================================================================
// Fisher-Z conditional independence test
// ============================================================================

struct FisherZResult {
    bool dependent = false;
    double statistic = 0.0;
    PartialCorrelation pcor;
};

// Two-sided standard normal critical value at level alpha.
inline double normal_critical_value(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("significance must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
}

inline FisherZResult fisher_z_test(const Vector& x, const Vector& y, const Matrix& z, double alpha) {
    const Eigen::Index n = x.size();
    if (n < z.cols() + 4)
        throw TestError("fisher_z: need at least |conditioning| + 4 samples (n = " +
                        std::to_string(n) + ")");
    FisherZResult out;
    out.pcor = partial_correlation(x, y, z);
    const double r = std::clamp(out.pcor.r, -(1.0 - 1e-12), 1.0 - 1e-12);
    out.statistic =
        std::sqrt(static_cast<double>(n - z.cols() - 3)) * 0.5 * std::log((1.0 + r) / (1.0 - r));
    out.dependent = std::abs(out.statistic) > normal_critical_value(alpha);
    return out;
}

// ============================================================================
// Wilcoxon signed-rank
// ============================================================================

struct WilcoxonResult {
    double r_plus = 0.0;
    double r_minus = 0.0;
    std::size_t n_effective = 0;
};

namespace detail {

// Mid-ranks (1-based) of the values, ties sharing their average rank.
inline std::vector<double> mid_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

struct SignedRanks {
    std::vector<double> ranks; // ranks of |a - b| over nonzero differences
    std::vector<bool> positive;
};

inline SignedRanks signed_ranks(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("wilcoxon: samples differ in length");
    if (a.empty()) throw ValidationError("wilcoxon: need at least one pair");
    std::vector<double> mags;
    SignedRanks out;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
            throw ValidationError("wilcoxon: non-finite value");
        const double d = a[i] - b[i];
        if (d == 0.0) continue;
        mags.push_back(std::abs(d));
        out.positive.push_back(d > 0.0);
    }
    out.ranks = mid_ranks(mags);
    return out;
}

} // namespace detail

// Zero differences are dropped before ranking.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
    const auto sr = detail::signed_ranks(a, b);
    WilcoxonResult out;
    out.n_effective = sr.ranks.size();
    for (std::size_t i = 0; i < sr.ranks.size(); ++i)
        (sr.positive[i] ? out.r_plus : out.r_minus) += sr.ranks[i];
    return out;
}

// Exact two-sided p-value of R+ under the sign-flip null, conditional on the
// observed (mid-)ranks. Doubled ranks are integral, so the null distribution
// is a subset-sum count over 2^n equally likely sign patterns.
inline double wilcoxon_exact_p(std::span<const double> a, std::span<const double> b) {
    const auto sr = detail::signed_ranks(a, b);
    if (sr.ranks.empty()) return 1.0;
    std::vector<std::size_t> doubled;
    std::size_t total = 0;
    std::size_t observed = 0;
    for (std::size_t i = 0; i < sr.ranks.size(); ++i) {
        const auto r2 = static_cast<std::size_t>(std::llround(2.0 * sr.ranks[i]));
        doubled.push_back(r2);
        total += r2;
        if (sr.positive[i]) observed += r2;
    }
    std::vector<double> count(total + 1, 0.0);
    count[0] = 1.0;
    for (const std::size_t r2 : doubled)
        for (std::size_t s = total; s >= r2; --s) {
            count[s] += count[s - r2];
            if (s == r2) break;
        }
    const double patterns = std::ldexp(1.0, static_cast<int>(doubled.size()));
    double lower = 0.0, upper = 0.0;
    for (std::size_t s = 0; s <= total; ++s) {
        if (s <= observed) lower += count[s];
        if (s >= observed) upper += count[s];
    }
    return std::min(1.0, 2.0 * std::min(lower, upper) / patterns);
}

} // namespace pos2fs
