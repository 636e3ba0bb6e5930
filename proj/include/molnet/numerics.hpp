#pragma once

// Special functions, adaptive quadrature and the combinatorial enumerations
// used by the interference derivative expansions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace molnet {

/// Thrown when an iterative numerical method fails to reach its tolerance.
/// Carries the best estimate available at the point of failure.
class NumericalError : public std::runtime_error {
  public:
    NumericalError(const std::string& what, double partial)
        : std::runtime_error(what), partial_(partial) {}
    double partial() const noexcept { return partial_; }

  private:
    double partial_;
};

/// Thrown when a combinatorial expansion would exceed its term budget.
class BudgetExceeded : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct IntegrationSpec {
    double abs_tol = 1e-13;
    double rel_tol = 1e-10;
    std::size_t max_subdivisions = 4000;
    /// Fraction of the running total an outer tail increment may carry before
    /// the semi-infinite integrator stops doubling.
    double tail_cutoff_mass = 1e-13;

    void validate() const {
        if (!(abs_tol > 0.0) || !(rel_tol > 0.0))
            throw std::invalid_argument("IntegrationSpec: tolerances must be positive");
        if (max_subdivisions < 1)
            throw std::invalid_argument("IntegrationSpec: max_subdivisions must be >= 1");
        if (!(tail_cutoff_mass >= 0.0 && tail_cutoff_mass < 1e-8))
            throw std::invalid_argument("IntegrationSpec: tail_cutoff_mass must be < 1e-8");
    }
};

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

inline double erf(double x) { return std::erf(x); }

enum class LambertBranch { principal, minus_one };

/// Real Lambert W: returns w with w e^w = z on the requested branch.
///
/// Halley iteration seeded by the branch-point series near -1/e, the Taylor
/// series near 0 (principal) and the logarithmic asymptotics elsewhere.
inline double lambert_w(LambertBranch branch, double z) {
    constexpr double inv_e = 0.36787944117144232159552377016146;
    if (std::isnan(z))
        throw std::domain_error("lambert_w: NaN argument");
    // A few ulps below -1/e is treated as the branch point itself.
    const double slack = 4.0 * std::numeric_limits<double>::epsilon();
    if (z < -inv_e - slack)
        throw std::domain_error("lambert_w: argument below -1/e");
    if (branch == LambertBranch::minus_one && z >= 0.0)
        throw std::domain_error("lambert_w: W_{-1} requires -1/e <= z < 0");
    if (branch == LambertBranch::principal && std::isinf(z))
        return z;
    if (z <= -inv_e + slack)
        return -1.0;
    if (branch == LambertBranch::principal && z == 0.0)
        return 0.0;

    double w;
    const double p2 = 2.0 * (std::numbers::e * z + 1.0);
    const double p = std::sqrt(std::max(p2, 0.0));
    if (branch == LambertBranch::principal) {
        if (z < -0.25)
            w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
        else if (z <= 0.5)
            w = z * (1.0 - z + 1.5 * z * z);
        else if (z < 3.0)
            w = 0.75 * std::log1p(z);
        else {
            const double l1 = std::log(z);
            const double l2 = std::log(l1);
            w = l1 - l2 + l2 / l1;
        }
    } else {
        if (z < -0.25)
            w = -1.0 - p - p * p / 3.0 - 11.0 / 72.0 * p * p * p;
        else {
            const double l1 = std::log(-z);
            const double l2 = std::log(-l1);
            w = l1 - l2 + l2 / l1;
        }
    }

    for (int iter = 0; iter < 64; ++iter) {
        const double ew = std::exp(w);
        const double f = w * ew - z;
        const double wp1 = w + 1.0;
        if (wp1 == 0.0)
            break;
        const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if (denom == 0.0 || !std::isfinite(denom))
            break;
        const double step = f / denom;
        w -= step;
        if (std::abs(step) <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(w)))
            break;
    }
    return w;
}

/// ln of the Poisson probability mass at k.
inline double log_poisson_pmf(std::uint64_t k, double mean) {
    if (!(mean > 0.0))
        throw std::domain_error("log_poisson_pmf: mean must be positive");
    const auto kd = static_cast<double>(k);
    return (k == 0 ? 0.0 : kd * std::log(mean)) - mean - std::lgamma(kd + 1.0);
}

inline double factorial(unsigned n) {
    static const auto table = [] {
        std::array<double, 171> t{};
        t[0] = 1.0;
        for (std::size_t i = 1; i < t.size(); ++i)
            t[i] = t[i - 1] * static_cast<double>(i);
        return t;
    }();
    if (n >= table.size())
        return std::numeric_limits<double>::infinity();
    return table[n];
}

/// Binomial coefficient as a double (exact while the result fits in 53 bits).
inline double binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n)
        return 0.0;
    k = std::min(k, n - k);
    double r = 1.0;
    for (std::uint64_t i = 1; i <= k; ++i)
        r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r < 9007199254740992.0 ? std::round(r) : r;
}

/// Neumaier-compensated summation.
template <class Real = double>
class CompensatedSum {
  public:
    void add(Real x) {
        const Real t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            c_ += (sum_ - t) + x;
        else
            c_ += (x - t) + sum_;
        sum_ = t;
        abs_ += std::abs(x);
    }
    Real value() const { return sum_ + c_; }
    /// sum |x_i| / |sum x_i|; infinity for an exactly cancelling sum.
    Real condition() const {
        const Real v = std::abs(value());
        return v == Real(0) ? std::numeric_limits<Real>::infinity() : abs_ / v;
    }

  private:
    Real sum_{0};
    Real c_{0};
    Real abs_{0};
};

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::array<double, 8> kronrod_nodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kronrod_weights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
// Gauss weights for the odd-indexed Kronrod nodes 1, 3, 5, 7.
inline constexpr std::array<double, 4> gauss_weights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

// G7-K15 on [a, b] for a vector integrand; writes estimate and |K - G|.
template <class F>
void gk15(F& f, double a, double b, std::size_t dim, std::span<double> est,
          std::span<double> err, std::vector<double>& scratch) {
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    scratch.assign(dim, 0.0);
    std::vector<double> gauss(dim, 0.0);
    std::fill(est.begin(), est.end(), 0.0);
    std::span<double> fx(scratch);

    f(center, fx);
    for (std::size_t c = 0; c < dim; ++c) {
        est[c] = kronrod_weights[7] * fx[c];
        gauss[c] = gauss_weights[3] * fx[c];
    }
    for (std::size_t n = 0; n < 7; ++n) {
        const double dx = half * kronrod_nodes[n];
        for (double x : {center - dx, center + dx}) {
            f(x, fx);
            for (std::size_t c = 0; c < dim; ++c) {
                est[c] += kronrod_weights[n] * fx[c];
                if (n % 2 == 1)
                    gauss[c] += gauss_weights[n / 2] * fx[c];
            }
        }
    }
    for (std::size_t c = 0; c < dim; ++c) {
        est[c] *= half;
        err[c] = std::abs(est[c] - half * gauss[c]);
    }
}

}  // namespace detail

/// Globally adaptive G7-K15 integration of a vector-valued integrand.
///
/// `f(x, out)` fills `out` (size `dim`). Every component must satisfy
/// err_c <= max(abs_floor_c, rel_tol * |I_c|). `abs_floor`, when non-empty,
/// overrides `spec.abs_tol` per component.
template <class F>
std::vector<double> integrate_vector(F&& f, std::size_t dim, double a, double b,
                                     const IntegrationSpec& spec,
                                     std::span<const double> abs_floor = {}) {
    std::vector<double> total(dim, 0.0);
    if (a == b || dim == 0)
        return total;
    if (b < a) {
        auto r = integrate_vector(f, dim, b, a, spec, abs_floor);
        for (double& v : r)
            v = -v;
        return r;
    }

    struct Segment {
        double a, b;
        std::vector<double> est, err;
    };
    std::vector<double> scratch;
    std::vector<Segment> segs;
    segs.reserve(64);
    auto make = [&](double lo, double hi) {
        Segment s{lo, hi, std::vector<double>(dim), std::vector<double>(dim)};
        detail::gk15(f, lo, hi, dim, s.est, s.err, scratch);
        return s;
    };

    segs.push_back(make(a, b));
    std::vector<double> total_err(dim);
    total = segs[0].est;
    total_err = segs[0].err;
    std::vector<double> tol(dim);

    while (true) {
        bool done = true;
        for (std::size_t c = 0; c < dim; ++c) {
            const double floor_c = abs_floor.empty() ? spec.abs_tol : abs_floor[c];
            tol[c] = std::max(floor_c, spec.rel_tol * std::abs(total[c]));
            if (total_err[c] > tol[c])
                done = false;
        }
        if (done)
            return total;
        if (segs.size() >= spec.max_subdivisions)
            throw NumericalError("integrate: subdivision limit reached", total.empty() ? 0.0 : total[0]);

        std::size_t worst = 0;
        double worst_score = -1.0;
        for (std::size_t s = 0; s < segs.size(); ++s) {
            double score = 0.0;
            for (std::size_t c = 0; c < dim; ++c)
                score = std::max(score, segs[s].err[c] / tol[c]);
            if (score > worst_score) {
                worst_score = score;
                worst = s;
            }
        }
        const double lo = segs[worst].a;
        const double hi = segs[worst].b;
        const double mid = 0.5 * (lo + hi);
        if (!(mid > lo && mid < hi))
            throw NumericalError("integrate: interval cannot be bisected further", total[0]);
        Segment left = make(lo, mid);
        Segment right = make(mid, hi);
        for (std::size_t c = 0; c < dim; ++c) {
            total[c] += left.est[c] + right.est[c] - segs[worst].est[c];
            total_err[c] += left.err[c] + right.err[c] - segs[worst].err[c];
        }
        segs[worst] = std::move(left);
        segs.push_back(std::move(right));
    }
}

template <class F>
double integrate(F&& f, double a, double b, const IntegrationSpec& spec) {
    auto wrapped = [&f](double x, std::span<double> out) { out[0] = f(x); };
    return integrate_vector(wrapped, 1, a, b, spec)[0];
}

/// Vector integral over [a, inf). The first panel has width `scale`; each
/// further panel doubles in width. Stops after two consecutive panels whose
/// contribution is below max(abs_tol, tail_cutoff_mass * |running total|).
template <class F>
std::vector<double> integrate_vector_semi_infinite(F&& f, std::size_t dim, double a,
                                                   const IntegrationSpec& spec,
                                                   double scale = 1.0) {
    if (!(scale > 0.0))
        throw std::invalid_argument("integrate_semi_infinite: scale must be positive");
    std::vector<double> total = integrate_vector(f, dim, a, a + scale, spec);
    std::vector<double> floor(dim);
    double lo = a + scale;
    double width = scale;
    int quiet = 0;
    for (int panel = 0; panel < 80; ++panel) {
        width *= 2.0;
        for (std::size_t c = 0; c < dim; ++c)
            floor[c] = std::max(spec.abs_tol, spec.rel_tol * std::abs(total[c]));
        const auto inc = integrate_vector(f, dim, lo, lo + width, spec, floor);
        bool small = true;
        for (std::size_t c = 0; c < dim; ++c) {
            total[c] += inc[c];
            if (std::abs(inc[c]) > std::max(spec.abs_tol, spec.tail_cutoff_mass * std::abs(total[c])))
                small = false;
        }
        lo += width;
        quiet = small ? quiet + 1 : 0;
        if (quiet >= 2)
            return total;
    }
    throw NumericalError("integrate_semi_infinite: tail did not decay", total.empty() ? 0.0 : total[0]);
}

template <class F>
double integrate_semi_infinite(F&& f, double a, const IntegrationSpec& spec, double scale = 1.0) {
    auto wrapped = [&f](double x, std::span<double> out) { out[0] = f(x); };
    return integrate_vector_semi_infinite(wrapped, 1, a, spec, scale)[0];
}

// ---------------------------------------------------------------------------
// Combinatorics
// ---------------------------------------------------------------------------

/// An ordered tuple of non-negative integers with a fixed sum.
using Composition = std::vector<int>;
/// (m_1, ..., m_k) with sum l * m_l = k.
using PartitionMultiplicity = std::vector<int>;

/// Number of compositions of k into `parts` non-negative parts.
inline double composition_count(int k, int parts) {
    if (parts <= 0)
        return k == 0 ? 1.0 : 0.0;
    return binomial(static_cast<std::uint64_t>(k + parts - 1), static_cast<std::uint64_t>(parts - 1));
}

/// Calls `visit(std::span<const int>)` for every composition of k into
/// `parts` non-negative parts, in lexicographically decreasing order.
template <class Visit>
void for_each_composition(int k, int parts, Visit&& visit) {
    if (k < 0 || parts < 1)
        throw std::invalid_argument("compositions: need k >= 0 and parts >= 1");
    std::vector<int> c(static_cast<std::size_t>(parts), 0);
    auto rec = [&](auto& self, std::size_t pos, int remaining) -> void {
        if (pos + 1 == c.size()) {
            c[pos] = remaining;
            visit(std::span<const int>(c));
            return;
        }
        for (int v = remaining; v >= 0; --v) {
            c[pos] = v;
            self(self, pos + 1, remaining - v);
        }
    };
    rec(rec, 0, k);
}

inline std::vector<Composition> compositions(int k, int parts) {
    std::vector<Composition> out;
    for_each_composition(k, parts, [&](std::span<const int> c) { out.emplace_back(c.begin(), c.end()); });
    return out;
}

/// Calls `visit(std::span<const int>)` with the multiplicity vector of every
/// integer partition of k (index l-1 holds the count of part l).
template <class Visit>
void for_each_partition_multiplicity(int k, Visit&& visit) {
    if (k < 1)
        throw std::invalid_argument("partition_multiplicities: k must be >= 1");
    std::vector<int> mult(static_cast<std::size_t>(k), 0);
    auto rec = [&](auto& self, int remaining, int max_part) -> void {
        if (remaining == 0) {
            visit(std::span<const int>(mult));
            return;
        }
        for (int part = std::min(remaining, max_part); part >= 1; --part) {
            ++mult[static_cast<std::size_t>(part - 1)];
            self(self, remaining - part, part);
            --mult[static_cast<std::size_t>(part - 1)];
        }
    };
    rec(rec, k, k);
}

inline std::vector<PartitionMultiplicity> partition_multiplicities(int k) {
    std::vector<PartitionMultiplicity> out;
    for_each_partition_multiplicity(k, [&](std::span<const int> m) { out.emplace_back(m.begin(), m.end()); });
    return out;
}

}  // namespace molnet
