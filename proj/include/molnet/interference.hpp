#pragma once

// Interference at the reference receiver: mean intra/inter-cluster molecule
// counts, the Laplace transform E[exp(-s I)] and its derivatives in s.
//
// Every cluster contributes i.i.d. transmitters whose distances to the
// origin follow the Gaussian-cluster law conditioned on lying outside the
// reference receiver ball. The reference cluster contributes slots
// 1..L-1; every other cluster (parents beyond 2 r0) contributes slots 1..L.

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "molnet/channel.hpp"
#include "molnet/geometry.hpp"
#include "molnet/numerics.hpp"

namespace molnet {

struct SystemParams {
    double lambda_p = 2e-6;  // parents per um^3
    double sigma = 20.0;     // um
    ChannelParams channel{};
    int L = 5;
    std::vector<double> constellation{0.0, 60.0};
    double lambda_0 = 1.0;   // noise molecules per second
    double y0_norm = 10.0;   // um

    double r0() const { return channel.r0; }
    int M() const { return static_cast<int>(constellation.size()); }
    double noise_mean() const { return lambda_0 * channel.T; }
    double symbol_sum() const {
        double s = 0.0;
        for (double x : constellation)
            s += x;
        return s;
    }

    void validate() const {
        channel.validate();
        if (!(lambda_p >= 0.0))
            throw std::invalid_argument("SystemParams: lambda_p must be non-negative");
        if (!(sigma > 0.0))
            throw std::invalid_argument("SystemParams: sigma must be positive");
        if (L < 1)
            throw std::invalid_argument("SystemParams: L must be >= 1");
        if (M() < 2)
            throw std::invalid_argument("SystemParams: constellation needs at least two points");
        for (std::size_t j = 0; j < constellation.size(); ++j) {
            if (!(constellation[j] >= 0.0))
                throw std::invalid_argument("SystemParams: molecule counts must be non-negative");
            if (j > 0 && !(constellation[j] > constellation[j - 1]))
                throw std::invalid_argument("SystemParams: constellation must be strictly increasing");
        }
        if (!(lambda_0 >= 0.0))
            throw std::invalid_argument("SystemParams: lambda_0 must be non-negative");
        if (!(y0_norm > r0()))
            throw std::invalid_argument("SystemParams: y0_norm must exceed r0");
    }
};

struct InterferenceStats {
    double e_intra = 0.0;
    double e_inter = 0.0;
    double e_total = 0.0;

    static InterferenceStats from_parts(double intra, double inter) { return {intra, inter, intra + inter}; }
};

/// Caps on the combinatorial derivative expansions.
struct DerivativeBudget {
    int max_order = 30;
    double max_terms = 1e7;
};

/// Tolerances used by the interference integrals unless overridden.
inline IntegrationSpec default_interference_spec() {
    IntegrationSpec spec;
    spec.abs_tol = 1e-15;
    spec.rel_tol = 1e-11;
    spec.tail_cutoff_mass = 1e-14;
    return spec;
}

namespace detail {

/// k-th derivatives (k = 0..K) of a product via repeated binomial
/// convolution. factors[i][l] is the l-th derivative of factor i.
inline std::vector<double> product_derivatives(const std::vector<std::vector<double>>& factors, int K) {
    std::vector<double> acc(static_cast<std::size_t>(K) + 1, 0.0);
    acc[0] = 1.0;
    std::vector<double> next(acc.size());
    for (const auto& f : factors) {
        for (int n = 0; n <= K; ++n) {
            double sum = 0.0;
            for (int a = 0; a <= n; ++a)
                sum += binomial(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(a)) * acc[static_cast<std::size_t>(a)] *
                       f[static_cast<std::size_t>(n - a)];
            next[static_cast<std::size_t>(n)] = sum;
        }
        acc.swap(next);
    }
    return acc;
}

/// Same quantity written as the multinomial sum over all compositions of k
/// into one part per factor.
inline double product_derivative_by_compositions(const std::vector<std::vector<double>>& factors, int k) {
    if (factors.empty())
        return k == 0 ? 1.0 : 0.0;
    double total = 0.0;
    for_each_composition(k, static_cast<int>(factors.size()), [&](std::span<const int> c) {
        double term = factorial(static_cast<unsigned>(k));
        for (std::size_t i = 0; i < c.size(); ++i)
            term *= factors[i][static_cast<std::size_t>(c[i])] / factorial(static_cast<unsigned>(c[i]));
        total += term;
    });
    return total;
}

/// Derivatives 0..K of exp(h(s)) from h(s) and h^{(l)}(s), l = 1..K, by
/// summing over integer partitions of each order.
inline std::vector<double> exp_derivatives(double h0, std::span<const double> h_derivs, int K) {
    std::vector<double> out(static_cast<std::size_t>(K) + 1, 0.0);
    const double base = std::exp(h0);
    out[0] = base;
    for (int k = 1; k <= K; ++k) {
        double sum = 0.0;
        for_each_partition_multiplicity(k, [&](std::span<const int> m) {
            double term = factorial(static_cast<unsigned>(k));
            for (std::size_t l = 0; l < m.size(); ++l) {
                if (m[l] == 0)
                    continue;
                const double lf = factorial(static_cast<unsigned>(l + 1));
                term *= std::pow(h_derivs[l] / lf, m[l]) / factorial(static_cast<unsigned>(m[l]));
            }
            sum += term;
        });
        out[static_cast<std::size_t>(k)] = base * sum;
    }
    return out;
}

}  // namespace detail

class InterferenceModel {
  public:
    explicit InterferenceModel(SystemParams params, IntegrationSpec spec = default_interference_spec(),
                               DerivativeBudget budget = {})
        : params_(std::move(params)), spec_(spec), budget_(budget),
          origin_(0.0, params_.sigma, params_.r0(), spec_) {
        params_.validate();
        spec_.validate();
    }

    InterferenceModel(const InterferenceModel& other)
        : params_(other.params_), spec_(other.spec_), budget_(other.budget_), origin_(other.origin_) {}

    const SystemParams& params() const noexcept { return params_; }
    const IntegrationSpec& spec() const noexcept { return spec_; }
    const DerivativeBudget& budget() const noexcept { return budget_; }

    /// Mass of the origin-cluster distance law outside the receiver ball.
    double origin_normalizer() const noexcept { return origin_.normalizer_beyond_r0(); }

    double expected_intra() const {
        if (params_.L == 1)
            return 0.0;
        const int L = params_.L;
        auto integrand = [&](double y) {
            double sum = 0.0;
            for (int i = 1; i <= L - 1; ++i)
                sum += p_iL(i, L, y, params_.channel);
            return origin_.pdf(y) * sum;
        };
        const double inner = integrate_semi_infinite(integrand, params_.r0(), spec_, inner_scale(0.0));
        return params_.symbol_sum() / (params_.M() * origin_normalizer()) * inner;
    }

    double expected_inter() const {
        if (params_.lambda_p == 0.0)
            return 0.0;
        const int L = params_.L;
        auto outer = [&](double x) {
            const DistanceDistribution dist(x, params_.sigma, 0.0);
            auto inner = [&](double y, std::span<double> out) {
                const double f = dist.pdf(y);
                double sum = 0.0;
                for (int i = 1; i <= L; ++i)
                    sum += slot_observation_probability(i, L, y, params_.channel);
                out[0] = f;
                out[1] = f * sum;
            };
            const auto v = integrate_vector_semi_infinite(inner, 2, params_.r0(), spec_, inner_scale(x));
            return x * x * v[1] / v[0];
        };
        const double outer_int = integrate_semi_infinite(outer, 2.0 * params_.r0(), spec_, outer_scale());
        return 4.0 * std::numbers::pi * params_.lambda_p * params_.symbol_sum() / params_.M() * outer_int;
    }

    InterferenceStats expected() const { return InterferenceStats::from_parts(expected_intra(), expected_inter()); }

    double lt_intra(double s) const { return lt_intra(std::span<const double>(&s, 1))[0]; }
    double lt_inter(double s) const { return lt_inter(std::span<const double>(&s, 1))[0]; }
    double lt_total(double s) const { return lt_intra(s) * lt_inter(s); }

    std::vector<double> lt_intra(std::span<const double> s) const {
        check_s(s);
        std::vector<double> out(s.size(), 1.0);
        const int slots = params_.L - 1;
        if (slots == 0)
            return out;
        const auto mom = slot_moments(0.0, slots, s, 0);
        const double norm = params_.M() * mom.normalizer();
        for (std::size_t a = 0; a < s.size(); ++a)
            for (int i = 0; i < slots; ++i)
                out[a] *= 1.0 - mom.at(i, a, 0) / norm;
        return out;
    }

    std::vector<double> lt_inter(std::span<const double> s) const {
        check_s(s);
        std::vector<double> out(s.size(), 1.0);
        if (params_.lambda_p == 0.0)
            return out;
        const int slots = params_.L;
        const std::size_t ns = s.size();
        auto outer = [&](double x, std::span<double> res) {
            const auto mom = slot_moments(x, slots, s, 0);
            const double norm = params_.M() * mom.normalizer();
            for (std::size_t a = 0; a < ns; ++a) {
                double log_prod = 0.0;
                for (int i = 0; i < slots; ++i)
                    log_prod += std::log1p(-mom.at(i, a, 0) / norm);
                res[a] = x * x * -std::expm1(log_prod);
            }
        };
        const auto v = integrate_vector_semi_infinite(outer, ns, 2.0 * params_.r0(), spec_, outer_scale());
        for (std::size_t a = 0; a < ns; ++a)
            out[a] = std::exp(-4.0 * std::numbers::pi * params_.lambda_p * v[a]);
        return out;
    }

    std::vector<double> lt_total(std::span<const double> s) const {
        auto intra = lt_intra(s);
        const auto inter = lt_inter(s);
        for (std::size_t a = 0; a < intra.size(); ++a)
            intra[a] *= inter[a];
        return intra;
    }

    /// Derivatives d^k/ds^k of the intra-cluster transform at s, k = 0..K,
    /// as the multinomial sum over compositions of k into L-1 slot orders.
    std::vector<double> lt_intra_derivatives(int K, double s = 1.0) const {
        check_order(K);
        check_s(std::span<const double>(&s, 1));
        const int slots = params_.L - 1;
        for (int k = 0; k <= K; ++k)
            if (composition_count(k, slots) > budget_.max_terms)
                throw BudgetExceeded("lt_intra_derivatives: composition count exceeds budget");
        {
            std::lock_guard lock(cache_mutex_);
            auto it = intra_cache_.find(s);
            if (it != intra_cache_.end() && static_cast<int>(it->second.size()) > K)
                return {it->second.begin(), it->second.begin() + K + 1};
        }
        std::vector<double> out(static_cast<std::size_t>(K) + 1, 0.0);
        if (slots == 0) {
            out[0] = 1.0;
        } else {
            const auto mom = slot_moments(0.0, slots, std::span<const double>(&s, 1), K);
            const auto factors = normalized_factors(mom, slots, 0, K);
            for (int k = 0; k <= K; ++k)
                out[static_cast<std::size_t>(k)] = detail::product_derivative_by_compositions(factors, k);
        }
        std::lock_guard lock(cache_mutex_);
        auto& slot = intra_cache_[s];
        if (slot.size() < out.size())
            slot = out;
        return {slot.begin(), slot.begin() + K + 1};
    }

    /// Derivatives d^k/ds^k of the inter-cluster transform at s, k = 0..K.
    /// exp(h(s)) is differentiated over integer partitions; the derivatives
    /// of h come from one outer pass in which each parent distance carries
    /// the Leibniz expansion of its L-slot product.
    std::vector<double> lt_inter_derivatives(int K, double s = 1.0) const {
        check_order(K);
        check_s(std::span<const double>(&s, 1));
        const int slots = params_.L;
        if (composition_count(K, slots) > budget_.max_terms)
            throw BudgetExceeded("lt_inter_derivatives: slot-order tuple count exceeds budget");
        {
            std::lock_guard lock(cache_mutex_);
            auto it = inter_cache_.find(s);
            if (it != inter_cache_.end() && static_cast<int>(it->second.size()) > K)
                return {it->second.begin(), it->second.begin() + K + 1};
        }
        std::vector<double> out(static_cast<std::size_t>(K) + 1, 0.0);
        if (params_.lambda_p == 0.0) {
            out[0] = 1.0;
        } else {
            const std::size_t dim = static_cast<std::size_t>(K) + 1;
            auto outer = [&](double x, std::span<double> res) {
                const auto mom = slot_moments(x, slots, std::span<const double>(&s, 1), K);
                const auto factors = normalized_factors(mom, slots, 0, K);
                double log_prod = 0.0;
                const double norm = params_.M() * mom.normalizer();
                for (int i = 0; i < slots; ++i)
                    log_prod += std::log1p(-mom.at(i, 0, 0) / norm);
                res[0] = x * x * -std::expm1(log_prod);
                if (K > 0) {
                    const auto prod = detail::product_derivatives(factors, K);
                    for (std::size_t l = 1; l < dim; ++l)
                        res[l] = x * x * prod[l];
                }
            };
            const auto v = integrate_vector_semi_infinite(outer, dim, 2.0 * params_.r0(), spec_, outer_scale());
            const double c = 4.0 * std::numbers::pi * params_.lambda_p;
            std::vector<double> h(dim - 1);
            for (std::size_t l = 1; l < dim; ++l)
                h[l - 1] = c * v[l];
            out = detail::exp_derivatives(-c * v[0], h, K);
        }
        std::lock_guard lock(cache_mutex_);
        auto& slot = inter_cache_[s];
        if (slot.size() < out.size())
            slot = out;
        return {slot.begin(), slot.begin() + K + 1};
    }

    std::vector<double> lt_total_derivatives(int K, double s = 1.0) const {
        const auto a = lt_intra_derivatives(K, s);
        const auto b = lt_inter_derivatives(K, s);
        return detail::product_derivatives({a, b}, K);
    }

  private:
    // Flat per-slot integrals for one parent distance:
    //   [0]                      mass of the distance law beyond r0
    //   at(i, a, 0)              sum_j int (1 - e^{-s_a x_j p_i}) f dy
    //   at(i, a, l), l >= 1      sum_j int (x_j p_i)^l e^{-s_a x_j p_i} f dy
    struct SlotMoments {
        std::vector<double> data;
        std::size_t n_s = 1;
        int orders = 1;
        double normalizer() const { return data[0]; }
        double at(int slot, std::size_t a, int l) const {
            return data[1 + (static_cast<std::size_t>(slot) * n_s + a) * static_cast<std::size_t>(orders) +
                        static_cast<std::size_t>(l)];
        }
    };

    SlotMoments slot_moments(double parent_distance, int slots, std::span<const double> s, int K) const {
        const int L = params_.L;
        const auto& xs = params_.constellation;
        const std::size_t ns = s.size();
        const int orders = K + 1;
        const std::size_t dim = 1 + static_cast<std::size_t>(slots) * ns * static_cast<std::size_t>(orders);
        const DistanceDistribution dist =
            parent_distance == 0.0 ? origin_ : DistanceDistribution(parent_distance, params_.sigma, 0.0);
        std::vector<double> p(static_cast<std::size_t>(slots));
        auto integrand = [&](double y, std::span<double> out) {
            const double f = dist.pdf(y);
            out[0] = f;
            for (int i = 0; i < slots; ++i)
                p[static_cast<std::size_t>(i)] = slot_observation_probability(i + 1, L, y, params_.channel);
            std::size_t idx = 1;
            for (int i = 0; i < slots; ++i) {
                const double pi = p[static_cast<std::size_t>(i)];
                for (std::size_t a = 0; a < ns; ++a) {
                    double* cell = &out[idx];
                    for (int l = 0; l < orders; ++l)
                        cell[l] = 0.0;
                    for (double x : xs) {
                        const double mean = x * pi;
                        cell[0] += -std::expm1(-s[a] * mean);
                        if (orders > 1) {
                            const double e = std::exp(-s[a] * mean);
                            double pw = 1.0;
                            for (int l = 1; l < orders; ++l) {
                                pw *= mean;
                                cell[l] += pw * e;
                            }
                        }
                    }
                    for (int l = 0; l < orders; ++l)
                        cell[l] *= f;
                    idx += static_cast<std::size_t>(orders);
                }
            }
        };
        SlotMoments m;
        m.n_s = ns;
        m.orders = orders;
        m.data = integrate_vector_semi_infinite(integrand, dim, params_.r0(), spec_, inner_scale(parent_distance));
        return m;
    }

    // Per-slot factor derivatives normalised by M times the mass beyond r0:
    // entry 0 is the factor itself, entry l carries the sign (-1)^l.
    std::vector<std::vector<double>> normalized_factors(const SlotMoments& mom, int slots, std::size_t a, int K) const {
        const double norm = params_.M() * mom.normalizer();
        std::vector<std::vector<double>> factors(static_cast<std::size_t>(slots),
                                                 std::vector<double>(static_cast<std::size_t>(K) + 1));
        for (int i = 0; i < slots; ++i) {
            auto& f = factors[static_cast<std::size_t>(i)];
            f[0] = 1.0 - mom.at(i, a, 0) / norm;
            for (int l = 1; l <= K; ++l)
                f[static_cast<std::size_t>(l)] = (l % 2 == 0 ? 1.0 : -1.0) * mom.at(i, a, l) / norm;
        }
        return factors;
    }

    double inner_scale(double parent_distance) const {
        return std::max(parent_distance - params_.r0(), 0.0) + 10.0 * params_.sigma;
    }
    double outer_scale() const { return 5.0 * params_.sigma; }

    void check_order(int K) const {
        if (K < 0)
            throw std::invalid_argument("derivative order must be non-negative");
        if (K > budget_.max_order)
            throw BudgetExceeded("derivative order exceeds budget");
    }
    static void check_s(std::span<const double> s) {
        for (double v : s)
            if (!(v >= 0.0))
                throw std::domain_error("Laplace transform argument must be non-negative");
    }

    SystemParams params_;
    IntegrationSpec spec_;
    DerivativeBudget budget_;
    DistanceDistribution origin_;
    mutable std::mutex cache_mutex_;
    mutable std::map<double, std::vector<double>> intra_cache_;
    mutable std::map<double, std::vector<double>> inter_cache_;
};

// Free-function surface; each call builds a fresh model.

inline double expected_intra(const SystemParams& p, const IntegrationSpec& spec = default_interference_spec()) {
    return InterferenceModel(p, spec).expected_intra();
}
inline double expected_inter(const SystemParams& p, const IntegrationSpec& spec = default_interference_spec()) {
    return InterferenceModel(p, spec).expected_inter();
}
inline double lt_intra(double s, const SystemParams& p, const IntegrationSpec& spec = default_interference_spec()) {
    return InterferenceModel(p, spec).lt_intra(s);
}
inline double lt_inter(double s, const SystemParams& p, const IntegrationSpec& spec = default_interference_spec()) {
    return InterferenceModel(p, spec).lt_inter(s);
}
inline double lt_total(double s, const SystemParams& p, const IntegrationSpec& spec = default_interference_spec()) {
    return InterferenceModel(p, spec).lt_total(s);
}
inline double lt_intra_derivatives(int k, const SystemParams& p, const IntegrationSpec& spec = default_interference_spec()) {
    return InterferenceModel(p, spec).lt_intra_derivatives(k).back();
}
inline double lt_inter_derivatives(int k, const SystemParams& p, const IntegrationSpec& spec = default_interference_spec()) {
    return InterferenceModel(p, spec).lt_inter_derivatives(k).back();
}

}  // namespace molnet
