#pragma once

// Symbol error probability of the threshold detector: exact series in the
// derivatives of the interference Laplace transform, the closed-form upper
// bound, and the ON/OFF special case.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "molnet/channel.hpp"
#include "molnet/detector.hpp"
#include "molnet/interference.hpp"
#include "molnet/numerics.hpp"

namespace molnet {

enum class ErrorMethod { exact, upper_bound, ook_closed_form, monte_carlo };

inline std::string_view to_string(ErrorMethod m) {
    switch (m) {
    case ErrorMethod::exact:
        return "exact";
    case ErrorMethod::upper_bound:
        return "upper";
    case ErrorMethod::ook_closed_form:
        return "ook";
    case ErrorMethod::monte_carlo:
        return "mc";
    }
    return "unknown";
}

struct ErrorReport {
    std::vector<double> per_symbol;
    double total = 0.0;
    ErrorMethod method = ErrorMethod::exact;
    bool derivative_budget_hit = false;
};

inline ErrorReport make_report(std::vector<double> per_symbol, ErrorMethod method, bool budget_hit = false) {
    ErrorReport r;
    r.per_symbol = std::move(per_symbol);
    double s = 0.0;
    for (double p : r.per_symbol)
        s += p;
    r.total = s / static_cast<double>(r.per_symbol.size());
    r.method = method;
    r.derivative_budget_hit = budget_hit;
    return r;
}

struct AlzerConstants {
    std::vector<double> eta;  // eta[j] = (th_j!)^{-1/th_j}
};

inline double alzer_eta(std::uint64_t th) {
    if (th == 0)
        throw std::domain_error("alzer_eta: threshold must be >= 1");
    const double n = static_cast<double>(th);
    return std::exp(-std::lgamma(n + 1.0) / n);
}

inline AlzerConstants alzer_constants(const DetectorThresholds& th) {
    AlzerConstants a;
    a.eta.reserve(th.th.size());
    for (auto t : th.th)
        a.eta.push_back(alzer_eta(t));
    return a;
}

/// Model, mean interference and thresholds for one parameter set.
class ErrorAnalysis {
  public:
    explicit ErrorAnalysis(SystemParams params, IntegrationSpec spec = default_interference_spec(),
                           DerivativeBudget budget = {})
        : model_(std::move(params), spec, budget), stats_(model_.expected()),
          thresholds_(compute_thresholds(model_.params(), stats_)) {}

    const SystemParams& params() const noexcept { return model_.params(); }
    const InterferenceModel& model() const noexcept { return model_; }
    const InterferenceStats& stats() const noexcept { return stats_; }
    const DetectorThresholds& thresholds() const noexcept { return thresholds_; }

    /// Poisson mean of the count without interference when symbol j is sent.
    double signal_mean(std::size_t j) const {
        return thresholds_.p_ll * params().constellation.at(j) + params().noise_mean();
    }

  private:
    InterferenceModel model_;
    InterferenceStats stats_;
    DetectorThresholds thresholds_;
};

namespace detail {

// P(Y = k) for k = 0..K where Y | I ~ Poisson(c + I), assembled from the
// Poisson weights of c and the scaled derivatives of both transforms.
inline std::vector<double> count_pmf(double c, const InterferenceModel& model, std::uint64_t K) {
    if (K > static_cast<std::uint64_t>(model.budget().max_order))
        throw BudgetExceeded("derivative order " + std::to_string(K) + " exceeds budget");
    const int k_max = static_cast<int>(K);
    const auto intra = model.lt_intra_derivatives(k_max);
    const auto inter = model.lt_inter_derivatives(k_max);
    std::vector<double> a(intra.size()), b(inter.size()), w(intra.size());
    for (int n = 0; n <= k_max; ++n) {
        const double scale = (n % 2 == 0 ? 1.0 : -1.0) / factorial(static_cast<unsigned>(n));
        a[static_cast<std::size_t>(n)] = scale * intra[static_cast<std::size_t>(n)];
        b[static_cast<std::size_t>(n)] = scale * inter[static_cast<std::size_t>(n)];
        w[static_cast<std::size_t>(n)] =
            c > 0.0 ? std::exp(log_poisson_pmf(static_cast<std::uint64_t>(n), c)) : (n == 0 ? 1.0 : 0.0);
    }
    std::vector<double> pmf(intra.size());
    for (int k = 0; k <= k_max; ++k) {
        double term = 0.0;
        for_each_composition(k, 3, [&](std::span<const int> t) {
            term += w[static_cast<std::size_t>(t[0])] * a[static_cast<std::size_t>(t[1])] *
                    b[static_cast<std::size_t>(t[2])];
        });
        pmf[static_cast<std::size_t>(k)] = term;
    }
    return pmf;
}

inline double checked_probability(double raw, std::string_view what) {
    if (!(raw >= -1e-6 && raw <= 1.0 + 1e-6))
        throw NumericalError(std::string(what) + ": probability out of range (" + std::to_string(raw) + ")", raw);
    return std::clamp(raw, 0.0, 1.0);
}

}  // namespace detail

/// P(E | symbol j sent), j zero-based. The top symbol uses the complement
/// of the finite lower sum.
inline double conditional_error_exact(std::size_t j, const ErrorAnalysis& an) {
    const auto& th = an.thresholds().th;
    const std::size_t M = static_cast<std::size_t>(an.params().M());
    if (j >= M)
        throw std::out_of_range("conditional_error_exact: symbol index out of range");
    const std::uint64_t lo = j == 0 ? 0 : th[j - 1];
    const double c = an.signal_mean(j);
    if (j + 1 == M) {
        if (lo == 0)
            return 0.0;
        const auto pmf = detail::count_pmf(c, an.model(), lo - 1);
        CompensatedSum<double> s;
        for (double v : pmf)
            s.add(v);
        return detail::checked_probability(s.value(), "conditional_error_exact");
    }
    const std::uint64_t hi = th[j];
    const auto pmf = detail::count_pmf(c, an.model(), hi - 1);
    CompensatedSum<double> s;
    s.add(1.0);
    for (std::uint64_t k = lo; k < hi; ++k)
        s.add(-pmf[static_cast<std::size_t>(k)]);
    return detail::checked_probability(s.value(), "conditional_error_exact");
}

namespace detail {

// sum_{k=1}^{n} (-1)^{k+1} C(n,k) e^{-eta c k} L(eta k)
inline double alzer_sum(std::uint64_t n, double eta, double c, std::span<const double> lt) {
    CompensatedSum<double> s;
    for (std::uint64_t k = 1; k <= n; ++k) {
        const double sign = k % 2 == 1 ? 1.0 : -1.0;
        s.add(sign * binomial(n, k) * std::exp(-eta * c * static_cast<double>(k)) * lt[k - 1]);
    }
    if (s.condition() <= 1e4)
        return s.value();
    CompensatedSum<long double> ls;
    for (std::uint64_t k = 1; k <= n; ++k) {
        const long double sign = k % 2 == 1 ? 1.0L : -1.0L;
        long double binom = 1.0L;
        for (std::uint64_t i = 1; i <= std::min(k, n - k); ++i)
            binom = binom * static_cast<long double>(n - std::min(k, n - k) + i) / static_cast<long double>(i);
        ls.add(sign * binom * std::exp(-static_cast<long double>(eta) * c * static_cast<long double>(k)) *
               static_cast<long double>(lt[k - 1]));
    }
    return static_cast<double>(ls.value());
}

}  // namespace detail

inline ErrorReport error_prob_upper(const ErrorAnalysis& an) {
    const auto& th = an.thresholds().th;
    const auto eta = alzer_constants(an.thresholds()).eta;
    const std::size_t M = static_cast<std::size_t>(an.params().M());

    // L(eta_j k) for k = 1..th_j, per threshold.
    std::vector<std::vector<double>> lt(th.size());
    for (std::size_t j = 0; j < th.size(); ++j) {
        std::vector<double> s(th[j]);
        for (std::uint64_t k = 1; k <= th[j]; ++k)
            s[k - 1] = eta[j] * static_cast<double>(k);
        lt[j] = an.model().lt_total(std::span<const double>(s));
    }
    std::vector<double> per(M);
    for (std::size_t j = 0; j < M; ++j) {
        const double c = an.signal_mean(j);
        double v;
        if (j + 1 == M) {
            v = detail::alzer_sum(th[j - 1], eta[j - 1], c, lt[j - 1]);
        } else {
            v = 1.0 - detail::alzer_sum(th[j], eta[j], c, lt[j]);
            if (j > 0)
                v += detail::alzer_sum(th[j - 1], eta[j - 1], c, lt[j - 1]);
        }
        per[j] = std::clamp(v, 0.0, 1.0);
    }
    return make_report(std::move(per), ErrorMethod::upper_bound);
}

/// Exact error probability; degrades to the upper bound, flagged, when the
/// needed derivative order exceeds the budget.
inline ErrorReport error_prob_exact(const ErrorAnalysis& an) {
    const std::size_t M = static_cast<std::size_t>(an.params().M());
    std::vector<double> per(M);
    try {
        for (std::size_t j = 0; j < M; ++j)
            per[j] = conditional_error_exact(j, an);
    } catch (const BudgetExceeded&) {
        auto r = error_prob_upper(an);
        r.derivative_budget_hit = true;
        return r;
    }
    return make_report(std::move(per), ErrorMethod::exact);
}

/// ON/OFF closed form; refuses unless M = 2, x_1 = 0 and th_1 = 1.
inline ErrorReport error_prob_ook(const ErrorAnalysis& an) {
    const auto& p = an.params();
    if (p.M() != 2 || p.constellation[0] != 0.0)
        throw std::invalid_argument("error_prob_ook: requires M = 2 and x_1 = 0");
    if (an.thresholds().th[0] != 1)
        throw std::domain_error("error_prob_ook: regime violated, th_1 = " + std::to_string(an.thresholds().th[0]));
    const double lt1 = an.model().lt_intra_derivatives(0)[0] * an.model().lt_inter_derivatives(0)[0];
    const double noise = p.noise_mean();
    const double xi = p.constellation[1];
    std::vector<double> per{
        std::clamp(1.0 - std::exp(-noise) * lt1, 0.0, 1.0),
        std::clamp(std::exp(-(an.thresholds().p_ll * xi + noise)) * lt1, 0.0, 1.0),
    };
    return make_report(std::move(per), ErrorMethod::ook_closed_form);
}

inline ErrorReport error_prob_exact(const SystemParams& p, const IntegrationSpec& spec = default_interference_spec()) {
    return error_prob_exact(ErrorAnalysis(p, spec));
}
inline ErrorReport error_prob_upper(const SystemParams& p, const IntegrationSpec& spec = default_interference_spec()) {
    return error_prob_upper(ErrorAnalysis(p, spec));
}
inline ErrorReport error_prob_ook(const SystemParams& p, const IntegrationSpec& spec = default_interference_spec()) {
    return error_prob_ook(ErrorAnalysis(p, spec));
}

}  // namespace molnet
