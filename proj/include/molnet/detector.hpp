#pragma once

// Threshold detector for the received molecule count, using the mean
// interference as a plug-in, and the ON/OFF regime boundary.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "molnet/channel.hpp"
#include "molnet/interference.hpp"
#include "molnet/numerics.hpp"

namespace molnet {

struct DetectorThresholds {
    std::vector<std::uint64_t> th;  // th[j] separates symbol j from j + 1
    double p_ll = 0.0;
    double mean_interference = 0.0;
    double noise_mean = 0.0;

    double offset() const { return mean_interference + noise_mean; }
};

/// Thresholds from the reference link probability, the constellation and
/// the total Poisson offset a = E{I} + lambda_0 T.
inline std::vector<std::uint64_t> threshold_values(double p_ll, const std::vector<double>& constellation, double a) {
    if (!(p_ll > 0.0))
        throw std::domain_error("compute_thresholds: p_LL must be positive");
    if (!(a >= 0.0))
        throw std::domain_error("compute_thresholds: interference plus noise must be non-negative");
    std::vector<std::uint64_t> th;
    th.reserve(constellation.size() > 0 ? constellation.size() - 1 : 0);
    for (std::size_t j = 0; j + 1 < constellation.size(); ++j) {
        const double lo = p_ll * constellation[j] + a;
        const double hi = p_ll * constellation[j + 1] + a;
        if (!(hi > lo))
            throw std::domain_error("compute_thresholds: degenerate constellation spacing");
        const double log_ratio = lo == 0.0 ? INFINITY : std::log(hi / lo);
        double q = p_ll * (constellation[j + 1] - constellation[j]) / log_ratio;
        const double nearest = std::round(q);
        if (std::abs(q - nearest) <= 1e-12 * std::max(1.0, std::abs(nearest)))
            q = nearest;
        const double c = std::max(std::ceil(q), 1.0);
        if (!(c < 9007199254740992.0))
            throw std::overflow_error("compute_thresholds: threshold exceeds integer range");
        th.push_back(static_cast<std::uint64_t>(c));
    }
    return th;
}

inline DetectorThresholds compute_thresholds(const SystemParams& params, const InterferenceStats& stats) {
    params.validate();
    DetectorThresholds out;
    out.p_ll = p_LL(params.y0_norm, params.channel);
    out.mean_interference = stats.e_total;
    out.noise_mean = params.noise_mean();
    out.th = threshold_values(out.p_ll, params.constellation, out.offset());
    return out;
}

/// Index of the decided symbol: the number of thresholds at or below y.
inline std::size_t decide(std::uint64_t y, const DetectorThresholds& th) {
    return static_cast<std::size_t>(std::upper_bound(th.th.begin(), th.th.end(), y) - th.th.begin());
}

/// Symbol value decided for count y.
inline double decide(std::uint64_t y, const DetectorThresholds& th, const std::vector<double>& constellation) {
    const std::size_t j = decide(y, th);
    if (j >= constellation.size())
        throw std::out_of_range("decide: constellation smaller than threshold list");
    return constellation[j];
}

/// xi_0 for an ON/OFF constellation {0, xi}: th_1 = 1 exactly when xi < xi_0.
/// Finite only for a = E{I} + lambda_0 T <= 1; a = 0 gives infinity.
inline double ook_regime_threshold_xi(double p_ll, double a) {
    if (!(p_ll > 0.0))
        throw std::domain_error("ook_regime_threshold_xi: p_LL must be positive");
    if (!(a >= 0.0))
        throw std::domain_error("ook_regime_threshold_xi: offset must be non-negative");
    if (a == 0.0)
        return INFINITY;
    if (a > 1.0)
        throw std::domain_error("regime condition undefined: interference plus noise mean exceeds 1");
    const double w = lambert_w(LambertBranch::minus_one, -a * std::exp(-a));
    return std::max(-a - w, 0.0) / p_ll;
}

inline double ook_regime_threshold_xi(const SystemParams& params, const InterferenceStats& stats) {
    params.validate();
    if (params.M() != 2 || params.constellation[0] != 0.0)
        throw std::invalid_argument("ook_regime_threshold_xi: requires M = 2 and x_1 = 0");
    return ook_regime_threshold_xi(p_LL(params.y0_norm, params.channel), stats.e_total + params.noise_mean());
}

}  // namespace molnet
