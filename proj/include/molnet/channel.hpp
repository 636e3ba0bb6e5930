#pragma once

// Diffusion observation probability for a point source and a passive
// spherical receiver. Units: micrometres and seconds throughout.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace molnet {

struct ChannelParams {
    double D = 40.0;   // um^2/s
    double mu = 0.1;   // 1/s
    double r0 = 5.0;   // um
    double T = 0.5;    // s

    void validate() const {
        if (!(D > 0.0))
            throw std::invalid_argument("ChannelParams: D must be positive");
        if (!(mu >= 0.0))
            throw std::invalid_argument("ChannelParams: mu must be non-negative");
        if (!(r0 > 0.0))
            throw std::invalid_argument("ChannelParams: r0 must be positive");
        if (!(T > 0.0))
            throw std::invalid_argument("ChannelParams: T must be positive");
    }
};

/// Probability that a molecule released at distance d from the receiver
/// centre is inside the receiver ball t seconds later.
inline double observation_probability_g(double t, double d, const ChannelParams& p) {
    if (!(t > 0.0))
        throw std::domain_error("observation_probability_g: t must be positive");
    if (!(d > 0.0))
        throw std::domain_error("observation_probability_g: d must be positive");

    const double decay = std::exp(-p.mu * t);
    if (decay == 0.0)
        return 0.0;
    const double sdt = std::sqrt(p.D * t);
    const double s = 2.0 * sdt;
    double inside;
    if (d < 1e-9) {
        // d -> 0 limit of the 1/d term.
        const double u = p.r0 / s;
        inside = std::erf(u) - 2.0 * u / std::sqrt(std::numbers::pi) * std::exp(-u * u);
    } else {
        // erf(a) + erf(b) with a = (r0 - d)/s, written with erfc so that the
        // far-field difference keeps its precision.
        const double half_erf = 0.5 * (std::erfc((d - p.r0) / s) - std::erfc((d + p.r0) / s));
        const double four_dt = 4.0 * p.D * t;
        const double tail = sdt / (std::sqrt(std::numbers::pi) * d) *
                            (std::exp(-(p.r0 + d) * (p.r0 + d) / four_dt) -
                             std::exp(-(p.r0 - d) * (p.r0 - d) / four_dt));
        inside = half_erf + tail;
    }
    // Rounding in the far field can leave a tiny negative residue.
    inside = std::clamp(inside, 0.0, 1.0);
    return decay * inside;
}

/// Observation at the end of slot L of a molecule released in slot i,
/// for 1 <= i <= L. Slot L itself gives g(T, d).
inline double slot_observation_probability(int i, int L, double d, const ChannelParams& p) {
    if (i < 1 || i > L)
        throw std::out_of_range("slot_observation_probability: need 1 <= i <= L");
    return observation_probability_g(static_cast<double>(L - i + 1) * p.T, d, p);
}

/// ISI observation probability for an earlier slot 1 <= i <= L-1.
inline double p_iL(int i, int L, double d, const ChannelParams& p) {
    if (i < 1 || i >= L)
        throw std::out_of_range("p_iL: need 1 <= i <= L-1");
    return observation_probability_g(static_cast<double>(L - i + 1) * p.T, d, p);
}

inline double p_LL(double d, const ChannelParams& p) { return observation_probability_g(p.T, d, p); }

}  // namespace molnet
