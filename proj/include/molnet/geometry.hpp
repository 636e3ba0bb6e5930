#pragma once

// Distances from the origin to offspring of a cluster whose parent sits at
// distance ||x||: the general surface-integral form for any isotropic
// offspring density, and the closed forms for Gaussian (Thomas) clusters.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>
#include <utility>

#include "molnet/numerics.hpp"

namespace molnet {

using Vec3 = std::array<double, 3>;

inline double norm(const Vec3& v) { return std::hypot(v[0], v[1], v[2]); }

struct OffspringDensity {
    std::function<double(const Vec3&)> evaluate;  // um^-3
    bool isotropic = false;
};

/// Isotropic Gaussian offspring displacement with per-axis deviation sigma.
inline OffspringDensity gaussian_offspring(double sigma) {
    if (!(sigma > 0.0))
        throw std::invalid_argument("gaussian_offspring: sigma must be positive");
    const double norm_const = 1.0 / (std::pow(2.0 * std::numbers::pi, 1.5) * sigma * sigma * sigma);
    const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
    return {[=](const Vec3& v) { return norm_const * std::exp(-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) * inv_two_var); },
            true};
}

/// Density of ||x + Y|| at y for a parent at `parent`, integrating f_Y over
/// the sphere of radius y. The z2 coordinate is parametrised as
/// sqrt(y^2 - z1^2) sin(theta), which turns the 1/sqrt(y^2 - z1^2 - z2^2)
/// edge weight into the constant measure d(theta).
inline double distance_pdf_general(double y, const Vec3& parent, const OffspringDensity& f_Y,
                                   const IntegrationSpec& spec) {
    if (!(y >= 0.0))
        throw std::domain_error("distance_pdf_general: y must be non-negative");
    if (y == 0.0)
        return 0.0;
    const double half_pi = 0.5 * std::numbers::pi;
    auto over_z1 = [&](double z1) {
        const double rho = std::sqrt(std::max(y * y - z1 * z1, 0.0));
        auto over_theta = [&](double theta) {
            const double z2 = rho * std::sin(theta);
            const double z3 = rho * std::cos(theta);
            return y * (f_Y.evaluate({z1 - parent[0], z2 - parent[1], z3 - parent[2]}) +
                        f_Y.evaluate({z1 - parent[0], z2 - parent[1], -z3 - parent[2]}));
        };
        return integrate(over_theta, -half_pi, half_pi, spec);
    };
    return integrate(over_z1, -y, y, spec);
}

/// Parent on the first axis at distance `parent_distance`; requires an
/// isotropic offspring density so that only the norm matters.
inline double distance_pdf_general(double y, double parent_distance, const OffspringDensity& f_Y,
                                   const IntegrationSpec& spec) {
    if (!f_Y.isotropic)
        throw std::invalid_argument("distance_pdf_general: offspring density must be isotropic");
    return distance_pdf_general(y, Vec3{parent_distance, 0.0, 0.0}, f_Y, spec);
}

/// Gaussian-cluster closed form, ||x|| > 0.
inline double distance_pdf_tcp(double y, double parent_distance, double sigma) {
    if (!(y >= 0.0))
        throw std::domain_error("distance_pdf_tcp: y must be non-negative");
    if (!(parent_distance > 0.0))
        throw std::domain_error("distance_pdf_tcp: parent distance must be positive (use the origin form)");
    if (!(sigma > 0.0))
        throw std::domain_error("distance_pdf_tcp: sigma must be positive");
    const double var = sigma * sigma;
    const double diff = y - parent_distance;
    // [e^{-(y-x)^2/2s^2} - e^{-(y+x)^2/2s^2}] = e^{-(y-x)^2/2s^2} (1 - e^{-2xy/s^2})
    const double bracket = std::exp(-diff * diff / (2.0 * var)) * -std::expm1(-2.0 * y * parent_distance / var);
    return y / (std::sqrt(2.0 * std::numbers::pi) * sigma * parent_distance) * bracket;
}

/// Maxwell form for offspring of the cluster centred at the origin.
inline double distance_pdf_origin_tcp(double y, double sigma) {
    if (!(y >= 0.0))
        throw std::domain_error("distance_pdf_origin_tcp: y must be non-negative");
    if (!(sigma > 0.0))
        throw std::domain_error("distance_pdf_origin_tcp: sigma must be positive");
    return std::sqrt(2.0 / std::numbers::pi) * y * y / (sigma * sigma * sigma) * std::exp(-y * y / (2.0 * sigma * sigma));
}

class DistanceDistribution;
inline double survival_beyond(double r, const DistanceDistribution& dist, const IntegrationSpec& spec);

/// Distance law of Gaussian-cluster offspring around a parent at a given
/// distance from the origin, together with its mass outside the receiver ball.
class DistanceDistribution {
  public:
    DistanceDistribution(double parent_distance, double sigma, double r0, const IntegrationSpec& spec = {})
        : parent_distance_(parent_distance), sigma_(sigma), r0_(r0) {
        if (!(parent_distance >= 0.0) || !(sigma > 0.0) || !(r0 >= 0.0))
            throw std::invalid_argument("DistanceDistribution: invalid parameters");
        normalizer_ = survival_beyond(r0, *this, spec);
    }

    double parent_distance() const { return parent_distance_; }
    double sigma() const { return sigma_; }
    double r0() const { return r0_; }
    double normalizer_beyond_r0() const { return normalizer_; }

    double pdf(double y) const {
        return parent_distance_ == 0.0 ? distance_pdf_origin_tcp(y, sigma_)
                                       : distance_pdf_tcp(y, parent_distance_, sigma_);
    }

    /// Density conditioned on exceeding r0.
    double conditional_pdf(double y) const { return y <= r0_ ? 0.0 : pdf(y) / normalizer_; }

  private:
    double parent_distance_;
    double sigma_;
    double r0_;
    double normalizer_ = 1.0;
};

/// P(distance > r). Integrates whichever side of the bulk is shorter.
inline double survival_beyond(double r, const DistanceDistribution& dist, const IntegrationSpec& spec) {
    if (!(r >= 0.0))
        throw std::domain_error("survival_beyond: r must be non-negative");
    auto pdf = [&](double y) { return dist.pdf(y); };
    const double centre = std::max(dist.parent_distance(), std::numbers::sqrt2 * dist.sigma());
    if (r <= centre)
        return std::clamp(1.0 - integrate(pdf, 0.0, r, spec), 0.0, 1.0);
    const double tail = integrate_semi_infinite(pdf, r, spec, 4.0 * dist.sigma());
    return std::clamp(tail, 0.0, 1.0);
}

/// One distance drawn from the distribution conditioned on exceeding r0, by
/// rejection from the unconditioned 3D Gaussian offset.
template <class Rng>
double sample_distance(const DistanceDistribution& dist, Rng& rng) {
    if (dist.normalizer_beyond_r0() < 1e-6)
        throw std::runtime_error("sample_distance: acceptance probability below 1e-6");
    std::normal_distribution<double> gauss(0.0, dist.sigma());
    constexpr long max_attempts = 100'000'000;
    for (long attempt = 0; attempt < max_attempts; ++attempt) {
        const Vec3 p{dist.parent_distance() + gauss(rng), gauss(rng), gauss(rng)};
        const double d = norm(p);
        if (d > dist.r0())
            return d;
    }
    throw std::runtime_error("sample_distance: rejection cap exceeded");
}

}  // namespace molnet
