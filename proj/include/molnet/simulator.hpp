#pragma once

// Monte Carlo of the clustered network: parents in a box, Gaussian
// offspring per slot, Poisson reception at the reference receiver.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "molnet/channel.hpp"
#include "molnet/detector.hpp"
#include "molnet/geometry.hpp"
#include "molnet/interference.hpp"

namespace molnet {

enum class ExclusionMode { analysis_matched, full_exclusion };

struct TrialConfig {
    SystemParams params{};
    double box_half_width = 0.0;  // um; 0 selects 25 r0
    std::uint64_t trials = 50000;
    ExclusionMode exclusion_mode = ExclusionMode::analysis_matched;
    std::uint64_t seed = 1;
    unsigned workers = 0;  // 0 selects the hardware concurrency
    std::vector<double> lt_s{0.5, 1.0};
    std::optional<std::size_t> reference_symbol;  // pin the reference symbol

    double half_width() const { return box_half_width > 0.0 ? box_half_width : 25.0 * params.r0(); }

    void validate() const {
        params.validate();
        if (trials < 1)
            throw std::invalid_argument("TrialConfig: trials must be >= 1");
        if (!(half_width() > 2.0 * params.r0()))
            throw std::invalid_argument("TrialConfig: box too small");
        if (reference_symbol && *reference_symbol >= params.constellation.size())
            throw std::invalid_argument("TrialConfig: pinned symbol out of range");
        for (double s : lt_s)
            if (!(s >= 0.0))
                throw std::invalid_argument("TrialConfig: LT arguments must be non-negative");
    }

    /// True when the box edge sits closer than 10 sigma plus a few r0 to the
    /// origin, so the far interference tail is cut.
    bool tail_truncated() const { return half_width() < 10.0 * params.sigma + 3.0 * params.r0(); }
};

struct Transmitter {
    Vec3 position{};
    int slot = 1;  // 1..L
    std::size_t symbol = 0;
};

struct NetworkRealization {
    std::vector<Vec3> parents;
    std::vector<std::vector<Transmitter>> transmitters;  // per parent, slots 1..L
    std::vector<Transmitter> reference_transmitters;     // slots 1..L-1
    Transmitter reference;                               // slot L at distance y0
};

struct MeanEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
};

struct SimResult {
    double error_rate = 0.0;
    double stderr_ = 0.0;
    MeanEstimate intra;
    MeanEstimate inter;
    std::vector<double> lt_s;
    std::vector<MeanEstimate> lt;  // empirical E[e^{-s I}] per lt_s entry
    std::uint64_t trials = 0;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent generator for one trial.
inline std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t trial) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(trial + 0x632be59bd9b4e019ULL)));
}

namespace detail {

inline double distance(const Vec3& a, const Vec3& b) { return std::hypot(a[0] - b[0], a[1] - b[1], a[2] - b[2]); }

template <class Rng>
Vec3 uniform_in_box(double h, Rng& rng) {
    std::uniform_real_distribution<double> u(-h, h);
    Vec3 v;
    for (auto& c : v)
        c = u(rng);
    return v;
}

template <class Rng>
Vec3 random_direction(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (;;) {
        Vec3 v{n(rng), n(rng), n(rng)};
        const double r = norm(v);
        if (r > 1e-12)
            return {v[0] / r, v[1] / r, v[2] / r};
    }
}

}  // namespace detail

template <class Rng>
std::vector<Vec3> sample_parents(const TrialConfig& cfg, Rng& rng) {
    const auto& p = cfg.params;
    std::vector<Vec3> parents;
    if (p.lambda_p == 0.0)
        return parents;
    const double h = cfg.half_width();
    const double volume = 8.0 * h * h * h;
    std::poisson_distribution<std::uint64_t> count_dist(p.lambda_p * volume);
    const std::uint64_t n = count_dist(rng);
    parents.reserve(n);
    const double min_gap = 2.0 * p.r0();
    constexpr int max_attempts = 1'000'000;
    for (std::uint64_t i = 0; i < n; ++i) {
        if (cfg.exclusion_mode == ExclusionMode::analysis_matched) {
            const Vec3 v = detail::uniform_in_box(h, rng);
            if (norm(v) > min_gap)
                parents.push_back(v);
            continue;
        }
        bool placed = false;
        for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
            const Vec3 v = detail::uniform_in_box(h, rng);
            if (norm(v) <= min_gap)
                continue;
            placed = std::none_of(parents.begin(), parents.end(),
                                  [&](const Vec3& q) { return detail::distance(v, q) <= min_gap; });
            if (placed)
                parents.push_back(v);
        }
        if (!placed)
            throw std::runtime_error("sample_parents: hard-core placement failed");
    }
    return parents;
}

namespace detail {

template <class Rng>
Vec3 sample_offspring(const Vec3& centre, const std::vector<Vec3>& parents, const TrialConfig& cfg, Rng& rng) {
    const auto& p = cfg.params;
    std::normal_distribution<double> g(0.0, p.sigma);
    const double r0 = p.r0();
    constexpr int max_attempts = 10'000'000;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        const Vec3 v{centre[0] + g(rng), centre[1] + g(rng), centre[2] + g(rng)};
        if (norm(v) <= r0)
            continue;
        if (cfg.exclusion_mode == ExclusionMode::full_exclusion &&
            std::any_of(parents.begin(), parents.end(), [&](const Vec3& q) { return distance(v, q) <= r0; }))
            continue;
        return v;
    }
    throw std::runtime_error("sample_realization: offspring rejection cap exceeded");
}

}  // namespace detail

template <class Rng>
NetworkRealization sample_realization(const TrialConfig& cfg, Rng& rng) {
    const auto& p = cfg.params;
    NetworkRealization r;
    r.parents = sample_parents(cfg, rng);
    std::uniform_int_distribution<std::size_t> sym(0, p.constellation.size() - 1);
    const Vec3 origin{0.0, 0.0, 0.0};
    r.transmitters.resize(r.parents.size());
    for (std::size_t k = 0; k < r.parents.size(); ++k) {
        auto& slots = r.transmitters[k];
        slots.reserve(static_cast<std::size_t>(p.L));
        for (int i = 1; i <= p.L; ++i)
            slots.push_back({detail::sample_offspring(r.parents[k], r.parents, cfg, rng), i, sym(rng)});
    }
    for (int i = 1; i <= p.L - 1; ++i)
        r.reference_transmitters.push_back({detail::sample_offspring(origin, r.parents, cfg, rng), i, sym(rng)});
    const Vec3 dir = detail::random_direction(rng);
    r.reference.position = {dir[0] * p.y0_norm, dir[1] * p.y0_norm, dir[2] * p.y0_norm};
    r.reference.slot = p.L;
    r.reference.symbol = cfg.reference_symbol ? *cfg.reference_symbol : sym(rng);
    return r;
}

struct InterferenceSample {
    double intra = 0.0;
    double inter = 0.0;
    double total() const { return intra + inter; }
};

inline InterferenceSample interference_of(const NetworkRealization& r, const SystemParams& p) {
    InterferenceSample s;
    for (const auto& t : r.reference_transmitters) {
        const double x = p.constellation[t.symbol];
        if (x != 0.0)
            s.intra += x * slot_observation_probability(t.slot, p.L, norm(t.position), p.channel);
    }
    for (const auto& cluster : r.transmitters)
        for (const auto& t : cluster) {
            const double x = p.constellation[t.symbol];
            if (x != 0.0)
                s.inter += x * slot_observation_probability(t.slot, p.L, norm(t.position), p.channel);
        }
    return s;
}

/// Poisson mean of the reference count for a realization.
inline double received_mean(const NetworkRealization& r, const SystemParams& p) {
    const double signal = p_LL(p.y0_norm, p.channel) * p.constellation[r.reference.symbol];
    return signal + interference_of(r, p).total() + p.noise_mean();
}

template <class Rng>
std::uint64_t received_count(const NetworkRealization& r, const SystemParams& p, Rng& rng) {
    const double mean = received_mean(r, p);
    if (mean == 0.0)
        return 0;
    std::poisson_distribution<std::uint64_t> d(mean);
    return d(rng);
}

/// Runs body(i) for i in [0, n) on a worker pool, in chunks.
template <class Body>
void parallel_for(std::uint64_t n, unsigned workers, Body&& body) {
    if (workers == 0)
        workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, std::max<std::uint64_t>(n, 1)));
    constexpr std::uint64_t chunk = 64;
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto run = [&] {
        try {
            for (;;) {
                if (failed.load())
                    return;
                const std::uint64_t begin = next.fetch_add(chunk);
                if (begin >= n)
                    return;
                const std::uint64_t end = std::min(n, begin + chunk);
                for (std::uint64_t i = begin; i < end; ++i)
                    body(i);
            }
        } catch (...) {
            if (!failed.exchange(true))
                failure = std::current_exception();
        }
    };
    if (workers == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back(run);
        for (auto& t : pool)
            t.join();
    }
    if (failure)
        std::rethrow_exception(failure);
}

namespace detail {

inline MeanEstimate mean_estimate(const std::vector<double>& v) {
    // Two-pass mean and variance, sequential for reproducibility.
    const double n = static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v)
        s += x;
    const double mean = s / n;
    double ss = 0.0;
    for (double x : v)
        ss += (x - mean) * (x - mean);
    const double var = v.size() > 1 ? ss / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n)};
}

}  // namespace detail

inline SimResult run_error_trials(const TrialConfig& cfg, const DetectorThresholds& th) {
    cfg.validate();
    const auto& p = cfg.params;
    const std::uint64_t n = cfg.trials;
    std::vector<unsigned char> err(n);
    std::vector<double> intra(n), inter(n);
    std::vector<std::vector<double>> lt(cfg.lt_s.size(), std::vector<double>(n));
    parallel_for(n, cfg.workers, [&](std::uint64_t t) {
        auto rng = trial_rng(cfg.seed, t);
        const auto real = sample_realization(cfg, rng);
        const auto I = interference_of(real, p);
        const double mean = p_LL(p.y0_norm, p.channel) * p.constellation[real.reference.symbol] + I.total() +
                            p.noise_mean();
        std::uint64_t y = 0;
        if (mean > 0.0) {
            std::poisson_distribution<std::uint64_t> d(mean);
            y = d(rng);
        }
        err[t] = decide(y, th) != real.reference.symbol ? 1 : 0;
        intra[t] = I.intra;
        inter[t] = I.inter;
        for (std::size_t a = 0; a < cfg.lt_s.size(); ++a)
            lt[a][t] = std::exp(-cfg.lt_s[a] * I.total());
    });
    SimResult r;
    r.trials = n;
    std::uint64_t errors = 0;
    for (auto e : err)
        errors += e;
    r.error_rate = static_cast<double>(errors) / static_cast<double>(n);
    r.stderr_ = std::sqrt(r.error_rate * (1.0 - r.error_rate) / static_cast<double>(n));
    r.intra = detail::mean_estimate(intra);
    r.inter = detail::mean_estimate(inter);
    r.lt_s = cfg.lt_s;
    for (const auto& v : lt)
        r.lt.push_back(detail::mean_estimate(v));
    return r;
}

/// Uses the analytic mean interference to set the detector thresholds.
inline SimResult run_error_trials(const TrialConfig& cfg) {
    const InterferenceModel model(cfg.params);
    return run_error_trials(cfg, compute_thresholds(cfg.params, model.expected()));
}

struct InterferenceEstimate {
    MeanEstimate intra;
    MeanEstimate inter;
    std::vector<double> lt_s;
    std::vector<MeanEstimate> lt;
};

inline InterferenceEstimate estimate_interference_stats(const TrialConfig& cfg) {
    DetectorThresholds th;
    th.th.assign(cfg.params.constellation.size() - 1, 1);
    const auto r = run_error_trials(cfg, th);
    return {r.intra, r.inter, r.lt_s, r.lt};
}

}  // namespace molnet
