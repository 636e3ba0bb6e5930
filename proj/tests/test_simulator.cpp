#include <cmath>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "molnet/simulator.hpp"

using namespace molnet;

namespace {

TrialConfig small_config(std::uint64_t trials) {
    TrialConfig c;
    c.trials = trials;
    c.workers = 1;
    return c;
}

double sample_variance(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v)
        m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v)
        ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size() - 1);
}

}  // namespace

TEST(Sampling, NoParentsWithoutDensity) {
    TrialConfig c = small_config(1);
    c.params.lambda_p = 0.0;
    auto rng = trial_rng(1, 0);
    const auto r = sample_realization(c, rng);
    EXPECT_TRUE(r.parents.empty());
    EXPECT_TRUE(r.transmitters.empty());
    EXPECT_EQ(r.reference_transmitters.size(), static_cast<std::size_t>(c.params.L - 1));
}

TEST(Sampling, ParentCountMatchesThinnedPoisson) {
    const TrialConfig c = small_config(1);
    const double h = c.half_width(), g = 2.0 * c.params.r0();
    const double expected = c.params.lambda_p * (8.0 * h * h * h - 4.0 / 3.0 * std::numbers::pi * g * g * g);
    const int n = 4000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        auto rng = trial_rng(5, static_cast<std::uint64_t>(i));
        const auto parents = sample_parents(c, rng);
        for (const auto& v : parents)
            ASSERT_GT(norm(v), g);
        s += static_cast<double>(parents.size());
    }
    EXPECT_NEAR(s / n, expected, 4.0 * std::sqrt(expected / n));
}

TEST(Sampling, OffspringDistanceFollowsConditionalPdf) {
    const TrialConfig c = small_config(1);
    const Vec3 parent{50.0, 0.0, 0.0};
    const DistanceDistribution dist(50.0, c.params.sigma, c.params.r0());
    std::mt19937_64 rng(11);
    const int n = 200'000;
    const int bins = 50;
    const double lo = c.params.r0(), hi = 50.0 + 6.0 * c.params.sigma;
    const double w = (hi - lo) / bins;
    std::vector<double> observed(bins + 1, 0.0);
    for (int i = 0; i < n; ++i) {
        const double d = norm(detail::sample_offspring(parent, {}, c, rng));
        ASSERT_GT(d, lo);
        const int b = std::min(bins, static_cast<int>((d - lo) / w));
        observed[static_cast<std::size_t>(b)] += 1.0;
    }
    double stat = 0.0, inside = 0.0;
    int cells = 0;
    for (int b = 0; b <= bins; ++b) {
        double m;
        if (b < bins) {
            m = integrate([&](double y) { return dist.conditional_pdf(y); }, lo + b * w, lo + (b + 1) * w, IntegrationSpec{});
            inside += m;
        } else {
            m = 1.0 - inside;
        }
        const double e = n * m;
        if (e < 5.0)
            continue;
        stat += (observed[static_cast<std::size_t>(b)] - e) * (observed[static_cast<std::size_t>(b)] - e) / e;
        ++cells;
    }
    EXPECT_LT(stat, boost::math::quantile(boost::math::chi_squared(cells - 1), 0.999));
}

TEST(Sampling, SymbolsUniform) {
    TrialConfig c = small_config(1);
    c.params.constellation = {0.0, 20.0, 40.0, 60.0};
    c.params.L = 6;
    c.params.lambda_p = 0.0;
    std::vector<double> counts(4, 0.0);
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        auto rng = trial_rng(3, static_cast<std::uint64_t>(i));
        const auto r = sample_realization(c, rng);
        for (const auto& t : r.reference_transmitters)
            counts[t.symbol] += 1.0;
        counts[r.reference.symbol] += 1.0;
    }
    const double total = n * 6.0, e = total / 4.0;
    double stat = 0.0;
    for (double o : counts)
        stat += (o - e) * (o - e) / e;
    EXPECT_LT(stat, boost::math::quantile(boost::math::chi_squared(3), 0.999));
}

TEST(Sampling, ReferenceGeometry) {
    TrialConfig c = small_config(1);
    const double r0 = c.params.r0();
    for (int i = 0; i < 200; ++i) {
        auto rng = trial_rng(8, static_cast<std::uint64_t>(i));
        const auto r = sample_realization(c, rng);
        EXPECT_NEAR(norm(r.reference.position), c.params.y0_norm, 1e-12);
        EXPECT_EQ(r.reference.slot, c.params.L);
        for (const auto& t : r.reference_transmitters)
            EXPECT_GT(norm(t.position), r0);
        for (const auto& cluster : r.transmitters) {
            ASSERT_EQ(cluster.size(), static_cast<std::size_t>(c.params.L));
            for (const auto& t : cluster)
                EXPECT_GT(norm(t.position), r0);
        }
    }
}

TEST(Sampling, FullExclusionInvariants) {
    TrialConfig c = small_config(1);
    c.exclusion_mode = ExclusionMode::full_exclusion;
    c.params.lambda_p = 2e-5;
    const double r0 = c.params.r0();
    for (int i = 0; i < 20; ++i) {
        auto rng = trial_rng(21, static_cast<std::uint64_t>(i));
        const auto r = sample_realization(c, rng);
        ASSERT_FALSE(r.parents.empty());
        for (std::size_t a = 0; a < r.parents.size(); ++a) {
            EXPECT_GT(norm(r.parents[a]), 2.0 * r0);
            for (std::size_t b = a + 1; b < r.parents.size(); ++b)
                EXPECT_GT(detail::distance(r.parents[a], r.parents[b]), 2.0 * r0);
        }
        auto outside_all = [&](const Vec3& v) {
            if (norm(v) <= r0)
                return false;
            for (const auto& q : r.parents)
                if (detail::distance(v, q) <= r0)
                    return false;
            return true;
        };
        for (const auto& t : r.reference_transmitters)
            EXPECT_TRUE(outside_all(t.position));
        for (const auto& cluster : r.transmitters)
            for (const auto& t : cluster)
                EXPECT_TRUE(outside_all(t.position));
    }
}

TEST(Reception, SilentNetworkCountsZero) {
    TrialConfig c = small_config(1);
    c.params.lambda_p = 0.0;
    c.params.L = 1;
    c.params.lambda_0 = 0.0;
    c.reference_symbol = 0;
    for (int i = 0; i < 100; ++i) {
        auto rng = trial_rng(4, static_cast<std::uint64_t>(i));
        const auto r = sample_realization(c, rng);
        EXPECT_EQ(received_mean(r, c.params), 0.0);
        EXPECT_EQ(received_count(r, c.params, rng), 0u);
    }
}

TEST(Reception, PinnedSymbolMeanAndTotalVariance) {
    TrialConfig c = small_config(1);
    c.reference_symbol = 1;
    const auto& p = c.params;
    const InterferenceModel model(p);
    const double expected = p_LL(p.y0_norm, p.channel) * p.constellation[1] + model.expected().e_total + p.noise_mean();
    const int n = 100'000;
    std::vector<double> means(n), counts(n);
    for (int i = 0; i < n; ++i) {
        auto rng = trial_rng(6, static_cast<std::uint64_t>(i));
        const auto r = sample_realization(c, rng);
        means[static_cast<std::size_t>(i)] = received_mean(r, p);
        counts[static_cast<std::size_t>(i)] = static_cast<double>(received_count(r, p, rng));
    }
    const auto m = detail::mean_estimate(means);
    EXPECT_NEAR(m.mean, expected, 4.0 * m.stderr_);
    const auto y = detail::mean_estimate(counts);
    EXPECT_NEAR(y.mean, expected, 4.0 * y.stderr_);
    // Var Y = E[mean] + Var[mean] for a mixed Poisson count.
    const double predicted = m.mean + sample_variance(means);
    const double var_y = sample_variance(counts);
    const double se_var = var_y * std::sqrt(2.0 / (n - 1)) * 2.0;
    EXPECT_NEAR(var_y, predicted, 4.0 * se_var);
}

TEST(Trials, InterferenceFreeErrorRate) {
    TrialConfig c = small_config(50'000);
    c.params.lambda_p = 0.0;
    c.params.L = 1;
    c.params.lambda_0 = 0.0;
    const double target = 0.5 * std::exp(-p_LL(c.params.y0_norm, c.params.channel) * 60.0);
    const auto r = run_error_trials(c);
    EXPECT_NEAR(r.error_rate, target, 4.0 * std::sqrt(target * (1 - target) / 50'000.0));
    EXPECT_EQ(r.inter.mean, 0.0);
    EXPECT_EQ(r.intra.mean, 0.0);
    EXPECT_EQ(r.trials, 50'000u);
}

TEST(Trials, NoInterClusterWithoutParents) {
    TrialConfig c = small_config(2000);
    c.params.lambda_p = 0.0;
    const auto r = run_error_trials(c);
    EXPECT_EQ(r.inter.mean, 0.0);
    EXPECT_EQ(r.inter.stderr_, 0.0);
    EXPECT_GT(r.intra.mean, 0.0);
}

TEST(Trials, IdenticalAcrossWorkerCounts) {
    TrialConfig a = small_config(1500);
    a.seed = 42;
    TrialConfig b = a;
    b.workers = 3;
    const auto ra = run_error_trials(a);
    const auto rb = run_error_trials(b);
    EXPECT_EQ(ra.error_rate, rb.error_rate);
    EXPECT_EQ(ra.intra.mean, rb.intra.mean);
    EXPECT_EQ(ra.inter.mean, rb.inter.mean);
    EXPECT_EQ(ra.inter.stderr_, rb.inter.stderr_);
    ASSERT_EQ(ra.lt.size(), rb.lt.size());
    for (std::size_t i = 0; i < ra.lt.size(); ++i)
        EXPECT_EQ(ra.lt[i].mean, rb.lt[i].mean);
}

TEST(Trials, SeedChangesOutcome) {
    TrialConfig a = small_config(500);
    TrialConfig b = a;
    b.seed = 2;
    EXPECT_NE(run_error_trials(a).inter.mean, run_error_trials(b).inter.mean);
}

TEST(Trials, StandardErrorShrinksWithTrials) {
    TrialConfig a = small_config(4000);
    TrialConfig b = a;
    b.trials = 16000;
    const auto ra = estimate_interference_stats(a);
    const auto rb = estimate_interference_stats(b);
    EXPECT_NEAR(ra.intra.stderr_ / rb.intra.stderr_, 2.0, 0.2);
}

TEST(Trials, LaplaceEstimatesInUnitInterval) {
    TrialConfig c = small_config(1000);
    c.lt_s = {0.0, 0.5, 1.0, 4.0};
    const auto r = estimate_interference_stats(c);
    ASSERT_EQ(r.lt.size(), 4u);
    EXPECT_EQ(r.lt[0].mean, 1.0);
    for (std::size_t i = 1; i < r.lt.size(); ++i) {
        EXPECT_GT(r.lt[i].mean, 0.0);
        EXPECT_LT(r.lt[i].mean, r.lt[i - 1].mean);
    }
}

TEST(Config, Validation) {
    TrialConfig c = small_config(1);
    c.box_half_width = c.params.r0();
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = small_config(1);
    c.reference_symbol = 2;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = small_config(0);
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = small_config(1);
    c.lt_s = {-1.0};
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Config, TailTruncationFlag) {
    TrialConfig c = small_config(1);
    c.box_half_width = 50.0;
    EXPECT_TRUE(c.tail_truncated());
    c.box_half_width = 250.0;
    EXPECT_FALSE(c.tail_truncated());
}

TEST(Parallel, VisitsEveryIndexOnce) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 3, [&](std::uint64_t i) { ++hits[i]; });
    for (int h : hits)
        EXPECT_EQ(h, 1);
}

TEST(Parallel, PropagatesExceptions) {
    EXPECT_THROW(parallel_for(500, 3,
                              [](std::uint64_t i) {
                                  if (i == 321)
                                      throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
}
