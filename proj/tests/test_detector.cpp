#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "molnet/detector.hpp"

using namespace molnet;

namespace {

// Symbol index maximising the Poisson likelihood of y; ties go upward.
std::size_t ml_decision(std::uint64_t y, double p, const std::vector<double>& x, double a) {
    std::size_t best = 0;
    double best_ll = -INFINITY;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double mean = p * x[j] + a;
        const double ll = mean > 0 ? log_poisson_pmf(y, mean) : (y == 0 ? 0.0 : -INFINITY);
        if (ll >= best_ll - 1e-12 * std::abs(best_ll)) {
            best = j;
            best_ll = std::max(ll, best_ll);
        }
    }
    return best;
}

DetectorThresholds manual(double p, const std::vector<double>& x, double a) {
    DetectorThresholds t;
    t.p_ll = p;
    t.mean_interference = a;
    t.th = threshold_values(p, x, a);
    return t;
}

}  // namespace

TEST(Thresholds, ScalarExample) {
    // ceil(6 / ln 7) = ceil(3.083) = 4
    EXPECT_EQ(threshold_values(0.1, {0.0, 60.0}, 1.0), (std::vector<std::uint64_t>{4}));
}

TEST(Thresholds, GrowWithInterference) {
    std::uint64_t prev = 0;
    for (double a : {0.1, 1.0, 10.0, 100.0, 1000.0, 1e4}) {
        const auto th = threshold_values(0.1, {0.0, 60.0}, a)[0];
        EXPECT_GE(th, prev);
        prev = th;
    }
    EXPECT_GT(prev, 1000u);
}

TEST(Thresholds, OrderedForThreeSymbols) {
    const auto th = threshold_values(0.1, {0.0, 60.0, 120.0}, 1.0);
    ASSERT_EQ(th.size(), 2u);
    EXPECT_LE(th[0], th[1]);
}

TEST(Thresholds, AtLeastOneWithoutOffset) {
    EXPECT_EQ(threshold_values(0.05, {0.0, 60.0}, 0.0)[0], 1u);
}

TEST(Thresholds, DegenerateSpacing) {
    EXPECT_THROW(threshold_values(0.1, {0.0, 0.0}, 1.0), std::domain_error);
    EXPECT_THROW(threshold_values(0.0, {0.0, 60.0}, 1.0), std::domain_error);
    SystemParams p;
    p.constellation = {10.0, 10.0};
    EXPECT_THROW(compute_thresholds(p, {}), std::invalid_argument);
}

TEST(Thresholds, PureFunctionOfInputs) {
    SystemParams p;
    const InterferenceStats st = InterferenceStats::from_parts(0.26, 0.13);
    EXPECT_EQ(compute_thresholds(p, st).th, compute_thresholds(p, st).th);
}

TEST(Thresholds, WiderSpacingNeverShrinksThreshold) {
    std::uint64_t prev = 0;
    for (double x2 = 60.0; x2 <= 200.0; x2 += 1.0) {
        const auto th = threshold_values(0.0345, {0.0, x2}, 0.89)[0];
        EXPECT_GE(th, prev);
        prev = th;
    }
    EXPECT_GT(prev, threshold_values(0.0345, {0.0, 60.0}, 0.89)[0]);
}

TEST(Decide, BoundaryBelongsToUpperCell) {
    const auto t = manual(0.1, {0.0, 60.0}, 1.0);
    EXPECT_EQ(decide(0, t), 0u);
    EXPECT_EQ(decide(t.th[0] - 1, t), 0u);
    EXPECT_EQ(decide(t.th[0], t), 1u);
    EXPECT_EQ(decide(t.th[0], t, {0.0, 60.0}), 60.0);
}

TEST(Decide, MatchesLikelihoodArgmax) {
    const std::vector<std::vector<double>> constellations{
        {0.0, 60.0, 120.0, 180.0}, {5.0, 40.0, 90.0, 200.0}, {0.0, 10.0, 20.0, 30.0}};
    for (const auto& x : constellations)
        for (double p : {0.01, 0.0345, 0.2})
            for (double a : {0.0, 0.3, 0.89, 4.0, 25.0}) {
                const auto t = manual(p, x, a);
                const std::uint64_t top = std::max<std::uint64_t>(200, 10 * t.th.back());
                for (std::uint64_t y = 0; y <= top; ++y)
                    ASSERT_EQ(decide(y, t), ml_decision(y, p, x, a)) << "y=" << y << " p=" << p << " a=" << a;
            }
}

TEST(OokRegime, BracketsThresholdTransition) {
    const double p = 0.0345;
    for (double a : {0.2, 0.5, 0.89, 0.99}) {
        const double xi0 = ook_regime_threshold_xi(p, a);
        ASSERT_GT(xi0, 0.0);
        EXPECT_EQ(threshold_values(p, {0.0, xi0 * (1 - 1e-3)}, a)[0], 1u) << a;
        EXPECT_GE(threshold_values(p, {0.0, xi0 * (1 + 1e-3)}, a)[0], 2u) << a;
    }
}

TEST(OokRegime, BoundarySatisfiesDefiningIdentity) {
    const double p = 0.0345;
    for (double a : {0.1, 0.5, 0.89}) {
        const double u = p * ook_regime_threshold_xi(p, a);
        EXPECT_NEAR(1.0 + u / a, std::exp(u), 1e-9 * std::exp(u));
    }
}

TEST(OokRegime, DegenerateAndUndefinedRegimes) {
    EXPECT_NEAR(ook_regime_threshold_xi(0.0345, 1.0), 0.0, 1e-6);
    EXPECT_TRUE(std::isinf(ook_regime_threshold_xi(0.0345, 0.0)));
    EXPECT_THROW(ook_regime_threshold_xi(0.0345, 1.5), std::domain_error);
    SystemParams p;
    p.constellation = {10.0, 60.0};
    EXPECT_THROW(ook_regime_threshold_xi(p, {}), std::invalid_argument);
}

TEST(OokRegime, FromSystemParameters) {
    SystemParams p;
    const auto st = InterferenceStats::from_parts(0.26, 0.13);
    const double xi0 = ook_regime_threshold_xi(p, st);
    p.constellation = {0.0, 0.99 * xi0};
    EXPECT_EQ(compute_thresholds(p, st).th[0], 1u);
    p.constellation = {0.0, 1.01 * xi0};
    EXPECT_EQ(compute_thresholds(p, st).th[0], 2u);
}
