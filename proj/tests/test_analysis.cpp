#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "molnet/analysis.hpp"

using namespace molnet;

namespace {

SystemParams interference_free(double xi) {
    SystemParams p;
    p.lambda_p = 0.0;
    p.L = 1;
    p.lambda_0 = 0.0;
    p.constellation = {0.0, xi};
    return p;
}

}  // namespace

TEST(ExactError, InterferenceFreeOok) {
    const auto p = interference_free(60.0);
    const ErrorAnalysis an(p);
    const double pll = p_LL(p.y0_norm, p.channel);
    EXPECT_EQ(an.thresholds().th[0], 1u);
    EXPECT_NEAR(conditional_error_exact(0, an), 0.0, 1e-15);
    EXPECT_NEAR(conditional_error_exact(1, an), std::exp(-pll * 60.0), 1e-14);
}

TEST(ExactError, TotalIsMeanOfConditionals) {
    const ErrorAnalysis an{SystemParams{}};
    const auto r = error_prob_exact(an);
    ASSERT_EQ(r.per_symbol.size(), 2u);
    EXPECT_EQ(r.method, ErrorMethod::exact);
    EXPECT_FALSE(r.derivative_budget_hit);
    EXPECT_DOUBLE_EQ(r.total, 0.5 * (r.per_symbol[0] + r.per_symbol[1]));
    for (double v : r.per_symbol) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(ExactError, CountDistributionSumsToOne) {
    const ErrorAnalysis an{SystemParams{}};
    for (std::size_t j = 0; j < 2; ++j) {
        const double c = an.signal_mean(j);
        const auto pmf = detail::count_pmf(c, an.model(), 25);
        double s = 0.0;
        for (double v : pmf) {
            EXPECT_GE(v, -1e-12);
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-6) << j;
    }
}

TEST(ExactError, CountDistributionMean) {
    const ErrorAnalysis an{SystemParams{}};
    const double c = an.signal_mean(1);
    const auto pmf = detail::count_pmf(c, an.model(), 25);
    double m = 0.0;
    for (std::size_t k = 0; k < pmf.size(); ++k)
        m += static_cast<double>(k) * pmf[k];
    EXPECT_NEAR(m, c + an.stats().e_total, 1e-5);
}

TEST(ExactError, NonDecreasingInSlotCount) {
    double prev = 0.0;
    for (int L = 1; L <= 5; ++L) {
        SystemParams p;
        p.L = L;
        const double v = error_prob_exact(p).total;
        EXPECT_GE(v, prev) << L;
        prev = v;
    }
}

TEST(ExactError, FasterDiffusionHelps) {
    SystemParams slow, fast;
    slow.channel.D = 10.0;
    EXPECT_GT(error_prob_exact(slow).total, error_prob_exact(fast).total);
}

TEST(ExactError, BudgetDegradesToFlaggedBound) {
    DerivativeBudget tiny;
    tiny.max_order = 0;
    const ErrorAnalysis an(SystemParams{}, default_interference_spec(), tiny);
    ASSERT_GE(an.thresholds().th[0], 2u);
    EXPECT_THROW(conditional_error_exact(0, an), BudgetExceeded);
    const auto r = error_prob_exact(an);
    EXPECT_TRUE(r.derivative_budget_hit);
    EXPECT_EQ(r.method, ErrorMethod::upper_bound);
    EXPECT_DOUBLE_EQ(r.total, error_prob_upper(an).total);
}

TEST(ExactError, SymbolIndexChecked) {
    const ErrorAnalysis an{SystemParams{}};
    EXPECT_THROW(conditional_error_exact(2, an), std::out_of_range);
}

TEST(UpperBound, AlzerConstants) {
    EXPECT_EQ(alzer_eta(1), 1.0);
    EXPECT_NEAR(alzer_eta(2), 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(alzer_eta(3), std::pow(6.0, -1.0 / 3.0), 1e-15);
    for (std::uint64_t t = 1; t < 200; ++t) {
        const double e = alzer_eta(t);
        EXPECT_GT(e, 0.0);
        EXPECT_LE(e, 1.0);
    }
    EXPECT_THROW(alzer_eta(0), std::domain_error);
}

TEST(UpperBound, TightWhenThresholdIsOne) {
    const auto p = interference_free(60.0);
    const ErrorAnalysis an(p);
    const auto up = error_prob_upper(an);
    const auto ex = error_prob_exact(an);
    const double pll = p_LL(p.y0_norm, p.channel);
    EXPECT_NEAR(up.per_symbol[1], std::exp(-pll * 60.0), 1e-14);
    EXPECT_NEAR(up.total, ex.total, 1e-14);
}

TEST(UpperBound, TopSymbolDominatesExact) {
    for (double D : {10.0, 40.0})
        for (int L : {1, 3, 5, 8}) {
            SystemParams p;
            p.channel.D = D;
            p.L = L;
            const ErrorAnalysis an(p);
            const auto up = error_prob_upper(an);
            const auto ex = error_prob_exact(an);
            EXPECT_GE(up.per_symbol.back(), ex.per_symbol.back() - 1e-12) << D << ' ' << L;
            EXPECT_EQ(up.method, ErrorMethod::upper_bound);
        }
}

TEST(UpperBound, AlternatingSumMatchesClosedForm) {
    // With L = 1 the sum collapses to 1 - (1 - e^{-eta c})^n. The error may
    // only grow with the magnitude of the largest alternating term.
    const std::vector<double> ones(60, 1.0);
    for (std::uint64_t n : {1u, 5u, 20u, 40u, 60u}) {
        const double eta = alzer_eta(n), c = 3.0;
        const double q = std::exp(-eta * c);
        double largest = 0.0;
        for (std::uint64_t k = 1; k <= n; ++k)
            largest = std::max(largest, binomial(n, k) * std::pow(q, static_cast<double>(k)));
        const double tol = std::max(1e-10, 64.0 * largest * 1e-19);
        EXPECT_NEAR(detail::alzer_sum(n, eta, c, ones), 1.0 - std::pow(1.0 - q, static_cast<double>(n)), tol) << n;
    }
}

TEST(OokClosedForm, InterferenceFree) {
    const auto p = interference_free(60.0);
    const auto r = error_prob_ook(p);
    EXPECT_EQ(r.method, ErrorMethod::ook_closed_form);
    EXPECT_NEAR(r.per_symbol[0], 0.0, 1e-15);
    EXPECT_NEAR(r.per_symbol[1], std::exp(-p_LL(p.y0_norm, p.channel) * 60.0), 1e-15);
}

TEST(OokClosedForm, RefusesOutsideRegime) {
    const ErrorAnalysis an{SystemParams{}};
    ASSERT_EQ(an.thresholds().th[0], 2u);
    EXPECT_THROW(error_prob_ook(an), std::domain_error);
    SystemParams p;
    p.constellation = {5.0, 60.0};
    EXPECT_THROW(error_prob_ook(p), std::invalid_argument);
}

TEST(OokClosedForm, EqualsExactInRegime) {
    SystemParams p;
    const ErrorAnalysis base(p);
    const double xi0 = ook_regime_threshold_xi(p, base.stats());
    for (double f : {0.3, 0.7, 0.95}) {
        p.constellation = {0.0, f * xi0};
        const ErrorAnalysis an(p);
        ASSERT_EQ(an.thresholds().th[0], 1u);
        const auto ook = error_prob_ook(an);
        const auto ex = error_prob_exact(an);
        for (std::size_t j = 0; j < 2; ++j)
            EXPECT_NEAR(ook.per_symbol[j], ex.per_symbol[j], 1e-12);
        EXPECT_NEAR(ook.total, ex.total, 1e-12);
    }
}

TEST(Report, MethodNames) {
    EXPECT_EQ(to_string(ErrorMethod::exact), "exact");
    EXPECT_EQ(to_string(ErrorMethod::upper_bound), "upper");
    EXPECT_EQ(to_string(ErrorMethod::ook_closed_form), "ook");
    EXPECT_EQ(to_string(ErrorMethod::monte_carlo), "mc");
}
