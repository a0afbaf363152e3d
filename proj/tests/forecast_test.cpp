#include "dlcflex/forecast.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace dlcflex;

namespace {

HistoricalDay day(const std::string& date, double temp, double irr,
                  std::vector<double> total = {50, 50, 50, 50},
                  std::vector<double> flex = {10, 10, 10, 10}) {
    HistoricalDay d;
    d.date = date;
    d.mean_temp_c = temp;
    d.irradiation_sum = irr;
    d.total_ts_kw_series = std::move(total);
    d.flexible_kw_series = std::move(flex);
    return d;
}

}  // namespace

TEST(Forecast, ExactFeatureMatchHasZeroDistance) {
    std::vector<HistoricalDay> h = {day("2024-01-01", 5, 800), day("2024-01-02", 12, 2400),
                                    day("2024-01-03", -3, 300)};
    const auto m = select_msd({12, 2400}, h);
    EXPECT_EQ(m.date, "2024-01-02");
    EXPECT_EQ(m.index, 1);
    EXPECT_DOUBLE_EQ(m.distance, 0.0);
}

TEST(Forecast, DominatingCandidateWins) {
    std::vector<HistoricalDay> h = {day("2024-01-01", 10, 1000), day("2024-01-02", 18, 3000)};
    EXPECT_EQ(select_msd({11, 1200}, h).date, "2024-01-01");
    EXPECT_EQ(select_msd({17, 2800}, h).date, "2024-01-02");
}

TEST(Forecast, DistanceIsComputedInNormalizedSpace) {
    // Temperatures vary by a few degrees, irradiation by thousands. Raw
    // Euclidean distance would be dominated by irradiation and pick the first
    // day; per-feature normalization makes the temperature gap decisive.
    std::vector<HistoricalDay> h = {day("2024-01-01", 20.0, 2000), day("2024-01-02", 10.2, 2600),
                                    day("2024-01-03", 14.0, 5000)};
    const DayFeatures target{10.0, 2100};
    double raw0 = std::hypot(20.0 - 10.0, 2000.0 - 2100.0);
    double raw1 = std::hypot(10.2 - 10.0, 2600.0 - 2100.0);
    ASSERT_LT(raw0, raw1);
    EXPECT_EQ(select_msd(target, h).date, "2024-01-02");
}

TEST(Forecast, TenDayHistoryMatchesIndependentSearch) {
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> ut(-10.0, 25.0);
    std::uniform_real_distribution<double> ui(100.0, 6000.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<HistoricalDay> h;
        for (int k = 0; k < 10; ++k) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "2024-03-%02d", k + 1);
            h.push_back(day(buf, ut(rng), ui(rng)));
        }
        const DayFeatures target{ut(rng), ui(rng)};
        // Reference: z-scores with population moments, computed directly.
        double mt = 0, mi = 0;
        for (const auto& d : h) {
            mt += d.mean_temp_c / 10.0;
            mi += d.irradiation_sum / 10.0;
        }
        double vt = 0, vi = 0;
        for (const auto& d : h) {
            vt += (d.mean_temp_c - mt) * (d.mean_temp_c - mt) / 10.0;
            vi += (d.irradiation_sum - mi) * (d.irradiation_sum - mi) / 10.0;
        }
        int want = 0;
        double want_d = 1e300;
        for (int k = 0; k < 10; ++k) {
            const double zt = (target.mean_temp_c - h[k].mean_temp_c) / std::sqrt(vt);
            const double zi = (target.irradiation_sum - h[k].irradiation_sum) / std::sqrt(vi);
            const double d2 = zt * zt + zi * zi;
            if (d2 < want_d) {
                want_d = d2;
                want = k;
            }
        }
        const auto m = select_msd(target, h);
        EXPECT_EQ(m.index, want) << "trial " << trial;
        EXPECT_NEAR(m.distance, std::sqrt(want_d), 1e-12);
    }
}

TEST(Forecast, TiesGoToTheMostRecentDay) {
    std::vector<HistoricalDay> h = {day("2024-01-05", 10, 1000), day("2024-01-02", 10, 1000),
                                    day("2024-01-04", 20, 3000)};
    const auto m = select_msd({10, 1000}, h);
    EXPECT_EQ(m.date, "2024-01-05");
    EXPECT_EQ(m.index, 0);
}

TEST(Forecast, ConstantFeatureIsDropped) {
    // All days share the irradiation value; only temperature discriminates.
    std::vector<HistoricalDay> h = {day("2024-01-01", 5, 1500), day("2024-01-02", 9, 1500)};
    const auto m = select_msd({8.5, 9999}, h);
    EXPECT_EQ(m.date, "2024-01-02");
}

TEST(Forecast, EmptyHistoryThrows) {
    EXPECT_THROW(select_msd({0, 0}, {}), std::invalid_argument);
}

TEST(Forecast, PredictionSubtractsFlexibleLoadPointwise) {
    HistoricalDay d = day("2024-01-01", 0, 0, {50, 52, 48, 47}, {10, 12, 8, 0});
    EXPECT_EQ(predict_inflexible(d, d.flexible_kw_series),
              (std::vector<double>{40, 40, 40, 47}));
    const std::vector<double> zeros(4, 0.0);
    EXPECT_EQ(predict_inflexible(d, zeros), d.total_ts_kw_series);
}

TEST(Forecast, PredictionLengthMismatchThrows) {
    HistoricalDay d = day("2024-01-01", 0, 0);
    EXPECT_THROW(predict_inflexible(d, {1, 2, 3}), std::invalid_argument);
}

TEST(Forecast, PredictionPlusFlexibleReconstructsTotal) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-20.0, 80.0);
    HistoricalDay d;
    d.date = "2024-06-01";
    for (int i = 0; i < 96; ++i) {
        d.total_ts_kw_series.push_back(u(rng));
        d.flexible_kw_series.push_back(u(rng) * 0.2);
    }
    const auto p = predict_inflexible(d, d.flexible_kw_series);
    for (int i = 0; i < 96; ++i)
        EXPECT_DOUBLE_EQ(p[i] + d.flexible_kw_series[i], d.total_ts_kw_series[i]);
}

TEST(Forecast, MatchCarriesPredictionAndAveragePower) {
    std::vector<HistoricalDay> h = {day("2024-01-01", 4, 900, {100, 104, 96, 100}, {20, 24, 16, 20})};
    const auto m = select_msd({4, 900}, h);
    EXPECT_EQ(m.inflexible_kw, (std::vector<double>{80, 80, 80, 80}));
    EXPECT_DOUBLE_EQ(m.p_ref_kw, 100.0);
}

TEST(Forecast, ReferencePowerPolicies) {
    PrefPolicy avg;
    EXPECT_DOUBLE_EQ(compute_pref(avg, {100, 100, 100}), 100.0);
    EXPECT_DOUBLE_EQ(compute_pref(avg, {90, 110}), 100.0);
    PrefPolicy fixed;
    fixed.kind = PrefPolicy::Kind::Fixed;
    fixed.fixed_kw = 0;
    EXPECT_DOUBLE_EQ(compute_pref(fixed, {90, 110}), 0.0);
    fixed.fixed_kw = 160;
    EXPECT_DOUBLE_EQ(compute_pref(fixed, {}), 160.0);
}

TEST(Forecast, AlphaInterpolatesBetweenKnots) {
    const std::vector<std::pair<double, double>> table = {{-10.0, 1.0}, {20.0, 0.1}};
    EXPECT_DOUBLE_EQ(alpha_at(table, 5.0), 0.55);
    EXPECT_DOUBLE_EQ(alpha_at(table, -10.0), 1.0);
    EXPECT_DOUBLE_EQ(alpha_at(table, -40.0), 1.0);
    EXPECT_DOUBLE_EQ(alpha_at(table, 99.0), 0.1);
    // Monotone table gives monotone non-increasing output.
    double prev = 2.0;
    for (double q = -15.0; q <= 25.0; q += 0.37) {
        const double a = alpha_at(table, q);
        EXPECT_LE(a, prev + 1e-12);
        EXPECT_GE(a, 0.1);
        EXPECT_LE(a, 1.0);
        prev = a;
    }
}
