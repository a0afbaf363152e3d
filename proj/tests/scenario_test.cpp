#include "dlcflex/scenario.hpp"

#include <gtest/gtest.h>

#include "test_fixtures.hpp"

namespace dlcflex {
namespace {

TEST(Scenario, RoundTripThroughJsonIsFieldIdentical) {
    FleetScenario sc = testing::make_small_scenario();
    json doc = serialize_scenario(sc);
    FleetScenario back = scenario_from_json(doc);
    EXPECT_EQ(sc, back);
}

TEST(Scenario, LoadsFromFileWithCsvSeriesReference) {
    FleetScenario sc = testing::make_small_scenario();
    json doc = serialize_scenario(sc);
    std::string dir = ::testing::TempDir();
    write_series_csv(dir + "infl.csv", sc.series.inflexible_kw_actual);
    doc["series"]["inflexible_kw"] = "infl.csv";
    std::string path = testing::write_temp_json(doc, "scenario_csv.json");
    FleetScenario back = load_scenario(path);
    EXPECT_EQ(sc, back);
}

TEST(Scenario, MissingFieldNamesTheField) {
    json doc = serialize_scenario(testing::make_small_scenario());
    doc["grid"].erase("dt_hours");
    try {
        scenario_from_json(doc);
        FAIL() << "expected ScenarioError";
    } catch (const ScenarioError& e) {
        EXPECT_NE(std::string(e.what()).find("dt_hours"), std::string::npos);
    }
}

TEST(Scenario, ValidationNamesFirstViolatedInvariant) {
    FleetScenario sc = testing::make_small_scenario();
    sc.hps[0].t_lo_series_c[10] = 50.0;  // above t_up
    try {
        validate_scenario(sc);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("hp 'hp1'"), std::string::npos) << msg;
        EXPECT_NE(msg.find("step 10"), std::string::npos) << msg;
    }
}

TEST(Scenario, RejectsOverlappingEvSessions) {
    FleetScenario sc = testing::make_small_scenario();
    sc.evs[0].sessions.push_back(EvSession{80, 90, 0.4, 0.9});
    EXPECT_THROW(validate_scenario(sc), ValidationError);
}

TEST(Scenario, RejectsBadGrid) {
    EXPECT_THROW(TimeGrid::make(0.7, 96, Timestamp{}).validate(), std::exception);
    EXPECT_THROW(TimeGrid::make(0.25, 0, Timestamp{}).validate(), std::exception);
    EXPECT_THROW(TimeGrid::make(-0.25, 96, Timestamp{}).validate(), std::exception);
    EXPECT_NO_THROW(TimeGrid::make(0.25, 96, Timestamp{}).validate());
    EXPECT_NO_THROW(TimeGrid::make(0.25, 90, Timestamp{}).validate());
}

TEST(Scenario, RejectsSeriesLengthMismatch) {
    FleetScenario sc = testing::make_small_scenario();
    sc.series.ambient_c.pop_back();
    EXPECT_THROW(validate_scenario(sc), ValidationError);
}

TEST(Scenario, RejectsNonDayAlignedSpan) {
    FleetScenario sc = testing::make_small_scenario();
    sc.series.inflexible_kw_actual.resize(100);
    sc.series.ambient_c.resize(100);
    sc.series.irradiation_wm2.resize(100);
    EXPECT_THROW(validate_scenario(sc), ValidationError);
}

TEST(Scenario, ValidateSettingsFlagsMissingL2Config) {
    FleetScenario sc = testing::make_small_scenario();
    sc.ewhs[0].flex_l2.reset();
    auto findings = validate_settings(sc, Formulation::L2);
    ASSERT_EQ(findings.size(), 1u);
    EXPECT_EQ(findings[0].device_id, "ewh1");
    EXPECT_EQ(findings[0].field, "flex_l2");
    EXPECT_TRUE(validate_settings(sc, Formulation::L1).empty());
}

TEST(Scenario, ValidateSettingsRequiresHistoryForPrediction) {
    FleetScenario sc = testing::make_small_scenario();
    sc.series.historical_days.clear();
    auto l1 = validate_settings(sc, Formulation::L1);
    ASSERT_FALSE(l1.empty());
    EXPECT_EQ(l1[0].field, "history");
    EXPECT_TRUE(validate_settings(sc, Formulation::Ideal).empty());
}

TEST(Scenario, AlphaInterpolationClampsAndInterpolates) {
    std::vector<std::pair<double, double>> table = {{-10.0, 1.0}, {0.0, 0.8}, {10.0, 0.5}};
    EXPECT_DOUBLE_EQ(alpha_at(table, -20.0), 1.0);
    EXPECT_DOUBLE_EQ(alpha_at(table, 25.0), 0.5);
    EXPECT_DOUBLE_EQ(alpha_at(table, -10.0), 1.0);
    EXPECT_DOUBLE_EQ(alpha_at(table, -5.0), 0.9);
    EXPECT_DOUBLE_EQ(alpha_at(table, 5.0), 0.65);
}

TEST(Scenario, FormulationNamesRoundTrip) {
    for (Formulation f : {Formulation::Ideal, Formulation::L1, Formulation::L2, Formulation::L2PF,
                          Formulation::Ripple, Formulation::None}) {
        EXPECT_EQ(parse_formulation(to_string(f)), f);
    }
    EXPECT_THROW(parse_formulation("bogus"), std::runtime_error);
}

TEST(Scenario, TimestampMathAndFormatting) {
    Timestamp t = parse_timestamp("2021-06-07T00:00:00");
    EXPECT_EQ(format_timestamp(t), "2021-06-07T00:00:00");
    Timestamp u = add_seconds(t, 96 * 900);
    EXPECT_EQ(format_timestamp(u), "2021-06-08T00:00:00");
    Timestamp v = add_seconds(t, -900);
    EXPECT_EQ(format_timestamp(v), "2021-06-06T23:45:00");
    TimeGrid g = TimeGrid::make(0.25, 96, t);
    EXPECT_EQ(format_timestamp(g.time_at(3)), "2021-06-07T00:45:00");
}

}  // namespace
}  // namespace dlcflex
