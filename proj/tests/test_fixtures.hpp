#ifndef DLCFLEX_TEST_FIXTURES_HPP
#define DLCFLEX_TEST_FIXTURES_HPP

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "dlcflex/scenario.hpp"

namespace dlcflex::testing {

inline std::vector<double> constant_series(size_t n, double v) { return std::vector<double>(n, v); }

inline HpSpec make_hp(const std::string& id, size_t span, double demand_kwh = 0.3) {
    HpSpec hp;
    hp.id = id;
    hp.p_nom_kw = 3.0;
    hp.kind = HpKind::OnOff;
    hp.cop_series = constant_series(span, 3.0);
    hp.tank_volume_m3 = 0.3;
    hp.loss_conductance_kw_per_k = 0.002;
    hp.env_temp_c = 15.0;
    hp.t_lo_series_c = constant_series(span, 35.0);
    hp.t_up_series_c = constant_series(span, 45.0);
    hp.heat_demand_kwh_series = constant_series(span, demand_kwh);
    hp.flex = TclFlex{16, 4, 8, 8};
    return hp;
}

inline EwhSpec make_ewh(const std::string& id, size_t span, double draw_kwh = 0.1) {
    EwhSpec ewh;
    ewh.id = id;
    ewh.p_nom_kw = 2.0;
    ewh.tank_volume_m3 = 0.2;
    ewh.loss_conductance_kw_per_k = 0.0015;
    ewh.env_temp_c = 15.0;
    ewh.t_lo_c = 50.0;
    ewh.t_up_c = 60.0;
    ewh.hot_water_kwh_series = constant_series(span, draw_kwh);
    ewh.flex_l1 = TclFlex{64, 19, 56, 6};
    ewh.flex_l2 = EwhFlexL2{64, 40, 12, 40, 6};
    return ewh;
}

inline EvSpec make_ev(const std::string& id, long arrival, long departure) {
    EvSpec ev;
    ev.id = id;
    ev.p_nom_kw = 11.0;
    ev.battery_kwh = 60.0;
    ev.efficiency = 0.9;
    ev.soc_min = 0.5;
    ev.k_max_starts_24h = 3;
    ev.sessions.push_back(EvSession{arrival, departure, 0.3, 0.8});
    return ev;
}

inline FleetScenario make_small_scenario(size_t days = 1) {
    const size_t span = 96 * days;
    FleetScenario sc;
    sc.grid = TimeGrid::make(0.25, 96, parse_timestamp("2021-06-07T00:00:00"));
    sc.series.inflexible_kw_actual = constant_series(span, 20.0);
    sc.series.ambient_c = constant_series(span, 18.0);
    sc.series.irradiation_wm2 = constant_series(span, 100.0);
    sc.hps.push_back(make_hp("hp1", span));
    sc.ewhs.push_back(make_ewh("ewh1", span));
    sc.evs.push_back(make_ev("ev1", 70, 94));
    for (int d = 0; d < 3; ++d) {
        HistoricalDay day;
        day.date = "2021-05-0" + std::to_string(d + 1);
        day.mean_temp_c = 14.0 + d;
        day.irradiation_sum = 2000.0 + 150.0 * d;
        day.total_ts_kw_series = constant_series(96, 25.0 + d);
        day.flexible_kw_series = constant_series(96, 4.0);
        sc.series.historical_days.push_back(day);
    }
    sc.alpha_table = {{-10.0, 1.0}, {0.0, 0.8}, {10.0, 0.5}, {20.0, 0.3}};
    sc.ripple.hp_blocked = {{44, 60}};
    sc.ripple.ewh_blocked = {{24, 88}};
    return sc;
}

// Small grid (2 h steps, 12 per day) so exhaustive cross-checks stay cheap.
inline FleetScenario toy_fleet(int days, int n_hp = 1, int n_ewh = 1, bool with_ev = true) {
    constexpr double kPi = 3.14159265358979323846;
    const int k = 12;
    const size_t span = static_cast<size_t>(k) * days;
    FleetScenario sc;
    sc.grid = TimeGrid::make(2.0, k, parse_timestamp("2021-06-07T00:00:00"));
    sc.series.inflexible_kw_actual.resize(span);
    sc.series.ambient_c.resize(span);
    sc.series.irradiation_wm2.resize(span);
    for (size_t t = 0; t < span; ++t) {
        const double sod = static_cast<double>(t % k);
        sc.series.inflexible_kw_actual[t] = 12.0 + 5.0 * std::sin(2 * kPi * sod / k);
        sc.series.ambient_c[t] = 14.0 + 4.0 * std::sin(2 * kPi * (sod - 3) / k);
        sc.series.irradiation_wm2[t] = std::max(0.0, 500.0 * std::sin(kPi * (sod - 3) / 9.0));
    }
    for (int i = 0; i < n_hp; ++i) {
        HpSpec hp;
        hp.id = "hp" + std::to_string(i + 1);
        hp.p_nom_kw = 3.0;
        hp.cop_series.assign(span, 3.0);
        hp.tank_volume_m3 = 2.6;  // one full-power step raises the tank about 6 K
        hp.loss_conductance_kw_per_k = 0.05;
        hp.env_temp_c = 15.0;
        hp.t_lo_series_c.assign(span, 35.0);
        hp.t_up_series_c.assign(span, 45.0);
        hp.heat_demand_kwh_series.assign(span, 9.0);
        hp.flex = TclFlex{4, 1, 2, 2};
        sc.hps.push_back(hp);
    }
    for (int i = 0; i < n_ewh; ++i) {
        EwhSpec w;
        w.id = "ewh" + std::to_string(i + 1);
        w.p_nom_kw = 2.0;
        w.tank_volume_m3 = 0.69;
        w.loss_conductance_kw_per_k = 0.01;
        w.env_temp_c = 15.0;
        w.t_lo_c = 50.0;
        w.t_up_c = 60.0;
        w.hot_water_kwh_series.assign(span, 1.6);
        w.flex_l1 = TclFlex{6, 1, 5, 1};
        w.flex_l2 = EwhFlexL2{6, 1, 1, 6, 1};
        sc.ewhs.push_back(w);
    }
    if (with_ev) {
        EvSpec ev;
        ev.id = "ev1";
        ev.p_nom_kw = 5.0;
        ev.battery_kwh = 20.0;  // 0.4 SoC per step at efficiency 0.8
        ev.efficiency = 0.8;
        ev.soc_min = 0.5;
        ev.k_max_starts_24h = 3;
        sc.evs.push_back(ev);
    }
    sc.alpha_table = {{-10.0, 1.0}, {20.0, 0.2}};
    for (int d = 0; d < 3; ++d) {
        HistoricalDay day;
        day.date = "2021-05-1" + std::to_string(d);
        day.mean_temp_c = 13.0 + d;
        day.irradiation_sum = 2800.0 + 50.0 * d;
        day.flexible_kw_series.assign(k, 3.0);
        day.total_ts_kw_series.resize(k);
        for (int t = 0; t < k; ++t)
            day.total_ts_kw_series[static_cast<size_t>(t)] =
                15.0 + 5.0 * std::sin(2 * kPi * t / k) + 0.1 * d;
        sc.series.historical_days.push_back(day);
    }
    return sc;
}

inline void add_session(FleetScenario& sc, long arrival, long departure, double soc0,
                        double goal) {
    sc.evs.at(0).sessions.push_back(EvSession{arrival, departure, soc0, goal});
}

inline std::string write_temp_json(const json& doc, const std::string& name) {
    std::string path = std::string(::testing::TempDir()) + name;
    std::ofstream out(path);
    out << doc.dump(2);
    return path;
}

}  // namespace dlcflex::testing

#endif
