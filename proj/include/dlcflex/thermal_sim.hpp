#ifndef DLCFLEX_THERMAL_SIM_HPP
#define DLCFLEX_THERMAL_SIM_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "dlcflex/scenario.hpp"

namespace dlcflex {

inline constexpr double kWaterDensityKgM3 = 1000.0;
inline constexpr double kWaterHeatJKgK = 4184.0;

// Tank heat capacity in kWh per Kelvin.
inline double tank_capacity_kwh_per_k(double volume_m3) {
    return volume_m3 * kWaterDensityKgM3 * kWaterHeatJKgK / 3.6e6;
}

struct TankState {
    double temp_c = 0;
    bool operating = false;
};

struct TankParams {
    double volume_m3 = 0;
    double loss_conductance_kw_per_k = 0;
    double env_temp_c = 15.0;
    double dt_hours = 0.25;
};

inline double tank_loss_kwh(const TankParams& p, double temp_prev_c) {
    return p.loss_conductance_kw_per_k * (temp_prev_c - p.env_temp_c) * p.dt_hours;
}

// Water temperature update: heat balance over one step, losses and demand
// evaluated at the previous temperature.
inline double tank_step(double temp_prev_c, double supplied_kwh, double demand_kwh, const TankParams& p) {
    const double cap = tank_capacity_kwh_per_k(p.volume_m3);
    return temp_prev_c + (supplied_kwh - demand_kwh - tank_loss_kwh(p, temp_prev_c)) / cap;
}

// Two-point control with blocking override, decided from the previous step's
// temperature. Transitions use strict comparisons; inside the band the state
// holds, so after blocking the device stays off until temp drops below t_lo.
inline bool hysteresis_step(bool prev_operating, double prev_temp_c, double t_lo_c, double t_up_c, bool unblocked) {
    if (!unblocked) return false;
    if (prev_temp_c < t_lo_c) return true;
    if (prev_temp_c > t_up_c) return false;
    return prev_operating;
}

struct DeviceTrace {
    std::vector<double> power_kw;
    std::vector<double> temp_c;         // end-of-step
    std::vector<std::uint8_t> operating;
    std::vector<double> supplied_kwh;
    std::vector<double> demand_kwh;
    std::vector<double> loss_kwh;
    double below_band_minutes = 0;
    double above_band_minutes = 0;
};

namespace detail {

inline void check_window(size_t start, size_t n, size_t span, const char* who) {
    if (start + n > span) throw std::out_of_range(std::string(who) + ": command window exceeds scenario span");
}

}  // namespace detail

inline DeviceTrace simulate_hp(const HpSpec& spec, TankState initial, const std::vector<std::uint8_t>& unblocked,
                               size_t start_step, double dt_hours) {
    const size_t n = unblocked.size();
    detail::check_window(start_step, n, spec.t_lo_series_c.size(), "simulate_hp");
    TankParams tank{spec.tank_volume_m3, spec.loss_conductance_kw_per_k, spec.env_temp_c, dt_hours};
    const double cap = tank_capacity_kwh_per_k(spec.tank_volume_m3);

    DeviceTrace tr;
    tr.power_kw.resize(n);
    tr.temp_c.resize(n);
    tr.operating.resize(n);
    tr.supplied_kwh.resize(n);
    tr.demand_kwh.resize(n);
    tr.loss_kwh.resize(n);

    double temp = initial.temp_c;
    bool on = initial.operating;
    for (size_t i = 0; i < n; ++i) {
        const size_t t = start_step + i;
        const double t_lo = spec.t_lo_series_c[t];
        const double t_up = spec.t_up_series_c[t];
        const double eta = spec.cop_series[t];
        const double demand = spec.heat_demand_kwh_series[t];
        const double loss = tank_loss_kwh(tank, temp);

        on = hysteresis_step(on, temp, t_lo, t_up, unblocked[i] != 0);
        double power = 0;
        if (on) {
            if (spec.kind == HpKind::OnOff) {
                power = spec.p_nom_kw;
            } else {
                const double e_lo = std::max(0.0, (t_lo - temp) * cap);
                const double p_hat = (demand + loss + e_lo) / (eta * dt_hours);
                power = std::clamp(p_hat, spec.p_min_kw, spec.p_nom_kw);
            }
        }
        const double supplied = power * eta * dt_hours;
        temp += (supplied - demand - loss) / cap;

        tr.power_kw[i] = power;
        tr.temp_c[i] = temp;
        tr.operating[i] = on ? 1 : 0;
        tr.supplied_kwh[i] = supplied;
        tr.demand_kwh[i] = demand;
        tr.loss_kwh[i] = loss;
        if (temp < t_lo) tr.below_band_minutes += dt_hours * 60.0;
        if (temp > t_up) tr.above_band_minutes += dt_hours * 60.0;
    }
    return tr;
}

inline DeviceTrace simulate_ewh(const EwhSpec& spec, TankState initial, const std::vector<std::uint8_t>& unblocked,
                                size_t start_step, double dt_hours) {
    const size_t n = unblocked.size();
    detail::check_window(start_step, n, spec.hot_water_kwh_series.size(), "simulate_ewh");
    TankParams tank{spec.tank_volume_m3, spec.loss_conductance_kw_per_k, spec.env_temp_c, dt_hours};
    const double cap = tank_capacity_kwh_per_k(spec.tank_volume_m3);

    DeviceTrace tr;
    tr.power_kw.resize(n);
    tr.temp_c.resize(n);
    tr.operating.resize(n);
    tr.supplied_kwh.resize(n);
    tr.demand_kwh.resize(n);
    tr.loss_kwh.resize(n);

    double temp = initial.temp_c;
    bool on = initial.operating;
    for (size_t i = 0; i < n; ++i) {
        const size_t t = start_step + i;
        const double demand = spec.hot_water_kwh_series[t];
        const double loss = tank_loss_kwh(tank, temp);

        on = hysteresis_step(on, temp, spec.t_lo_c, spec.t_up_c, unblocked[i] != 0);
        const double power = on ? spec.p_nom_kw : 0.0;
        const double supplied = power * dt_hours;
        temp += (supplied - demand - loss) / cap;

        tr.power_kw[i] = power;
        tr.temp_c[i] = temp;
        tr.operating[i] = on ? 1 : 0;
        tr.supplied_kwh[i] = supplied;
        tr.demand_kwh[i] = demand;
        tr.loss_kwh[i] = loss;
        if (temp < spec.t_lo_c) tr.below_band_minutes += dt_hours * 60.0;
        if (temp > spec.t_up_c) tr.above_band_minutes += dt_hours * 60.0;
    }
    return tr;
}

struct EvStepRequirement {
    int n_goal = 0;
    int n_min = 0;
};

// Charging steps needed to reach the departure goal and the safety minimum.
inline EvStepRequirement ev_required_steps(const EvSession& ses, const EvSpec& spec, double dt_hours) {
    const double kwh_per_step = spec.p_nom_kw * spec.efficiency * dt_hours;
    auto steps_for = [&](double target_soc) {
        const double need_kwh = (target_soc - ses.soc_at_arrival) * spec.battery_kwh;
        if (need_kwh <= 0) return 0;
        return static_cast<int>(std::ceil(need_kwh / kwh_per_step - 1e-12));
    };
    EvStepRequirement r;
    r.n_goal = steps_for(ses.soc_goal);
    r.n_min = std::min(steps_for(spec.soc_min), r.n_goal);
    return r;
}

struct EvTrace {
    std::vector<double> power_kw;
    std::vector<double> soc;  // end-of-step
    std::vector<std::uint8_t> plugged;
    std::vector<std::uint8_t> charging;
};

// Plugged-in indicator over [start_step, start_step + n).
inline std::vector<std::uint8_t> ev_plugged_indicator(const EvSpec& spec, size_t start_step, size_t n) {
    std::vector<std::uint8_t> phi(n, 0);
    for (const auto& ses : spec.sessions) {
        const long lo = std::max<long>(ses.arrival_step, static_cast<long>(start_step));
        const long hi = std::min<long>(ses.departure_step, static_cast<long>(start_step + n));
        for (long t = lo; t < hi; ++t) phi[static_cast<size_t>(t) - start_step] = 1;
    }
    return phi;
}

// Battery trace under explicit charging commands. SoC resets to the session's
// arrival value when a session begins inside the window; `soc0` seeds a window
// that starts mid-session. Commanding charge while unplugged is an error.
inline EvTrace simulate_ev(const EvSpec& spec, const std::vector<std::uint8_t>& commands, size_t start_step,
                           double dt_hours, std::optional<double> soc0 = std::nullopt) {
    const size_t n = commands.size();
    EvTrace tr;
    tr.power_kw.resize(n);
    tr.soc.resize(n);
    tr.plugged = ev_plugged_indicator(spec, start_step, n);
    tr.charging.resize(n);

    const double soc_per_step = spec.p_nom_kw * spec.efficiency * dt_hours / spec.battery_kwh;
    double soc = soc0.value_or(0.0);
    bool have_soc = soc0.has_value();
    for (size_t i = 0; i < n; ++i) {
        const long t = static_cast<long>(start_step + i);
        for (const auto& ses : spec.sessions) {
            if (ses.arrival_step == t) {
                soc = ses.soc_at_arrival;
                have_soc = true;
            }
        }
        const bool plugged = tr.plugged[i] != 0;
        const bool charge = commands[i] != 0;
        if (charge && !plugged)
            throw std::invalid_argument("simulate_ev '" + spec.id + "': charge command at unplugged step " +
                                        std::to_string(t));
        if (plugged && !have_soc)
            throw std::invalid_argument("simulate_ev '" + spec.id + "': window starts mid-session without soc0");
        if (charge) {
            soc = std::min(1.0, soc + soc_per_step);
            tr.power_kw[i] = spec.p_nom_kw;
        }
        tr.charging[i] = charge ? 1 : 0;
        tr.soc[i] = soc;
    }
    return tr;
}

}  // namespace dlcflex

#endif
