#ifndef DLCFLEX_DISPATCH_HPP
#define DLCFLEX_DISPATCH_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dlcflex/csv.hpp"
#include "dlcflex/feasibility.hpp"
#include "dlcflex/flexopt.hpp"
#include "dlcflex/forecast.hpp"
#include "dlcflex/scenario.hpp"
#include "dlcflex/thermal_sim.hpp"

namespace dlcflex::dispatch {

struct RollingConfig {
    Formulation formulation = Formulation::L1;
    int kappa = 4;
    double time_limit_s = 300.0;
    bool warmstart = true;
    int init_days = 2;
    double ticks_per_second = 20000.0;
    // Charging stations start on arrival and the optimizer leaves EVs alone.
    bool ev_immediate = false;
    // Chance per device and iteration that the commands are never delivered
    // and the device free-runs through the slice. Emulates transmission
    // faults; estimation-side rules may be violated in the applied log while
    // this is enabled.
    double command_loss_prob = 0.0;
    flexopt::FlexOptions flex;
};

// Applied commands of the most recent 24h window, oldest first. The length is
// pinned at construction; every push drops the oldest entry.
class HistoryBuffer {
  public:
    HistoryBuffer() = default;
    HistoryBuffer(int k, int fill) : v_(static_cast<size_t>(k), fill) {}

    void push(int bit) {
        v_.erase(v_.begin());
        v_.push_back(bit);
    }
    const std::vector<int>& values() const { return v_; }
    int size() const { return static_cast<int>(v_.size()); }

  private:
    std::vector<int> v_;
};

struct SolveRecord {
    int iteration = 0;
    long window_start = 0;  // absolute step of the window's first command
    std::string status;
    double objective = 0;
    double gap = 0;
    double wall_s = 0;  // deterministic work-clock seconds
    int corrections = 0;
    bool degraded = false;  // fallback plan applied instead of a solver plan
};

struct RunMeta {
    std::string formulation = "none";
    int kappa = 1;
    unsigned seed = 0;
    int init_days = 0;
    long first_step = 0;  // absolute step of log row 0
    double dt_hours = 0.25;
    std::string grid_start;  // timestamp of absolute step 0
    bool ev_immediate = false;
    double p_ewh_nom_total_kw = 0.0;  // for peak-reduction ratios
    std::string scenario_path;
};

struct RunLog {
    RunMeta meta;
    std::vector<std::string> device_ids;    // HPs, then EWHs, then EVs
    std::vector<std::string> device_kinds;  // "hp" | "ewh" | "ev"
    std::vector<std::vector<int>> u_applied, u_requested;  // [device][row]
    std::vector<double> p_inf_kw, p_hp_kw, p_ewh_kw, p_ev_kw, p_total_kw;
    std::vector<SolveRecord> solves;

    long steps() const { return static_cast<long>(p_total_kw.size()); }

    void save(const std::string& dir) const;
    static RunLog load(const std::string& dir);
};

inline std::string status_name(milp::SolveStatus s) {
    switch (s) {
        case milp::SolveStatus::Optimal: return "optimal";
        case milp::SolveStatus::FeasibleGap: return "feasible";
        case milp::SolveStatus::TimeLimit: return "time_limit";
        case milp::SolveStatus::Infeasible: return "infeasible";
        case milp::SolveStatus::NoIncumbent: return "no_incumbent";
    }
    return "?";
}

// ---- Fixed reference schedules ----

// Daily blocking windows expanded over n steps starting at step-of-day
// `start_sod`: 0 inside a window, 1 otherwise.
inline std::vector<int> ripple_schedule(const std::vector<std::pair<int, int>>& blocked_windows,
                                        int steps_per_day, int start_sod, long n_steps) {
    std::vector<std::uint8_t> blocked(static_cast<size_t>(steps_per_day), 0);
    for (const auto& [a, b] : blocked_windows) {
        if (a < 0 || b > steps_per_day || a >= b)
            throw ValidationError("ripple window [" + std::to_string(a) + "," + std::to_string(b) +
                                  ") outside the day grid");
        for (int t = a; t < b; ++t) blocked[static_cast<size_t>(t)] = 1;
    }
    std::vector<int> u(static_cast<size_t>(n_steps), 1);
    for (long i = 0; i < n_steps; ++i)
        if (blocked[static_cast<size_t>((start_sod + i) % steps_per_day)]) u[static_cast<size_t>(i)] = 0;
    return u;
}

// The class-wide windows must leave every device its 24h unblocked share.
inline void validate_ripple_budgets(const FleetScenario& sc) {
    const int K = sc.grid.steps_per_day;
    auto blocked_count = [&](const std::vector<std::pair<int, int>>& ws) {
        const std::vector<int> u = ripple_schedule(ws, K, 0, K);
        int n = 0;
        for (int b : u) n += 1 - b;
        return n;
    };
    const int hp_blocked = blocked_count(sc.ripple.hp_blocked);
    for (const auto& hp : sc.hps)
        if (hp_blocked > hp.flex.k_block_24h)
            throw ValidationError("ripple blocks " + std::to_string(hp_blocked) + " steps/day, over the " +
                                  std::to_string(hp.flex.k_block_24h) + "-step budget of HP " + hp.id);
    const int ewh_blocked = blocked_count(sc.ripple.ewh_blocked);
    for (const auto& ewh : sc.ewhs)
        if (ewh_blocked > ewh.block_budget_24h())
            throw ValidationError("ripple blocks " + std::to_string(ewh_blocked) +
                                  " steps/day, over the " + std::to_string(ewh.block_budget_24h()) +
                                  "-step budget of EWH " + ewh.id);
}

// ---- Command verification ----

// Step-through verification of a command slice against the device history:
// blocking that would break a rule is lifted (never added). When unblocking
// alone cannot restore feasibility the slice is replaced by the
// obligation-completing default plan. Returns the number of changed steps.
inline int verify_and_correct(const std::vector<int>& history, std::vector<int>& commands,
                              const TclRule& rule, bool* fell_back = nullptr) {
    if (fell_back) *fell_back = false;
    const std::vector<int> before = commands;
    bool stuck = false;
    correct_tcl(history, commands, rule, &stuck);
    if (stuck || !check_tcl(history, commands, rule).empty()) {
        flexopt::TclHorizon e;
        e.rule = rule;
        e.hist_u = history;
        commands = flexopt::fallback_plan_tcl(e, static_cast<int>(commands.size()));
        if (fell_back) *fell_back = true;
    }
    int changed = 0;
    for (size_t i = 0; i < commands.size(); ++i) changed += commands[i] != before[i] ? 1 : 0;
    return changed;
}

// ---- Fleet runtime state ----

struct TclRuntime {
    TankState tank;
    HistoryBuffer hist;
};

struct EvRuntime {
    double soc = 0;
    HistoryBuffer u, phi;
};

struct FleetState {
    std::vector<TclRuntime> hp, ewh;
    std::vector<EvRuntime> ev;
};

// Tanks start mid-band and idle; the initialization free-run washes the
// arbitrary start out before the evaluated span begins.
inline FleetState init_fleet_state(const FleetScenario& sc) {
    FleetState st;
    const int K = sc.grid.steps_per_day;
    for (const auto& h : sc.hps) {
        TclRuntime r;
        r.tank.temp_c = 0.5 * (h.t_lo_series_c.at(0) + h.t_up_series_c.at(0));
        r.tank.operating = false;
        r.hist = HistoryBuffer(K, 1);
        st.hp.push_back(std::move(r));
    }
    for (const auto& e : sc.ewhs) {
        TclRuntime r;
        r.tank.temp_c = 0.5 * (e.t_lo_c + e.t_up_c);
        r.tank.operating = false;
        r.hist = HistoryBuffer(K, 1);
        st.ewh.push_back(std::move(r));
    }
    for (size_t i = 0; i < sc.evs.size(); ++i)
        st.ev.push_back({0.0, HistoryBuffer(K, 0), HistoryBuffer(K, 0)});
    return st;
}

namespace detail {

inline const EvSession* session_at(const EvSpec& spec, long t) {
    for (const auto& s : spec.sessions)
        if (s.arrival_step <= t && t < s.departure_step) return &s;
    return nullptr;
}

inline std::vector<double> slice(const std::vector<double>& v, long s, int n, const std::string& who) {
    if (s < 0 || s + n > static_cast<long>(v.size()))
        throw ValidationError(who + ": series does not cover steps [" + std::to_string(s) + "," +
                              std::to_string(s + n) + ")");
    return std::vector<double>(v.begin() + s, v.begin() + s + n);
}

inline TclRule hp_rule(const HpSpec& h, int K) {
    return TclRule{K,
                   h.flex.k_block_24h,
                   h.flex.k_min_block,
                   h.flex.k_max_block,
                   h.flex.k_min_unblock,
                   -1,
                   -1};
}

// Constraint families per scheme: the exact formulation keeps only the 24h
// budget for water heaters, the estimation schemes add duration rules, and
// the profile-based ones swap the maximum block for a bounded unblocked
// period plus the reheat-run length.
inline TclRule ewh_rule(const EwhSpec& e, Formulation f, int K) {
    if (f == Formulation::L1) {
        if (!e.flex_l1) throw ValidationError("EWH " + e.id + " lacks flex_l1 settings");
        return TclRule{K, e.flex_l1->k_block_24h, e.flex_l1->k_min_block, e.flex_l1->k_max_block,
                       e.flex_l1->k_min_unblock, -1, -1};
    }
    if (f == Formulation::L2 || f == Formulation::L2PF) {
        if (!e.flex_l2) throw ValidationError("EWH " + e.id + " lacks flex_l2 settings");
        return TclRule{K,
                       e.flex_l2->k_block_24h,
                       e.flex_l2->k_min_block,
                       -1,
                       e.flex_l2->k_min_unblock,
                       e.flex_l2->k_max_unblock,
                       e.flex_l2->k_run};
    }
    // Exact scheme and the fixed references: budget only.
    return TclRule{K, e.block_budget_24h(), 1, -1, 1, -1, -1};
}

}  // namespace detail

// ---- Inflexible-load estimation (limited-information schemes) ----

// Per calendar day, matches the most similar historical day and reads its
// inflexible profile; day features come from the scenario's weather series
// (day-ahead forecasts are assumed exact). Matches are cached per day.
class InflexibleEstimator {
  public:
    explicit InflexibleEstimator(const FleetScenario& sc)
        : sc_(sc), off_(sc.grid.start_step_of_day()), k_(sc.grid.steps_per_day) {}

    long day_of(long t) const { return (off_ + t) / k_; }
    int step_of_day(long t) const { return static_cast<int>((off_ + t) % k_); }

    std::vector<double> predict(long s, int n) {
        std::vector<double> out(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            const long t = s + i;
            out[static_cast<size_t>(i)] = match_for_day(day_of(t)).inflexible_kw.at(
                static_cast<size_t>(step_of_day(t)));
        }
        return out;
    }

    // Average total power of the day matched for the window-start day.
    double msd_average_total(long s) { return match_for_day(day_of(s)).p_ref_kw; }

    const MsdMatch& match_for_day(long d) {
        auto it = cache_.find(d);
        if (it != cache_.end()) return it->second;
        DayFeatures f;
        const long lo = std::max<long>(0, d * k_ - off_);
        const long hi = std::min<long>(static_cast<long>(sc_.span_steps()), (d + 1) * k_ - off_);
        if (lo >= hi) throw ValidationError("no scenario data for day index " + std::to_string(d));
        double temp = 0, irr = 0;
        for (long t = lo; t < hi; ++t) {
            temp += sc_.series.ambient_c.at(static_cast<size_t>(t));
            irr += sc_.series.irradiation_wm2.at(static_cast<size_t>(t));
        }
        f.mean_temp_c = temp / static_cast<double>(hi - lo);
        f.irradiation_sum = irr;
        return cache_.emplace(d, select_msd(f, sc_.series.historical_days)).first->second;
    }

  private:
    const FleetScenario& sc_;
    int off_, k_;
    std::map<long, MsdMatch> cache_;
};

// ---- Window assembly ----

struct WindowModel {
    flexopt::HorizonInputs in;
    double p_ref_kw = 0;
    long window_start = 0;
    bool ev_all_sessions = false;       // sessions arriving later in the window are planned too
    std::vector<int> ev_model_index;    // per fleet vehicle; -1 when left to the charging station
};

inline WindowModel assemble_window(const FleetScenario& sc, const RollingConfig& cfg,
                                   const FleetState& st, InflexibleEstimator* est, long s, int T) {
    const Formulation f = cfg.formulation;
    const int K = sc.grid.steps_per_day;
    const double dt = sc.grid.dt_hours;
    const bool actual_inf = f == Formulation::Ideal || f == Formulation::L2PF;

    WindowModel wm;
    wm.window_start = s;
    wm.ev_all_sessions = actual_inf;
    wm.ev_model_index.assign(sc.evs.size(), -1);

    flexopt::HorizonInputs& in = wm.in;
    in.horizon = T;
    in.k = K;
    in.dt_hours = dt;
    in.p_inf_kw = actual_inf ? detail::slice(sc.series.inflexible_kw_actual, s, T, "inflexible_kw")
                             : est->predict(s, T);

    std::vector<double> alpha;
    if (f != Formulation::Ideal && !sc.hps.empty() && !sc.alpha_table.empty()) {
        alpha.resize(static_cast<size_t>(T));
        for (int t = 0; t < T; ++t)
            alpha[static_cast<size_t>(t)] =
                alpha_at(sc.alpha_table, sc.series.ambient_c.at(static_cast<size_t>(s + t)));
    }

    for (size_t i = 0; i < sc.hps.size(); ++i) {
        const HpSpec& h = sc.hps[i];
        flexopt::TclHorizon e;
        e.id = h.id;
        e.rule = detail::hp_rule(h, K);
        e.hist_u = st.hp[i].hist.values();
        e.p_nom_kw = h.p_nom_kw;
        if (f == Formulation::Ideal) {
            e.has_plant = true;
            e.modulating = h.kind == HpKind::Modulating;
            e.p_min_kw = h.p_min_kw;
            e.temp_start_c = st.hp[i].tank.temp_c;
            e.on_start = st.hp[i].tank.operating;
            e.volume_m3 = h.tank_volume_m3;
            e.loss_kw_per_k = h.loss_conductance_kw_per_k;
            e.env_temp_c = h.env_temp_c;
            e.t_lo_c = detail::slice(h.t_lo_series_c, s, T, h.id + ".t_lo");
            e.t_up_c = detail::slice(h.t_up_series_c, s, T, h.id + ".t_up");
            e.demand_kwh = detail::slice(h.heat_demand_kwh_series, s, T, h.id + ".demand");
            e.eta = detail::slice(h.cop_series, s, T, h.id + ".cop");
        } else {
            e.alpha = alpha;
        }
        in.hps.push_back(std::move(e));
    }

    for (size_t i = 0; i < sc.ewhs.size(); ++i) {
        const EwhSpec& w = sc.ewhs[i];
        flexopt::TclHorizon e;
        e.id = w.id;
        e.rule = detail::ewh_rule(w, f, K);
        e.hist_u = st.ewh[i].hist.values();
        e.p_nom_kw = w.p_nom_kw;
        if (f == Formulation::Ideal) {
            e.has_plant = true;
            e.temp_start_c = st.ewh[i].tank.temp_c;
            e.on_start = st.ewh[i].tank.operating;
            e.volume_m3 = w.tank_volume_m3;
            e.loss_kw_per_k = w.loss_conductance_kw_per_k;
            e.env_temp_c = w.env_temp_c;
            e.t_lo_c.assign(static_cast<size_t>(T), w.t_lo_c);
            e.t_up_c.assign(static_cast<size_t>(T), w.t_up_c);
            e.demand_kwh = detail::slice(w.hot_water_kwh_series, s, T, w.id + ".hot_water");
            e.eta.assign(static_cast<size_t>(T), 1.0);
        } else if (f == Formulation::L2 || f == Formulation::L2PF) {
            e.l2_profile = true;
        }
        in.ewhs.push_back(std::move(e));
    }

    if (!cfg.ev_immediate) {
        for (size_t i = 0; i < sc.evs.size(); ++i) {
            const EvSpec& v = sc.evs[i];
            flexopt::EvHorizon e;
            e.id = v.id;
            e.p_nom_kw = v.p_nom_kw;
            e.k_max_starts_24h = v.k_max_starts_24h;
            const std::vector<std::uint8_t> phi = ev_plugged_indicator(v, static_cast<size_t>(s),
                                                                       static_cast<size_t>(T));
            e.phi.assign(phi.begin(), phi.end());
            e.hist_u = st.ev[i].u.values();
            e.hist_phi = st.ev[i].phi.values();
            for (const EvSession& ses : v.sessions) {
                if (ses.departure_step <= s || ses.arrival_step >= s + T) continue;
                flexopt::EvWindow w;
                w.arrival = static_cast<int>(ses.arrival_step - s);
                w.departure = static_cast<int>(ses.departure_step - s);
                // A running session plans the steps still missing from the
                // current state of charge; the forced-charge span stays
                // anchored at the arrival.
                EvSession from_now = ses;
                if (w.arrival < 0) from_now.soc_at_arrival = st.ev[i].soc;
                w.n_goal = ev_required_steps(from_now, v, dt).n_goal;
                w.n_min = ev_required_steps(ses, v, dt).n_min;
                e.sessions.push_back(w);
            }
            if (f == Formulation::L1 || f == Formulation::L2)
                e = flexopt::restrict_to_ongoing(std::move(e));
            wm.ev_model_index[i] = static_cast<int>(in.evs.size());
            in.evs.push_back(std::move(e));
        }
    } else if (actual_inf) {
        // Vehicles charge on arrival; the perfect-information schemes see that
        // load in advance and price it with the inflexible power.
        for (size_t i = 0; i < sc.evs.size(); ++i) {
            const EvSpec& v = sc.evs[i];
            double soc = st.ev[i].soc;
            const double inc = v.p_nom_kw * v.efficiency * dt / v.battery_kwh;
            for (int t = 0; t < T; ++t) {
                const long tt = s + t;
                const EvSession* ses = detail::session_at(v, tt);
                if (!ses) continue;
                if (ses->arrival_step == tt) soc = ses->soc_at_arrival;
                if (soc < ses->soc_goal - 1e-9) {
                    soc = std::min(1.0, soc + inc);
                    in.p_inf_kw[static_cast<size_t>(t)] += v.p_nom_kw;
                }
            }
        }
    }

    if (f == Formulation::L2PF) {
        // Perfect-foresight reference: the scenario's fixed value, whatever
        // policy the estimation schemes use.
        wm.p_ref_kw = sc.p_ref_policy.fixed_kw;
    } else if (f == Formulation::L1 || f == Formulation::L2) {
        wm.p_ref_kw = sc.p_ref_policy.kind == PrefPolicy::Kind::Fixed
                          ? sc.p_ref_policy.fixed_kw
                          : est->msd_average_total(s);
    }
    return wm;
}

// ---- Applying commands to the plant ----

namespace detail {

struct StepBlock {
    // Applied commands per fleet device over the slice; EV entries may start
    // empty and are filled by the applier.
    std::vector<std::vector<int>> hp_u, ewh_u, ev_u;
    // What the controller asked for (logged next to the applied values).
    std::vector<std::vector<int>> hp_req, ewh_req, ev_req;
};

// Simulates one command slice, advancing tank states, SoCs and history
// buffers. EV commands are taken literally for controller-owned sessions and
// fall back to charge-on-arrival for sessions the controller does not own
// (cutoff: sessions arriving after `ev_cutoff[i]` are station-owned; -1 owns
// none, LONG_MAX owns all). When `log` is given, one row per step is
// appended with the actual inflexible load from the scenario series.
inline void apply_block(const FleetScenario& sc, FleetState& st, long s, int n, StepBlock& blk,
                        const std::vector<long>& ev_cutoff, RunLog* log) {
    const double dt = sc.grid.dt_hours;
    std::vector<double> p_hp(static_cast<size_t>(n), 0.0), p_ewh(static_cast<size_t>(n), 0.0),
        p_ev(static_cast<size_t>(n), 0.0);

    for (size_t i = 0; i < sc.hps.size(); ++i) {
        std::vector<std::uint8_t> u8(blk.hp_u[i].begin(), blk.hp_u[i].end());
        const DeviceTrace tr = simulate_hp(sc.hps[i], st.hp[i].tank, u8, static_cast<size_t>(s), dt);
        st.hp[i].tank.temp_c = tr.temp_c.back();
        st.hp[i].tank.operating = tr.operating.back() != 0;
        for (int t = 0; t < n; ++t) {
            p_hp[static_cast<size_t>(t)] += tr.power_kw[static_cast<size_t>(t)];
            st.hp[i].hist.push(blk.hp_u[i][static_cast<size_t>(t)]);
        }
    }
    for (size_t i = 0; i < sc.ewhs.size(); ++i) {
        std::vector<std::uint8_t> u8(blk.ewh_u[i].begin(), blk.ewh_u[i].end());
        const DeviceTrace tr =
            simulate_ewh(sc.ewhs[i], st.ewh[i].tank, u8, static_cast<size_t>(s), dt);
        st.ewh[i].tank.temp_c = tr.temp_c.back();
        st.ewh[i].tank.operating = tr.operating.back() != 0;
        for (int t = 0; t < n; ++t) {
            p_ewh[static_cast<size_t>(t)] += tr.power_kw[static_cast<size_t>(t)];
            st.ewh[i].hist.push(blk.ewh_u[i][static_cast<size_t>(t)]);
        }
    }

    for (size_t i = 0; i < sc.evs.size(); ++i) {
        const EvSpec& v = sc.evs[i];
        const std::vector<int>& req = blk.ev_req[i];
        std::vector<int>& applied = blk.ev_u[i];
        if (applied.empty()) {
            applied.assign(static_cast<size_t>(n), 0);
            // Mirrors the battery recurrence of simulate_ev so the charging
            // decision sees the same SoC the simulation will produce.
            double soc = st.ev[i].soc;
            const double inc = v.p_nom_kw * v.efficiency * dt / v.battery_kwh;
            for (int t = 0; t < n; ++t) {
                const long tt = s + t;
                const EvSession* ses = session_at(v, tt);
                if (!ses) continue;
                if (ses->arrival_step == tt) soc = ses->soc_at_arrival;
                int u = 0;
                if (ses->arrival_step <= ev_cutoff[i])
                    u = req.empty() ? 0 : req[static_cast<size_t>(t)];
                else if (soc < ses->soc_goal - 1e-9)
                    u = 1;
                if (u) soc = std::min(1.0, soc + inc);
                applied[static_cast<size_t>(t)] = u;
            }
        }
        std::vector<std::uint8_t> u8(applied.begin(), applied.end());
        const EvTrace tr = simulate_ev(v, u8, static_cast<size_t>(s), dt, st.ev[i].soc);
        st.ev[i].soc = tr.soc.back();
        for (int t = 0; t < n; ++t) {
            p_ev[static_cast<size_t>(t)] += tr.power_kw[static_cast<size_t>(t)];
            st.ev[i].u.push(applied[static_cast<size_t>(t)]);
            st.ev[i].phi.push(tr.plugged[static_cast<size_t>(t)]);
        }
    }

    if (!log) return;
    for (int t = 0; t < n; ++t) {
        const double inf = sc.series.inflexible_kw_actual.at(static_cast<size_t>(s + t));
        log->p_inf_kw.push_back(inf);
        log->p_hp_kw.push_back(p_hp[static_cast<size_t>(t)]);
        log->p_ewh_kw.push_back(p_ewh[static_cast<size_t>(t)]);
        log->p_ev_kw.push_back(p_ev[static_cast<size_t>(t)]);
        log->p_total_kw.push_back(inf + p_hp[static_cast<size_t>(t)] +
                                  p_ewh[static_cast<size_t>(t)] + p_ev[static_cast<size_t>(t)]);
    }
    size_t col = 0;
    auto append = [&](const std::vector<std::vector<int>>& applied,
                      const std::vector<std::vector<int>>& requested) {
        for (size_t i = 0; i < applied.size(); ++i, ++col) {
            for (int t = 0; t < n; ++t) {
                log->u_applied[col].push_back(applied[i][static_cast<size_t>(t)]);
                const int r = requested[i].empty() ? applied[i][static_cast<size_t>(t)]
                                                   : requested[i][static_cast<size_t>(t)];
                log->u_requested[col].push_back(r);
            }
        }
    };
    append(blk.hp_u, blk.hp_req);
    append(blk.ewh_u, blk.ewh_req);
    append(blk.ev_u, blk.ev_req);
}

inline StepBlock free_run_block(const FleetScenario& sc, int n) {
    StepBlock blk;
    blk.hp_u.assign(sc.hps.size(), std::vector<int>(static_cast<size_t>(n), 1));
    blk.ewh_u.assign(sc.ewhs.size(), std::vector<int>(static_cast<size_t>(n), 1));
    blk.ev_u.assign(sc.evs.size(), {});
    blk.hp_req.assign(sc.hps.size(), {});
    blk.ewh_req.assign(sc.ewhs.size(), {});
    blk.ev_req.assign(sc.evs.size(), {});
    return blk;
}

inline std::vector<int> take(const std::vector<int>& v, int n) {
    return std::vector<int>(v.begin(), v.begin() + std::min<size_t>(v.size(), static_cast<size_t>(n)));
}

// Previous window's plans moved forward by `shift` steps and padded with the
// do-nothing defaults (TCL unblocked, EV idle).
inline flexopt::PlanSet shift_plans(const flexopt::PlanSet& prev, int shift, int T) {
    auto move_one = [&](const std::vector<int>& u, int pad) {
        std::vector<int> out(static_cast<size_t>(T), pad);
        for (int t = 0; t < T && t + shift < static_cast<int>(u.size()); ++t)
            out[static_cast<size_t>(t)] = u[static_cast<size_t>(t + shift)];
        return out;
    };
    flexopt::PlanSet out;
    for (const auto& u : prev.hp_u) out.hp_u.push_back(move_one(u, 1));
    for (const auto& u : prev.ewh_u) out.ewh_u.push_back(move_one(u, 1));
    for (const auto& u : prev.ev_u) out.ev_u.push_back(move_one(u, 0));
    return out;
}

}  // namespace detail

// ---- The rolling loop ----

inline RunLog run_rolling_horizon(const FleetScenario& sc, const RollingConfig& cfg,
                                  unsigned seed = 0) {
    sc.grid.validate();
    const int K = sc.grid.steps_per_day;
    const int T_full = sc.grid.horizon_steps;
    const long span = static_cast<long>(sc.span_steps());
    const Formulation f = cfg.formulation;

    if (cfg.kappa < 1 || cfg.kappa > T_full)
        throw ValidationError("kappa must be between 1 and the horizon length");
    if (cfg.init_days < 0) throw ValidationError("init_days must be >= 0");
    if (is_optimizing(f)) {
        if (cfg.time_limit_s <= 0) throw ValidationError("time_limit_s must be positive");
        const auto findings = validate_settings(sc, f);
        if (!findings.empty())
            throw ValidationError("scenario incomplete for " + to_string(f) + ": " +
                                  (findings[0].device_id.empty() ? "" : findings[0].device_id + ".") +
                                  findings[0].field + ": " + findings[0].message);
    }
    if (f == Formulation::Ripple) validate_ripple_budgets(sc);

    const long init_steps = static_cast<long>(cfg.init_days) * K;
    if (span <= init_steps)
        throw ValidationError("scenario span (" + std::to_string(span) +
                              " steps) does not extend past the initialization free-run");

    RunLog log;
    log.meta.formulation = to_string(f);
    log.meta.kappa = cfg.kappa;
    log.meta.seed = seed;
    log.meta.init_days = cfg.init_days;
    log.meta.first_step = init_steps;
    log.meta.dt_hours = sc.grid.dt_hours;
    log.meta.grid_start = format_timestamp(sc.grid.start);
    log.meta.ev_immediate = cfg.ev_immediate;
    for (const auto& d : sc.ewhs) log.meta.p_ewh_nom_total_kw += d.p_nom_kw;
    for (const auto& d : sc.hps) {
        log.device_ids.push_back(d.id);
        log.device_kinds.push_back("hp");
    }
    for (const auto& d : sc.ewhs) {
        log.device_ids.push_back(d.id);
        log.device_kinds.push_back("ewh");
    }
    for (const auto& d : sc.evs) {
        log.device_ids.push_back(d.id);
        log.device_kinds.push_back("ev");
    }
    log.u_applied.assign(log.device_ids.size(), {});
    log.u_requested.assign(log.device_ids.size(), {});

    FleetState st = init_fleet_state(sc);
    const std::vector<long> station_owned(sc.evs.size(), -1);
    if (init_steps > 0) {
        detail::StepBlock blk = detail::free_run_block(sc, static_cast<int>(init_steps));
        detail::apply_block(sc, st, 0, static_cast<int>(init_steps), blk, station_owned, nullptr);
    }

    const long n_eval = span - init_steps;
    if (!is_optimizing(f)) {
        detail::StepBlock blk = detail::free_run_block(sc, static_cast<int>(n_eval));
        if (f == Formulation::Ripple) {
            const int sod = static_cast<int>((sc.grid.start_step_of_day() + init_steps) % K);
            const std::vector<int> hp_u = ripple_schedule(sc.ripple.hp_blocked, K, sod, n_eval);
            const std::vector<int> ewh_u = ripple_schedule(sc.ripple.ewh_blocked, K, sod, n_eval);
            blk.hp_u.assign(sc.hps.size(), hp_u);
            blk.ewh_u.assign(sc.ewhs.size(), ewh_u);
        }
        detail::apply_block(sc, st, init_steps, static_cast<int>(n_eval), blk, station_owned, &log);
        return log;
    }

    InflexibleEstimator est(sc);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    flexopt::PlanSet prev;
    bool have_prev = false;

    long s = init_steps;
    int iter = 0;
    while (s < span) {
        const int T = static_cast<int>(std::min<long>(T_full, span - s));
        const int n_apply = static_cast<int>(std::min<long>(cfg.kappa, span - s));

        WindowModel wm = assemble_window(sc, cfg, st, &est, s, T);
        flexopt::BuiltModel bm = flexopt::build_model(wm.in, f, cfg.flex);
        flexopt::set_objective(bm, flexopt::objective_for(f), wm.p_ref_kw, cfg.flex);

        flexopt::SolveSettings ss;
        ss.time_limit_s = cfg.time_limit_s;
        ss.ticks_per_second = cfg.ticks_per_second;
        flexopt::PlanSet warm;
        const flexopt::PlanSet* wp = nullptr;
        if (cfg.warmstart && have_prev) {
            warm = detail::shift_plans(prev, cfg.kappa, T);
            wp = &warm;
        }
        flexopt::FlexSolution sol = flexopt::solve_model(bm, wm.in, ss, wp);

        SolveRecord rec;
        rec.iteration = iter;
        rec.window_start = s;
        rec.status = status_name(sol.report.status);
        rec.objective = sol.report.objective;
        rec.gap = sol.report.gap;
        rec.wall_s = sol.report.work_seconds;

        flexopt::PlanSet plans;
        if (sol.has_plans) {
            plans = sol.plans;
        } else {
            rec.degraded = true;
            for (const auto& e : wm.in.hps) plans.hp_u.push_back(flexopt::fallback_plan_tcl(e, T));
            for (const auto& e : wm.in.ewhs) plans.ewh_u.push_back(flexopt::fallback_plan_tcl(e, T));
            for (const auto& e : wm.in.evs) plans.ev_u.push_back(flexopt::fallback_plan_ev(e, T));
        }

        detail::StepBlock blk;
        blk.hp_u.resize(sc.hps.size());
        blk.ewh_u.resize(sc.ewhs.size());
        blk.ev_u.assign(sc.evs.size(), {});
        blk.hp_req.resize(sc.hps.size());
        blk.ewh_req.resize(sc.ewhs.size());
        blk.ev_req.assign(sc.evs.size(), {});

        auto stage_tcl = [&](const std::vector<flexopt::TclHorizon>& devs,
                             const std::vector<std::vector<int>>& planned,
                             std::vector<std::vector<int>>& applied,
                             std::vector<std::vector<int>>& requested) {
            for (size_t i = 0; i < devs.size(); ++i) {
                requested[i] = detail::take(planned[i], n_apply);
                applied[i] = requested[i];
                if (cfg.command_loss_prob > 0 && unit(rng) < cfg.command_loss_prob) {
                    applied[i].assign(static_cast<size_t>(n_apply), 1);
                } else {
                    rec.corrections +=
                        verify_and_correct(devs[i].hist_u, applied[i], devs[i].rule);
                }
            }
        };
        stage_tcl(wm.in.hps, plans.hp_u, blk.hp_u, blk.hp_req);
        stage_tcl(wm.in.ewhs, plans.ewh_u, blk.ewh_u, blk.ewh_req);

        std::vector<long> cutoff(sc.evs.size(), -1);
        for (size_t i = 0; i < sc.evs.size(); ++i) {
            const int mi = wm.ev_model_index[i];
            if (mi < 0) continue;
            cutoff[i] = wm.ev_all_sessions ? span : s;
            blk.ev_req[i] = detail::take(plans.ev_u[static_cast<size_t>(mi)], n_apply);
        }

        detail::apply_block(sc, st, s, n_apply, blk, cutoff, &log);
        log.solves.push_back(rec);

        prev = std::move(plans);
        have_prev = true;
        s += n_apply;
        ++iter;
    }
    return log;
}

// ---- Whole-log verification and replay ----

struct LogViolation {
    std::string device_id;
    Violation v;
};

namespace detail {

// Re-runs the initialization free-run and returns the state at the log start
// together with the vehicles' full init-phase charging records (needed to
// split sessions that straddle the boundary).
inline FleetState replay_init(const FleetScenario& sc, long first_step,
                              std::vector<std::vector<int>>* ev_init_u) {
    FleetState st = init_fleet_state(sc);
    if (ev_init_u) ev_init_u->assign(sc.evs.size(), {});
    if (first_step <= 0) return st;
    RunLog scratch;
    scratch.u_applied.assign(sc.hps.size() + sc.ewhs.size() + sc.evs.size(), {});
    scratch.u_requested.assign(scratch.u_applied.size(), {});
    StepBlock blk = free_run_block(sc, static_cast<int>(first_step));
    apply_block(sc, st, 0, static_cast<int>(first_step), blk,
                std::vector<long>(sc.evs.size(), -1), &scratch);
    if (ev_init_u)
        for (size_t i = 0; i < sc.evs.size(); ++i)
            (*ev_init_u)[i] = scratch.u_applied[sc.hps.size() + sc.ewhs.size() + i];
    return st;
}

}  // namespace detail

// Checks every applied command column of a run against the constraint set of
// its scheme, with histories reconstructed from the initialization free-run.
// The fixed references (none/ripple) are held to the 24h budgets only.
inline std::vector<LogViolation> verify_run(const FleetScenario& sc, const RunLog& log) {
    const Formulation f = parse_formulation(log.meta.formulation);
    const int K = sc.grid.steps_per_day;
    const double dt = sc.grid.dt_hours;
    const long first = log.meta.first_step;
    const int L = static_cast<int>(log.steps());
    std::vector<LogViolation> out;

    std::vector<std::vector<int>> ev_init_u;
    FleetState st = detail::replay_init(sc, first, &ev_init_u);

    auto check_device = [&](const std::string& id, const std::vector<int>& hist,
                            const std::vector<int>& plan, const TclRule& rule) {
        for (const Violation& v : check_tcl(hist, plan, rule)) out.push_back({id, v});
    };
    size_t col = 0;
    for (size_t i = 0; i < sc.hps.size(); ++i, ++col) {
        TclRule rule = is_optimizing(f) ? detail::hp_rule(sc.hps[i], K)
                                        : TclRule{K, sc.hps[i].flex.k_block_24h, 1, -1, 1, -1, -1};
        check_device(sc.hps[i].id, st.hp[i].hist.values(), log.u_applied[col], rule);
    }
    for (size_t i = 0; i < sc.ewhs.size(); ++i, ++col) {
        TclRule rule = is_optimizing(f)
                           ? detail::ewh_rule(sc.ewhs[i], f, K)
                           : TclRule{K, sc.ewhs[i].block_budget_24h(), 1, -1, 1, -1, -1};
        check_device(sc.ewhs[i].id, st.ewh[i].hist.values(), log.u_applied[col], rule);
    }
    for (size_t i = 0; i < sc.evs.size(); ++i, ++col) {
        const EvSpec& v = sc.evs[i];
        std::vector<EvSessionCheck> sessions;
        for (const EvSession& ses : v.sessions) {
            if (ses.departure_step <= first || ses.arrival_step >= first + L) continue;
            EvSessionCheck c;
            c.arrival = static_cast<int>(ses.arrival_step - first);
            c.departure = static_cast<int>(ses.departure_step - first);
            const EvStepRequirement req = ev_required_steps(ses, v, dt);
            c.n_goal = req.n_goal;
            c.n_min = req.n_min;
            // Steps already charged before the log begins stay out of the
            // in-log goal count.
            if (c.arrival < 0) {
                int charged = 0;
                for (long t = std::max<long>(0, ses.arrival_step);
                     t < std::min<long>(first, ses.departure_step); ++t)
                    charged += ev_init_u[i][static_cast<size_t>(t)];
                c.n_goal = std::max(0, c.n_goal - charged);
            }
            sessions.push_back(c);
        }
        const std::vector<std::uint8_t> phi8 =
            ev_plugged_indicator(v, static_cast<size_t>(first), static_cast<size_t>(L));
        const std::vector<int> phi(phi8.begin(), phi8.end());
        for (const Violation& viol :
             check_ev(st.ev[i].u.values(), st.ev[i].phi.values(), log.u_applied[col], phi,
                      sessions, K, v.k_max_starts_24h))
            out.push_back({v.id, viol});
    }
    return out;
}

// Recomputes the station power series by driving the plant simulators with
// the logged applied commands. A faithful log reproduces its own power
// columns exactly.
struct ReplayPowers {
    std::vector<double> p_inf_kw, p_hp_kw, p_ewh_kw, p_ev_kw, p_total_kw;
};

inline ReplayPowers replay_run(const FleetScenario& sc, const RunLog& log) {
    const long first = log.meta.first_step;
    const int L = static_cast<int>(log.steps());
    FleetState st = detail::replay_init(sc, first, nullptr);

    RunLog scratch;
    scratch.u_applied.assign(log.device_ids.size(), {});
    scratch.u_requested.assign(log.device_ids.size(), {});
    detail::StepBlock blk;
    size_t col = 0;
    for (size_t i = 0; i < sc.hps.size(); ++i, ++col) blk.hp_u.push_back(log.u_applied[col]);
    for (size_t i = 0; i < sc.ewhs.size(); ++i, ++col) blk.ewh_u.push_back(log.u_applied[col]);
    for (size_t i = 0; i < sc.evs.size(); ++i, ++col) blk.ev_u.push_back(log.u_applied[col]);
    blk.hp_req.assign(sc.hps.size(), {});
    blk.ewh_req.assign(sc.ewhs.size(), {});
    blk.ev_req.assign(sc.evs.size(), {});
    detail::apply_block(sc, st, first, L, blk, std::vector<long>(sc.evs.size(), -1), &scratch);

    ReplayPowers rp;
    rp.p_inf_kw = std::move(scratch.p_inf_kw);
    rp.p_hp_kw = std::move(scratch.p_hp_kw);
    rp.p_ewh_kw = std::move(scratch.p_ewh_kw);
    rp.p_ev_kw = std::move(scratch.p_ev_kw);
    rp.p_total_kw = std::move(scratch.p_total_kw);
    return rp;
}

// ---- Persistence ----

inline void RunLog::save(const std::string& dir) const {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create run directory " + dir + ": " + ec.message());

    {
        std::ofstream out(dir + "/ts_power.csv");
        if (!out) throw std::runtime_error("cannot write " + dir + "/ts_power.csv");
        out << "step,p_inflexible_kw,p_hp_kw,p_ewh_kw,p_ev_kw,p_total_kw\n";
        for (long i = 0; i < steps(); ++i)
            out << meta.first_step + i << ',' << format_double(p_inf_kw[static_cast<size_t>(i)])
                << ',' << format_double(p_hp_kw[static_cast<size_t>(i)]) << ','
                << format_double(p_ewh_kw[static_cast<size_t>(i)]) << ','
                << format_double(p_ev_kw[static_cast<size_t>(i)]) << ','
                << format_double(p_total_kw[static_cast<size_t>(i)]) << '\n';
    }
    {
        std::ofstream out(dir + "/commands.csv");
        if (!out) throw std::runtime_error("cannot write " + dir + "/commands.csv");
        out << "step,device,u_applied,u_requested\n";
        for (long i = 0; i < steps(); ++i)
            for (size_t d = 0; d < device_ids.size(); ++d)
                out << meta.first_step + i << ',' << device_ids[d] << ','
                    << u_applied[d][static_cast<size_t>(i)] << ','
                    << u_requested[d][static_cast<size_t>(i)] << '\n';
    }
    {
        std::ofstream out(dir + "/solves.csv");
        if (!out) throw std::runtime_error("cannot write " + dir + "/solves.csv");
        out << "iteration,status,objective,gap,wall_s\n";
        for (const SolveRecord& r : solves)
            out << r.iteration << ',' << r.status << ',' << format_double(r.objective) << ','
                << format_double(r.gap) << ',' << format_double(r.wall_s) << '\n';
    }
    {
        json doc;
        doc["formulation"] = meta.formulation;
        doc["kappa"] = meta.kappa;
        doc["seed"] = meta.seed;
        doc["init_days"] = meta.init_days;
        doc["first_step"] = meta.first_step;
        doc["dt_hours"] = meta.dt_hours;
        doc["grid_start"] = meta.grid_start;
        doc["ev_immediate"] = meta.ev_immediate;
        doc["p_ewh_nom_total_kw"] = meta.p_ewh_nom_total_kw;
        doc["scenario"] = meta.scenario_path;
        doc["devices"] = device_ids;
        doc["device_kinds"] = device_kinds;
        std::ofstream out(dir + "/run.json");
        if (!out) throw std::runtime_error("cannot write " + dir + "/run.json");
        out << doc.dump(2) << '\n';
    }
}

inline RunLog RunLog::load(const std::string& dir) {
    RunLog log;
    {
        std::ifstream in(dir + "/run.json");
        if (!in) throw std::runtime_error("cannot open " + dir + "/run.json");
        json doc = json::parse(in);
        log.meta.formulation = doc.at("formulation").get<std::string>();
        log.meta.kappa = doc.at("kappa").get<int>();
        log.meta.seed = doc.at("seed").get<unsigned>();
        log.meta.init_days = doc.at("init_days").get<int>();
        log.meta.first_step = doc.at("first_step").get<long>();
        log.meta.dt_hours = doc.at("dt_hours").get<double>();
        log.meta.grid_start = doc.at("grid_start").get<std::string>();
        log.meta.ev_immediate = doc.at("ev_immediate").get<bool>();
        log.meta.p_ewh_nom_total_kw = doc.at("p_ewh_nom_total_kw").get<double>();
        log.meta.scenario_path = doc.at("scenario").get<std::string>();
        log.device_ids = doc.at("devices").get<std::vector<std::string>>();
        log.device_kinds = doc.at("device_kinds").get<std::vector<std::string>>();
    }
    log.u_applied.assign(log.device_ids.size(), {});
    log.u_requested.assign(log.device_ids.size(), {});

    {
        const CsvTable t = read_csv(dir + "/ts_power.csv");
        const int c_step = t.column("step");
        const int c_inf = t.column("p_inflexible_kw");
        const int c_hp = t.column("p_hp_kw");
        const int c_ewh = t.column("p_ewh_kw");
        const int c_ev = t.column("p_ev_kw");
        const int c_tot = t.column("p_total_kw");
        long expect = log.meta.first_step;
        for (const auto& row : t.rows) {
            if (std::stol(row[static_cast<size_t>(c_step)]) != expect)
                throw std::runtime_error(dir + "/ts_power.csv: non-contiguous step column");
            log.p_inf_kw.push_back(std::stod(row[static_cast<size_t>(c_inf)]));
            log.p_hp_kw.push_back(std::stod(row[static_cast<size_t>(c_hp)]));
            log.p_ewh_kw.push_back(std::stod(row[static_cast<size_t>(c_ewh)]));
            log.p_ev_kw.push_back(std::stod(row[static_cast<size_t>(c_ev)]));
            log.p_total_kw.push_back(std::stod(row[static_cast<size_t>(c_tot)]));
            ++expect;
        }
    }
    {
        std::map<std::string, size_t> col;
        for (size_t d = 0; d < log.device_ids.size(); ++d) col[log.device_ids[d]] = d;
        const CsvTable t = read_csv(dir + "/commands.csv");
        const int c_step = t.column("step");
        const int c_dev = t.column("device");
        const int c_app = t.column("u_applied");
        const int c_req = t.column("u_requested");
        for (const auto& row : t.rows) {
            const auto it = col.find(row[static_cast<size_t>(c_dev)]);
            if (it == col.end())
                throw std::runtime_error(dir + "/commands.csv: unknown device '" +
                                         row[static_cast<size_t>(c_dev)] + "'");
            const long step = std::stol(row[static_cast<size_t>(c_step)]);
            auto& app = log.u_applied[it->second];
            if (step != log.meta.first_step + static_cast<long>(app.size()))
                throw std::runtime_error(dir + "/commands.csv: out-of-order rows for device '" +
                                         row[static_cast<size_t>(c_dev)] + "'");
            app.push_back(std::stoi(row[static_cast<size_t>(c_app)]));
            log.u_requested[it->second].push_back(std::stoi(row[static_cast<size_t>(c_req)]));
        }
        for (size_t d = 0; d < log.device_ids.size(); ++d)
            if (static_cast<long>(log.u_applied[d].size()) != log.steps())
                throw std::runtime_error(dir + "/commands.csv: device '" + log.device_ids[d] +
                                         "' has " + std::to_string(log.u_applied[d].size()) +
                                         " rows, expected " + std::to_string(log.steps()));
    }
    {
        const CsvTable t = read_csv(dir + "/solves.csv");
        const int c_it = t.column("iteration");
        const int c_st = t.column("status");
        const int c_obj = t.column("objective");
        const int c_gap = t.column("gap");
        const int c_wall = t.column("wall_s");
        for (const auto& row : t.rows) {
            SolveRecord r;
            r.iteration = std::stoi(row[static_cast<size_t>(c_it)]);
            r.status = row[static_cast<size_t>(c_st)];
            r.objective = std::stod(row[static_cast<size_t>(c_obj)]);
            r.gap = std::stod(row[static_cast<size_t>(c_gap)]);
            r.wall_s = std::stod(row[static_cast<size_t>(c_wall)]);
            log.solves.push_back(r);
        }
    }
    return log;
}

}  // namespace dlcflex::dispatch

#endif
