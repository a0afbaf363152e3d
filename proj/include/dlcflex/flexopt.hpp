#ifndef DLCFLEX_FLEXOPT_HPP
#define DLCFLEX_FLEXOPT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlcflex/feasibility.hpp"
#include "dlcflex/milp/branch_bound.hpp"
#include "dlcflex/milp/model.hpp"
#include "dlcflex/scenario.hpp"
#include "dlcflex/thermal_sim.hpp"

namespace dlcflex::flexopt {

// One blockable thermostatic device over the optimization window. The same
// struct covers heat pumps and water heaters; the power description decides
// how the MIP prices its consumption:
//  - alpha-scaled nominal power while unblocked (estimation),
//  - a 10/90 split between unblocked baseline and the reheat profile,
//  - or the full tank plant (temperature states and hysteresis logic).
struct TclHorizon {
    std::string id;
    TclRule rule;
    std::vector<int> hist_u;  // applied commands, oldest first, length >= rule.k
    double p_nom_kw = 0;

    std::vector<double> alpha;  // per-step scaling of estimated power; empty = 1
    bool l2_profile = false;    // reheat-profile power split

    bool has_plant = false;  // exact tank model inside the MIP
    bool modulating = false;
    double p_min_kw = 0;
    double temp_start_c = 0;
    bool on_start = false;
    double volume_m3 = 0;
    double loss_kw_per_k = 0;
    double env_temp_c = 15.0;
    std::vector<double> t_lo_c, t_up_c, demand_kwh, eta;  // per-step
};

struct EvWindow {
    int arrival = 0;    // may be negative for a session already running
    int departure = 0;  // exclusive; beyond the horizon means it continues
    int n_goal = 0;     // charging steps still required from step 0
    int n_min = 0;      // forced charging steps counted from the arrival
};

struct EvHorizon {
    std::string id;
    double p_nom_kw = 0;
    int k_max_starts_24h = 3;
    std::vector<int> phi;  // plugged indicator per step
    std::vector<EvWindow> sessions;
    std::vector<int> hist_u, hist_phi;  // applied history, oldest first
};

struct HorizonInputs {
    int horizon = 0;
    int k = 96;  // steps per 24h window
    double dt_hours = 0.25;
    std::vector<double> p_inf_kw;  // inflexible station power per step
    double p_ref_kw = 0;
    std::vector<TclHorizon> hps, ewhs;
    std::vector<EvHorizon> evs;
};

struct FlexOptions {
    bool pilot_encoding = false;  // command-space-only blocking rows, no event vars
    double big_m[4] = {100.0, 100.0, 100.0, 100.0};
    int pwl_segments = 32;
    double pwl_range_scale = 1.5;
    double pwl_center_abs_kw = 0;  // typical |total power|; 0 = attainable range
};

enum class ObjectiveKind { PeakAbs, QuadDeviation };

inline ObjectiveKind objective_for(Formulation f) {
    return f == Formulation::Ideal ? ObjectiveKind::PeakAbs : ObjectiveKind::QuadDeviation;
}

struct DeviceVars {
    std::vector<int> u, v, w;
    std::vector<int> rho;  // reheat profile or plant operating state
    std::vector<int> temp, power, e_lo, clamp, delta, sigma, tau;
    std::vector<int> b;  // charging starts
};

struct VarMap {
    std::vector<DeviceVars> hp, ewh, ev;
    std::vector<int> ptot;
    int peak = -1;
    std::vector<int> zdev;
};

struct BuiltModel {
    milp::MipModel mip;
    VarMap vars;
    Formulation formulation = Formulation::L1;
    std::vector<std::string> warnings;
};

namespace detail {

[[noreturn]] inline void fail(const std::string& field, const std::string& msg) {
    throw std::invalid_argument(field + ": " + msg);
}

inline void require_series(const std::vector<double>& s, int n, const std::string& field) {
    if (static_cast<int>(s.size()) != n)
        fail(field, "size " + std::to_string(s.size()) + " != horizon " + std::to_string(n));
}

// Age of the unblocked run containing the last history step, counted from its
// unblocking event (the event step has age 0). -1 when the last step is
// blocked; a large value when the run predates the buffer.
inline long long boundary_run_age(const std::vector<int>& hist) {
    long long g = 0;
    for (auto it = hist.rbegin(); it != hist.rend() && *it == 1; ++it) ++g;
    if (g == 0) return hist.empty() ? (1LL << 30) : -1;
    if (g == static_cast<long long>(hist.size())) return 1LL << 30;
    return g - 1;
}

}  // namespace detail

// Blocking-window rows for one device: 24h budget, event linkage, minimum and
// maximum durations, event gap, budget-aware block starts. With
// pilot_encoding the same command-space rules are written without event
// variables (pairwise step implications, unconditional maximum-block windows,
// no budget-aware start strengthening) and no warm start is expected.
inline void emit_blocking_windows(BuiltModel& bm, DeviceVars& dv, const TclHorizon& e, int T,
                                  const FlexOptions& opt, const std::string& field) {
    const TclRule& r = e.rule;
    if (static_cast<int>(e.hist_u.size()) < r.k)
        detail::fail(field + ".hist_u", "length " + std::to_string(e.hist_u.size()) +
                                            " shorter than one day window (" +
                                            std::to_string(r.k) + ")");
    auto& m = bm.mip;
    const std::vector<int> empty;
    CommandLog h(e.hist_u, empty);

    dv.u.resize(T);
    for (int t = 0; t < T; ++t) dv.u[t] = m.add_var(e.id + ".u" + std::to_string(t), 0, 1, true);

    // 24h budget windows.
    for (int t = 0; t < T; ++t) {
        milp::Row row;
        row.sense = milp::Sense::GE;
        row.rhs = r.k - r.budget_24h;
        for (int i = t - r.k + 1; i <= t; ++i) {
            if (i >= 0)
                row.terms.push_back({dv.u[i], 1.0});
            else
                row.rhs -= h.u(i);
        }
        m.add_pool_row(row);
    }

    const bool events = !opt.pilot_encoding &&
                        (r.k_min_block > 1 || r.k_min_unblock > 1 || r.k_max_block >= 0 ||
                         r.k_max_unblock >= 0 || e.l2_profile);

    if (opt.pilot_encoding) {
        if (e.l2_profile)
            detail::fail(field, "pilot encoding does not support reheat-profile devices");
        auto uval = [&](int i) { return i >= 0 ? -1 : h.u(i); };  // -1 marks a variable
        // Unconditional maximum-block windows.
        if (r.k_max_block >= 0) {
            for (int t = -r.k_max_block; t < T - r.k_max_block; ++t) {
                milp::Row row;
                row.sense = milp::Sense::GE;
                row.rhs = 1;
                for (int i = t; i <= t + r.k_max_block; ++i) {
                    if (uval(i) < 0)
                        row.terms.push_back({dv.u[i], 1.0});
                    else
                        row.rhs -= uval(i);
                }
                if (!row.terms.empty() && row.rhs > 0) m.add_pool_row(row);
            }
        }
        // Minimum unblocked spacing: an off-to-on edge pins the following steps on.
        for (int t = 1 - r.k_min_unblock; t < T; ++t) {
            for (int j = 1; j < r.k_min_unblock; ++j) {
                const int tj = t + j;
                if (tj < 0 || tj >= T) continue;
                milp::Row row;  // u_t - u_{t-1} - u_{t+j} <= 0
                row.sense = milp::Sense::LE;
                row.rhs = 0;
                if (t >= 0)
                    row.terms.push_back({dv.u[t], 1.0});
                else
                    row.rhs -= h.u(t);
                if (t - 1 >= 0)
                    row.terms.push_back({dv.u[t - 1], -1.0});
                else
                    row.rhs += h.u(t - 1);
                row.terms.push_back({dv.u[tj], -1.0});
                m.add_pool_row(row);
            }
        }
        // Minimum block duration: an on-to-off edge pins the following steps off.
        for (int t = 1 - r.k_min_block; t < T; ++t) {
            for (int j = 1; j < r.k_min_block; ++j) {
                const int tj = t + j;
                if (tj < 0 || tj >= T) continue;
                milp::Row row;  // u_{t-1} - u_t + u_{t+j} <= 1
                row.sense = milp::Sense::LE;
                row.rhs = 1;
                if (t - 1 >= 0)
                    row.terms.push_back({dv.u[t - 1], 1.0});
                else
                    row.rhs -= h.u(t - 1);
                if (t >= 0)
                    row.terms.push_back({dv.u[t], -1.0});
                else
                    row.rhs += h.u(t);
                row.terms.push_back({dv.u[tj], 1.0});
                m.add_pool_row(row);
            }
        }
        return;
    }

    if (!events) return;

    dv.v.resize(T);
    dv.w.resize(T);
    for (int t = 0; t < T; ++t) {
        dv.v[t] = m.add_var(e.id + ".v" + std::to_string(t), 0, 1, false);
        dv.w[t] = m.add_var(e.id + ".w" + std::to_string(t), 0, 1, false);
    }

    // Event linkage u_t - u_{t-1} = v_t - w_t.
    for (int t = 0; t < T; ++t) {
        milp::Row row;
        row.sense = milp::Sense::EQ;
        row.terms.push_back({dv.u[t], 1.0});
        row.terms.push_back({dv.v[t], -1.0});
        row.terms.push_back({dv.w[t], 1.0});
        row.rhs = 0;
        if (t == 0)
            row.rhs = h.u(-1);
        else
            row.terms.push_back({dv.u[t - 1], -1.0});
        m.add_row(row, t == 0 ? dv.v[0] : -1);
    }

    // Maximum block duration, re-enforced for blocks committed in history.
    if (r.k_max_block >= 0) {
        for (int t = -r.k_max_block; t < T - r.k_max_block; ++t) {
            milp::Row row;
            row.sense = milp::Sense::GE;
            row.rhs = 0;
            if (t >= 0)
                row.terms.push_back({dv.w[t], -1.0});
            else {
                if (h.w(t) == 0) continue;
                row.rhs += 1;
            }
            for (int i = std::max(t, 0); i <= t + r.k_max_block; ++i)
                row.terms.push_back({dv.u[i], 1.0});
            for (int i = t; i < 0; ++i) row.rhs -= h.u(i);
            m.add_pool_row(row);
        }
    }

    // Minimum spacing of unblocking events.
    for (int t = 0; t < T; ++t) {
        milp::Row row;
        row.sense = milp::Sense::LE;
        row.rhs = 0;
        for (int i = t - r.k_min_unblock + 1; i <= t; ++i) {
            if (i >= 0)
                row.terms.push_back({dv.v[i], 1.0});
            else
                row.rhs -= h.v(i);
        }
        row.terms.push_back({dv.u[t], -1.0});
        m.add_pool_row(row);
    }

    // Minimum block duration.
    for (int t = 0; t < T; ++t) {
        milp::Row row;
        row.sense = milp::Sense::LE;
        row.rhs = 1;
        for (int i = t - r.k_min_block + 1; i <= t; ++i) {
            if (i >= 0)
                row.terms.push_back({dv.w[i], 1.0});
            else
                row.rhs -= h.w(i);
        }
        row.terms.push_back({dv.u[t], 1.0});
        m.add_pool_row(row);
    }

    // Budget-aware block start.
    for (int t = 0; t < T; ++t) {
        milp::Row row;
        row.sense = milp::Sense::GE;
        row.rhs = 0;
        for (int i = t - r.k + r.k_min_block; i <= t - 1; ++i) {
            if (i >= 0)
                row.terms.push_back({dv.u[i], 1.0});
            else
                row.rhs -= h.u(i);
        }
        row.terms.push_back({dv.w[t], -static_cast<double>(r.k - r.budget_24h)});
        m.add_pool_row(row);
    }

    // Maximum unblocked duration, re-enforced for runs committed in history.
    if (r.k_max_unblock >= 0) {
        for (int t = -r.k_max_unblock; t < T - r.k_max_unblock; ++t) {
            // sum of (1-u) over the window >= v_t
            milp::Row row;
            row.sense = milp::Sense::LE;  // written as sum(u) + v_t <= window + 1 - 1
            double rhs = r.k_max_unblock + 1;
            if (t >= 0) {
                row.terms.push_back({dv.v[t], 1.0});
                rhs += 0;
            } else {
                if (h.v(t) == 0) continue;
                rhs -= 1;
            }
            for (int i = std::max(t, 0); i <= t + r.k_max_unblock; ++i)
                row.terms.push_back({dv.u[i], 1.0});
            for (int i = t; i < 0; ++i) rhs -= h.u(i);
            row.rhs = rhs;
            m.add_pool_row(row);
        }
    }
}

// Reheat-profile state: rho = 1 exactly during the first k_run steps of each
// unblocked period. Written as an equality against the recent unblocking
// events (history events folded through the age of the run at the boundary)
// plus the blocked-implies-idle cap.
inline void emit_reheat_profile(BuiltModel& bm, DeviceVars& dv, const TclHorizon& e, int T,
                                const std::string& field) {
    const TclRule& r = e.rule;
    if (r.k_run <= 0) detail::fail(field + ".rule.k_run", "reheat profile requires k_run > 0");
    auto& m = bm.mip;
    dv.rho.resize(T);
    for (int t = 0; t < T; ++t)
        dv.rho[t] = m.add_var(e.id + ".rho" + std::to_string(t), 0, 1, false);

    const long long age = detail::boundary_run_age(e.hist_u);
    for (int t = 0; t < T; ++t) {
        const int fresh = (age >= 0 && age + 1 + t < r.k_run) ? 1 : 0;
        milp::Row row;
        row.sense = milp::Sense::EQ;
        row.rhs = fresh;
        row.terms.push_back({dv.rho[t], 1.0});
        for (int i = std::max(0, t - r.k_run + 1); i <= t; ++i)
            row.terms.push_back({dv.v[i], -1.0});
        m.add_row(row, dv.rho[t]);

        milp::Row cap;  // idle while blocked
        cap.sense = milp::Sense::LE;
        cap.rhs = 0;
        cap.terms.push_back({dv.rho[t], 1.0});
        cap.terms.push_back({dv.u[t], -1.0});
        m.add_pool_row(cap);
    }
}

// Exact tank model: temperature balance, two-point hysteresis with blocking
// override, and for modulating devices the demand-following power with
// saturation at both ends. Big-M guards reject constants smaller than the
// attainable temperature swing.
inline void emit_tank_plant(BuiltModel& bm, DeviceVars& dv, const TclHorizon& e, int T,
                            double dt, const FlexOptions& opt, const std::string& field) {
    detail::require_series(e.t_lo_c, T, field + ".t_lo_c");
    detail::require_series(e.t_up_c, T, field + ".t_up_c");
    detail::require_series(e.demand_kwh, T, field + ".demand_kwh");
    detail::require_series(e.eta, T, field + ".eta");
    if (e.volume_m3 <= 0) detail::fail(field + ".volume_m3", "tank volume must be positive");
    auto& m = bm.mip;
    const double cap = tank_capacity_kwh_per_k(e.volume_m3);
    const double lam = e.loss_kw_per_k;

    // Attainable temperature box by interval propagation. Heating out of a
    // step is only feasible when its entry temperature is at or below the
    // upper band, so the box overshoots the band by at most one step of gain.
    double lo = e.temp_start_c, hi = e.temp_start_c;
    double box_lo = lo, box_hi = hi;
    for (int t = 0; t < T; ++t) {
        const double shrink = 1.0 - lam * dt / cap;
        const double base = lam * dt * e.env_temp_c / cap - e.demand_kwh[t] / cap;
        const double heat_entry = std::min(hi, e.t_up_c[t]);
        const double nlo = lo * shrink + base;
        double nhi = hi * shrink + base;
        if (lo <= e.t_up_c[t])
            nhi = std::max(nhi,
                           heat_entry * shrink + base + e.p_nom_kw * e.eta[t] * dt / cap);
        lo = nlo;
        hi = nhi;
        box_lo = std::min(box_lo, lo);
        box_hi = std::max(box_hi, hi);
    }
    const double tlo_min = *std::min_element(e.t_lo_c.begin(), e.t_lo_c.end());
    const double tlo_max = *std::max_element(e.t_lo_c.begin(), e.t_lo_c.end());
    const double tup_min = *std::min_element(e.t_up_c.begin(), e.t_up_c.end());
    const double tup_max = *std::max_element(e.t_up_c.begin(), e.t_up_c.end());
    const double need[4] = {box_hi - tlo_min, tup_max - box_lo, tlo_max - box_lo,
                            box_hi - tup_min};
    for (int i = 0; i < 4; ++i) {
        if (opt.big_m[i] <= need[i])
            detail::fail(field, "big_m[" + std::to_string(i) + "]=" +
                                    std::to_string(opt.big_m[i]) +
                                    " below attainable temperature swing " +
                                    std::to_string(need[i]));
    }

    dv.rho.resize(T);
    dv.temp.resize(T);
    for (int t = 0; t < T; ++t) {
        dv.rho[t] = m.add_var(e.id + ".on" + std::to_string(t), 0, 1, true);
        dv.temp[t] =
            m.add_var(e.id + ".T" + std::to_string(t), box_lo - 1.0, box_hi + 1.0, false);
    }

    const double m1 = opt.big_m[0], m2 = opt.big_m[1], m3 = opt.big_m[2], m4 = opt.big_m[3];
    const double rho0 = e.on_start ? 1.0 : 0.0;
    const double temp0 = e.temp_start_c;

    double me = 0, mp = 0, e_max = 0;
    if (e.modulating) {
        e_max = cap * std::max(0.0, tlo_max - box_lo);
        me = 1.0 + 1.05 * cap * std::max(box_hi - tlo_min, tlo_max - box_lo);
        double phat_lo = milp::kInf, phat_hi = -milp::kInf;
        for (int t = 0; t < T; ++t) {
            const double at = lam / e.eta[t];
            const double ae = 1.0 / (e.eta[t] * dt);
            const double kt = (e.demand_kwh[t] - lam * dt * e.env_temp_c) / (e.eta[t] * dt);
            phat_lo = std::min(phat_lo, at * box_lo + kt);
            phat_hi = std::max(phat_hi, at * box_hi + ae * e_max + kt);
        }
        mp = 1.0 + 1.05 * std::max({e.p_nom_kw, phat_hi - e.p_min_kw, e.p_nom_kw - phat_lo});
        dv.e_lo.resize(T);
        dv.clamp.resize(T);
        dv.power.resize(T);
        dv.delta.resize(T);
        dv.sigma.resize(T);
        dv.tau.resize(T);
        for (int t = 0; t < T; ++t) {
            dv.e_lo[t] = m.add_var(e.id + ".e" + std::to_string(t), 0, e_max, false);
            dv.clamp[t] =
                m.add_var(e.id + ".c" + std::to_string(t), e.p_min_kw, e.p_nom_kw, false);
            dv.power[t] = m.add_var(e.id + ".P" + std::to_string(t), 0, e.p_nom_kw, false);
            dv.delta[t] = m.add_var(e.id + ".d" + std::to_string(t), 0, 1, true);
            dv.sigma[t] = m.add_var(e.id + ".s" + std::to_string(t), 0, 1, true);
            dv.tau[t] = m.add_var(e.id + ".m" + std::to_string(t), 0, 1, true);
        }
    }

    for (int t = 0; t < T; ++t) {
        const int tprev = t - 1;
        auto prev_temp_term = [&](milp::Row& row, double coeff) {
            if (tprev >= 0)
                row.terms.push_back({dv.temp[tprev], coeff});
            else
                row.rhs -= coeff * temp0;
        };
        auto prev_rho_term = [&](milp::Row& row, double coeff) {
            if (tprev >= 0)
                row.terms.push_back({dv.rho[tprev], coeff});
            else
                row.rhs -= coeff * rho0;
        };

        // Heat balance.
        {
            milp::Row row;
            row.sense = milp::Sense::EQ;
            row.rhs = -e.demand_kwh[t] + lam * dt * e.env_temp_c;
            row.terms.push_back({dv.temp[t], cap});
            prev_temp_term(row, -(cap - lam * dt));
            if (e.modulating)
                row.terms.push_back({dv.power[t], -e.eta[t] * dt});
            else
                row.terms.push_back({dv.rho[t], -e.eta[t] * dt * e.p_nom_kw});
            m.add_row(row, dv.temp[t]);
        }
        // Switch-on only below the lower band edge.
        {
            milp::Row row;
            row.sense = milp::Sense::LE;
            row.rhs = 1.0 + e.t_lo_c[t] / m1;
            row.terms.push_back({dv.rho[t], 1.0});
            prev_rho_term(row, -1.0);
            prev_temp_term(row, 1.0 / m1);
            m.add_row(row);
        }
        // Switch-off only above the upper band edge (while unblocked).
        {
            milp::Row row;
            row.sense = milp::Sense::GE;
            row.rhs = e.t_up_c[t] / m2 - 2.0;
            row.terms.push_back({dv.rho[t], 1.0});
            prev_rho_term(row, -1.0);
            prev_temp_term(row, 1.0 / m2);
            row.terms.push_back({dv.u[t], -1.0});
            m.add_row(row);
        }
        // Must run when below the band (while unblocked).
        {
            milp::Row row;
            row.sense = milp::Sense::GE;
            row.rhs = e.t_lo_c[t] / m3 - 1.0;
            row.terms.push_back({dv.rho[t], 1.0});
            prev_temp_term(row, 1.0 / m3);
            row.terms.push_back({dv.u[t], -1.0});
            m.add_row(row);
        }
        // Must stop above the band.
        {
            milp::Row row;
            row.sense = milp::Sense::LE;
            row.rhs = e.t_up_c[t] / m4 + 1.0;
            row.terms.push_back({dv.rho[t], 1.0});
            prev_temp_term(row, 1.0 / m4);
            m.add_row(row);
        }
        // Off while blocked.
        {
            milp::Row row;
            row.sense = milp::Sense::LE;
            row.rhs = 0;
            row.terms.push_back({dv.rho[t], 1.0});
            row.terms.push_back({dv.u[t], -1.0});
            m.add_row(row);
        }

        if (!e.modulating) continue;

        const double at = lam / e.eta[t];
        const double ae = 1.0 / (e.eta[t] * dt);
        const double kt = (e.demand_kwh[t] - lam * dt * e.env_temp_c) / (e.eta[t] * dt);

        // Reheat deficit e = max(0, (t_lo - T_prev) * cap), gated by delta.
        {
            milp::Row row;
            row.sense = milp::Sense::GE;
            row.rhs = cap * e.t_lo_c[t];
            row.terms.push_back({dv.e_lo[t], 1.0});
            prev_temp_term(row, cap);
            m.add_row(row);
        }
        {
            milp::Row row;
            row.sense = milp::Sense::LE;
            row.rhs = cap * e.t_lo_c[t] + me;
            row.terms.push_back({dv.e_lo[t], 1.0});
            prev_temp_term(row, cap);
            row.terms.push_back({dv.delta[t], me});
            m.add_row(row);
        }
        {
            milp::Row row;
            row.sense = milp::Sense::LE;
            row.rhs = 0;
            row.terms.push_back({dv.e_lo[t], 1.0});
            row.terms.push_back({dv.delta[t], -me});
            m.add_row(row);
        }

        // Demand-following power with saturation: c = clamp(p_hat, p_min, p_nom)
        // where p_hat = at*T_prev + ae*e + kt. sigma marks the low clamp, tau
        // the high clamp.
        {
            milp::Row row;  // c >= p_hat - M*tau
            row.sense = milp::Sense::GE;
            row.rhs = kt;
            row.terms.push_back({dv.clamp[t], 1.0});
            prev_temp_term(row, -at);
            row.terms.push_back({dv.e_lo[t], -ae});
            row.terms.push_back({dv.tau[t], mp});
            m.add_row(row);
        }
        {
            milp::Row row;  // c <= p_hat + M*sigma
            row.sense = milp::Sense::LE;
            row.rhs = kt;
            row.terms.push_back({dv.clamp[t], 1.0});
            prev_temp_term(row, -at);
            row.terms.push_back({dv.e_lo[t], -ae});
            row.terms.push_back({dv.sigma[t], -mp});
            m.add_row(row);
        }
        {
            milp::Row row;  // c <= p_min + M*(1-sigma)
            row.sense = milp::Sense::LE;
            row.rhs = e.p_min_kw + mp;
            row.terms.push_back({dv.clamp[t], 1.0});
            row.terms.push_back({dv.sigma[t], mp});
            m.add_row(row);
        }
        {
            milp::Row row;  // c >= p_nom - M*(1-tau)
            row.sense = milp::Sense::GE;
            row.rhs = e.p_nom_kw - mp;
            row.terms.push_back({dv.clamp[t], 1.0});
            row.terms.push_back({dv.tau[t], -mp});
            m.add_row(row);
        }
        {
            milp::Row row;  // p_hat >= p_min - M*sigma
            row.sense = milp::Sense::GE;
            row.rhs = e.p_min_kw - kt;
            prev_temp_term(row, at);
            row.terms.push_back({dv.e_lo[t], ae});
            row.terms.push_back({dv.sigma[t], mp});
            m.add_row(row);
        }
        {
            milp::Row row;  // p_hat <= p_min + M*(1-sigma)
            row.sense = milp::Sense::LE;
            row.rhs = e.p_min_kw - kt + mp;
            prev_temp_term(row, at);
            row.terms.push_back({dv.e_lo[t], ae});
            row.terms.push_back({dv.sigma[t], mp});
            m.add_row(row);
        }
        {
            milp::Row row;  // p_hat <= p_nom + M*tau
            row.sense = milp::Sense::LE;
            row.rhs = e.p_nom_kw - kt;
            prev_temp_term(row, at);
            row.terms.push_back({dv.e_lo[t], ae});
            row.terms.push_back({dv.tau[t], -mp});
            m.add_row(row);
        }
        {
            milp::Row row;  // p_hat >= p_nom - M*(1-tau)
            row.sense = milp::Sense::GE;
            row.rhs = e.p_nom_kw - kt - mp;
            prev_temp_term(row, at);
            row.terms.push_back({dv.e_lo[t], ae});
            row.terms.push_back({dv.tau[t], -mp});
            m.add_row(row);
        }

        // P = rho * c.
        {
            milp::Row row;  // P <= M*rho
            row.sense = milp::Sense::LE;
            row.rhs = 0;
            row.terms.push_back({dv.power[t], 1.0});
            row.terms.push_back({dv.rho[t], -mp});
            m.add_row(row);
        }
        {
            milp::Row row;  // P <= c + M*(1-rho)
            row.sense = milp::Sense::LE;
            row.rhs = mp;
            row.terms.push_back({dv.power[t], 1.0});
            row.terms.push_back({dv.clamp[t], -1.0});
            row.terms.push_back({dv.rho[t], mp});
            m.add_row(row);
        }
        {
            milp::Row row;  // P >= c - M*(1-rho)
            row.sense = milp::Sense::GE;
            row.rhs = -mp;
            row.terms.push_back({dv.power[t], 1.0});
            row.terms.push_back({dv.clamp[t], -1.0});
            row.terms.push_back({dv.rho[t], -mp});
            m.add_row(row);
        }
    }
}

// Charging constraints for one vehicle: plugged-only commands, exact-or-capped
// session charging, forced initial charging, the 24h cap on off-to-on starts.
inline void emit_ev_charging(BuiltModel& bm, DeviceVars& dv, const EvHorizon& e, int T, int k,
                             const std::string& field) {
    if (static_cast<int>(e.phi.size()) != T)
        detail::fail(field + ".phi", "size " + std::to_string(e.phi.size()) + " != horizon " +
                                         std::to_string(T));
    if (e.hist_u.size() != e.hist_phi.size())
        detail::fail(field, "hist_u and hist_phi must have equal length");
    auto& m = bm.mip;
    dv.u.resize(T);
    dv.b.resize(T);
    for (int t = 0; t < T; ++t) {
        dv.u[t] = m.add_var(e.id + ".u" + std::to_string(t), 0, e.phi[t], true);
        dv.b[t] = m.add_var(e.id + ".b" + std::to_string(t), 0, e.phi[t], false);
    }

    const int h = static_cast<int>(e.hist_u.size());
    auto hist_u = [&](int i) {
        const int j = h + i;
        return j >= 0 && j < h ? e.hist_u[j] : 0;
    };
    auto hist_phi = [&](int i) {
        const int j = h + i;
        return j >= 0 && j < h ? e.hist_phi[j] : 0;
    };
    auto hist_b = [&](int i) {
        return (hist_u(i) == 1 && hist_u(i - 1) == 0 && hist_phi(i - 1) == 1) ? 1 : 0;
    };

    for (size_t s = 0; s < e.sessions.size(); ++s) {
        const EvWindow& w = e.sessions[s];
        const std::string sfield = field + ".sessions[" + std::to_string(s) + "]";
        const int lo = std::max(0, w.arrival);
        const int hi = std::min(T, w.departure);
        if (lo >= hi) detail::fail(sfield, "session window empty within the horizon");
        int plugged = 0;
        for (int t = lo; t < hi; ++t) {
            if (e.phi[t] != 1)
                detail::fail(sfield, "unplugged step " + std::to_string(t) +
                                         " inside the session window");
            ++plugged;
        }
        if (w.n_goal < 0) detail::fail(sfield, "n_goal negative");
        if (w.n_goal > plugged && w.departure <= T)
            detail::fail(sfield, e.id + ": n_goal " + std::to_string(w.n_goal) +
                                     " exceeds the " + std::to_string(plugged) +
                                     " plugged steps before departure");
        milp::Row row;
        row.sense = w.departure <= T ? milp::Sense::EQ : milp::Sense::LE;
        row.rhs = w.n_goal;
        for (int t = lo; t < hi; ++t) row.terms.push_back({dv.u[t], 1.0});
        m.add_row(row);
        for (int j = 0; j < w.n_min; ++j) {
            const int t = w.arrival + j;
            if (t < 0 || t >= T) continue;
            m.lb[dv.u[t]] = 1;
        }
    }

    // A start indicator covers every off-to-on edge while already plugged;
    // fresh arrivals are exempt.
    for (int t = 0; t < T; ++t) {
        const int phi_prev = t == 0 ? hist_phi(-1) : e.phi[t - 1];
        if (phi_prev != 1 || e.phi[t] != 1) continue;
        milp::Row row;
        row.sense = milp::Sense::GE;
        row.rhs = 0;
        row.terms.push_back({dv.b[t], 1.0});
        row.terms.push_back({dv.u[t], -1.0});
        if (t == 0)
            row.rhs = -hist_u(-1);
        else
            row.terms.push_back({dv.u[t - 1], 1.0});
        m.add_row(row);
    }

    for (int t = 0; t < T; ++t) {
        milp::Row row;
        row.sense = milp::Sense::LE;
        row.rhs = e.k_max_starts_24h;
        for (int i = t - k + 1; i <= t; ++i) {
            if (i >= 0)
                row.terms.push_back({dv.b[i], 1.0});
            else
                row.rhs -= hist_b(i);
        }
        m.add_pool_row(row);
    }
}

// Per-step station power attainable from the fleet model; used for variable
// bounds and the piecewise range.
struct PowerTerms {
    std::vector<std::vector<milp::RowTerm>> terms;  // per step
    std::vector<double> max_extra;                  // per step, above inflexible
};

inline BuiltModel build_model(const HorizonInputs& in, Formulation f,
                              const FlexOptions& opt = {}) {
    if (!is_optimizing(f))
        throw std::invalid_argument("formulation " + to_string(f) + " has no optimization model");
    const int T = in.horizon;
    if (T <= 0) detail::fail("horizon", "must be positive");
    if (in.k <= 0) detail::fail("k", "must be positive");
    if (in.dt_hours <= 0) detail::fail("dt_hours", "must be positive");
    detail::require_series(in.p_inf_kw, T, "p_inf_kw");

    BuiltModel bm;
    bm.formulation = f;
    PowerTerms pw;
    pw.terms.resize(T);
    pw.max_extra.assign(T, 0.0);

    auto emit_tcl = [&](const TclHorizon& e, std::vector<DeviceVars>& bucket,
                        const std::string& field) {
        DeviceVars dv;
        emit_blocking_windows(bm, dv, e, T, opt, field);
        if (f == Formulation::Ideal) {
            if (!e.has_plant)
                detail::fail(field, "exact formulation requires the tank plant parameters");
            emit_tank_plant(bm, dv, e, T, in.dt_hours, opt, field);
            for (int t = 0; t < T; ++t) {
                if (e.modulating)
                    pw.terms[t].push_back({dv.power[t], 1.0});
                else
                    pw.terms[t].push_back({dv.rho[t], e.p_nom_kw});
                pw.max_extra[t] += e.p_nom_kw;
            }
        } else if (e.l2_profile) {
            emit_reheat_profile(bm, dv, e, T, field);
            for (int t = 0; t < T; ++t) {
                pw.terms[t].push_back({dv.u[t], 0.1 * e.p_nom_kw});
                pw.terms[t].push_back({dv.rho[t], 0.9 * e.p_nom_kw});
                pw.max_extra[t] += e.p_nom_kw;
            }
        } else {
            if (!e.alpha.empty()) detail::require_series(e.alpha, T, field + ".alpha");
            for (int t = 0; t < T; ++t) {
                const double a = e.alpha.empty() ? 1.0 : e.alpha[t];
                pw.terms[t].push_back({dv.u[t], a * e.p_nom_kw});
                pw.max_extra[t] += std::max(0.0, a * e.p_nom_kw);
            }
        }
        bucket.push_back(std::move(dv));
    };

    for (size_t i = 0; i < in.hps.size(); ++i)
        emit_tcl(in.hps[i], bm.vars.hp, "hps[" + std::to_string(i) + "]");
    for (size_t i = 0; i < in.ewhs.size(); ++i)
        emit_tcl(in.ewhs[i], bm.vars.ewh, "ewhs[" + std::to_string(i) + "]");
    for (size_t i = 0; i < in.evs.size(); ++i) {
        DeviceVars dv;
        emit_ev_charging(bm, dv, in.evs[i], T, in.k, "evs[" + std::to_string(i) + "]");
        for (int t = 0; t < T; ++t) {
            pw.terms[t].push_back({dv.u[t], in.evs[i].p_nom_kw});
            if (in.evs[i].phi[t]) pw.max_extra[t] += in.evs[i].p_nom_kw;
        }
        bm.vars.ev.push_back(std::move(dv));
    }

    bm.vars.ptot.resize(T);
    for (int t = 0; t < T; ++t) {
        bm.vars.ptot[t] = bm.mip.add_var("ptot" + std::to_string(t), in.p_inf_kw[t],
                                         in.p_inf_kw[t] + pw.max_extra[t], false);
        milp::Row row;
        row.sense = milp::Sense::EQ;
        row.rhs = in.p_inf_kw[t];
        row.terms.push_back({bm.vars.ptot[t], 1.0});
        for (const auto& term : pw.terms[t]) row.terms.push_back({term.var, -term.coeff});
        bm.mip.add_row(row, bm.vars.ptot[t]);
    }
    return bm;
}

// Objective on the station total: largest absolute power, or the sum of
// squared deviations from the reference approximated from below by tangents
// (refined further during the solve).
inline void set_objective(BuiltModel& bm, ObjectiveKind kind, double p_ref,
                          const FlexOptions& opt = {}) {
    auto& m = bm.mip;
    const int T = static_cast<int>(bm.vars.ptot.size());
    double attain = 0, span = 0;
    for (int t = 0; t < T; ++t) {
        const int x = bm.vars.ptot[t];
        attain = std::max({attain, std::abs(m.lb[x]), std::abs(m.ub[x])});
        span = std::max({span, std::abs(m.lb[x] - p_ref), std::abs(m.ub[x] - p_ref)});
    }

    if (kind == ObjectiveKind::PeakAbs) {
        bm.vars.peak = m.add_var("peak", 0, attain, false, 1.0);
        for (int t = 0; t < T; ++t) {
            milp::Row above;
            above.sense = milp::Sense::GE;
            above.rhs = 0;
            above.terms.push_back({bm.vars.peak, 1.0});
            above.terms.push_back({bm.vars.ptot[t], -1.0});
            m.add_row(above);
            milp::Row below;
            below.sense = milp::Sense::GE;
            below.rhs = 0;
            below.terms.push_back({bm.vars.peak, 1.0});
            below.terms.push_back({bm.vars.ptot[t], 1.0});
            m.add_row(below);
        }
        return;
    }

    double range = span;
    if (opt.pwl_center_abs_kw > 0) {
        const double configured = opt.pwl_range_scale * opt.pwl_center_abs_kw;
        if (configured < span)
            bm.warnings.push_back("piecewise range widened from " + std::to_string(configured) +
                                  " to " + std::to_string(span) +
                                  " kW to cover the attainable station power");
        else
            range = configured;
    }
    const int segs = std::max(2, opt.pwl_segments);
    bm.vars.zdev.resize(T);
    for (int t = 0; t < T; ++t) {
        const int x = bm.vars.ptot[t];
        const double dmax =
            std::max(std::abs(m.lb[x] - p_ref), std::abs(m.ub[x] - p_ref));
        const int z = m.add_var("z" + std::to_string(t), 0, dmax * dmax, false, 1.0);
        bm.vars.zdev[t] = z;
        m.quad.push_back({x, z, p_ref, 1.0});
        for (int s = 0; s < segs; ++s) {
            const double d = -range + 2.0 * range * s / (segs - 1);
            const double a = 2.0 * d;
            milp::Row cut;
            cut.sense = milp::Sense::GE;
            cut.rhs = d * d - a * (p_ref + d);
            cut.terms.push_back({z, 1.0});
            cut.terms.push_back({x, -a});
            m.add_pool_row(cut);
        }
    }
}

// ---- Plan evaluation shared by the oracle, warm starts and diagnostics ----

struct PlantTrace {
    std::vector<double> temp_c, power_kw, e_lo_kwh, p_hat_kw, clamp_kw;
    std::vector<std::uint8_t> on;
};

inline PlantTrace run_plant(const TclHorizon& e, const std::vector<int>& u, double dt) {
    const int T = static_cast<int>(u.size());
    PlantTrace tr;
    tr.temp_c.resize(T);
    tr.power_kw.resize(T);
    tr.e_lo_kwh.resize(T);
    tr.p_hat_kw.resize(T);
    tr.clamp_kw.resize(T);
    tr.on.resize(T);
    TankParams tank{e.volume_m3, e.loss_kw_per_k, e.env_temp_c, dt};
    const double cap = tank_capacity_kwh_per_k(e.volume_m3);
    double temp = e.temp_start_c;
    bool on = e.on_start;
    for (int t = 0; t < T; ++t) {
        const double loss = tank_loss_kwh(tank, temp);
        const double e_lo = std::max(0.0, (e.t_lo_c[t] - temp) * cap);
        const double p_hat = (e.demand_kwh[t] + loss + e_lo) / (e.eta[t] * dt);
        const double clamped = std::clamp(p_hat, e.p_min_kw, e.p_nom_kw);
        on = hysteresis_step(on, temp, e.t_lo_c[t], e.t_up_c[t], u[t] != 0);
        const double power = !on ? 0.0 : (e.modulating ? clamped : e.p_nom_kw);
        temp += (power * e.eta[t] * dt - e.demand_kwh[t] - loss) / cap;
        tr.temp_c[t] = temp;
        tr.power_kw[t] = power;
        tr.e_lo_kwh[t] = e_lo;
        tr.p_hat_kw[t] = p_hat;
        tr.clamp_kw[t] = clamped;
        tr.on[t] = on ? 1 : 0;
    }
    return tr;
}

// Power a command plan contributes under the given formulation's pricing.
inline std::vector<double> tcl_power(const TclHorizon& e, const std::vector<int>& u,
                                     Formulation f, double dt) {
    const int T = static_cast<int>(u.size());
    std::vector<double> p(T, 0.0);
    if (f == Formulation::Ideal) {
        return run_plant(e, u, dt).power_kw;
    }
    if (e.l2_profile) {
        const std::vector<int> rho = derive_run_profile(e.hist_u, u, e.rule.k_run);
        for (int t = 0; t < T; ++t)
            p[t] = (0.1 * u[t] + 0.9 * rho[t]) * e.p_nom_kw;
        return p;
    }
    for (int t = 0; t < T; ++t) {
        const double a = e.alpha.empty() ? 1.0 : e.alpha[t];
        p[t] = u[t] * a * e.p_nom_kw;
    }
    return p;
}

struct PlanSet {
    std::vector<std::vector<int>> hp_u, ewh_u, ev_u;
};

inline std::vector<double> total_power(const HorizonInputs& in, Formulation f,
                                       const PlanSet& plans) {
    std::vector<double> tot = in.p_inf_kw;
    for (size_t i = 0; i < in.hps.size(); ++i) {
        const auto p = tcl_power(in.hps[i], plans.hp_u[i], f, in.dt_hours);
        for (int t = 0; t < in.horizon; ++t) tot[t] += p[t];
    }
    for (size_t i = 0; i < in.ewhs.size(); ++i) {
        const auto p = tcl_power(in.ewhs[i], plans.ewh_u[i], f, in.dt_hours);
        for (int t = 0; t < in.horizon; ++t) tot[t] += p[t];
    }
    for (size_t i = 0; i < in.evs.size(); ++i) {
        for (int t = 0; t < in.horizon; ++t)
            tot[t] += plans.ev_u[i][t] * in.evs[i].p_nom_kw;
    }
    return tot;
}

inline double plan_objective(const HorizonInputs& in, Formulation f, const PlanSet& plans) {
    const std::vector<double> tot = total_power(in, f, plans);
    if (objective_for(f) == ObjectiveKind::PeakAbs) {
        double peak = 0;
        for (double x : tot) peak = std::max(peak, std::abs(x));
        return peak;
    }
    double s = 0;
    for (double x : tot) s += (x - in.p_ref_kw) * (x - in.p_ref_kw);
    return s;
}

// Complete variable assignment implied by command plans: event indicators,
// profile and plant states, per-step totals and objective variables.
inline std::vector<double> assemble_assignment(const BuiltModel& bm, const HorizonInputs& in,
                                               const PlanSet& plans) {
    const int T = in.horizon;
    std::vector<double> x(bm.mip.num_vars(), 0.0);
    const Formulation f = bm.formulation;

    auto fill_tcl = [&](const TclHorizon& e, const DeviceVars& dv, const std::vector<int>& u) {
        for (int t = 0; t < T; ++t) x[dv.u[t]] = u[t];
        if (!dv.v.empty()) {
            CommandLog log(e.hist_u, u);
            for (int t = 0; t < T; ++t) {
                x[dv.v[t]] = log.v(t);
                x[dv.w[t]] = log.w(t);
            }
        }
        if (f == Formulation::Ideal) {
            const PlantTrace tr = run_plant(e, u, in.dt_hours);
            double prev = e.temp_start_c;
            for (int t = 0; t < T; ++t) {
                x[dv.rho[t]] = tr.on[t];
                x[dv.temp[t]] = tr.temp_c[t];
                if (e.modulating) {
                    x[dv.e_lo[t]] = tr.e_lo_kwh[t];
                    x[dv.clamp[t]] = tr.clamp_kw[t];
                    x[dv.power[t]] = tr.power_kw[t];
                    x[dv.delta[t]] = tr.e_lo_kwh[t] > 0 ? 1 : 0;
                    x[dv.sigma[t]] = tr.p_hat_kw[t] < e.p_min_kw ? 1 : 0;
                    x[dv.tau[t]] = tr.p_hat_kw[t] > e.p_nom_kw ? 1 : 0;
                }
                prev = tr.temp_c[t];
            }
            (void)prev;
        } else if (e.l2_profile) {
            const std::vector<int> rho = derive_run_profile(e.hist_u, u, e.rule.k_run);
            for (int t = 0; t < T; ++t) x[dv.rho[t]] = rho[t];
        }
    };

    for (size_t i = 0; i < in.hps.size(); ++i) fill_tcl(in.hps[i], bm.vars.hp[i], plans.hp_u[i]);
    for (size_t i = 0; i < in.ewhs.size(); ++i)
        fill_tcl(in.ewhs[i], bm.vars.ewh[i], plans.ewh_u[i]);

    for (size_t i = 0; i < in.evs.size(); ++i) {
        const EvHorizon& e = in.evs[i];
        const DeviceVars& dv = bm.vars.ev[i];
        const std::vector<int>& u = plans.ev_u[i];
        const int h = static_cast<int>(e.hist_u.size());
        for (int t = 0; t < T; ++t) {
            x[dv.u[t]] = u[t];
            const int u_prev = t == 0 ? (h > 0 ? e.hist_u[h - 1] : 0) : u[t - 1];
            const int phi_prev = t == 0 ? (h > 0 ? e.hist_phi[h - 1] : 0) : e.phi[t - 1];
            x[dv.b[t]] = (u[t] == 1 && u_prev == 0 && phi_prev == 1) ? 1 : 0;
        }
    }

    const std::vector<double> tot = total_power(in, f, plans);
    for (int t = 0; t < T; ++t) x[bm.vars.ptot[t]] = tot[t];
    if (bm.vars.peak >= 0) {
        double peak = 0;
        for (double v : tot) peak = std::max(peak, std::abs(v));
        x[bm.vars.peak] = peak;
    }
    for (const auto& q : bm.mip.quad) x[q.z] = (x[q.x] - q.ref) * (x[q.x] - q.ref);
    return x;
}

// ---- Feasible reference plans (warm-start tails and degraded operation) ----

// Obligation-completing default plan: finish an ongoing block, then stay
// unblocked; devices with a maximum unblocked duration alternate between the
// longest allowed run and the shortest allowed block.
inline std::vector<int> fallback_plan_tcl(const TclHorizon& e, int T) {
    const TclRule& r = e.rule;
    std::vector<int> plan(T, 1);
    const std::vector<int> empty;
    CommandLog h(e.hist_u, empty);
    int t = 0;
    if (h.u(-1) == 0) {
        int age = 0;
        while (h.u(-1 - age) == 0) ++age;
        for (; t < T && age < r.k_min_block; ++t, ++age) plan[t] = 0;
    }
    if (r.k_max_unblock < 0) return plan;
    long long run = detail::boundary_run_age(e.hist_u);
    if (t > 0) run = -1;
    while (t < T) {
        const long long used = run + 1;
        for (long long j = used; j < r.k_max_unblock && t < T; ++j, ++t) plan[t] = 1;
        for (int j = 0; j < r.k_min_block && t < T; ++j, ++t) plan[t] = 0;
        run = -1;
    }
    return plan;
}

// Earliest-possible charging plan meeting each session's goal.
inline std::vector<int> fallback_plan_ev(const EvHorizon& e, int T) {
    std::vector<int> plan(T, 0);
    for (const EvWindow& w : e.sessions) {
        int need = w.n_goal;
        for (int t = std::max(0, w.arrival); t < std::min(T, w.departure) && need > 0; ++t) {
            plan[t] = 1;
            --need;
        }
    }
    return plan;
}

inline std::vector<EvSessionCheck> session_checks(const EvHorizon& e) {
    std::vector<EvSessionCheck> out;
    for (const EvWindow& w : e.sessions) out.push_back({w.arrival, w.departure, w.n_goal, w.n_min});
    return out;
}

inline bool plan_feasible(const HorizonInputs& in, const PlanSet& plans) {
    for (size_t i = 0; i < in.hps.size(); ++i)
        if (!check_tcl(in.hps[i].hist_u, plans.hp_u[i], in.hps[i].rule).empty()) return false;
    for (size_t i = 0; i < in.ewhs.size(); ++i)
        if (!check_tcl(in.ewhs[i].hist_u, plans.ewh_u[i], in.ewhs[i].rule).empty()) return false;
    for (size_t i = 0; i < in.evs.size(); ++i) {
        const EvHorizon& e = in.evs[i];
        if (!check_ev(e.hist_u, e.hist_phi, plans.ev_u[i], e.phi, session_checks(e), in.k,
                      e.k_max_starts_24h)
                 .empty())
            return false;
    }
    return true;
}

// Per-device repair of a proposed plan set; devices that cannot be repaired
// monotonically fall back to their default plan. Returns false if even the
// fallbacks fail the checker.
inline bool repair_plans(const HorizonInputs& in, PlanSet& plans) {
    const int T = in.horizon;
    auto fix_tcl = [&](const TclHorizon& e, std::vector<int>& u) {
        bool stuck = false;
        correct_tcl(e.hist_u, u, e.rule, &stuck);
        if (stuck || !check_tcl(e.hist_u, u, e.rule).empty()) u = fallback_plan_tcl(e, T);
        return check_tcl(e.hist_u, u, e.rule).empty();
    };
    bool ok = true;
    for (size_t i = 0; i < in.hps.size(); ++i) ok = fix_tcl(in.hps[i], plans.hp_u[i]) && ok;
    for (size_t i = 0; i < in.ewhs.size(); ++i) ok = fix_tcl(in.ewhs[i], plans.ewh_u[i]) && ok;
    for (size_t i = 0; i < in.evs.size(); ++i) {
        const EvHorizon& e = in.evs[i];
        auto bad = [&](const std::vector<int>& u) {
            return !check_ev(e.hist_u, e.hist_phi, u, e.phi, session_checks(e), in.k,
                             e.k_max_starts_24h)
                        .empty();
        };
        if (bad(plans.ev_u[i])) plans.ev_u[i] = fallback_plan_ev(e, T);
        ok = !bad(plans.ev_u[i]) && ok;
    }
    return ok;
}

inline PlanSet extract_plans(const BuiltModel& bm, const std::vector<double>& x) {
    PlanSet out;
    auto take = [&](const std::vector<DeviceVars>& devs, std::vector<std::vector<int>>& dst) {
        for (const DeviceVars& dv : devs) {
            std::vector<int> u(dv.u.size());
            for (size_t t = 0; t < dv.u.size(); ++t) u[t] = x[dv.u[t]] > 0.5 ? 1 : 0;
            dst.push_back(std::move(u));
        }
    };
    take(bm.vars.hp, out.hp_u);
    take(bm.vars.ewh, out.ewh_u);
    take(bm.vars.ev, out.ev_u);
    return out;
}

// ---- Solve ----

struct SolveSettings {
    double time_limit_s = 300.0;
    double ticks_per_second = 20000.0;
    bool use_heuristic = true;
};

struct FlexSolution {
    milp::SolveReport report;
    PlanSet plans;
    bool has_plans = false;
};

inline FlexSolution solve_model(BuiltModel& bm, const HorizonInputs& in,
                                const SolveSettings& settings = {},
                                const PlanSet* warm = nullptr) {
    milp::MipOptions mo;
    mo.ticks_per_second = settings.ticks_per_second;
    mo.tick_limit = static_cast<long long>(settings.time_limit_s * settings.ticks_per_second);
    if (warm) {
        PlanSet w = *warm;
        if (repair_plans(in, w)) bm.mip.warm = assemble_assignment(bm, in, w);
    }
    if (settings.use_heuristic) {
        mo.heuristic = [&bm, &in](const std::vector<double>& relax, std::vector<double>& out) {
            PlanSet plans = extract_plans(bm, relax);
            if (!repair_plans(in, plans)) return false;
            out = assemble_assignment(bm, in, plans);
            return true;
        };
    }
    FlexSolution sol;
    sol.report = milp::solve_mip(bm.mip, mo);
    if (!sol.report.x.empty() && sol.report.status != milp::SolveStatus::Infeasible &&
        sol.report.status != milp::SolveStatus::NoIncumbent) {
        sol.plans = extract_plans(bm, sol.report.x);
        sol.has_plans = true;
    }
    return sol;
}

// ---- Exhaustive reference optimizer ----

struct BruteForceResult {
    bool feasible = false;
    double objective = 0;
    std::vector<PlanSet> argmins;
};

namespace detail {

inline std::vector<std::vector<int>> feasible_tcl_plans(const TclHorizon& e, int T) {
    std::vector<std::vector<int>> out;
    std::vector<int> u(T, 0);
    for (long long mask = 0; mask < (1LL << T); ++mask) {
        for (int t = 0; t < T; ++t) u[t] = (mask >> t) & 1;
        if (check_tcl(e.hist_u, u, e.rule).empty()) out.push_back(u);
    }
    return out;
}

inline std::vector<std::vector<int>> feasible_ev_plans(const EvHorizon& e, int T, int k) {
    std::vector<int> slots;
    for (int t = 0; t < T; ++t)
        if (e.phi[t] == 1) slots.push_back(t);
    const auto sessions = session_checks(e);
    std::vector<std::vector<int>> out;
    std::vector<int> u(T, 0);
    for (long long mask = 0; mask < (1LL << slots.size()); ++mask) {
        std::fill(u.begin(), u.end(), 0);
        for (size_t j = 0; j < slots.size(); ++j) u[slots[j]] = (mask >> j) & 1;
        if (check_ev(e.hist_u, e.hist_phi, u, e.phi, sessions, k, e.k_max_starts_24h).empty())
            out.push_back(u);
    }
    return out;
}

}  // namespace detail

// Enumerates every feasible command combination and evaluates the exact
// objective, returning the optimum together with all plans attaining it.
inline BruteForceResult brute_force(const HorizonInputs& in, Formulation f, int cap = 24) {
    const int T = in.horizon;
    long long decisions = static_cast<long long>(T) * (in.hps.size() + in.ewhs.size());
    for (const EvHorizon& e : in.evs)
        for (int t = 0; t < T; ++t) decisions += e.phi[t] == 1 ? 1 : 0;
    if (decisions > cap)
        throw std::invalid_argument("brute_force: " + std::to_string(decisions) +
                                    " binary decisions exceed the cap of " + std::to_string(cap));

    struct DeviceChoice {
        std::vector<std::vector<int>> plans;
        std::vector<std::vector<double>> power;
        std::vector<std::vector<int>>* dst = nullptr;
    };
    std::vector<DeviceChoice> devices;
    PlanSet current;
    current.hp_u.resize(in.hps.size());
    current.ewh_u.resize(in.ewhs.size());
    current.ev_u.resize(in.evs.size());

    for (size_t i = 0; i < in.hps.size(); ++i) {
        DeviceChoice d;
        d.plans = detail::feasible_tcl_plans(in.hps[i], T);
        for (const auto& u : d.plans) d.power.push_back(tcl_power(in.hps[i], u, f, in.dt_hours));
        d.dst = &current.hp_u;
        devices.push_back(std::move(d));
    }
    for (size_t i = 0; i < in.ewhs.size(); ++i) {
        DeviceChoice d;
        d.plans = detail::feasible_tcl_plans(in.ewhs[i], T);
        for (const auto& u : d.plans) d.power.push_back(tcl_power(in.ewhs[i], u, f, in.dt_hours));
        d.dst = &current.ewh_u;
        devices.push_back(std::move(d));
    }
    for (size_t i = 0; i < in.evs.size(); ++i) {
        DeviceChoice d;
        d.plans = detail::feasible_ev_plans(in.evs[i], T, in.k);
        for (const auto& u : d.plans) {
            std::vector<double> p(T);
            for (int t = 0; t < T; ++t) p[t] = u[t] * in.evs[i].p_nom_kw;
            d.power.push_back(std::move(p));
        }
        d.dst = &current.ev_u;
        devices.push_back(std::move(d));
    }

    BruteForceResult res;
    for (const auto& d : devices)
        if (d.plans.empty()) return res;

    const ObjectiveKind kind = objective_for(f);
    const size_t n = devices.size();
    std::vector<size_t> pick(n, 0);
    std::vector<double> tot = in.p_inf_kw;
    double best = milp::kInf;

    std::function<void(size_t)> walk = [&](size_t d) {
        if (d == n) {
            double obj = 0;
            if (kind == ObjectiveKind::PeakAbs) {
                for (double x : tot) obj = std::max(obj, std::abs(x));
            } else {
                for (double x : tot) obj += (x - in.p_ref_kw) * (x - in.p_ref_kw);
            }
            if (obj < best - 1e-9) {
                best = obj;
                res.argmins.clear();
            }
            if (obj <= best + 1e-9) {
                size_t hp_i = 0, ewh_i = 0, ev_i = 0;
                PlanSet ps;
                ps.hp_u.resize(in.hps.size());
                ps.ewh_u.resize(in.ewhs.size());
                ps.ev_u.resize(in.evs.size());
                for (size_t j = 0; j < n; ++j) {
                    const auto& plan = devices[j].plans[pick[j]];
                    if (devices[j].dst == &current.hp_u)
                        ps.hp_u[hp_i++] = plan;
                    else if (devices[j].dst == &current.ewh_u)
                        ps.ewh_u[ewh_i++] = plan;
                    else
                        ps.ev_u[ev_i++] = plan;
                }
                res.argmins.push_back(std::move(ps));
            }
            return;
        }
        for (size_t c = 0; c < devices[d].plans.size(); ++c) {
            pick[d] = c;
            for (int t = 0; t < T; ++t) tot[t] += devices[d].power[c][t];
            walk(d + 1);
            for (int t = 0; t < T; ++t) tot[t] -= devices[d].power[c][t];
        }
    };
    walk(0);
    res.feasible = true;
    res.objective = best;
    return res;
}

// Restricts a vehicle to its session already running at the window start:
// later arrivals are dropped and the plugged indicator is cleared beyond the
// ongoing departure.
inline EvHorizon restrict_to_ongoing(EvHorizon e) {
    int keep_until = 0;
    std::vector<EvWindow> kept;
    for (const EvWindow& w : e.sessions) {
        if (w.arrival > 0) continue;
        kept.push_back(w);
        keep_until = std::max(keep_until, w.departure);
    }
    e.sessions = std::move(kept);
    for (int t = 0; t < static_cast<int>(e.phi.size()); ++t)
        if (t >= keep_until) e.phi[t] = 0;
    return e;
}

}  // namespace dlcflex::flexopt

#endif
