#ifndef DLCFLEX_FEASIBILITY_HPP
#define DLCFLEX_FEASIBILITY_HPP

#include <algorithm>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

namespace dlcflex {

// Window rules applied to a blockable device's command sequence. k is the
// number of steps per 24 h window. Disabled families use -1.
struct TclRule {
    int k = 96;
    int budget_24h = 0;
    int k_min_block = 1;
    int k_max_block = -1;
    int k_min_unblock = 1;
    int k_max_unblock = -1;
    int k_run = -1;
};

struct Violation {
    std::string rule;
    int device = -1;
    int step = 0;
    std::string detail;
};

// Commands with their history: u(i) for i < 0 reads the history buffer and
// steps before the buffer are treated as unblocked (the free-run default).
class CommandLog {
  public:
    CommandLog(const std::vector<int>& hist, const std::vector<int>& plan)
        : hist_(hist), plan_(plan) {}

    int size() const { return static_cast<int>(plan_.size()); }

    int u(int i) const {
        if (i >= 0) return i < size() ? plan_[i] : 1;
        const int h = static_cast<int>(hist_.size()) + i;
        return h >= 0 ? hist_[h] : 1;
    }
    // Unblocking event: off-to-on edge.
    int v(int i) const { return u(i) == 1 && u(i - 1) == 0 ? 1 : 0; }
    // Blocking event: on-to-off edge.
    int w(int i) const { return u(i) == 0 && u(i - 1) == 1 ? 1 : 0; }

  private:
    const std::vector<int>& hist_;
    const std::vector<int>& plan_;
};

namespace detail {

inline void add_violation(std::vector<Violation>* out, const std::string& rule, int device,
                          int step, const std::string& detail) {
    if (out) out->push_back({rule, device, step, detail});
}

}  // namespace detail

// Steps of full-power tank reheating at the start of each unblocked period:
// 1 during the first k_run steps after an off-to-on edge, 0 otherwise.
// Periods already running when the history buffer begins count as stale.
inline std::vector<int> derive_run_profile(const std::vector<int>& hist,
                                           const std::vector<int>& plan, int k_run) {
    CommandLog log(hist, plan);
    std::vector<int> rho(plan.size(), 0);
    const int h = static_cast<int>(hist.size());
    // Position within the current unblocked run, counted from its v event.
    // Scan from the history start; anything older is treated as long-running.
    long long run_pos = static_cast<long long>(plan.size()) + h + 1;
    for (int i = -h; i < static_cast<int>(plan.size()); ++i) {
        if (log.u(i) == 0)
            run_pos = -1;
        else if (log.v(i) == 1)
            run_pos = 0;
        else if (run_pos >= 0)
            ++run_pos;
        if (i >= 0) rho[i] = (run_pos >= 0 && run_pos < k_run) ? 1 : 0;
    }
    return rho;
}

// Equation-by-equation check of a blockable device's plan against its window
// rules. Every window instance whose constrained step lies in the plan (or
// whose forward window reaches into it) is evaluated; history terms come from
// the buffer.
inline std::vector<Violation> check_tcl(const std::vector<int>& hist,
                                        const std::vector<int>& plan, const TclRule& r,
                                        int device = -1) {
    std::vector<Violation> out;
    CommandLog log(hist, plan);
    const int L = static_cast<int>(plan.size());
    char buf[160];

    for (int t = 0; t < L; ++t) {
        if (plan[t] != 0 && plan[t] != 1)
            detail::add_violation(&out, "binary", device, t, "command not 0/1");
    }

    // 24h budget: at most budget_24h blocked steps in any k-window.
    for (int t = 0; t < L; ++t) {
        int s = 0;
        for (int i = t - r.k + 1; i <= t; ++i) s += log.u(i);
        if (s < r.k - r.budget_24h) {
            std::snprintf(buf, sizeof buf, "window ending at %d has %d unblocked, needs %d", t,
                          s, r.k - r.budget_24h);
            detail::add_violation(&out, "24h-budget", device, t, buf);
        }
    }

    // Max consecutive blocked steps: a blocking event must see an unblocked
    // step within the next k_max_block steps.
    if (r.k_max_block >= 0) {
        for (int t = -r.k_max_block; t < L - r.k_max_block; ++t) {
            if (log.w(t) == 0) continue;
            int s = 0;
            for (int i = t; i <= t + r.k_max_block; ++i) s += log.u(i);
            if (s < 1) {
                std::snprintf(buf, sizeof buf, "block starting at %d exceeds %d steps", t,
                              r.k_max_block);
                detail::add_violation(&out, "max-block", device, t, buf);
            }
        }
    }

    // Min gap between unblocking events.
    for (int t = 0; t < L; ++t) {
        int s = 0;
        for (int i = t - r.k_min_unblock + 1; i <= t; ++i) s += log.v(i);
        if (s > log.u(t)) {
            std::snprintf(buf, sizeof buf, "%d unblocking events within %d steps of %d", s,
                          r.k_min_unblock, t);
            detail::add_violation(&out, "min-unblock", device, t, buf);
        }
    }

    // Min blocking duration: a blocking event pins u to 0 for k_min_block steps.
    for (int t = 0; t < L; ++t) {
        int s = 0;
        for (int i = t - r.k_min_block + 1; i <= t; ++i) s += log.w(i);
        if (s > 1 - log.u(t)) {
            std::snprintf(buf, sizeof buf, "block younger than %d steps released at %d",
                          r.k_min_block, t);
            detail::add_violation(&out, "min-block", device, t, buf);
        }
    }

    // Budget-aware start: a block may only start if the preceding steps leave
    // room for its minimum duration inside the 24h budget.
    for (int t = 0; t < L; ++t) {
        if (log.w(t) == 0) continue;
        int s = 0;
        for (int i = t - r.k + r.k_min_block; i <= t - 1; ++i) s += log.u(i);
        if (s < r.k - r.budget_24h) {
            std::snprintf(buf, sizeof buf,
                          "block start at %d: only %d unblocked in lookback, needs %d", t, s,
                          r.k - r.budget_24h);
            detail::add_violation(&out, "block-start-budget", device, t, buf);
        }
    }

    // Max consecutive unblocked steps: an unblocking event must see a blocked
    // step within the next k_max_unblock steps.
    if (r.k_max_unblock >= 0) {
        for (int t = -r.k_max_unblock; t < L - r.k_max_unblock; ++t) {
            if (log.v(t) == 0) continue;
            int s = 0;
            for (int i = t; i <= t + r.k_max_unblock; ++i) s += 1 - log.u(i);
            if (s < 1) {
                std::snprintf(buf, sizeof buf, "unblocked run from %d exceeds %d steps", t,
                              r.k_max_unblock);
                detail::add_violation(&out, "max-unblock", device, t, buf);
            }
        }
    }

    // Reheat profile structure: rho = 1 exactly during the first k_run steps
    // of each unblocked period. The derived profile must match the planner's
    // event-sum form: at most one unblocking event per reheat window and no
    // re-blocking while a reheat is active.
    if (r.k_run >= 0) {
        const std::vector<int> rho = derive_run_profile(hist, plan, r.k_run);
        long long trail = 0;
        for (auto it = hist.rbegin(); it != hist.rend() && *it == 1; ++it) ++trail;
        const long long age =
            trail == 0 ? -1
                       : trail == static_cast<long long>(hist.size()) ? (1LL << 30) : trail - 1;
        for (int t = 0; t < L; ++t) {
            int events = (age >= 0 && age + 1 + t < r.k_run) ? 1 : 0;
            for (int i = std::max(0, t - r.k_run + 1); i <= t; ++i) events += log.v(i);
            if (events > 1)
                detail::add_violation(&out, "run-profile", device, t,
                                      "two unblocking events inside one reheat window");
            else if (rho[t] != events)
                detail::add_violation(&out, "run-profile", device, t,
                                      rho[t] < events
                                          ? "re-blocked inside the reheat window"
                                          : "full-power flag set after the reheat window");
        }
    }

    return out;
}

struct EvSessionCheck {
    int arrival = 0;    // first plugged step, relative to plan start
    int departure = 0;  // first step after the session; may exceed the plan
    int n_goal = 0;
    int n_min = 0;
};

// Charging-command check: commands only while plugged, exact goal charging for
// in-plan departures, mandatory charging for the first n_min steps, and the
// 24h cap on off-to-on charging starts (arrival steps exempt).
inline std::vector<Violation> check_ev(const std::vector<int>& hist_u,
                                       const std::vector<int>& hist_phi,
                                       const std::vector<int>& plan_u,
                                       const std::vector<int>& plan_phi,
                                       const std::vector<EvSessionCheck>& sessions, int k,
                                       int k_max_starts_24h, int device = -1) {
    std::vector<Violation> out;
    const int L = static_cast<int>(plan_u.size());
    const int h = static_cast<int>(hist_u.size());
    char buf[160];
    auto u = [&](int i) {
        if (i >= 0) return i < L ? plan_u[i] : 0;
        const int j = h + i;
        return j >= 0 ? hist_u[j] : 0;
    };
    auto phi = [&](int i) {
        if (i >= 0) return i < L ? plan_phi[i] : 0;
        const int j = static_cast<int>(hist_phi.size()) + i;
        return j >= 0 ? hist_phi[j] : 0;
    };
    auto start = [&](int i) { return (u(i) == 1 && u(i - 1) == 0 && phi(i - 1) == 1) ? 1 : 0; };

    for (int t = 0; t < L; ++t) {
        if (plan_u[t] != 0 && plan_u[t] != 1)
            detail::add_violation(&out, "binary", device, t, "command not 0/1");
        if (u(t) > phi(t))
            detail::add_violation(&out, "plugged-only", device, t, "charging while unplugged");
    }

    for (const auto& s : sessions) {
        const int end = std::min(s.departure, L);
        int charged = 0;
        for (int t = std::max(0, s.arrival); t < end; ++t) charged += u(t);
        if (s.departure <= L && charged != s.n_goal) {
            std::snprintf(buf, sizeof buf, "session [%d,%d) charged %d steps, goal %d",
                          s.arrival, s.departure, charged, s.n_goal);
            detail::add_violation(&out, "goal-charge", device, s.arrival, buf);
        }
        if (s.departure > L && charged > s.n_goal) {
            std::snprintf(buf, sizeof buf, "session [%d,%d) charged %d steps, goal %d",
                          s.arrival, s.departure, charged, s.n_goal);
            detail::add_violation(&out, "goal-charge", device, s.arrival, buf);
        }
        for (int j = 0; j < s.n_min; ++j) {
            const int t = s.arrival + j;
            if (t < 0 || t >= L) continue;
            if (u(t) != 1) {
                std::snprintf(buf, sizeof buf, "paused %d steps into session, minimum %d", j,
                              s.n_min);
                detail::add_violation(&out, "min-charge", device, t, buf);
                break;
            }
        }
    }

    for (int t = 0; t < L; ++t) {
        int s = 0;
        for (int i = t - k + 1; i <= t; ++i) s += start(i);
        if (s > k_max_starts_24h) {
            std::snprintf(buf, sizeof buf, "%d charging starts in the 24h window ending at %d",
                          s, t);
            detail::add_violation(&out, "starts-24h", device, t, buf);
        }
    }
    return out;
}

// Monotone repair: flip blocked steps to unblocked until the plan passes
// check_tcl. Never blocks a step that was unblocked in the input. Backtracks
// over flip choices (bounded, deterministic) because a locally obvious flip
// can merge two unblocked runs past k_max_unblock even when a clean repair
// exists. Returns the number of flips; an unrepairable plan is left unchanged
// and *unrepairable is set.
inline int correct_tcl(const std::vector<int>& hist, std::vector<int>& plan, const TclRule& r,
                       bool* unrepairable = nullptr) {
    if (unrepairable) *unrepairable = false;
    const int L = static_cast<int>(plan.size());
    std::set<std::vector<int>> visited;
    int nodes = 0;
    std::function<bool(std::vector<int>&)> dfs = [&](std::vector<int>& p) -> bool {
        if (++nodes > 4000) return false;
        const std::vector<Violation> vs = check_tcl(hist, p, r);
        // Repair the earliest violation that unblocking can address; plans
        // where only blocking-demanding families (max-unblock) remain are
        // dead ends on this branch.
        const Violation* pick = nullptr;
        for (const auto& v : vs) {
            if (v.rule == "max-unblock" || v.rule == "binary") continue;
            if (!pick || v.step < pick->step) pick = &v;
        }
        if (!pick) return vs.empty();
        int lo = 0, hi = 0;
        bool earliest_first = false;
        if (pick->rule == "24h-budget") {
            lo = pick->step - r.k + 1;
            hi = pick->step;
        } else if (pick->rule == "max-block") {
            lo = pick->step;
            hi = pick->step + r.k_max_block;
            earliest_first = true;
        } else if (pick->rule == "min-unblock") {
            lo = pick->step - r.k_min_unblock + 1;
            hi = pick->step;
        } else if (pick->rule == "min-block") {
            // Release the too-young block that precedes the violation.
            lo = pick->step - r.k_min_block;
            hi = pick->step;
        } else if (pick->rule == "block-start-budget") {
            // Release the block that started without budget headroom.
            lo = pick->step;
            hi = L - 1;
            earliest_first = true;
        } else if (pick->rule == "run-profile") {
            // Unblock the interrupted or double-started reheat window.
            lo = pick->step - r.k_run + 1;
            hi = pick->step;
        }
        std::vector<int> cands;
        for (int i = std::max(0, lo); i <= std::min(L - 1, hi); ++i)
            if (p[i] == 0) cands.push_back(i);
        if (!earliest_first) std::reverse(cands.begin(), cands.end());
        for (int i : cands) {
            p[static_cast<size_t>(i)] = 1;
            if (visited.insert(p).second && dfs(p)) return true;
            p[static_cast<size_t>(i)] = 0;
        }
        return false;
    };
    std::vector<int> work = plan;
    if (!dfs(work)) {
        if (unrepairable) *unrepairable = true;
        return 0;
    }
    int flips = 0;
    for (int i = 0; i < L; ++i) flips += work[static_cast<size_t>(i)] - plan[static_cast<size_t>(i)];
    plan = std::move(work);
    return flips;
}

}  // namespace dlcflex

#endif
