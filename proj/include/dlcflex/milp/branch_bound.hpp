#ifndef DLCFLEX_MILP_BRANCH_BOUND_HPP
#define DLCFLEX_MILP_BRANCH_BOUND_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

#include "dlcflex/milp/model.hpp"
#include "dlcflex/milp/simplex.hpp"

namespace dlcflex::milp {

// Staged models (time-indexed state recursions) resolve front to back: fixing
// an early binary pins the state equalities behind it and tightens the big-M
// rows ahead, so branching on the first fractional variable usually beats
// most-fractional on them.
enum class BranchRule { FirstFractional, MostFractional };

struct MipOptions {
    double int_tol = 1e-6;
    double prune_slack = 1e-9;
    // Stop once the relative gap drops to this value (0 means prove optimality).
    double rel_gap_stop = 0.0;
    long long tick_limit = std::numeric_limits<long long>::max() / 4;
    double ticks_per_second = 20000.0;
    long long node_limit = 1LL << 40;
    BranchRule branch_rule = BranchRule::FirstFractional;
    int max_oa_rounds_per_node = 12;
    double oa_tol = 1e-7;
    int pool_batch = 200;
    long long heuristic_period = 400;
    // Given the current LP relaxation values, propose a full feasible
    // assignment. Return false when no proposal is available.
    std::function<bool(const std::vector<double>&, std::vector<double>&)> heuristic;
};

// Depth-first dive with a best-bound backtrack heap over a single shared LP.
// Pool rows activate lazily on violation (dropping them is a relaxation, so
// LP bounds stay valid); quadratic objectives are driven to exactness with
// outer-approximation tangents while incumbents are always scored with the
// true quadratic.
class MipSolver {
  public:
    explicit MipSolver(const MipModel& model, MipOptions opt = {})
        : model_(model), opt_(std::move(opt)) {}

    SolveReport solve() {
        const auto t0 = std::chrono::steady_clock::now();
        const int n = model_.num_vars();
        lp_.init(model_.lb, model_.ub, model_.obj);
        for (size_t i = 0; i < model_.rows.size(); ++i)
            lp_.add_row(model_.rows[i],
                        i < model_.crash_hint.size() ? model_.crash_hint[i] : -1);
        pool_active_.assign(model_.pool.size(), 0);
        cur_lb_ = model_.lb;
        cur_ub_ = model_.ub;
        touched_flag_.assign(n, 0);

        if (model_.warm.size() == static_cast<size_t>(n)) {
            if (assignment_is_integral(model_.warm) &&
                model_.max_violation(model_.warm) <= kIncumbentFeasTol) {
                incumbent_ = model_.warm;
                inc_obj_ = model_.true_objective(model_.warm);
                have_inc_ = true;
            }
        }

        bool have_dive = true;
        double dive_bound = -kInf;
        bool stopped = false;

        while (true) {
            if (ticks_ >= opt_.tick_limit || nodes_ >= opt_.node_limit) {
                stopped = true;
                break;
            }
            if (!have_dive) {
                bool found = false;
                while (!heap_.empty()) {
                    Node nd = heap_.top();
                    heap_.pop();
                    if (have_inc_ && nd.bound >= inc_obj_ - opt_.prune_slack) continue;
                    apply_path(nd.path);
                    dive_path_ = std::move(nd.path);
                    dive_bound = nd.bound;
                    found = true;
                    break;
                }
                if (!found) break;
                have_dive = true;
            }
            if (have_inc_ && opt_.rel_gap_stop > 0) {
                const double gb = current_global_bound(have_dive, dive_bound);
                if (gap_value(inc_obj_, gb) <= opt_.rel_gap_stop) {
                    stopped = true;
                    break;
                }
            }

            ++nodes_;
            const NodeLp r = solve_node_lp();
            if (r.stopped) {
                stopped = true;
                break;
            }
            if (r.status == LpStatus::Infeasible) {
                have_dive = false;
                continue;
            }
            if (r.status == LpStatus::Unbounded)
                throw std::runtime_error("relaxation unbounded; model is missing bounds");
            const double bound = r.objective + model_.obj_offset;
            dive_bound = std::max(dive_bound, bound);
            if (have_inc_ && bound >= inc_obj_ - opt_.prune_slack) {
                have_dive = false;
                continue;
            }

            const int bv = pick_branch_var();
            if (bv < 0) {
                std::vector<double> x = lp_values();
                const double obj = model_.true_objective(x);
                if (!have_inc_ || obj < inc_obj_) {
                    incumbent_ = x;
                    inc_obj_ = obj;
                    have_inc_ = true;
                }
                if (!model_.quad.empty()) add_oa_cuts(x);
                have_dive = false;
                continue;
            }

            if (opt_.heuristic && (nodes_ == 1 || nodes_ % opt_.heuristic_period == 0))
                try_heuristic();
            branch(bv, bound);
        }

        SolveReport rep;
        rep.work_ticks = ticks_;
        rep.nodes = nodes_;
        rep.pivots = pivots_;
        rep.work_seconds = static_cast<double>(ticks_) / opt_.ticks_per_second;
        rep.real_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        double bound = kInf;
        if (have_dive) bound = std::min(bound, dive_bound);
        if (!heap_.empty()) bound = std::min(bound, heap_.top().bound);
        const bool exhausted = !have_dive && heap_.empty();
        if (have_inc_) {
            rep.objective = inc_obj_;
            rep.x = incumbent_;
            if (exhausted) bound = inc_obj_;
            rep.bound = bound;
            rep.gap = bound <= -0.5 * kInf ? 1.0 : gap_value(inc_obj_, bound);
            if (exhausted || rep.gap <= 1e-12)
                rep.status = SolveStatus::Optimal;
            else if (opt_.rel_gap_stop > 0 && rep.gap <= opt_.rel_gap_stop)
                rep.status = SolveStatus::FeasibleGap;
            else
                rep.status = SolveStatus::TimeLimit;
        } else {
            rep.gap = 1.0;
            rep.bound = exhausted ? kInf : bound;
            rep.status = (exhausted && !stopped) ? SolveStatus::Infeasible
                                                 : SolveStatus::NoIncumbent;
        }
        return rep;
    }

  private:
    static constexpr double kIncumbentFeasTol = 1e-6;
    static constexpr int kOaHardCap = 1000;

    struct BoundFix {
        int var;
        double lo, hi;
    };

    struct Node {
        double bound;
        long long seq;
        std::vector<BoundFix> path;
        bool operator>(const Node& o) const {
            if (bound != o.bound) return bound > o.bound;
            return seq > o.seq;
        }
    };

    struct NodeLp {
        LpStatus status = LpStatus::IterLimit;
        double objective = 0;
        bool stopped = false;
    };

    static double gap_value(double inc, double bound) {
        return std::max(0.0, (inc - bound) / std::max(std::abs(inc), 1e-9));
    }

    double current_global_bound(bool have_dive, double dive_bound) const {
        double b = kInf;
        if (have_dive) b = std::min(b, dive_bound);
        if (!heap_.empty()) b = std::min(b, heap_.top().bound);
        return b;
    }

    bool assignment_is_integral(const std::vector<double>& x) const {
        for (int j = 0; j < model_.num_vars(); ++j) {
            if (!model_.is_integer[j]) continue;
            if (std::abs(x[j] - std::round(x[j])) > opt_.int_tol) return false;
        }
        return true;
    }

    std::vector<double> lp_values() const {
        std::vector<double> x(model_.num_vars());
        for (int j = 0; j < model_.num_vars(); ++j) x[j] = lp_.value(j);
        return x;
    }

    void set_node_bound(int v, double lo, double hi) {
        lp_.set_bound(v, lo, hi);
        cur_lb_[v] = lo;
        cur_ub_[v] = hi;
        if (!touched_flag_[v]) {
            touched_flag_[v] = 1;
            touched_list_.push_back(v);
        }
    }

    void apply_path(const std::vector<BoundFix>& path) {
        for (int v : touched_list_) {
            lp_.set_bound(v, model_.lb[v], model_.ub[v]);
            cur_lb_[v] = model_.lb[v];
            cur_ub_[v] = model_.ub[v];
            touched_flag_[v] = 0;
        }
        touched_list_.clear();
        for (const auto& fx : path) set_node_bound(fx.var, fx.lo, fx.hi);
    }

    NodeLp solve_node_lp() {
        NodeLp out;
        int oa_rounds = 0;
        while (true) {
            const long long budget = opt_.tick_limit - ticks_;
            if (budget <= 0) {
                out.stopped = true;
                return out;
            }
            const LpResult lr = lp_.solve(budget);
            ticks_ += lr.pivots + 16 * lr.factors + 4;
            pivots_ += lr.pivots;
            if (lr.status == LpStatus::IterLimit) {
                out.stopped = true;
                return out;
            }
            if (lr.status != LpStatus::Optimal) {
                out.status = lr.status;
                return out;
            }
            if (activate_violated_pool_rows() > 0) continue;
            if (!model_.quad.empty()) {
                // Fractional nodes may stop cutting early (the bound stays a
                // valid underestimate and branching continues), but once the
                // point is integral the tangents must converge so incumbents
                // are priced against a tight bound.
                const bool must_converge = pick_branch_var() < 0;
                if ((oa_rounds < opt_.max_oa_rounds_per_node ||
                     (must_converge && oa_rounds < kOaHardCap)) &&
                    add_oa_cuts_at_lp_point() > 0) {
                    ++oa_rounds;
                    continue;
                }
            }
            out.status = LpStatus::Optimal;
            out.objective = lr.objective;
            return out;
        }
    }

    int activate_violated_pool_rows() {
        int added = 0;
        for (size_t i = 0; i < model_.pool.size() && added < opt_.pool_batch; ++i) {
            if (pool_active_[i]) continue;
            const Row& r = model_.pool[i];
            double act = 0;
            for (const auto& t : r.terms) act += t.coeff * lp_.value(t.var);
            const double tol = 1e-7 * (1.0 + std::abs(r.rhs));
            bool violated = false;
            switch (r.sense) {
                case Sense::LE: violated = act > r.rhs + tol; break;
                case Sense::GE: violated = act < r.rhs - tol; break;
                case Sense::EQ: violated = std::abs(act - r.rhs) > tol; break;
            }
            if (!violated) continue;
            lp_.add_row(r);
            pool_active_[i] = 1;
            ++added;
        }
        return added;
    }

    int add_oa_cuts_at_lp_point() {
        int added = 0;
        for (const auto& q : model_.quad) {
            const double xh = lp_.value(q.x);
            const double zh = lp_.value(q.z);
            const double f = q.weight * (xh - q.ref) * (xh - q.ref);
            if (zh >= f - opt_.oa_tol * (1.0 + f)) continue;
            lp_.add_row(tangent_row(q, xh));
            ++added;
        }
        return added;
    }

    void add_oa_cuts(const std::vector<double>& x) {
        for (const auto& q : model_.quad) {
            const double xh = x[q.x];
            const double f = q.weight * (xh - q.ref) * (xh - q.ref);
            if (x[q.z] >= f - opt_.oa_tol * (1.0 + f)) continue;
            lp_.add_row(tangent_row(q, xh));
        }
    }

    static Row tangent_row(const QuadTerm& q, double xh) {
        const double a = 2.0 * q.weight * (xh - q.ref);
        const double f = q.weight * (xh - q.ref) * (xh - q.ref);
        Row r;
        r.terms = {{q.z, 1.0}, {q.x, -a}};
        r.sense = Sense::GE;
        r.rhs = f - a * xh;
        return r;
    }

    int pick_branch_var() const {
        int best = -1;
        double best_score = opt_.int_tol;
        for (int j = 0; j < model_.num_vars(); ++j) {
            if (!model_.is_integer[j]) continue;
            const double v = lp_.value(j);
            const double fl = std::floor(v);
            const double score = std::min(v - fl, fl + 1.0 - v);
            if (score <= opt_.int_tol) continue;
            if (opt_.branch_rule == BranchRule::FirstFractional) return j;
            if (score > best_score) {
                best_score = score;
                best = j;
            }
        }
        return best;
    }

    void branch(int v, double bound) {
        const double f = lp_.value(v);
        const double fl = std::floor(f);
        bool up_first;
        if (model_.warm.size() == static_cast<size_t>(model_.num_vars()))
            up_first = model_.warm[v] > f;
        else
            up_first = (f - fl) >= 0.5;

        const double down_lo = cur_lb_[v], down_hi = fl;
        const double up_lo = fl + 1.0, up_hi = cur_ub_[v];

        std::vector<BoundFix> other = dive_path_;
        if (up_first) {
            other.push_back({v, down_lo, down_hi});
            heap_.push({bound, seq_++, std::move(other)});
            dive_path_.push_back({v, up_lo, up_hi});
            set_node_bound(v, up_lo, up_hi);
        } else {
            other.push_back({v, up_lo, up_hi});
            heap_.push({bound, seq_++, std::move(other)});
            dive_path_.push_back({v, down_lo, down_hi});
            set_node_bound(v, down_lo, down_hi);
        }
    }

    void try_heuristic() {
        std::vector<double> out;
        if (!opt_.heuristic(lp_values(), out)) return;
        if (out.size() != static_cast<size_t>(model_.num_vars())) return;
        if (!assignment_is_integral(out)) return;
        if (model_.max_violation(out) > kIncumbentFeasTol) return;
        const double obj = model_.true_objective(out);
        if (!have_inc_ || obj < inc_obj_) {
            incumbent_ = std::move(out);
            inc_obj_ = obj;
            have_inc_ = true;
        }
    }

    const MipModel& model_;
    MipOptions opt_;
    LpSolver lp_;
    std::priority_queue<Node, std::vector<Node>, std::greater<Node>> heap_;
    std::vector<BoundFix> dive_path_;
    std::vector<std::uint8_t> pool_active_, touched_flag_;
    std::vector<int> touched_list_;
    std::vector<double> cur_lb_, cur_ub_, incumbent_;
    double inc_obj_ = kInf;
    bool have_inc_ = false;
    long long ticks_ = 0, nodes_ = 0, pivots_ = 0, seq_ = 0;
};

inline SolveReport solve_mip(const MipModel& model, MipOptions opt = {}) {
    return MipSolver(model, std::move(opt)).solve();
}

}  // namespace dlcflex::milp

#endif
