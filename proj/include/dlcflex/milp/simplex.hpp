#ifndef DLCFLEX_MILP_SIMPLEX_HPP
#define DLCFLEX_MILP_SIMPLEX_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dlcflex/milp/lu.hpp"
#include "dlcflex/milp/model.hpp"

namespace dlcflex::milp {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterLimit };

inline bool bound_is_free(double b) { return std::abs(b) >= 0.5 * kInf; }

struct LpResult {
    LpStatus status = LpStatus::IterLimit;
    double objective = 0;
    long long pivots = 0;
    long long factors = 0;
};

// Bounded-variable two-phase primal simplex over a product-form LU basis.
//
// Rows can be appended between solve() calls; each row brings one slack
// column (variable id nstruct + row), so the basis always has one column per
// row and a freshly added row starts with its slack basic. Phase 1 runs the
// composite scheme: costs -1/+1 on out-of-bound basics, recomputed every
// iteration, with a piecewise-linear ratio test that may drive through
// several breakpoints in one step.
class LpSolver {
  public:
    static constexpr double kFeasTol = 1e-7;
    static constexpr double kDualTol = 1e-7;
    static constexpr double kPivotZeroTol = 1e-8;
    static constexpr double kRatioTie = 1e-9;
    static constexpr int kRefactorEvery = 64;
    static constexpr int kStallLimit = 2000;
    static constexpr double kStallTheta = 1e-10;
    static constexpr int kSectionSize = 256;

    enum class VarState : std::uint8_t { Basic, AtLower, AtUpper, Free };

    void init(const std::vector<double>& lb, const std::vector<double>& ub,
              const std::vector<double>& cost) {
        if (lb.size() != ub.size() || lb.size() != cost.size())
            throw std::invalid_argument("LpSolver::init: size mismatch");
        nstruct_ = static_cast<int>(lb.size());
        m_ = 0;
        lb_ = lb;
        ub_ = ub;
        cost_ = cost;
        value_.assign(nstruct_, 0.0);
        state_.assign(nstruct_, VarState::AtLower);
        cols_.assign(nstruct_, {});
        rhs_.clear();
        basic_.clear();
        crash_.clear();
        slot_of_.assign(nstruct_, -1);
        banned_epoch_.assign(nstruct_, -1);
        col_of_pos_.clear();
        lu_dirty_ = true;
        vals_dirty_ = true;
        fresh_basis_ = true;
        bland_ = false;
        cursor_ = 0;
        stall_ = 0;
        epoch_ = 0;
    }

    int num_rows() const { return m_; }
    int num_vars() const { return static_cast<int>(lb_.size()); }
    int slack_var(int row) const { return nstruct_ + row; }

    int add_row(const Row& r, int crash_var = -1) {
        Row rr = r;
        std::sort(rr.terms.begin(), rr.terms.end(),
                  [](const RowTerm& a, const RowTerm& b) { return a.var < b.var; });
        const int row = m_++;
        double merged_coeff = 0;
        int merged_var = -1;
        auto flush = [&] {
            if (merged_var >= 0 && merged_coeff != 0.0)
                cols_[merged_var].push_back({row, merged_coeff});
        };
        for (const auto& t : rr.terms) {
            if (t.var >= nstruct_) throw std::invalid_argument("add_row: term on slack variable");
            if (t.var == merged_var) {
                merged_coeff += t.coeff;
            } else {
                flush();
                merged_var = t.var;
                merged_coeff = t.coeff;
            }
        }
        flush();
        rhs_.push_back(rr.rhs);
        double slo = 0, shi = 0;
        if (rr.sense == Sense::LE) {
            slo = 0;
            shi = kInf;
        } else if (rr.sense == Sense::GE) {
            slo = -kInf;
            shi = 0;
        }
        lb_.push_back(slo);
        ub_.push_back(shi);
        cost_.push_back(0);
        value_.push_back(0);
        state_.push_back(VarState::Basic);
        cols_.push_back({{row, 1.0}});
        basic_.push_back(slack_var(row));
        slot_of_.push_back(row);
        banned_epoch_.push_back(-1);
        crash_.push_back(crash_var);
        lu_dirty_ = true;
        vals_dirty_ = true;
        return row;
    }

    void set_bound(int var, double lo, double hi) {
        if (lo > hi) throw std::invalid_argument("set_bound: lb > ub");
        lb_[var] = lo;
        ub_[var] = hi;
        vals_dirty_ = true;
    }

    void set_cost(int var, double c) { cost_[var] = c; }

    double value(int var) const { return value_[var]; }
    bool is_basic(int var) const { return state_[var] == VarState::Basic; }

    std::vector<double> structural_values() const {
        return std::vector<double>(value_.begin(), value_.begin() + nstruct_);
    }

    double current_objective() const {
        double v = 0;
        for (int j = 0; j < nstruct_; ++j) v += cost_[j] * value_[j];
        return v;
    }

    LpResult solve(long long pivot_limit = 1LL << 40) {
        LpResult res;
        prep(res);
        int phase = any_infeasible_basic() ? 1 : 2;
        while (true) {
            if (res.pivots >= pivot_limit) {
                res.status = LpStatus::IterLimit;
                res.objective = current_objective();
                return res;
            }
            const Pricing pr = price(phase);
            if (!pr.found) {
                if (phase == 1) {
                    if (any_infeasible_basic()) {
                        res.status = LpStatus::Infeasible;
                        res.objective = current_objective();
                        return res;
                    }
                    phase = 2;
                    ++epoch_;
                    continue;
                }
                res.status = LpStatus::Optimal;
                res.objective = current_objective();
                return res;
            }
            alpha_.resize(m_);
            alpha_.clear();
            for (const auto& e : cols_[pr.var]) alpha_.add(e.idx, e.val);
            lu_.ftran(alpha_);
            const StepOutcome st = (phase == 1) ? ratio_phase1(pr) : ratio_phase2(pr);
            if (st.kind == StepOutcome::Unbounded) {
                res.status = LpStatus::Unbounded;
                res.objective = -kInf;
                return res;
            }
            if (st.kind == StepOutcome::Rejected) {
                banned_epoch_[pr.var] = epoch_;
                continue;
            }
            apply_step(pr, st, res);
            if (phase == 1 && !any_infeasible_basic()) {
                phase = 2;
                ++epoch_;
            }
        }
    }

  private:
    struct Pricing {
        bool found = false;
        int var = -1;
        int dir = +1;
        double d = 0;
    };

    struct StepOutcome {
        enum Kind { Pivot, Flip, Unbounded, Rejected } kind = Flip;
        double theta = 0;
        int slot = -1;
        double leave_to = 0;
        VarState leave_state = VarState::AtLower;
    };

    double bound_tol(int var) const {
        double s = 0;
        if (!bound_is_free(lb_[var])) s = std::max(s, std::abs(lb_[var]));
        if (!bound_is_free(ub_[var])) s = std::max(s, std::abs(ub_[var]));
        return kFeasTol * (1.0 + s);
    }

    // -1 below lb, +1 above ub, 0 within bounds (tolerance-scaled).
    int violation_side(int var) const {
        const double t = bound_tol(var);
        if (!bound_is_free(lb_[var]) && value_[var] < lb_[var] - t) return -1;
        if (!bound_is_free(ub_[var]) && value_[var] > ub_[var] + t) return +1;
        return 0;
    }

    bool any_infeasible_basic() const {
        for (int s = 0; s < m_; ++s)
            if (violation_side(basic_[s]) != 0) return true;
        return false;
    }

    void snap_nonbasic() {
        for (int j = 0; j < num_vars(); ++j) {
            if (state_[j] == VarState::Basic) continue;
            const bool lfin = !bound_is_free(lb_[j]);
            const bool ufin = !bound_is_free(ub_[j]);
            if (state_[j] == VarState::AtUpper && ufin) {
                value_[j] = ub_[j];
            } else if (state_[j] == VarState::AtLower && lfin) {
                value_[j] = lb_[j];
            } else if (lfin) {
                state_[j] = VarState::AtLower;
                value_[j] = lb_[j];
            } else if (ufin) {
                state_[j] = VarState::AtUpper;
                value_[j] = ub_[j];
            } else {
                state_[j] = VarState::Free;
            }
        }
    }

    void factor_basis(LpResult& res) {
        if (fresh_basis_) {
            for (int row = 0; row < m_; ++row) {
                const int h = crash_[row];
                if (h < 0 || h >= nstruct_) continue;
                if (state_[h] == VarState::Basic) continue;
                if (basic_[row] != slack_var(row)) continue;
                bool touches = false;
                for (const auto& e : cols_[h])
                    if (e.idx == row && std::abs(e.val) > kPivotZeroTol) touches = true;
                if (!touches) continue;
                const int out = basic_[row];
                state_[out] = VarState::AtLower;
                basic_[row] = h;
                slot_of_[out] = -1;
                slot_of_[h] = row;
                state_[h] = VarState::Basic;
            }
        }
        std::vector<std::vector<LuEntry>> bcols(m_);
        for (int s = 0; s < m_; ++s) bcols[s] = cols_[basic_[s]];
        if (!lu_.factor(m_, bcols)) {
            // Fall back to the all-slack basis, which is always nonsingular.
            for (int s = 0; s < m_; ++s) {
                state_[basic_[s]] = VarState::AtLower;
                slot_of_[basic_[s]] = -1;
            }
            for (int s = 0; s < m_; ++s) {
                const int sv = slack_var(s);
                basic_[s] = sv;
                slot_of_[sv] = s;
                state_[sv] = VarState::Basic;
            }
            snap_nonbasic();
            bcols.assign(m_, {});
            for (int s = 0; s < m_; ++s) bcols[s] = cols_[basic_[s]];
            if (!lu_.factor(m_, bcols)) throw std::logic_error("slack basis failed to factor");
        }
        col_of_pos_.assign(m_, -1);
        for (int s = 0; s < m_; ++s) col_of_pos_[lu_.position_of_column(s)] = s;
        fresh_basis_ = false;
        lu_dirty_ = false;
        ++res.factors;
    }

    void compute_basics() {
        work_.resize(m_);
        work_.clear();
        for (int row = 0; row < m_; ++row) work_.set(row, rhs_[row]);
        for (int j = 0; j < num_vars(); ++j) {
            if (state_[j] == VarState::Basic || value_[j] == 0.0) continue;
            for (const auto& e : cols_[j]) work_.add(e.idx, -e.val * value_[j]);
        }
        lu_.ftran(work_);
        for (int s = 0; s < m_; ++s) value_[basic_[s]] = work_.get(lu_.position_of_column(s));
        vals_dirty_ = false;
    }

    void prep(LpResult& res) {
        snap_nonbasic();
        if (lu_dirty_) factor_basis(res);
        compute_basics();
        ++epoch_;
    }

    double phase_cost(int var, int phase) const {
        if (phase == 2) return cost_[var];
        return static_cast<double>(violation_side(var));
    }

    double reduced_cost(int var, int phase) const {
        double d = (phase == 2) ? cost_[var] : 0.0;
        for (const auto& e : cols_[var]) d -= y_.get(e.idx) * e.val;
        return d;
    }

    Pricing price(int phase) {
        cb_.resize(m_);
        cb_.clear();
        for (int s = 0; s < m_; ++s) {
            const double c = phase_cost(basic_[s], phase);
            if (c != 0.0) cb_.set(lu_.position_of_column(s), c);
        }
        y_ = cb_;
        lu_.btran(y_);

        double cmax = 1.0;
        if (phase == 2)
            for (int j = 0; j < num_vars(); ++j) cmax = std::max(cmax, std::abs(cost_[j]));
        const double dtol = kDualTol * cmax;

        Pricing best;
        const int n = num_vars();
        auto consider = [&](int j) {
            if (state_[j] == VarState::Basic) return false;
            if (lb_[j] == ub_[j]) return false;
            if (banned_epoch_[j] == epoch_) return false;
            const double d = reduced_cost(j, phase);
            int dir = 0;
            if ((state_[j] == VarState::AtLower || state_[j] == VarState::Free) && d < -dtol)
                dir = +1;
            else if ((state_[j] == VarState::AtUpper || state_[j] == VarState::Free) && d > dtol)
                dir = -1;
            if (dir == 0) return false;
            if (bland_) {
                best = {true, j, dir, d};
                return true;
            }
            if (!best.found || std::abs(d) > std::abs(best.d)) best = {true, j, dir, d};
            return false;
        };

        if (bland_) {
            for (int j = 0; j < n; ++j)
                if (consider(j)) return best;
            return best;
        }
        const int nsec = (n + kSectionSize - 1) / kSectionSize;
        for (int k = 0; k < nsec; ++k) {
            const int sec = (cursor_ + k) % nsec;
            const int lo = sec * kSectionSize;
            const int hi = std::min(n, lo + kSectionSize);
            for (int j = lo; j < hi; ++j) consider(j);
            if (best.found) {
                cursor_ = sec;
                return best;
            }
        }
        return best;
    }

    StepOutcome ratio_phase2(const Pricing& pr) {
        const int q = pr.var;
        const int dir = pr.dir;
        StepOutcome out;
        double best_t = kInf;
        int best_slot = -1;
        double best_a = 0;
        double best_to = 0;
        VarState best_state = VarState::AtLower;
        for (size_t k = 0; k < alpha_.nz.size(); ++k) {
            const int p = alpha_.nz[k];
            const double a = alpha_.val[p];
            if (std::abs(a) < kPivotZeroTol) continue;
            const int slot = col_of_pos_[p];
            const int v = basic_[slot];
            const double rate = -dir * a;
            double t, to;
            VarState stt;
            if (rate > 0) {
                if (bound_is_free(ub_[v])) continue;
                t = (ub_[v] - value_[v]) / rate;
                to = ub_[v];
                stt = VarState::AtUpper;
            } else {
                if (bound_is_free(lb_[v])) continue;
                t = (value_[v] - lb_[v]) / (-rate);
                to = lb_[v];
                stt = VarState::AtLower;
            }
            if (t < 0) t = 0;
            if (t < best_t - kRatioTie ||
                (t < best_t + kRatioTie && std::abs(a) > std::abs(best_a))) {
                best_t = t;
                best_slot = slot;
                best_a = a;
                best_to = to;
                best_state = stt;
            }
        }
        const double span =
            (bound_is_free(lb_[q]) || bound_is_free(ub_[q])) ? kInf : ub_[q] - lb_[q];
        if (best_slot < 0) {
            if (bound_is_free(span)) {
                out.kind = StepOutcome::Unbounded;
                return out;
            }
            out.kind = StepOutcome::Flip;
            out.theta = span;
            return out;
        }
        if (!bound_is_free(span) && span <= best_t) {
            out.kind = StepOutcome::Flip;
            out.theta = span;
            return out;
        }
        out.kind = StepOutcome::Pivot;
        out.theta = best_t;
        out.slot = best_slot;
        out.leave_to = best_to;
        out.leave_state = best_state;
        return out;
    }

    struct Breakpoint {
        double theta;
        double jump;
        int slot;
        double to;
        VarState state;
    };

    StepOutcome ratio_phase1(const Pricing& pr) {
        const int q = pr.var;
        const int dir = pr.dir;
        StepOutcome out;
        brks_.clear();
        for (size_t k = 0; k < alpha_.nz.size(); ++k) {
            const int p = alpha_.nz[k];
            const double a = alpha_.val[p];
            if (std::abs(a) < kPivotZeroTol) continue;
            const int slot = col_of_pos_[p];
            const int v = basic_[slot];
            const double rate = -dir * a;
            const double x = value_[v];
            const bool lfin = !bound_is_free(lb_[v]);
            const bool ufin = !bound_is_free(ub_[v]);
            const int side = violation_side(v);
            const double j = std::abs(rate);
            if (side < 0) {
                if (rate > 0) {
                    brks_.push_back({(lb_[v] - x) / rate, j, slot, lb_[v], VarState::AtLower});
                    if (ufin)
                        brks_.push_back({(ub_[v] - x) / rate, j, slot, ub_[v], VarState::AtUpper});
                }
            } else if (side > 0) {
                if (rate < 0) {
                    brks_.push_back({(x - ub_[v]) / (-rate), j, slot, ub_[v], VarState::AtUpper});
                    if (lfin)
                        brks_.push_back({(x - lb_[v]) / (-rate), j, slot, lb_[v], VarState::AtLower});
                }
            } else {
                if (rate > 0 && ufin)
                    brks_.push_back({std::max(0.0, (ub_[v] - x) / rate), j, slot, ub_[v],
                                     VarState::AtUpper});
                else if (rate < 0 && lfin)
                    brks_.push_back({std::max(0.0, (x - lb_[v]) / (-rate)), j, slot, lb_[v],
                                     VarState::AtLower});
            }
        }
        const double span =
            (bound_is_free(lb_[q]) || bound_is_free(ub_[q])) ? kInf : ub_[q] - lb_[q];
        if (!bound_is_free(span))
            brks_.push_back({span, kInf, -1, 0, VarState::AtLower});
        if (brks_.empty()) {
            out.kind = StepOutcome::Rejected;
            return out;
        }
        std::sort(brks_.begin(), brks_.end(), [](const Breakpoint& a, const Breakpoint& b) {
            if (a.theta != b.theta) return a.theta < b.theta;
            return a.slot < b.slot;
        });
        // Tolerance guards against float residue in the reduced cost turning a
        // degenerate stop into a full bound flip (which would dodge the stall
        // detector and can cycle).
        const double slope_tol = 1e-9 * (1.0 + std::abs(pr.d));
        double slope = -std::abs(pr.d);
        size_t stop = brks_.size();
        for (size_t k = 0; k < brks_.size(); ++k) {
            slope += brks_[k].jump;
            if (slope >= -slope_tol) {
                stop = k;
                break;
            }
        }
        if (stop == brks_.size()) stop = brks_.size() - 1;
        const Breakpoint& b = brks_[stop];
        if (b.slot < 0) {
            out.kind = StepOutcome::Flip;
            out.theta = b.theta;
            return out;
        }
        out.kind = StepOutcome::Pivot;
        out.theta = b.theta;
        out.slot = b.slot;
        out.leave_to = b.to;
        out.leave_state = b.state;
        return out;
    }

    void apply_step(const Pricing& pr, const StepOutcome& st, LpResult& res) {
        const int q = pr.var;
        const int dir = pr.dir;
        const double theta = st.theta;
        for (size_t k = 0; k < alpha_.nz.size(); ++k) {
            const int p = alpha_.nz[k];
            const int slot = col_of_pos_[p];
            value_[basic_[slot]] -= dir * theta * alpha_.val[p];
        }
        value_[q] += dir * theta;
        ++res.pivots;
        ++epoch_;

        if (theta < kStallTheta) {
            if (++stall_ > kStallLimit) bland_ = true;
        } else {
            stall_ = 0;
            bland_ = false;
        }

        if (st.kind == StepOutcome::Flip) {
            if (state_[q] == VarState::AtLower) {
                state_[q] = VarState::AtUpper;
                value_[q] = ub_[q];
            } else {
                state_[q] = VarState::AtLower;
                value_[q] = lb_[q];
            }
            return;
        }

        const int r = st.slot;
        const int leave = basic_[r];
        value_[leave] = st.leave_to;
        state_[leave] = st.leave_state;
        slot_of_[leave] = -1;
        basic_[r] = q;
        slot_of_[q] = r;
        state_[q] = VarState::Basic;
        const int pos = lu_.position_of_column(r);
        if (!lu_.update(pos, alpha_) || lu_.eta_count() >= kRefactorEvery) {
            factor_basis(res);
            compute_basics();
        }
    }

    int nstruct_ = 0;
    int m_ = 0;
    std::vector<double> lb_, ub_, cost_, value_, rhs_;
    std::vector<VarState> state_;
    std::vector<std::vector<LuEntry>> cols_;
    std::vector<int> basic_, slot_of_, col_of_pos_, crash_;
    std::vector<long long> banned_epoch_;
    std::vector<Breakpoint> brks_;
    LuFactors lu_;
    SparseVec work_, alpha_, cb_, y_;
    bool lu_dirty_ = true;
    bool vals_dirty_ = true;
    bool fresh_basis_ = true;
    bool bland_ = false;
    int cursor_ = 0;
    int stall_ = 0;
    long long epoch_ = 0;
};

}  // namespace dlcflex::milp

#endif
