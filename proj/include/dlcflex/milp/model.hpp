#ifndef DLCFLEX_MILP_MODEL_HPP
#define DLCFLEX_MILP_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlcflex::milp {

inline constexpr double kInf = 1e30;

enum class Sense : char { LE = 'L', GE = 'G', EQ = 'E' };

struct RowTerm {
    int var;
    double coeff;
};

struct Row {
    std::vector<RowTerm> terms;
    Sense sense = Sense::LE;
    double rhs = 0;

    double activity(const std::vector<double>& x) const {
        double a = 0;
        for (const auto& t : terms) a += t.coeff * x[t.var];
        return a;
    }
    // Positive when the row is violated at x.
    double violation(const std::vector<double>& x) const {
        const double a = activity(x);
        switch (sense) {
            case Sense::LE: return a - rhs;
            case Sense::GE: return rhs - a;
            case Sense::EQ: return std::abs(a - rhs);
        }
        return 0;
    }
};

// Epigraph link for a quadratic objective term weight*(x - ref)^2 modeled by
// variable z (z carries the weight in the linear objective).
struct QuadTerm {
    int x = -1;
    int z = -1;
    double ref = 0;
    double weight = 1.0;
};

// Mixed-integer model: variables with bounds, active rows, a row pool of
// valid-but-lazily-activated rows, a linear (or epigraph-encoded quadratic)
// objective, and an optional warm-start assignment.
struct MipModel {
    std::vector<double> lb, ub, obj;
    std::vector<std::uint8_t> is_integer;
    std::vector<std::string> var_names;

    std::vector<Row> rows;
    std::vector<Row> pool;

    double obj_offset = 0;
    std::vector<QuadTerm> quad;
    std::vector<double> warm;

    // Optional per-row crash hint: variable to seed the initial basis with.
    std::vector<int> crash_hint;

    int add_var(const std::string& name, double lo, double hi, bool integer, double cost = 0) {
        if (lo > hi) throw std::invalid_argument("add_var: lb > ub for " + name);
        lb.push_back(lo);
        ub.push_back(hi);
        obj.push_back(cost);
        is_integer.push_back(integer ? 1 : 0);
        var_names.push_back(name);
        return static_cast<int>(lb.size()) - 1;
    }

    int num_vars() const { return static_cast<int>(lb.size()); }

    int add_row(Row r, int crash_var = -1) {
        check_row(r);
        rows.push_back(std::move(r));
        crash_hint.push_back(crash_var);
        return static_cast<int>(rows.size()) - 1;
    }

    int add_pool_row(Row r) {
        check_row(r);
        pool.push_back(std::move(r));
        return static_cast<int>(pool.size()) - 1;
    }

    // Objective value of a complete assignment, with quadratic terms evaluated
    // exactly (their epigraph variables are excluded from the linear part).
    double true_objective(const std::vector<double>& x) const {
        double v = obj_offset;
        std::vector<std::uint8_t> is_epi(lb.size(), 0);
        for (const auto& q : quad) is_epi[q.z] = 1;
        for (size_t j = 0; j < lb.size(); ++j)
            if (!is_epi[j]) v += obj[j] * x[j];
        for (const auto& q : quad) {
            const double d = x[q.x] - q.ref;
            v += q.weight * d * d;
        }
        return v;
    }

    double linear_objective(const std::vector<double>& x) const {
        double v = obj_offset;
        for (size_t j = 0; j < lb.size(); ++j) v += obj[j] * x[j];
        return v;
    }

    // Largest violation over active rows, pool rows, and variable bounds.
    double max_violation(const std::vector<double>& x) const {
        double worst = 0;
        for (const auto& r : rows) worst = std::max(worst, r.violation(x));
        for (const auto& r : pool) worst = std::max(worst, r.violation(x));
        for (size_t j = 0; j < lb.size(); ++j) {
            worst = std::max(worst, lb[j] - x[j]);
            worst = std::max(worst, x[j] - ub[j]);
        }
        return worst;
    }

  private:
    void check_row(const Row& r) const {
        for (const auto& t : r.terms)
            if (t.var < 0 || t.var >= num_vars()) throw std::invalid_argument("row references unknown variable");
    }
};

enum class SolveStatus { Optimal, FeasibleGap, TimeLimit, Infeasible, NoIncumbent };

inline std::string to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::FeasibleGap: return "feasible-gap";
        case SolveStatus::TimeLimit: return "time-limit";
        case SolveStatus::Infeasible: return "infeasible";
        case SolveStatus::NoIncumbent: return "no-incumbent";
    }
    return "?";
}

struct SolveReport {
    SolveStatus status = SolveStatus::Infeasible;
    double objective = std::numeric_limits<double>::quiet_NaN();
    double bound = -kInf;
    double gap = std::numeric_limits<double>::infinity();
    double work_seconds = 0;    // deterministic work-clock time
    double real_seconds = 0;    // measured wall time, informational only
    long long work_ticks = 0;
    long long nodes = 0;
    long long pivots = 0;
    std::vector<double> x;
};

}  // namespace dlcflex::milp

#endif
