#include "dlcflex/milp/simplex.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace dlcflex::milp {
namespace {

Row row(std::vector<RowTerm> terms, Sense sense, double rhs) {
    Row r;
    r.terms = std::move(terms);
    r.sense = sense;
    r.rhs = rhs;
    return r;
}

TEST(Simplex, SolvesSmallKnownLp) {
    LpSolver lp;
    lp.init({0, 0}, {100, 100}, {-3, -2});
    lp.add_row(row({{0, 1}, {1, 1}}, Sense::LE, 4));
    lp.add_row(row({{0, 1}, {1, 3}}, Sense::LE, 6));
    const LpResult res = lp.solve();
    ASSERT_EQ(res.status, LpStatus::Optimal);
    EXPECT_NEAR(res.objective, -12.0, 1e-9);
    EXPECT_NEAR(lp.value(0), 4.0, 1e-9);
    EXPECT_NEAR(lp.value(1), 0.0, 1e-9);
}

TEST(Simplex, BoundFlipSolvesRowlessProblem) {
    LpSolver lp;
    lp.init({1}, {3}, {-1});
    const LpResult res = lp.solve();
    ASSERT_EQ(res.status, LpStatus::Optimal);
    EXPECT_NEAR(res.objective, -3.0, 1e-12);
    EXPECT_NEAR(lp.value(0), 3.0, 1e-12);
}

TEST(Simplex, HandlesEqualityAndGeRows) {
    LpSolver lp;
    lp.init({0, 0}, {10, 10}, {1, 1});
    lp.add_row(row({{0, 1}, {1, 1}}, Sense::EQ, 2));
    lp.add_row(row({{0, 1}, {1, -1}}, Sense::GE, 0));
    const LpResult res = lp.solve();
    ASSERT_EQ(res.status, LpStatus::Optimal);
    EXPECT_NEAR(res.objective, 2.0, 1e-9);
    EXPECT_NEAR(lp.value(0) + lp.value(1), 2.0, 1e-9);
    EXPECT_GE(lp.value(0) - lp.value(1), -1e-9);
}

TEST(Simplex, DetectsInfeasible) {
    LpSolver lp;
    lp.init({0}, {10}, {0});
    lp.add_row(row({{0, 1}}, Sense::LE, 1));
    lp.add_row(row({{0, 1}}, Sense::GE, 2));
    EXPECT_EQ(lp.solve().status, LpStatus::Infeasible);
}

TEST(Simplex, DetectsUnbounded) {
    LpSolver lp;
    lp.init({0}, {kInf}, {-1});
    EXPECT_EQ(lp.solve().status, LpStatus::Unbounded);

    LpSolver lp2;
    lp2.init({0, 0}, {kInf, kInf}, {-1, -1});
    lp2.add_row(row({{0, 1}, {1, -1}}, Sense::LE, 1));
    EXPECT_EQ(lp2.solve().status, LpStatus::Unbounded);
}

TEST(Simplex, RedundantRowsStayOptimal) {
    LpSolver lp;
    lp.init({0, 0}, {10, 10}, {-1, -1});
    for (int k = 0; k < 3; ++k) lp.add_row(row({{0, 1}}, Sense::LE, 1));
    lp.add_row(row({{1, 1}}, Sense::LE, 1));
    const LpResult res = lp.solve();
    ASSERT_EQ(res.status, LpStatus::Optimal);
    EXPECT_NEAR(res.objective, -2.0, 1e-9);
}

TEST(Simplex, IterLimitIsResumable) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    const int n = 40, m = 25;
    std::vector<double> lb(n, 0.0), ub(n, 5.0), cost(n);
    for (auto& c : cost) c = coef(rng);
    LpSolver a, b;
    a.init(lb, ub, cost);
    b.init(lb, ub, cost);
    for (int i = 0; i < m; ++i) {
        Row r;
        double act = 0;
        for (int j = 0; j < n; ++j) {
            if (j % 3 == i % 3) {
                const double c = coef(rng);
                r.terms.push_back({j, c});
                act += c * 2.5;
            }
        }
        r.sense = Sense::LE;
        r.rhs = act + 1.0;
        a.add_row(r);
        b.add_row(r);
    }
    const LpResult full = a.solve();
    ASSERT_EQ(full.status, LpStatus::Optimal);

    LpResult step = b.solve(3);
    ASSERT_EQ(step.status, LpStatus::IterLimit);
    step = b.solve();
    ASSERT_EQ(step.status, LpStatus::Optimal);
    EXPECT_NEAR(step.objective, full.objective, 1e-7 * (1 + std::abs(full.objective)));
}

TEST(Simplex, RowsAddedBetweenSolvesTightenOptimum) {
    LpSolver lp;
    lp.init({0, 0}, {10, 10}, {-1, -1});
    LpResult res = lp.solve();
    ASSERT_EQ(res.status, LpStatus::Optimal);
    EXPECT_NEAR(res.objective, -20.0, 1e-9);

    lp.add_row(row({{0, 1}, {1, 1}}, Sense::LE, 12));
    res = lp.solve();
    ASSERT_EQ(res.status, LpStatus::Optimal);
    EXPECT_NEAR(res.objective, -12.0, 1e-9);

    lp.add_row(row({{0, 2}, {1, 1}}, Sense::LE, 13));
    res = lp.solve();
    ASSERT_EQ(res.status, LpStatus::Optimal);
    EXPECT_NEAR(res.objective, -11.5, 1e-9);
}

TEST(Simplex, CrashHintSeedsBasis) {
    LpSolver lp;
    lp.init({0, 0, -100}, {5, 5, 100}, {0, 0, 1});
    lp.add_row(row({{2, 1}, {0, -2}, {1, -1}}, Sense::EQ, 3), 2);
    lp.add_row(row({{0, 1}, {1, 1}}, Sense::GE, 1));
    const LpResult res = lp.solve();
    ASSERT_EQ(res.status, LpStatus::Optimal);
    // z = 2x + y + 3 is minimized subject to x + y >= 1.
    EXPECT_NEAR(res.objective, 4.0, 1e-9);
    EXPECT_NEAR(lp.value(2), 4.0, 1e-9);
}

// Independent oracle: enumerate candidate vertices (all choices of n active
// constraints among rows and bounds), solve the dense linear system, keep
// feasible points, take the best objective.
struct DenseLp {
    int n = 0;
    std::vector<std::vector<double>> a;  // rows of a*x <= b
    std::vector<double> b;
    std::vector<double> lb, ub, cost;
};

bool solve_dense(std::vector<std::vector<double>> m, std::vector<double> rhs,
                 std::vector<double>& out) {
    const int n = static_cast<int>(rhs.size());
    for (int c = 0; c < n; ++c) {
        int piv = c;
        for (int r = c + 1; r < n; ++r)
            if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
        if (std::abs(m[piv][c]) < 1e-9) return false;
        std::swap(m[piv], m[c]);
        std::swap(rhs[piv], rhs[c]);
        for (int r = 0; r < n; ++r) {
            if (r == c) continue;
            const double f = m[r][c] / m[c][c];
            if (f == 0) continue;
            for (int k = c; k < n; ++k) m[r][k] -= f * m[c][k];
            rhs[r] -= f * rhs[c];
        }
    }
    out.resize(n);
    for (int c = 0; c < n; ++c) out[c] = rhs[c] / m[c][c];
    return true;
}

double enumerate_optimum(const DenseLp& p) {
    const int n = p.n;
    std::vector<std::vector<double>> cons;
    std::vector<double> crhs;
    for (size_t i = 0; i < p.a.size(); ++i) {
        cons.push_back(p.a[i]);
        crhs.push_back(p.b[i]);
    }
    for (int j = 0; j < n; ++j) {
        std::vector<double> e(n, 0.0);
        e[j] = 1;
        cons.push_back(e);
        crhs.push_back(p.ub[j]);
        e[j] = -1;
        cons.push_back(e);
        crhs.push_back(-p.lb[j]);
    }
    const int total = static_cast<int>(cons.size());
    std::vector<int> pick(n);
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> x;
    auto feasible = [&](const std::vector<double>& v) {
        for (int i = 0; i < total; ++i) {
            double act = 0;
            for (int j = 0; j < n; ++j) act += cons[i][j] * v[j];
            if (act > crhs[i] + 1e-7) return false;
        }
        return true;
    };
    std::function<void(int, int)> rec = [&](int start, int depth) {
        if (depth == n) {
            std::vector<std::vector<double>> m(n);
            std::vector<double> rhs(n);
            for (int k = 0; k < n; ++k) {
                m[k] = cons[pick[k]];
                rhs[k] = crhs[pick[k]];
            }
            if (!solve_dense(m, rhs, x)) return;
            if (!feasible(x)) return;
            double obj = 0;
            for (int j = 0; j < n; ++j) obj += p.cost[j] * x[j];
            best = std::min(best, obj);
            return;
        }
        for (int i = start; i < total; ++i) {
            pick[depth] = i;
            rec(i + 1, depth + 1);
        }
    };
    rec(0, 0);
    return best;
}

TEST(Simplex, RandomLpsMatchVertexEnumeration) {
    for (int inst = 0; inst < 30; ++inst) {
        std::mt19937 rng(1000 + inst);
        std::uniform_int_distribution<int> nd(2, 6), md(1, 4), cd(-3, 3);
        std::uniform_real_distribution<double> margin(0.0, 4.0), cost(-5.0, 5.0),
            frac(0.0, 1.0);
        DenseLp p;
        p.n = nd(rng);
        const int m = md(rng);
        p.lb.assign(p.n, -2.0);
        p.ub.assign(p.n, 3.0);
        p.cost.resize(p.n);
        for (auto& c : p.cost) c = cost(rng);
        std::vector<double> x0(p.n);
        for (auto& v : x0) v = -2.0 + 5.0 * frac(rng);
        for (int i = 0; i < m; ++i) {
            std::vector<double> a(p.n, 0.0);
            bool any = false;
            for (int j = 0; j < p.n; ++j) {
                if (frac(rng) < 0.7) {
                    a[j] = cd(rng);
                    if (a[j] != 0) any = true;
                }
            }
            if (!any) a[0] = 1;
            double act = 0;
            for (int j = 0; j < p.n; ++j) act += a[j] * x0[j];
            p.a.push_back(a);
            p.b.push_back(act + margin(rng));
        }
        const double want = enumerate_optimum(p);
        ASSERT_TRUE(std::isfinite(want)) << "oracle failed on instance " << inst;

        LpSolver lp;
        lp.init(p.lb, p.ub, p.cost);
        for (int i = 0; i < m; ++i) {
            Row r;
            const bool as_ge = frac(rng) < 0.4;
            for (int j = 0; j < p.n; ++j) {
                if (p.a[i][j] == 0) continue;
                r.terms.push_back({j, as_ge ? -p.a[i][j] : p.a[i][j]});
            }
            r.sense = as_ge ? Sense::GE : Sense::LE;
            r.rhs = as_ge ? -p.b[i] : p.b[i];
            lp.add_row(r);
        }
        const LpResult res = lp.solve();
        ASSERT_EQ(res.status, LpStatus::Optimal) << "instance " << inst;
        EXPECT_NEAR(res.objective, want, 1e-6 * (1 + std::abs(want))) << "instance " << inst;

        for (int i = 0; i < m; ++i) {
            double act = 0;
            for (int j = 0; j < p.n; ++j) act += p.a[i][j] * lp.value(j);
            EXPECT_LE(act, p.b[i] + 1e-6) << "instance " << inst << " row " << i;
        }
        for (int j = 0; j < p.n; ++j) {
            EXPECT_GE(lp.value(j), p.lb[j] - 1e-7);
            EXPECT_LE(lp.value(j), p.ub[j] + 1e-7);
        }
    }
}

TEST(Simplex, LargerRandomLpSatisfiesOptimalityWithinOracleBound) {
    // Cross-check a denser instance against repeated random restarts of the
    // same solver with permuted row order: all must land on one objective.
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> coef(-1.0, 1.0), margin(0.5, 3.0);
    const int n = 60, m = 45;
    std::vector<double> lb(n, -1.0), ub(n, 2.0), cost(n);
    for (auto& c : cost) c = coef(rng);
    std::vector<double> x0(n);
    for (auto& v : x0) v = coef(rng);
    std::vector<Row> rows;
    for (int i = 0; i < m; ++i) {
        Row r;
        double act = 0;
        for (int j = 0; j < n; ++j) {
            if ((i + j) % 4 == 0) {
                const double c = coef(rng);
                r.terms.push_back({j, c});
                act += c * x0[j];
            }
        }
        r.sense = Sense::LE;
        r.rhs = act + margin(rng);
        rows.push_back(r);
    }
    double first = 0;
    for (int perm = 0; perm < 3; ++perm) {
        LpSolver lp;
        lp.init(lb, ub, cost);
        for (int i = 0; i < m; ++i) lp.add_row(rows[(i + perm * 17) % m]);
        const LpResult res = lp.solve();
        ASSERT_EQ(res.status, LpStatus::Optimal);
        if (perm == 0)
            first = res.objective;
        else
            EXPECT_NEAR(res.objective, first, 1e-6 * (1 + std::abs(first)));
    }
}

}  // namespace
}  // namespace dlcflex::milp
