#ifndef DLCFLEX_MILP_LU_HPP
#define DLCFLEX_MILP_LU_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace dlcflex::milp {

// Sparse vector with dense value storage and an explicit nonzero list.
struct SparseVec {
    std::vector<double> val;
    std::vector<int> nz;
    std::vector<std::uint8_t> mark;

    void resize(size_t n) {
        val.assign(n, 0.0);
        mark.assign(n, 0);
        nz.clear();
    }
    void clear() {
        for (int i : nz) {
            val[i] = 0.0;
            mark[i] = 0;
        }
        nz.clear();
    }
    void add(int i, double v) {
        if (!mark[i]) {
            mark[i] = 1;
            nz.push_back(i);
        }
        val[i] += v;
    }
    void set(int i, double v) {
        if (!mark[i]) {
            mark[i] = 1;
            nz.push_back(i);
        }
        val[i] = v;
    }
    double get(int i) const { return mark[i] ? val[i] : 0.0; }
};

struct LuEntry {
    int idx;
    double val;
};

// LU factorization of a sparse basis matrix with product-form eta updates
// between refactorizations. Left-looking column factorization, columns
// processed in ascending-nonzero-count order, partial pivoting by magnitude.
//
// Factor form: B(:,j_at_position_k) = L * (sum_p U[p,k] e_row(p)), where L is
// a product of row-space elimination columns and U lives in position space.
// ftran output and btran input are in position space; btran output is in row
// space (one dual per row).
class LuFactors {
  public:
    bool factor(int m, const std::vector<std::vector<LuEntry>>& cols) {
        m_ = m;
        lcols_.assign(m, {});
        ucols_.assign(m, {});
        udiag_.assign(m, 0.0);
        row_perm_.assign(m, -1);
        row_of_pos_.assign(m, -1);
        etas_.clear();
        work_.resize(m);
        work_.clear();
        pos_rhs_.resize(m);
        pos_rhs_.clear();

        col_order_.resize(m);
        for (int j = 0; j < m; ++j) col_order_[j] = j;
        std::stable_sort(col_order_.begin(), col_order_.end(),
                         [&](int a, int b) { return cols[a].size() < cols[b].size(); });
        pos_of_col_.assign(m, -1);

        std::vector<int> touched;
        for (int k = 0; k < m; ++k) {
            const int j = col_order_[k];
            work_.clear();
            for (const auto& e : cols[j]) work_.add(e.idx, e.val);

            // Left-looking elimination against already-pivoted columns.
            touched.clear();
            for (int p = 0; p < k; ++p) {
                const int prow = row_of_pos_[p];
                if (!work_.mark[prow]) continue;
                const double x = work_.val[prow];
                if (std::abs(x) < kDropTol) continue;
                touched.push_back(p);
                for (const auto& e : lcols_[p]) work_.add(e.idx, -e.val * x);
            }

            int prow = -1;
            double pmax = 0.0;
            for (int i : work_.nz) {
                if (row_perm_[i] >= 0) continue;
                const double a = std::abs(work_.val[i]);
                if (a > pmax) {
                    pmax = a;
                    prow = i;
                }
            }
            if (prow < 0 || pmax < kPivotTol) return false;

            const double piv = work_.val[prow];
            row_perm_[prow] = k;
            row_of_pos_[k] = prow;
            pos_of_col_[j] = k;
            udiag_[k] = piv;
            for (int p : touched) {
                const double x = work_.val[row_of_pos_[p]];
                if (std::abs(x) >= kDropTol) ucols_[k].push_back({p, x});
            }
            auto& lcol = lcols_[k];
            for (int i : work_.nz) {
                if (i == prow || row_perm_[i] >= 0) continue;
                const double x = work_.val[i] / piv;
                if (std::abs(x) >= kDropTol) lcol.push_back({i, x});
            }
        }
        work_.clear();
        return true;
    }

    int size() const { return m_; }
    int eta_count() const { return static_cast<int>(etas_.size()); }
    // Position the original factor column j was pivoted to (-1 if unknown).
    int position_of_column(int j) const { return pos_of_col_[j]; }
    int row_at_position(int p) const { return row_of_pos_[p]; }

    // Solve B x = b. Input: row space. Output: position space.
    void ftran(SparseVec& x) const {
        for (int p = 0; p < m_; ++p) {
            const int prow = row_of_pos_[p];
            if (!x.mark[prow]) continue;
            const double v = x.val[prow];
            if (std::abs(v) < kDropTol) continue;
            for (const auto& e : lcols_[p]) x.add(e.idx, -e.val * v);
        }
        pos_rhs_.clear();
        for (int i : x.nz) {
            const double v = x.val[i];
            if (std::abs(v) >= kDropTol) pos_rhs_.set(row_perm_[i], v);
        }
        x.clear();
        for (int p = m_ - 1; p >= 0; --p) {
            if (!pos_rhs_.mark[p]) continue;
            const double rhs = pos_rhs_.val[p];
            if (std::abs(rhs) < kDropTol) continue;
            const double v = rhs / udiag_[p];
            x.set(p, v);
            for (const auto& e : ucols_[p]) pos_rhs_.add(e.idx, -e.val * v);
        }
        pos_rhs_.clear();
        for (const auto& eta : etas_) {
            const double xr = x.get(eta.pos);
            if (std::abs(xr) < kDropTol) continue;
            const double scaled = xr / eta.pivot;
            x.set(eta.pos, scaled);
            for (const auto& e : eta.col) x.add(e.idx, -e.val * scaled);
        }
    }

    // Solve B^T y = c. Input: position space. Output: row space.
    void btran(SparseVec& y) const {
        for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
            double dot = 0.0;
            for (const auto& e : it->col) dot += e.val * y.get(e.idx);
            const double nv = (y.get(it->pos) - dot) / it->pivot;
            y.set(it->pos, nv);
        }
        // U^T solve, forward over positions with gathers from U columns.
        for (int p = 0; p < m_; ++p) {
            double dot = 0.0;
            for (const auto& e : ucols_[p]) dot += e.val * y.get(e.idx);
            const double rhs = y.get(p) - dot;
            if (rhs != 0.0 || y.mark[p]) y.set(p, rhs / udiag_[p]);
        }
        // L^T solve, descending positions, result scattered to row space.
        row_out_.resize(m_);
        row_out_.clear();
        for (int p = m_ - 1; p >= 0; --p) {
            double v = y.get(p);
            double dot = 0.0;
            for (const auto& e : lcols_[p]) dot += e.val * row_out_.get(e.idx);
            v -= dot;
            if (std::abs(v) >= kDropTol) row_out_.set(row_of_pos_[p], v);
        }
        y.clear();
        for (int i : row_out_.nz) y.set(i, row_out_.val[i]);
        row_out_.clear();
    }

    // Register basis replacement at `pos` given the FTRAN'd entering column.
    bool update(int pos, const SparseVec& alpha) {
        const double piv = alpha.get(pos);
        if (std::abs(piv) < kEtaPivotTol) return false;
        Eta eta;
        eta.pos = pos;
        eta.pivot = piv;
        for (int i : alpha.nz) {
            if (i == pos) continue;
            const double v = alpha.val[i];
            if (std::abs(v) >= kDropTol) eta.col.push_back({i, v});
        }
        etas_.push_back(std::move(eta));
        return true;
    }

    static constexpr double kDropTol = 1e-12;
    static constexpr double kPivotTol = 1e-10;
    static constexpr double kEtaPivotTol = 1e-9;

  private:
    struct Eta {
        int pos;
        double pivot;
        std::vector<LuEntry> col;
    };

    int m_ = 0;
    std::vector<std::vector<LuEntry>> lcols_;
    std::vector<std::vector<LuEntry>> ucols_;
    std::vector<double> udiag_;
    std::vector<int> row_perm_;
    std::vector<int> row_of_pos_;
    std::vector<int> col_order_;
    std::vector<int> pos_of_col_;
    std::vector<Eta> etas_;
    mutable SparseVec work_;
    mutable SparseVec pos_rhs_;
    mutable SparseVec row_out_;
};

}  // namespace dlcflex::milp

#endif
