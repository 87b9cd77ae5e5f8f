#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "wcg/matrix.hpp"

namespace wcg {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

// maximize objective . x subject to rows, x >= 0
struct LinearProgram {
    enum class RowKind { Eq, Le };
    struct Row {
        std::vector<double> coeffs; // dense over num_vars
        double rhs = 0.0;
        RowKind kind = RowKind::Eq;
    };
    std::size_t num_vars = 0;
    std::vector<double> objective;
    std::vector<Row> rows;
    // Variables presolved to a constant before the simplex runs.
    std::vector<std::optional<double>> fixed;

    std::size_t row_count() const { return rows.size(); }
};

struct LpOutcome {
    LpStatus status = LpStatus::Infeasible;
    std::vector<double> x;     // full length, fixed variables filled back in
    double value = 0.0;
    int iterations = 0;
    std::vector<int> basis;    // basic original variable per surviving row, -1 for slack
    std::vector<double> duals; // per original row (0 for rows presolved away)
};

struct LpSolveOptions {
    bool exact_rational = false;
    double tol = 1e-9;
    int max_iters = 0; // 0 = automatic
};

namespace detail {

using Rational = boost::multiprecision::cpp_rational;

template <class Num> struct ScalarTraits;

template <> struct ScalarTraits<double> {
    static double from_double(double v) { return v; }
    static double to_double(double v) { return v; }
    static bool positive(double v, double tol) { return v > tol; }
    static bool negative(double v, double tol) { return v < -tol; }
    static bool is_zero(double v, double tol) { return std::fabs(v) <= tol; }
    static double abs(double v) { return std::fabs(v); }
    static constexpr bool exact = false;
};

template <> struct ScalarTraits<Rational> {
    static Rational from_double(double v) { return Rational(v); }
    static double to_double(const Rational& v) { return static_cast<double>(v); }
    static bool positive(const Rational& v, double) { return v > 0; }
    static bool negative(const Rational& v, double) { return v < 0; }
    static bool is_zero(const Rational& v, double) { return v == 0; }
    static Rational abs(const Rational& v) { return v < 0 ? Rational(-v) : v; }
    static constexpr bool exact = true;
};

// Dense two-phase primal simplex. Dantzig pricing, falling back to Bland's
// rule after a run of degenerate pivots; exact arithmetic always uses Bland.
template <class Num> class SimplexCore {
    using Traits = ScalarTraits<Num>;

  public:
    SimplexCore(const LinearProgram& lp, const LpSolveOptions& opts) : opts_(opts) { build(lp); }

    LpOutcome run() {
        LpOutcome out;
        out.duals.assign(original_rows_, 0.0);
        if (inconsistent_) return out; // Infeasible
        if (!phase1(out)) return out;
        phase2(out);
        return out;
    }

  private:
    LpSolveOptions opts_;
    std::size_t n_vars_ = 0;          // structural columns
    std::size_t n_cols_ = 0;          // structural + slack + artificial
    std::size_t first_slack_ = 0;
    std::size_t first_artificial_ = 0;
    std::vector<std::vector<Num>> a_; // m x n_cols
    std::vector<Num> b_;
    std::vector<Num> cost_;           // phase-2 objective over columns
    std::vector<int> basis_;
    std::vector<char> in_basis_;
    std::vector<int> row_map_;        // tableau row -> original row
    std::vector<double> row_sign_;    // +-1 applied when the row was stored
    std::vector<std::size_t> unit_col_; // artificial column planted in each row
    std::vector<int> col_to_var_;
    std::vector<double> fixed_value_;
    double objective_shift_ = 0.0;
    bool inconsistent_ = false;
    int iterations_ = 0;
    std::size_t original_vars_ = 0;
    std::size_t original_rows_ = 0;

    void build(const LinearProgram& lp) {
        original_vars_ = lp.num_vars;
        original_rows_ = lp.rows.size();
        fixed_value_.assign(lp.num_vars, std::numeric_limits<double>::quiet_NaN());
        std::vector<int> var_to_col(lp.num_vars, -1);
        for (std::size_t v = 0; v < lp.num_vars; ++v) {
            if (!lp.fixed.empty() && lp.fixed[v]) {
                fixed_value_[v] = *lp.fixed[v];
                objective_shift_ += lp.objective[v] * fixed_value_[v];
            } else {
                var_to_col[v] = static_cast<int>(col_to_var_.size());
                col_to_var_.push_back(static_cast<int>(v));
            }
        }
        n_vars_ = col_to_var_.size();

        struct Prepared {
            std::vector<Num> coeffs;
            Num rhs;
            LinearProgram::RowKind kind;
            int original;
        };
        std::vector<Prepared> prep;
        for (std::size_t r = 0; r < lp.rows.size(); ++r) {
            const auto& row = lp.rows[r];
            Prepared p;
            p.kind = row.kind;
            p.original = static_cast<int>(r);
            p.coeffs.assign(n_vars_, Num(0));
            double rhs = row.rhs;
            bool any = false;
            for (std::size_t v = 0; v < lp.num_vars; ++v) {
                const double cv = row.coeffs[v];
                if (cv == 0.0) continue;
                if (var_to_col[v] < 0) {
                    rhs -= cv * fixed_value_[v];
                } else {
                    p.coeffs[static_cast<std::size_t>(var_to_col[v])] = Traits::from_double(cv);
                    any = true;
                }
            }
            p.rhs = Traits::from_double(rhs);
            if (!any) { // all variables fixed: consistency check only
                const double scale = 1.0 + std::fabs(row.rhs);
                if (row.kind == LinearProgram::RowKind::Eq) {
                    if (std::fabs(rhs) > opts_.tol * scale) inconsistent_ = true;
                } else if (rhs < -opts_.tol * scale) {
                    inconsistent_ = true;
                }
                continue;
            }
            prep.push_back(std::move(p));
        }

        const std::size_t m = prep.size();
        std::size_t n_slack = 0;
        for (const auto& p : prep)
            if (p.kind == LinearProgram::RowKind::Le) ++n_slack;
        first_slack_ = n_vars_;
        first_artificial_ = n_vars_ + n_slack;
        n_cols_ = first_artificial_ + m;

        a_.assign(m, std::vector<Num>(n_cols_, Num(0)));
        b_.assign(m, Num(0));
        basis_.assign(m, -1);
        cost_.assign(n_cols_, Num(0));
        row_map_.clear();
        row_sign_.clear();
        unit_col_.clear();
        for (std::size_t c = 0; c < n_vars_; ++c)
            cost_[c] = Traits::from_double(lp.objective[static_cast<std::size_t>(col_to_var_[c])]);

        std::size_t slack_at = first_slack_;
        for (std::size_t r = 0; r < m; ++r) {
            auto& p = prep[r];
            const bool neg = Traits::negative(p.rhs, 0.0);
            const Num sign = neg ? Num(-1) : Num(1);
            for (std::size_t c = 0; c < n_vars_; ++c)
                if (!Traits::is_zero(p.coeffs[c], 0.0)) a_[r][c] = sign * p.coeffs[c];
            b_[r] = sign * p.rhs;
            row_map_.push_back(p.original);
            row_sign_.push_back(neg ? -1.0 : 1.0);
            const std::size_t art = first_artificial_ + r;
            a_[r][art] = Num(1);
            unit_col_.push_back(art);
            if (p.kind == LinearProgram::RowKind::Le) {
                a_[r][slack_at] = sign;
                basis_[r] = neg ? static_cast<int>(art) : static_cast<int>(slack_at);
                ++slack_at;
            } else {
                basis_[r] = static_cast<int>(art);
            }
        }
        in_basis_.assign(n_cols_, 0);
        for (int bc : basis_) in_basis_[static_cast<std::size_t>(bc)] = 1;
    }

    int auto_iters() const {
        if (opts_.max_iters > 0) return opts_.max_iters;
        return 500 + 80 * static_cast<int>(a_.size() + n_cols_);
    }

    void pivot(std::size_t row, std::size_t col) {
        const Num inv = Num(1) / a_[row][col];
        for (auto& v : a_[row]) v *= inv;
        b_[row] *= inv;
        a_[row][col] = Num(1);
        for (std::size_t r = 0; r < a_.size(); ++r) {
            if (r == row) continue;
            const Num f = a_[r][col];
            if (Traits::is_zero(f, 0.0)) continue;
            for (std::size_t c = 0; c < n_cols_; ++c)
                if (!Traits::is_zero(a_[row][c], 0.0)) a_[r][c] -= f * a_[row][c];
            a_[r][col] = Num(0);
            b_[r] -= f * b_[row];
            if (Traits::negative(b_[r], 0.0) && !Traits::negative(b_[r], opts_.tol)) b_[r] = Num(0);
        }
        in_basis_[static_cast<std::size_t>(basis_[row])] = 0;
        in_basis_[col] = 1;
        basis_[row] = static_cast<int>(col);
        ++iterations_;
    }

    Num reduced(const std::vector<Num>& cost, std::size_t c) const {
        Num z = cost[c];
        for (std::size_t r = 0; r < a_.size(); ++r) {
            const std::size_t bc = static_cast<std::size_t>(basis_[r]);
            if (Traits::is_zero(cost[bc], 0.0)) continue;
            z -= cost[bc] * a_[r][c];
        }
        return z;
    }

    // Simplex loop for `cost`; artificial columns never enter. Returns false
    // on iteration limit; sets `unbounded` when detected.
    bool iterate(const std::vector<Num>& cost, bool& unbounded) {
        unbounded = false;
        const int limit = auto_iters();
        int stall = 0;
        bool bland = Traits::exact;
        while (true) {
            if (iterations_ > limit) return false;
            std::size_t enter = n_cols_;
            Num best_rc(0);
            for (std::size_t c = 0; c < first_artificial_; ++c) {
                if (in_basis_[c]) continue;
                const Num rc = reduced(cost, c);
                if (!Traits::positive(rc, opts_.tol)) continue;
                if (bland) {
                    enter = c;
                    break;
                }
                if (enter == n_cols_ || rc > best_rc) {
                    enter = c;
                    best_rc = rc;
                }
            }
            if (enter == n_cols_) return true;

            std::size_t leave = a_.size();
            Num best_ratio(0);
            for (std::size_t r = 0; r < a_.size(); ++r) {
                if (!Traits::positive(a_[r][enter], opts_.tol)) continue;
                const Num ratio = b_[r] / a_[r][enter];
                if (leave == a_.size() || ratio < best_ratio ||
                    (ratio == best_ratio && basis_[r] < basis_[leave])) {
                    leave = r;
                    best_ratio = ratio;
                }
            }
            if (leave == a_.size()) {
                unbounded = true;
                return true;
            }
            if (!Traits::exact) {
                if (Traits::is_zero(best_ratio, opts_.tol)) {
                    if (++stall > 2 * static_cast<int>(a_.size() + n_cols_)) bland = true;
                } else {
                    stall = 0;
                }
            }
            pivot(leave, enter);
        }
    }

    bool phase1(LpOutcome& out) {
        bool need = false;
        for (int bc : basis_)
            if (static_cast<std::size_t>(bc) >= first_artificial_) need = true;
        if (!need) return true;

        std::vector<Num> cost(n_cols_, Num(0));
        for (std::size_t c = first_artificial_; c < n_cols_; ++c) cost[c] = Num(-1);
        bool unbounded = false;
        if (!iterate(cost, unbounded)) {
            out.status = LpStatus::IterationLimit;
            out.iterations = iterations_;
            return false;
        }
        Num infeas(0);
        for (std::size_t r = 0; r < a_.size(); ++r)
            if (static_cast<std::size_t>(basis_[r]) >= first_artificial_) infeas += b_[r];
        if (Traits::positive(infeas, opts_.tol * 10.0)) {
            out.status = LpStatus::Infeasible;
            out.iterations = iterations_;
            return false;
        }
        // Pivot zero-level artificials out; rows that cannot be pivoted are
        // redundant and get dropped so phase 2 cannot disturb them.
        std::vector<std::size_t> drop;
        for (std::size_t r = 0; r < a_.size(); ++r) {
            if (static_cast<std::size_t>(basis_[r]) < first_artificial_) continue;
            std::size_t col = n_cols_;
            Num best(0);
            for (std::size_t c = 0; c < first_artificial_; ++c) {
                const Num mag = Traits::abs(a_[r][c]);
                if (Traits::positive(mag, opts_.tol) && (col == n_cols_ || mag > best)) {
                    col = c;
                    best = mag;
                }
            }
            if (col < n_cols_)
                pivot(r, col);
            else
                drop.push_back(r);
        }
        for (std::size_t k = drop.size(); k-- > 0;) {
            const std::size_t r = drop[k];
            in_basis_[static_cast<std::size_t>(basis_[r])] = 0;
            a_.erase(a_.begin() + static_cast<std::ptrdiff_t>(r));
            b_.erase(b_.begin() + static_cast<std::ptrdiff_t>(r));
            basis_.erase(basis_.begin() + static_cast<std::ptrdiff_t>(r));
            row_map_.erase(row_map_.begin() + static_cast<std::ptrdiff_t>(r));
            row_sign_.erase(row_sign_.begin() + static_cast<std::ptrdiff_t>(r));
            unit_col_.erase(unit_col_.begin() + static_cast<std::ptrdiff_t>(r));
        }
        return true;
    }

    void phase2(LpOutcome& out) {
        bool unbounded = false;
        if (!iterate(cost_, unbounded)) {
            out.status = LpStatus::IterationLimit;
            out.iterations = iterations_;
            return;
        }
        out.iterations = iterations_;
        if (unbounded) {
            out.status = LpStatus::Unbounded;
            return;
        }
        out.status = LpStatus::Optimal;
        out.x.assign(original_vars_, 0.0);
        for (std::size_t v = 0; v < original_vars_; ++v)
            if (!std::isnan(fixed_value_[v])) out.x[v] = fixed_value_[v];
        double value = objective_shift_;
        for (std::size_t r = 0; r < a_.size(); ++r) {
            const std::size_t bc = static_cast<std::size_t>(basis_[r]);
            if (bc < n_vars_) {
                const std::size_t v = static_cast<std::size_t>(col_to_var_[bc]);
                out.x[v] = Traits::to_double(b_[r]);
                value += lp_cost_double(bc) * out.x[v];
            }
        }
        out.value = value;
        out.basis.assign(basis_.size(), -1);
        for (std::size_t r = 0; r < basis_.size(); ++r) {
            const std::size_t bc = static_cast<std::size_t>(basis_[r]);
            out.basis[r] = bc < n_vars_ ? col_to_var_[bc] : -1;
        }
        // duals from the reduced costs of the planted unit columns
        for (std::size_t r = 0; r < a_.size(); ++r) {
            const double y = -Traits::to_double(reduced(cost_, unit_col_[r]));
            out.duals[static_cast<std::size_t>(row_map_[r])] = y * row_sign_[r];
        }
    }

    double lp_cost_double(std::size_t col) const { return Traits::to_double(cost_[col]); }
};

} // namespace detail

LpOutcome solve_linear_program(const LinearProgram& lp, const LpSolveOptions& opts = {});

} // namespace wcg
