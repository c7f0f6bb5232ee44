#pragma once

#include <vector>

#include "gnnprop/core.hpp"
#include "gnnprop/fnn.hpp"

namespace gnnprop {

enum class LpStatus { Feasible, Infeasible, Indeterminate };

struct LpResult {
    LpStatus status = LpStatus::Indeterminate;
    Vec witness;  // only meaningful when Feasible
};

/// Decides feasibility of {x : c_i.x <= d_i} by phase-1 simplex (Bland's
/// rule). Free variables are split as x = u - w; strict constraints are
/// tightened by eps_strict so the set is closed.
inline LpResult lp_feasible(const std::vector<LinearConstraint>& cons, int n_vars,
                            double eps_strict = 1e-9, double tol = 1e-7) {
    std::vector<const LinearConstraint*> rows;
    for (const auto& c : cons) {
        double d = c.d - (c.strict ? eps_strict : 0.0);
        bool all_zero = true;
        for (double ci : c.c)
            if (ci != 0.0) { all_zero = false; break; }
        if (all_zero) {
            if (d < 0.0) return {LpStatus::Infeasible, {}};
            continue;  // 0 <= d, trivially satisfied
        }
        rows.push_back(&c);
    }
    int m = static_cast<int>(rows.size());
    if (m == 0) return {LpStatus::Feasible, Vec(n_vars, 0.0)};

    // Columns: u (n), w (n), slack (m), artificial (k for rows with d < 0).
    int n_art = 0;
    std::vector<double> d(m);
    for (int i = 0; i < m; ++i) {
        d[i] = rows[i]->d - (rows[i]->strict ? eps_strict : 0.0);
        if (d[i] < 0.0) ++n_art;
    }
    int nb = 2 * n_vars;
    int ncols = nb + m + n_art;
    std::vector<Vec> T(m, Vec(ncols + 1, 0.0));
    std::vector<int> basis(m);
    Vec z(ncols + 1, 0.0);

    int art = 0;
    for (int i = 0; i < m; ++i) {
        double sign = d[i] < 0.0 ? -1.0 : 1.0;
        for (int j = 0; j < n_vars; ++j) {
            double cj = rows[i]->c[j] * sign;
            T[i][j] = cj;
            T[i][n_vars + j] = -cj;
        }
        T[i][nb + i] = sign;  // slack (surplus when the row was negated)
        T[i][ncols] = d[i] * sign;
        if (d[i] < 0.0) {
            int acol = nb + m + art++;
            T[i][acol] = 1.0;
            basis[i] = acol;
            for (int j = 0; j <= ncols; ++j) z[j] -= T[i][j];  // minimize sum of artificials
            z[acol] += 1.0;
        } else {
            basis[i] = nb + i;
        }
    }

    const double pivot_tol = 1e-9;
    long max_pivots = 20000 + 200L * (m + n_vars);
    for (long pivots = 0; n_art > 0; ++pivots) {
        if (pivots > max_pivots) return {LpStatus::Indeterminate, {}};
        int enter = -1;
        for (int j = 0; j < ncols; ++j)
            if (z[j] < -pivot_tol) { enter = j; break; }  // Bland: first negative
        if (enter < 0) break;
        int leave = -1;
        double best_ratio = 0.0;
        for (int i = 0; i < m; ++i) {
            if (T[i][enter] <= pivot_tol) continue;
            double ratio = T[i][ncols] / T[i][enter];
            if (leave < 0 || ratio < best_ratio - 1e-12 ||
                (ratio < best_ratio + 1e-12 && basis[i] < basis[leave])) {
                leave = i;
                best_ratio = ratio;
            }
        }
        if (leave < 0) return {LpStatus::Indeterminate, {}};  // unbounded: should not happen in phase 1
        double piv = T[leave][enter];
        for (int j = 0; j <= ncols; ++j) T[leave][j] /= piv;
        for (int i = 0; i < m; ++i) {
            if (i == leave || T[i][enter] == 0.0) continue;
            double f = T[i][enter];
            for (int j = 0; j <= ncols; ++j) T[i][j] -= f * T[leave][j];
        }
        if (z[enter] != 0.0) {
            double f = z[enter];
            for (int j = 0; j <= ncols; ++j) z[j] -= f * T[leave][j];
        }
        basis[leave] = enter;
    }

    double objective = -z[ncols];  // residual infeasibility
    if (n_art > 0 && objective > tol) return {LpStatus::Infeasible, {}};

    Vec solution(ncols, 0.0);
    for (int i = 0; i < m; ++i)
        if (basis[i] < ncols) solution[basis[i]] = T[i][ncols];
    Vec x(n_vars);
    for (int j = 0; j < n_vars; ++j) x[j] = solution[j] - solution[n_vars + j];
    return {LpStatus::Feasible, std::move(x)};
}

}  // namespace gnnprop
