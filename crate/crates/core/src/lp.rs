//! Dense linear programming with a lexicographic optimum.
//!
//! Solves `min c·x  s.t.  a_j·x ≤ b_j, l ≤ x ≤ u` and returns the point
//! that minimizes `c·x`, then `x_1`, then `x_2`, and so on. This is the
//! dual simplex on a basis of `d` tight constraints where the dual values
//! are vectors `Λ = −A_B^{-T} [c | I]` compared lexicographically. A basis
//! whose rows of `Λ` are all lexicographically non-negative and whose
//! vertex is feasible is optimal for the whole chain of objectives, which
//! is exactly re-optimizing over the optimal face coordinate by coordinate.
//! Because the rows of `Λ` are distinct, the lexicographic ratio test also
//! rules out cycling.
//!
//! Rows are scaled to unit ∞-norm and visited in a canonical order sorted
//! by content, so the result does not depend on how callers order them.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const LEX_TOL: f64 = 1e-12;
const REFACTOR_EVERY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

/// Borrowed inequality `a·x ≤ b`.
#[derive(Debug, Clone, Copy)]
pub struct RowRef<'a> {
    pub a: &'a [f64],
    pub b: f64,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Multiplier of each general row, in caller order.
    pub row_duals: Vec<f64>,
    pub lower_duals: Vec<f64>,
    pub upper_duals: Vec<f64>,
    /// General rows tight at `x` (caller order).
    pub active_rows: Vec<usize>,
    pub iterations: usize,
}

struct Tableau {
    d: usize,
    /// Scaled rows, general rows first, then `x_k ≤ u_k`, then `−x_k ≤ −l_k`.
    a: Vec<f64>,
    b: Vec<f64>,
    scale: Vec<f64>,
}

impl Tableau {
    fn row(&self, j: usize) -> &[f64] {
        &self.a[j * self.d..(j + 1) * self.d]
    }

    fn len(&self) -> usize {
        self.b.len()
    }
}

fn canonical_cmp(x: RowRef<'_>, y: RowRef<'_>) -> Ordering {
    for (p, q) in x.a.iter().zip(y.a) {
        match p.total_cmp(q) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    x.b.total_cmp(&y.b)
}

fn lex_cmp(x: &[f64], y: &[f64]) -> Ordering {
    for (p, q) in x.iter().zip(y) {
        let tol = LEX_TOL * (1.0 + p.abs().max(q.abs()));
        if p - q > tol {
            return Ordering::Greater;
        }
        if q - p > tol {
            return Ordering::Less;
        }
    }
    Ordering::Equal
}

fn invert(t: &Tableau, basis: &[usize]) -> Result<DMatrix<f64>> {
    let d = t.d;
    let m = DMatrix::from_fn(d, d, |i, k| t.row(basis[i])[k]);
    m.try_inverse()
        .ok_or_else(|| Error::Numerical("singular basis during refactorization".into()))
}

/// Solves the program. `lower`/`upper` must be finite.
pub fn solve(cost: &[f64], lower: &[f64], upper: &[f64], rows: &[RowRef<'_>]) -> Result<LpSolution> {
    let d = cost.len();
    if lower.len() != d || upper.len() != d {
        return Err(Error::Precondition("bound vectors must match the cost length".into()));
    }
    if lower.iter().chain(upper).any(|v| !v.is_finite()) {
        return Err(Error::Precondition("variable bounds must be finite".into()));
    }
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return Ok(infeasible(d, rows.len()));
    }

    // Canonical order; zero rows are either vacuous or certify infeasibility.
    let mut order: Vec<usize> = Vec::with_capacity(rows.len());
    for (j, r) in rows.iter().enumerate() {
        if r.a.len() != d {
            return Err(Error::Precondition(format!("row {j} has length {}, expected {d}", r.a.len())));
        }
        let norm = r.a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if norm == 0.0 {
            if r.b < -FEAS_TOL {
                return Ok(infeasible(d, rows.len()));
            }
            continue;
        }
        order.push(j);
    }
    order.sort_by(|&i, &j| canonical_cmp(rows[i], rows[j]).then(i.cmp(&j)));

    let m = order.len();
    let total = m + 2 * d;
    let mut t = Tableau { d, a: Vec::with_capacity(total * d), b: Vec::with_capacity(total), scale: Vec::with_capacity(total) };
    for &j in &order {
        let r = rows[j];
        let s = r.a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        t.a.extend(r.a.iter().map(|v| v / s));
        t.b.push(r.b / s);
        t.scale.push(s);
    }
    for k in 0..d {
        t.a.extend((0..d).map(|i| if i == k { 1.0 } else { 0.0 }));
        t.b.push(upper[k]);
        t.scale.push(1.0);
    }
    for k in 0..d {
        t.a.extend((0..d).map(|i| if i == k { -1.0 } else { 0.0 }));
        t.b.push(-lower[k]);
        t.scale.push(1.0);
    }

    // Start at the box vertex that is lexicographically optimal without rows.
    let mut basis: Vec<usize> = (0..d).map(|k| if cost[k] < 0.0 { m + k } else { m + d + k }).collect();
    let mut binv = DMatrix::from_fn(d, d, |i, k| if i == k { t.row(basis[i])[k] } else { 0.0 });

    let limit = 50 * (m + d) + 1000;
    let mut since_refactor = 0;
    let mut iterations = 0;
    let mut x = vec![0.0; d];
    let mut w = vec![0.0; d];
    let mut lex_best = vec![0.0; d + 1];
    let mut lex_cand = vec![0.0; d + 1];
    loop {
        if since_refactor >= REFACTOR_EVERY {
            binv = invert(&t, &basis)?;
            since_refactor = 0;
        }
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = (0..d).map(|k| binv[(i, k)] * t.b[basis[k]]).sum();
        }

        // Entering row: most violated, lowest index on ties.
        let mut entering = None;
        let mut worst = 0.0;
        for j in 0..t.len() {
            let r = crate::model::dot(t.row(j), &x) - t.b[j];
            if r > FEAS_TOL * (1.0 + t.b[j].abs()) && r > worst {
                worst = r;
                entering = Some(j);
            }
        }
        let Some(j) = entering else { break };

        iterations += 1;
        if iterations > limit {
            return Err(Error::Numerical(format!("simplex iteration limit {limit} reached")));
        }

        let aj = t.row(j);
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = (0..d).map(|k| aj[k] * binv[(k, i)]).sum();
        }
        let wmax = w.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut leaving: Option<usize> = None;
        for i in 0..d {
            if w[i] <= PIVOT_TOL * wmax.max(1.0) {
                continue;
            }
            lex_cand[0] = -(0..d).map(|k| cost[k] * binv[(k, i)]).sum::<f64>() / w[i];
            for k in 0..d {
                lex_cand[k + 1] = -binv[(k, i)] / w[i];
            }
            if leaving.is_none() || lex_cmp(&lex_cand, &lex_best) == Ordering::Less {
                leaving = Some(i);
                lex_best.copy_from_slice(&lex_cand);
            }
        }
        let Some(r) = leaving else {
            return Ok(infeasible(d, rows.len()));
        };

        let u: Vec<f64> = (0..d).map(|k| binv[(k, r)] / w[r]).collect();
        for i in 0..d {
            let f = if i == r { w[i] - 1.0 } else { w[i] };
            if f != 0.0 {
                for k in 0..d {
                    binv[(k, i)] -= u[k] * f;
                }
            }
        }
        basis[r] = j;
        since_refactor += 1;
    }

    // Fresh solve from the final basis for accuracy.
    let mut sorted = basis.clone();
    sorted.sort_unstable();
    let bm = DMatrix::from_fn(d, d, |i, k| t.row(sorted[i])[k]);
    let rhs = DVector::from_iterator(d, sorted.iter().map(|&j| t.b[j]));
    let lu = bm.clone().lu();
    let xs = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular optimal basis".into()))?;
    x.copy_from_slice(xs.as_slice());
    // Duals: A_Bᵀ λ = −c.
    let lam = bm
        .transpose()
        .lu()
        .solve(&DVector::from_iterator(d, cost.iter().map(|c| -c)))
        .ok_or_else(|| Error::Numerical("singular optimal basis".into()))?;

    let mut row_duals = vec![0.0; rows.len()];
    let mut upper_duals = vec![0.0; d];
    let mut lower_duals = vec![0.0; d];
    for (pos, &j) in sorted.iter().enumerate() {
        let v = (lam[pos] / t.scale[j]).max(0.0);
        if j < m {
            row_duals[order[j]] = v;
        } else if j < m + d {
            upper_duals[j - m] = v;
        } else {
            lower_duals[j - m - d] = v;
        }
    }
    let mut active_rows: Vec<usize> = (0..m)
        .filter(|&j| {
            let r = crate::model::dot(t.row(j), &x) - t.b[j];
            r.abs() <= FEAS_TOL * (1.0 + t.b[j].abs())
        })
        .map(|j| order[j])
        .collect();
    active_rows.sort_unstable();
    let objective = crate::model::dot(cost, &x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        row_duals,
        lower_duals,
        upper_duals,
        active_rows,
        iterations,
    })
}

fn infeasible(d: usize, m: usize) -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        x: vec![f64::NAN; d],
        objective: f64::INFINITY,
        row_duals: vec![0.0; m],
        lower_duals: vec![0.0; d],
        upper_duals: vec![0.0; d],
        active_rows: vec![],
        iterations: 0,
    }
}
