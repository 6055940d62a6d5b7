//! Primal active-set solver for strictly convex quadratic programs
//! with inequality constraints,
//!
//!   minimize ½·xᵀGx + qᵀx   subject to   M·x ≥ d,
//!
//! started from a feasible point. Iterates stay feasible and the
//! objective never increases, which the deconvolution tests assert
//! directly. Each step solves one dense KKT system for the working
//! set; a constraint that blocks a step is linearly independent of
//! the working set by construction, so the KKT matrix stays
//! nonsingular for positive definite G.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const FEAS_TOL: f64 = 1e-9;
// Declares a step stationary. The Schur-complement solve leaves
// noise around 1e-10 in p near the optimum, so this must sit above
// that; actual FOD amplitudes live at 1e-2 and larger.
const STEP_TOL: f64 = 1e-9;
const MULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Max-norm of the stationarity residual G·x + q − M_Wᵀλ plus the
    /// worst constraint violation.
    pub kkt_residual: f64,
    /// Objective value after every accepted step (for monotonicity
    /// checks).
    pub objective_trace: Vec<f64>,
    /// Indices of constraints active at the solution.
    pub active: Vec<usize>,
}

pub fn solve_qp(
    g: &DMatrix<f64>,
    q: &DVector<f64>,
    m: &DMatrix<f64>,
    d: &DVector<f64>,
    x0: DVector<f64>,
    max_iter: usize,
) -> Result<QpSolution> {
    let n = g.nrows();
    if g.ncols() != n || q.len() != n || m.ncols() != n || m.nrows() != d.len() || x0.len() != n {
        return Err(Error::invalid("inconsistent QP dimensions"));
    }
    let n_con = m.nrows();
    let scale = 1.0_f64.max(q.amax());
    for j in 0..n_con {
        let slack = (m.row(j) * &x0)[0] - d[j];
        if slack < -FEAS_TOL {
            return Err(Error::invalid(format!(
                "start point violates constraint {j} by {}",
                -slack
            )));
        }
    }

    // G is factored once; each iteration then solves the working-set
    // KKT system through the Schur complement S = M_W G⁻¹ M_Wᵀ with
    // the columns G⁻¹·m_jᵀ cached as constraints enter the set. This
    // is what makes hundreds of small pivots affordable.
    let chol = g.clone().cholesky().ok_or_else(|| Error::NumericalFailure {
        what: "QP Hessian is not positive definite".into(),
        residual: f64::NAN,
    })?;

    let mut x = x0;
    let mut working: Vec<usize> = Vec::new();
    let mut ginv_rows: Vec<DVector<f64>> = Vec::new();
    let mut schur = DMatrix::<f64>::zeros(0, 0);
    let mut lambda = DVector::<f64>::zeros(0);
    let objective = |x: &DVector<f64>| 0.5 * (x.transpose() * g * x)[0] + q.dot(x);
    let mut trace = vec![objective(&x)];
    // Degenerate vertices (more touching constraints than dimensions)
    // can make the most-negative-multiplier rule cycle. After a run
    // of zero-length steps we fall back to Bland's smallest-index
    // rule, which cannot cycle; any real step switches back.
    let mut stalled = 0usize;
    let mut bland = false;

    for iter in 0..max_iter {
        let grad = g * &x + q;

        let w = working.len();
        let p;
        if w == 0 {
            let mut p0 = chol.solve(&(-&grad));
            let r1 = -&grad - g * &p0;
            p0 += chol.solve(&r1);
            p = p0;
            lambda = DVector::zeros(0);
        } else if let Some(sfac) = schur.clone().cholesky() {
            // Solve G·p − M_Wᵀ·λ = r1, M_W·p = r2 via the Schur
            // complement; the factorization squares the conditioning,
            // so one iterative-refinement pass follows to keep the
            // multiplier signs trustworthy near degenerate vertices.
            let solve_pair = |r1: &DVector<f64>, r2: &DVector<f64>| {
                let y = chol.solve(r1);
                let mut t = DVector::zeros(w);
                for (r, &j) in working.iter().enumerate() {
                    t[r] = r2[r] - (m.row(j) * &y)[0];
                }
                let dl = sfac.solve(&t);
                let mut dp = y;
                for (r, v) in ginv_rows.iter().enumerate() {
                    dp.axpy(dl[r], v, 1.0);
                }
                (dp, dl)
            };
            let (mut p1, mut l1) = solve_pair(&(-&grad), &DVector::zeros(w));
            let mut r1 = -&grad - g * &p1;
            for (r, &j) in working.iter().enumerate() {
                r1 += m.row(j).transpose() * l1[r];
            }
            let mut r2 = DVector::zeros(w);
            for (r, &j) in working.iter().enumerate() {
                r2[r] = -(m.row(j) * &p1)[0];
            }
            let (dp, dl) = solve_pair(&r1, &r2);
            p1 += dp;
            l1 += dl;
            p = p1;
            lambda = l1;
        } else {
            // Near-dependent working rows: fall back to the dense
            // KKT system for this iteration.
            let (pd, ld) = solve_kkt_dense(g, &grad, m, &working)?;
            p = pd;
            lambda = ld;
        }

        if p.amax() <= STEP_TOL * (1.0 + x.amax()) {
            // stationary on the working set; check multiplier signs
            let mut worst = -MULT_TOL * scale;
            let mut worst_j = usize::MAX;
            for (r, &j) in working.iter().enumerate() {
                let better = if bland {
                    lambda[r] < -MULT_TOL * scale && j < worst_j
                } else {
                    lambda[r] < worst
                };
                if better {
                    worst = lambda[r];
                    worst_j = j;
                }
            }
            if worst_j == usize::MAX {
                return Ok(finish(g, q, m, d, x, iter + 1, &working, &lambda, trace));
            }
            let r = working
                .iter()
                .position(|&j| j == worst_j)
                .expect("worst_j came from the working set");
            working.remove(r);
            ginv_rows.remove(r);
            schur = schur.clone().remove_row(r).remove_column(r);
            continue;
        }

        // longest feasible step along p
        let mut alpha = 1.0;
        let mut blocking = None;
        for j in 0..n_con {
            if working.contains(&j) {
                continue;
            }
            let mp = (m.row(j) * &p)[0];
            if mp < -1e-13 {
                let slack = (m.row(j) * &x)[0] - d[j];
                let limit = (-slack / mp).max(0.0);
                if limit < alpha {
                    alpha = limit;
                    blocking = Some(j);
                }
            }
        }
        x += p * alpha;
        trace.push(objective(&x));
        if alpha <= 1e-14 {
            stalled += 1;
            if stalled > 2 * n {
                bland = true;
            }
        } else {
            stalled = 0;
            bland = false;
        }
        if let Some(j) = blocking {
            let v_new = chol.solve(&m.row(j).transpose());
            let w_old = schur.nrows();
            let mut grown = DMatrix::zeros(w_old + 1, w_old + 1);
            grown.view_mut((0, 0), (w_old, w_old)).copy_from(&schur);
            for (a, &ja) in working.iter().enumerate() {
                let val = (m.row(ja) * &v_new)[0];
                grown[(a, w_old)] = val;
                grown[(w_old, a)] = val;
            }
            grown[(w_old, w_old)] = (m.row(j) * &v_new)[0];
            schur = grown;
            ginv_rows.push(v_new);
            working.push(j);
        }
    }

    Err(Error::NumericalFailure {
        what: format!("active-set QP did not converge in {max_iter} iterations"),
        residual: (g * &x + q
            - mt_lambda(m, &working, &lambda, n))
        .amax(),
    })
}

/// Full (n+w)×(n+w) KKT solve, used only when the Schur complement
/// loses positive definiteness to rounding.
fn solve_kkt_dense(
    g: &DMatrix<f64>,
    grad: &DVector<f64>,
    m: &DMatrix<f64>,
    working: &[usize],
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = g.nrows();
    let w = working.len();
    let mut kkt = DMatrix::zeros(n + w, n + w);
    kkt.view_mut((0, 0), (n, n)).copy_from(g);
    for (r, &j) in working.iter().enumerate() {
        for c in 0..n {
            kkt[(n + r, c)] = m[(j, c)];
            kkt[(c, n + r)] = -m[(j, c)];
        }
    }
    let mut rhs = DVector::zeros(n + w);
    rhs.rows_mut(0, n).copy_from(&(-grad));
    let sol = kkt.lu().solve(&rhs).ok_or_else(|| Error::NumericalFailure {
        what: "singular KKT system in active-set QP".into(),
        residual: f64::NAN,
    })?;
    Ok((sol.rows(0, n).into_owned(), sol.rows(n, w).into_owned()))
}

fn mt_lambda(m: &DMatrix<f64>, working: &[usize], lambda: &DVector<f64>, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    for (r, &j) in working.iter().enumerate() {
        if r < lambda.len() {
            for c in 0..n {
                out[c] += m[(j, c)] * lambda[r];
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn finish(
    g: &DMatrix<f64>,
    q: &DVector<f64>,
    m: &DMatrix<f64>,
    d: &DVector<f64>,
    x: DVector<f64>,
    iterations: usize,
    working: &[usize],
    lambda: &DVector<f64>,
    trace: Vec<f64>,
) -> QpSolution {
    let n = x.len();
    let stationarity = (g * &x + q - mt_lambda(m, working, lambda, n)).amax();
    let mut violation = 0.0f64;
    for j in 0..m.nrows() {
        violation = violation.max(d[j] - (m.row(j) * &x)[0]);
    }
    let mut active = working.to_vec();
    active.sort_unstable();
    QpSolution {
        x,
        iterations,
        kkt_residual: stationarity + violation.max(0.0),
        objective_trace: trace,
        active,
    }
}
