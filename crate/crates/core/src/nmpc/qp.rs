//! Dense box-constrained convex QP: min ½xᵀHx + gᵀx subject to lo ≤ x ≤ hi.
//!
//! Projected Newton on the binding set: variables sitting on a bound with the
//! gradient pushing outward are frozen, the rest take a Newton step, and the
//! step is projected back onto the box with an Armijo backtrack.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct BoxQpResult {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn objective(h: &DMatrix<f64>, g: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(h * x)) + g.dot(x)
}

fn project(x: &mut DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Solves the box QP. `h` must be symmetric positive definite and the box
/// must contain at least one point.
pub fn solve_box_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    max_iter: usize,
) -> BoxQpResult {
    let n = g.len();
    let mut x = DVector::zeros(n);
    project(&mut x, lo, hi);
    let scale = g.amax().max(1.0);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let q = h * &x + g;
        let eps = 1e-12 * (1.0 + x.amax());
        let free: Vec<usize> = (0..n)
            .filter(|&i| !((x[i] <= lo[i] + eps && q[i] > 0.0) || (x[i] >= hi[i] - eps && q[i] < 0.0)))
            .collect();

        // projected gradient optimality
        let mut pg: f64 = 0.0;
        for i in 0..n {
            let stepped = (x[i] - q[i]).clamp(lo[i], hi[i]);
            pg = pg.max((stepped - x[i]).abs());
        }
        if pg <= 1e-11 * scale {
            converged = true;
            break;
        }

        let mut d = DVector::zeros(n);
        if !free.is_empty() {
            let m = free.len();
            let hff = DMatrix::from_fn(m, m, |r, c| h[(free[r], free[c])]);
            let rhs = DVector::from_fn(m, |r, _| -q[free[r]]);
            let sol = match hff.cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => rhs,
            };
            for (k, &i) in free.iter().enumerate() {
                d[i] = sol[k];
            }
        }

        let f0 = objective(h, g, &x);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = &x + alpha * &d;
            project(&mut trial, lo, hi);
            let decrease = q.dot(&(&trial - &x));
            if objective(h, g, &trial) <= f0 + 1e-4 * decrease {
                let moved = (&trial - &x).amax();
                x = trial;
                accepted = true;
                if moved <= 1e-14 * (1.0 + x.amax()) {
                    converged = true;
                }
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // fall back to a projected gradient step
            let mut trial = &x - &q / h.diagonal().amax().max(1e-12);
            project(&mut trial, lo, hi);
            if objective(h, g, &trial) < f0 {
                x = trial;
            } else {
                break;
            }
        }
        if converged {
            break;
        }
    }
    BoxQpResult {
        x,
        iterations,
        converged,
    }
}
