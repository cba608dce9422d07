//! Dense convex QP solver: `min ½xᵀHx + gᵀx  s.t.  Ax ≤ b`.
//!
//! Primal-dual interior point with Mehrotra predictor-corrector steps. The
//! Newton system is reduced to the normal equations `(H + AᵀWA) dx = r` and
//! factored by Cholesky. Sizes here are small (about 100 variables), so dense
//! linear algebra is fast enough for a 10 Hz loop.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    pub max_iter: usize,
    /// Bound on the scaled KKT residual and the complementarity gap.
    pub tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            max_iter: 80,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Inequality multipliers, one per row of `A`.
    pub lambda: DVector<f64>,
    pub iterations: usize,
    /// Largest scaled KKT residual at exit.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("normal equations are not positive definite")]
    Factorization,
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Largest step in (0, 1] keeping `v + α dv` positive, damped by `tau`.
fn max_step(v: &DVector<f64>, dv: &DVector<f64>, tau: f64) -> f64 {
    let mut a = 1.0f64;
    for (x, d) in v.iter().zip(dv.iter()) {
        if *d < 0.0 {
            a = a.min(-tau * x / d);
        }
    }
    a
}

pub fn solve(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    opts: &QpOptions,
) -> Result<QpSolution, QpError> {
    let n = g.len();
    let m = b.len();
    if h.nrows() != n || h.ncols() != n || a.ncols() != n || a.nrows() != m {
        return Err(QpError::Dimensions(format!(
            "H {}x{}, g {n}, A {}x{}, b {m}",
            h.nrows(),
            h.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    let mut x = DVector::zeros(n);
    if m == 0 {
        let chol = h.clone().cholesky().ok_or(QpError::Factorization)?;
        x = chol.solve(&(-g));
        return Ok(QpSolution {
            x,
            lambda: DVector::zeros(0),
            iterations: 1,
            residual: 0.0,
        });
    }
    let scale_d = 1.0 + inf_norm(g);
    let scale_p = 1.0 + inf_norm(b);
    let mut z = (b - a * &x).map(|v| v.max(1.0));
    let mut lam = DVector::from_element(m, 1.0);
    let at = a.transpose();
    // constraint rows are sparse in practice; AᵀWA is accumulated row by row
    let rows: Vec<Vec<(usize, f64)>> = a
        .row_iter()
        .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect())
        .collect();
    let mut residual = f64::INFINITY;

    for it in 0..opts.max_iter {
        let r_d = h * &x + g + &at * &lam;
        let r_p = a * &x + &z - b;
        let mu = z.dot(&lam) / m as f64;
        residual = (inf_norm(&r_d) / scale_d).max(inf_norm(&r_p) / scale_p).max(mu);
        if residual <= opts.tol {
            return Ok(QpSolution {
                x,
                lambda: lam,
                iterations: it,
                residual,
            });
        }
        let w = lam.component_div(&z);
        let mut kkt = h.clone();
        for (row, wi) in rows.iter().zip(w.iter()) {
            for &(p, vp) in row {
                let s = wi * vp;
                for &(q, vq) in row {
                    kkt[(p, q)] += s * vq;
                }
            }
        }
        for i in 0..n {
            kkt[(i, i)] += 1e-12;
        }
        let chol = kkt.cholesky().ok_or(QpError::Factorization)?;

        let direction = |r_c: &DVector<f64>| {
            let zinv_rc = r_c.component_div(&z);
            let rhs = -&r_d - &at * (w.component_mul(&r_p) - &zinv_rc);
            let dx = chol.solve(&rhs);
            let dlam = w.component_mul(&(a * &dx + &r_p)) - zinv_rc;
            let dz = -&r_p - a * &dx;
            (dx, dz, dlam)
        };

        // predictor
        let r_c = z.component_mul(&lam);
        let (_, dz_a, dl_a) = direction(&r_c);
        let alpha_a = max_step(&z, &dz_a, 1.0).min(max_step(&lam, &dl_a, 1.0));
        let mu_aff = (&z + &dz_a * alpha_a).dot(&(&lam + &dl_a * alpha_a)) / m as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        // corrector
        let r_c = z.component_mul(&lam) + dz_a.component_mul(&dl_a) - DVector::from_element(m, sigma * mu);
        let (dx, dz, dl) = direction(&r_c);
        let alpha = max_step(&z, &dz, 0.995).min(max_step(&lam, &dl, 0.995));
        x += &dx * alpha;
        z += &dz * alpha;
        lam += &dl * alpha;
        z.apply(|v| *v = v.max(1e-300));
        lam.apply(|v| *v = v.max(1e-300));
    }
    Err(QpError::NoConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// Value of `½xᵀHx + gᵀx`.
pub fn objective(h: &DMatrix<f64>, g: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(h * x)) + g.dot(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive active-set search; only for tiny problems with `H ≻ 0`.
    fn brute_force(h: &DMatrix<f64>, g: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
        let n = g.len();
        let m = b.len();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0u32..(1 << m) {
            let act: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            if act.len() > n {
                continue;
            }
            let k = act.len();
            let mut kkt = DMatrix::zeros(n + k, n + k);
            kkt.view_mut((0, 0), (n, n)).copy_from(h);
            let mut rhs = DVector::zeros(n + k);
            rhs.rows_mut(0, n).copy_from(&(-g));
            for (r, &i) in act.iter().enumerate() {
                for j in 0..n {
                    kkt[(n + r, j)] = a[(i, j)];
                    kkt[(j, n + r)] = a[(i, j)];
                }
                rhs[n + r] = b[i];
            }
            let Some(sol) = kkt.lu().solve(&rhs) else { continue };
            let x = sol.rows(0, n).into_owned();
            if (a * &x - b).iter().any(|v| *v > 1e-9) {
                continue;
            }
            let f = objective(h, g, &x);
            if best.as_ref().is_none_or(|(bf, _)| f < *bf - 1e-12) {
                best = Some((f, x));
            }
        }
        best.map(|(_, x)| x)
    }

    fn instance() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>)> {
        (2usize..=3, 1usize..=6).prop_flat_map(|(n, m)| {
            (
                proptest::collection::vec(-1.0f64..1.0, n * n),
                proptest::collection::vec(-2.0f64..2.0, n),
                proptest::collection::vec(-1.0f64..1.0, m * n),
                proptest::collection::vec(0.1f64..1.5, m),
            )
                .prop_map(move |(l, g, a, b)| {
                    let l = DMatrix::from_vec(n, n, l);
                    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.5;
                    // b > 0 keeps the origin strictly feasible
                    (h, DVector::from_vec(g), DMatrix::from_vec(m, n, a), DVector::from_vec(b))
                })
        })
    }

    proptest! {
        #[test]
        fn matches_active_set_enumeration((h, g, a, b) in instance()) {
            let sol = solve(&h, &g, &a, &b, &QpOptions::default()).unwrap();
            let oracle = brute_force(&h, &g, &a, &b).unwrap();
            prop_assert!((&sol.x - &oracle).amax() < 1e-6, "ipm {} oracle {}", sol.x, oracle);
            prop_assert!(sol.lambda.iter().all(|l| *l >= 0.0));
        }
    }

    #[test]
    fn unconstrained_minimum_inside() {
        let h = DMatrix::identity(2, 2);
        let g = DVector::from_vec(vec![-0.5, 0.25]);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let s = solve(&h, &g, &a, &b, &QpOptions::default()).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-8 && (s.x[1] + 0.25).abs() < 1e-8);
    }

    #[test]
    fn active_bound() {
        // min (x-2)^2, x <= 1
        let h = DMatrix::from_element(1, 1, 2.0);
        let g = DVector::from_element(1, -4.0);
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DVector::from_element(1, 1.0);
        let s = solve(&h, &g, &a, &b, &QpOptions::default()).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-8);
        assert!((s.lambda[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let h = DMatrix::identity(2, 2);
        let g = DVector::zeros(3);
        let a = DMatrix::zeros(0, 2);
        let b = DVector::zeros(0);
        assert!(matches!(solve(&h, &g, &a, &b, &QpOptions::default()), Err(QpError::Dimensions(_))));
    }
}
