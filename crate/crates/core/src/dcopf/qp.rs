//! Dense primal active-set solver for convex quadratic programs
//!
//! ```text
//!     minimize    ½ xᵀ diag(q) x + cᵀ x        (q ≥ 0 elementwise)
//!     subject to  A x  = b
//!                 C x ≤ d
//! ```
//!
//! Degenerate curvature (q = 0 on a face) is handled by splitting the
//! reduced Hessian's eigenspectrum: Newton steps on the positive part,
//! linear-descent rays on the null part. Blocking and dropping both use
//! Bland's rule (lowest index) so the iteration cannot cycle and is fully
//! deterministic. Phase 1 minimizes slack on violated inequalities from a
//! caller-supplied equality-feasible point.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

pub const FEAS_TOL: f64 = 1e-8;
pub const MULT_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("iteration limit {0} exceeded")]
    IterationLimit(usize),
    #[error("descent ray is unblocked: problem is unbounded")]
    Unbounded,
    #[error("initial point violates an equality constraint by {0:.3e}")]
    BadStart(f64),
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub q_diag: DVector<f64>,
    pub lin: DVector<f64>,
    pub eq: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub eq_mult: DVector<f64>,
    pub ineq_mult: DVector<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub enum QpOutcome {
    Optimal(QpSolution),
    /// Inequality indices that cannot be satisfied together with the
    /// equality constraints.
    Infeasible { violated: Vec<usize> },
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.lin.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.component_mul(&self.q_diag).dot(x) + self.lin.dot(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_mul(&self.q_diag) + &self.lin
    }
}

/// Solves the program starting from a point that satisfies the equality
/// constraints (inequality violations are repaired in phase 1).
pub fn solve(prob: &QpProblem, x0: &DVector<f64>) -> Result<QpOutcome, QpError> {
    let eq_err = if prob.eq.nrows() > 0 {
        (&prob.eq * x0 - &prob.eq_rhs).amax()
    } else {
        0.0
    };
    if eq_err > 1e-6 {
        return Err(QpError::BadStart(eq_err));
    }

    // phase 1: drive violated inequalities feasible
    let resid = if prob.ineq.nrows() > 0 {
        &prob.ineq * x0 - &prob.ineq_rhs
    } else {
        DVector::zeros(0)
    };
    let violated: Vec<usize> = (0..resid.len())
        .filter(|&i| resid[i] > FEAS_TOL)
        .collect();

    let x_feas = if violated.is_empty() {
        x0.clone()
    } else {
        match phase_one(prob, x0, &violated)? {
            Ok(x) => x,
            Err(certificate) => return Ok(QpOutcome::Infeasible { violated: certificate }),
        }
    };

    let sol = active_set(prob, &x_feas)?;
    Ok(QpOutcome::Optimal(sol))
}

/// Auxiliary LP `min Σ s` over (x, s) with slack only on the initially
/// violated rows. Returns the repaired point, or the violated-set
/// certificate when the optimum leaves slack behind.
fn phase_one(
    prob: &QpProblem,
    x0: &DVector<f64>,
    violated: &[usize],
) -> Result<Result<DVector<f64>, Vec<usize>>, QpError> {
    let n = prob.n();
    let nv = violated.len();
    let m = prob.ineq.nrows();
    let n_aux = n + nv;

    let mut lin = DVector::zeros(n_aux);
    for k in 0..nv {
        lin[n + k] = 1.0;
    }

    let mut eq = DMatrix::zeros(prob.eq.nrows(), n_aux);
    eq.view_mut((0, 0), (prob.eq.nrows(), n)).copy_from(&prob.eq);

    // rows: original inequalities (slack subtracted on violated ones),
    // then s ≥ 0
    let mut ineq = DMatrix::zeros(m + nv, n_aux);
    let mut rhs = DVector::zeros(m + nv);
    for i in 0..m {
        ineq.view_mut((i, 0), (1, n)).copy_from(&prob.ineq.row(i));
        rhs[i] = prob.ineq_rhs[i];
    }
    for (k, &i) in violated.iter().enumerate() {
        ineq[(i, n + k)] = -1.0;
        ineq[(m + k, n + k)] = -1.0; // -s ≤ 0
    }

    let aux = QpProblem {
        q_diag: DVector::zeros(n_aux),
        lin,
        eq,
        eq_rhs: prob.eq_rhs.clone(),
        ineq,
        ineq_rhs: rhs,
    };

    let mut start = DVector::zeros(n_aux);
    start.rows_mut(0, n).copy_from(x0);
    for (k, &i) in violated.iter().enumerate() {
        start[n + k] = prob.ineq.row(i).transpose().dot(x0) - prob.ineq_rhs[i];
    }

    let sol = active_set(&aux, &start)?;
    let slack_total = sol.objective;
    if slack_total > FEAS_TOL * (1.0 + nv as f64) {
        let certificate = violated
            .iter()
            .enumerate()
            .filter(|(k, _)| sol.x[n + k] > FEAS_TOL)
            .map(|(_, &i)| i)
            .collect();
        return Ok(Err(certificate));
    }
    Ok(Ok(sol.x.rows(0, n).into_owned()))
}

fn active_set(prob: &QpProblem, x0: &DVector<f64>) -> Result<QpSolution, QpError> {
    let n = prob.n();
    let n_eq = prob.eq.nrows();
    let n_ineq = prob.ineq.nrows();
    let max_iter = 50 * (n + n_eq + n_ineq + 1);

    let mut x = x0.clone();
    let mut working: Vec<usize> = Vec::new();

    for iter in 0..max_iter {
        let g = prob.gradient(&x);
        let c_act = stack_active(prob, &working);
        let qr = PivotedQr::factor(&c_act.transpose());
        let z = qr.null_space();

        let mut direction: Option<(DVector<f64>, f64)> = None; // (d, alpha_cap)
        if z.ncols() > 0 {
            let gz = z.transpose() * &g;
            let hz = z.transpose() * DMatrix::from_diagonal(&prob.q_diag) * &z;
            let eig = SymmetricEigen::new(hz);
            let lam_max = eig.eigenvalues.amax().max(0.0);
            let thresh = (1e-12 * lam_max).max(1e-14);

            let mut ray = DVector::zeros(z.ncols());
            let mut newton = DVector::zeros(z.ncols());
            for k in 0..eig.eigenvalues.len() {
                let lam = eig.eigenvalues[k];
                let u = eig.eigenvectors.column(k);
                let gu = u.dot(&gz);
                if lam > thresh {
                    newton -= u * (gu / lam);
                } else {
                    ray -= u * gu;
                }
            }
            let gnorm = 1.0 + g.amax();
            if ray.norm() > 1e-10 * gnorm {
                let d = &z * ray.normalize();
                direction = Some((d, f64::INFINITY));
            } else if newton.norm() > 1e-12 * (1.0 + x.amax()) {
                let d = &z * newton;
                direction = Some((d, 1.0));
            }
        }

        match direction {
            None => {
                // stationary on this face: check multipliers
                let lam = qr.least_squares(&(-&g));
                let mut drop = None;
                for (pos, &ci) in working.iter().enumerate() {
                    if lam[n_eq + pos] < -MULT_TOL {
                        drop = match drop {
                            None => Some((ci, pos)),
                            Some((best, _)) if ci < best => Some((ci, pos)),
                            keep => keep,
                        };
                    }
                }
                match drop {
                    Some((_, pos)) => {
                        working.remove(pos);
                    }
                    None => {
                        let mut ineq_mult = DVector::zeros(n_ineq);
                        for (pos, &ci) in working.iter().enumerate() {
                            ineq_mult[ci] = lam[n_eq + pos].max(0.0);
                        }
                        return Ok(QpSolution {
                            objective: prob.objective(&x),
                            eq_mult: lam.rows(0, n_eq).into_owned(),
                            ineq_mult,
                            x,
                            iterations: iter,
                        });
                    }
                }
            }
            Some((d, alpha_cap)) => {
                // ratio test over inactive inequalities, Bland on ties
                let mut alpha = alpha_cap;
                let mut blocker = None;
                for i in 0..n_ineq {
                    if working.contains(&i) {
                        continue;
                    }
                    let ad = prob.ineq.row(i).transpose().dot(&d);
                    if ad > 1e-12 {
                        let slack = prob.ineq_rhs[i] - prob.ineq.row(i).transpose().dot(&x);
                        let a_i = (slack / ad).max(0.0);
                        if a_i < alpha - 1e-12 {
                            alpha = a_i;
                            blocker = Some(i);
                        } else if (a_i - alpha).abs() <= 1e-12 {
                            blocker = match blocker {
                                None if a_i < alpha => Some(i),
                                Some(b) if i < b => Some(i),
                                keep => keep,
                            };
                        }
                    }
                }
                if alpha == f64::INFINITY {
                    return Err(QpError::Unbounded);
                }
                x += d * alpha;
                if let Some(b) = blocker {
                    working.push(b);
                    working.sort_unstable();
                }
            }
        }
    }
    Err(QpError::IterationLimit(max_iter))
}

fn stack_active(prob: &QpProblem, working: &[usize]) -> DMatrix<f64> {
    let n = prob.n();
    let rows = prob.eq.nrows() + working.len();
    let mut m = DMatrix::zeros(rows, n);
    m.view_mut((0, 0), (prob.eq.nrows(), n)).copy_from(&prob.eq);
    for (k, &i) in working.iter().enumerate() {
        m.view_mut((prob.eq.nrows() + k, 0), (1, n))
            .copy_from(&prob.ineq.row(i));
    }
    m
}

/// Householder QR with column pivoting, keeping the full orthogonal factor
/// so the null space of the original (transposed) matrix falls out of the
/// trailing columns.
struct PivotedQr {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    fn factor(a: &DMatrix<f64>) -> Self {
        let (n, m) = a.shape();
        let mut r = a.clone();
        let mut q = DMatrix::identity(n, n);
        let mut perm: Vec<usize> = (0..m).collect();
        let kmax = n.min(m);

        let mut reflectors: Vec<(usize, DVector<f64>, f64)> = Vec::new();
        for k in 0..kmax {
            // pivot: column with largest remaining norm
            let mut best = k;
            let mut best_norm = 0.0;
            for j in k..m {
                let nrm = r.view((k, j), (n - k, 1)).norm_squared();
                if nrm > best_norm {
                    best_norm = nrm;
                    best = j;
                }
            }
            if best != k {
                r.swap_columns(k, best);
                perm.swap(k, best);
            }
            let norm = best_norm.sqrt();
            if norm < 1e-14 {
                break;
            }
            // Householder vector for column k
            let mut v = DVector::zeros(n - k);
            for i in 0..n - k {
                v[i] = r[(k + i, k)];
            }
            let alpha = -v[0].signum() * v.norm();
            v[0] -= alpha;
            let vn = v.norm();
            if vn < 1e-300 {
                continue;
            }
            v /= vn;
            // apply H = I - 2vvᵀ to trailing block
            for j in k..m {
                let mut col = r.view((k, j), (n - k, 1)).into_owned();
                let proj = 2.0 * v.dot(&col);
                col -= &v * proj;
                r.view_mut((k, j), (n - k, 1)).copy_from(&col);
            }
            reflectors.push((k, v, 2.0));
        }

        // accumulate Q = H_1 H_2 ... H_r applied to identity
        for (k, v, two) in reflectors.iter().rev() {
            for j in 0..n {
                let mut col = q.view((*k, j), (n - k, 1)).into_owned();
                let proj = two * v.dot(&col);
                col -= v * proj;
                q.view_mut((*k, j), (n - k, 1)).copy_from(&col);
            }
        }

        let scale = if n == 0 || m == 0 { 0.0 } else { r.amax() };
        let tol = 1e-11 * scale.max(1.0);
        let mut rank = 0;
        for k in 0..kmax {
            if r[(k, k)].abs() > tol {
                rank += 1;
            } else {
                break;
            }
        }
        PivotedQr { q, r, perm, rank }
    }

    /// Orthonormal basis of the null space of `aᵀ` (the constraint matrix).
    fn null_space(&self) -> DMatrix<f64> {
        let n = self.q.nrows();
        self.q.columns(self.rank, n - self.rank).into_owned()
    }

    /// Minimum-norm-style solve of `a λ = rhs` for the factored `a`
    /// (permuted components beyond the numerical rank are zeroed).
    fn least_squares(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let m = self.perm.len();
        let qtb = self.q.transpose() * rhs;
        let mut y = DVector::zeros(m);
        for k in (0..self.rank).rev() {
            let mut s = qtb[k];
            for j in k + 1..self.rank {
                s -= self.r[(k, j)] * y[j];
            }
            y[k] = s / self.r[(k, k)];
        }
        let mut lam = DVector::zeros(m);
        for k in 0..self.rank {
            lam[self.perm[k]] = y[k];
        }
        lam
    }
}

/// Independent KKT residual check for a claimed optimum: returns the
/// largest of the stationarity, primal-feasibility, dual-feasibility, and
/// complementarity residuals.
pub fn kkt_residual(prob: &QpProblem, sol: &QpSolution) -> f64 {
    let mut worst = 0.0f64;
    let g = prob.gradient(&sol.x);
    let mut stat = g;
    if prob.eq.nrows() > 0 {
        stat += prob.eq.transpose() * &sol.eq_mult;
    }
    if prob.ineq.nrows() > 0 {
        stat += prob.ineq.transpose() * &sol.ineq_mult;
    }
    worst = worst.max(stat.amax());

    if prob.eq.nrows() > 0 {
        worst = worst.max((&prob.eq * &sol.x - &prob.eq_rhs).amax());
    }
    if prob.ineq.nrows() > 0 {
        let resid = &prob.ineq * &sol.x - &prob.ineq_rhs;
        for i in 0..resid.len() {
            worst = worst.max(resid[i]); // primal: resid ≤ 0
            worst = worst.max(-sol.ineq_mult[i]); // dual: μ ≥ 0
            worst = worst.max((sol.ineq_mult[i] * resid[i]).abs()); // complementarity
        }
    }
    worst
}
