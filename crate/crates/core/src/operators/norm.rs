use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{dot, OperatorMatrix};
use crate::error::{invalid, CzError, Result};

/// Certified bracket for the largest singular value of the stacked operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    /// `‖Ax‖` for the final unit Ritz vector `x`: a guaranteed lower bound.
    pub lower: f64,
    /// `√(θ + ‖AᵀAx − θx‖)`: bounds the top singular value once the Ritz
    /// value `θ` has locked onto the top eigenvalue of `AᵀA`.
    pub upper: f64,
    pub iterations: usize,
    pub restarts: usize,
    /// Final Ritz vector in `√s`-weighted coordinates.
    #[serde(skip)]
    pub vector: Vec<f64>,
}

impl NormEstimate {
    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

fn gram_apply(t: &OperatorMatrix, x: &[f64]) -> Vec<f64> {
    t.mul_transpose(&t.mul(x))
}

fn normalize(v: &mut [f64]) -> f64 {
    let r = dot(v, v).sqrt();
    if r > 0.0 {
        v.iter_mut().for_each(|a| *a /= r);
    }
    r
}

struct Run {
    theta: f64,
    x: Vec<f64>,
    iterations: usize,
}

/// Lanczos on `AᵀA` with full reorthogonalization.
fn lanczos(t: &OperatorMatrix, start: Vec<f64>, tol: f64, max_iter: usize) -> Run {
    let m = t.ncols();
    let mut q = start;
    normalize(&mut q);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut best = Run { theta: 0.0, x: basis[0].clone(), iterations: 0 };
    for k in 0..max_iter.min(m) {
        let mut w = gram_apply(t, &basis[k]);
        let a = dot(&w, &basis[k]);
        alpha.push(a);
        // two passes of classical Gram–Schmidt
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= c * bi);
            }
        }
        let bnorm = normalize(&mut w);
        let dim = k + 1;
        let check = dim <= 40 || dim % 8 == 0 || bnorm <= tol * a.abs() || dim == max_iter.min(m);
        if check {
            let mut tri = DMatrix::<f64>::zeros(dim, dim);
            for i in 0..dim {
                tri[(i, i)] = alpha[i];
                if i + 1 < dim {
                    tri[(i, i + 1)] = beta[i];
                    tri[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::new(tri);
            let (top, &theta) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("nonempty");
            let s = eig.eigenvectors.column(top);
            let mut x = vec![0.0; m];
            for (i, b) in basis.iter().enumerate() {
                x.iter_mut().zip(b).for_each(|(xi, bi)| *xi += s[i] * bi);
            }
            normalize(&mut x);
            let resid = bnorm * s[dim - 1].abs();
            best = Run { theta, x, iterations: dim };
            if resid <= tol * theta.abs().max(f64::MIN_POSITIVE) || bnorm <= tol * a.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        if bnorm == 0.0 {
            break;
        }
        beta.push(bnorm);
        basis.push(w);
    }
    best
}

/// Largest singular value of the stacked component matrices by Lanczos on
/// `AᵀA` (deterministic all-ones start). If the Ritz value stays below the
/// largest squared column norm, which is itself a lower bound for the top
/// eigenvalue, the run is repeated from a fixed pseudo-random vector.
pub fn operator_norm(t: &OperatorMatrix, tol: f64) -> Result<NormEstimate> {
    if !(tol > 0.0 && tol < 1.0) {
        return invalid("norm tolerance must lie in (0,1)");
    }
    let m = t.ncols();
    if m == 0 || t.nrows() == 0 {
        return Ok(NormEstimate { lower: 0.0, upper: 0.0, iterations: 0, restarts: 0, vector: vec![0.0; m] });
    }
    let max_iter = 300;
    let mut run = lanczos(t, vec![1.0; m], tol, max_iter);
    // Gershgorin-type floor: (AᵀA)_jj = ‖column j‖²
    let mut col_sq = vec![0.0; m];
    for c in 0..t.components() {
        for (k, a) in t.component(c).iter().enumerate() {
            col_sq[k % m] += a * a;
        }
    }
    let floor = col_sq.iter().cloned().fold(0.0, f64::max);
    let mut restarts = 0;
    if run.theta < floor * (1.0 - 1e-12) {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let start: Vec<f64> = (0..m).map(|_| rng.random::<f64>() - 0.5).collect();
        let again = lanczos(t, start, tol, max_iter);
        restarts = 1;
        if again.theta > run.theta {
            run = again;
        }
    }
    let ax = t.mul(&run.x);
    let ax_sq: f64 = ax.iter().flatten().map(|v| v * v).sum();
    let mx = t.mul_transpose(&ax);
    let theta = ax_sq;
    let resid = mx.iter().zip(&run.x).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
    if !theta.is_finite() || !resid.is_finite() {
        return Err(CzError::NonFinite("operator norm iteration".into()));
    }
    Ok(NormEstimate {
        lower: ax_sq.sqrt(),
        upper: (theta + resid).sqrt(),
        iterations: run.iterations,
        restarts,
        vector: run.x,
    })
}

/// Largest singular value from a full SVD of the stacked matrix; used to
/// cross-check the iteration on matrices up to 2000 × 2000.
pub fn operator_norm_dense(t: &OperatorMatrix) -> Result<f64> {
    let (r, c) = (t.nrows() * t.components(), t.ncols());
    if r > 2000 * t.components() || c > 2000 {
        return invalid("dense SVD cross-check is limited to 2000 x 2000 blocks");
    }
    if r == 0 || c == 0 {
        return Ok(0.0);
    }
    let mut stacked = DMatrix::<f64>::zeros(r, c);
    let nr = t.nrows();
    for comp in 0..t.components() {
        for i in 0..nr {
            for j in 0..c {
                stacked[(comp * nr + i, j)] = t.entry(comp, i, j);
            }
        }
    }
    Ok(stacked.singular_values().max())
}
