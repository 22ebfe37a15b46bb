use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::cube::{DyadicCube, LatticeCube};
use crate::error::{invalid, Result};

/// Multiindex `β`.
pub type MultiIndex = SmallVec<[u32; 4]>;

/// Point a monomial is normalized about.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Anchor {
    /// `((x − c_Q)/ℓ(Q))^β`, bounded by `2^{-|β|}` on `Q`.
    #[default]
    Center,
    /// `((x − a_Q)/ℓ(Q))^β` with `a_Q` the lower corner; values in `[0,1)` on `Q`.
    LowerCorner,
}

/// A monomial normalized to a cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub beta: MultiIndex,
    pub cube: LatticeCube,
    pub anchor: Anchor,
}

impl Monomial {
    pub fn new(beta: &[u32], cube: impl Into<LatticeCube>, anchor: Anchor) -> Self {
        Monomial { beta: beta.iter().copied().collect(), cube: cube.into(), anchor }
    }

    pub fn degree(&self) -> u32 {
        self.beta.iter().sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let origin = match self.anchor {
            Anchor::Center => self.cube.center(),
            Anchor::LowerCorner => self.cube.lower(),
        };
        let side = self.cube.side();
        eval_normalized(&self.beta, &origin, side, x)
    }
}

pub(crate) fn eval_normalized(beta: &[u32], origin: &[f64], side: f64, x: &[f64]) -> f64 {
    let mut v = 1.0;
    for ((&b, &o), &xi) in beta.iter().zip(origin).zip(x) {
        if b > 0 {
            v *= ((xi - o) / side).powi(b as i32);
        }
    }
    v
}

/// All multiindices in `n` variables of total degree exactly `d`, in
/// lexicographically decreasing order.
pub fn multiindices_of_degree(n: usize, d: u32) -> Vec<MultiIndex> {
    fn rec(n: usize, d: u32, prefix: &mut MultiIndex, out: &mut Vec<MultiIndex>) {
        if n == 1 {
            prefix.push(d);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=d).rev() {
            prefix.push(first);
            rec(n - 1, d - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(n, d, &mut MultiIndex::new(), &mut out);
    }
    out
}

/// All multiindices with `|β| < kappa`, graded by degree.
pub fn multiindices_below(n: usize, kappa: u32) -> Vec<MultiIndex> {
    (0..kappa).flat_map(|d| multiindices_of_degree(n, d)).collect()
}

/// How the `r`-integral of the recovery identity is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quadrature {
    Exact,
    Midpoint(usize),
}

fn lower_coords(q: &DyadicCube, y: &[f64]) -> Vec<f64> {
    let side = q.side();
    q.lower().iter().zip(y).map(|(a, yi)| (yi - a) / side).collect()
}

/// `∫₀¹ β_n (u − r)^{β_n − 1} 1_{r ≤ u} dr` for `u ∈ [0,1)`.
fn recovery_integral_1d(beta_n: u32, u: f64, quad: Quadrature) -> f64 {
    match quad {
        Quadrature::Exact => u.powi(beta_n as i32),
        Quadrature::Midpoint(nodes) => {
            let h = 1.0 / nodes as f64;
            let mut s = 0.0;
            for k in 0..nodes {
                let r = (k as f64 + 0.5) * h;
                if r > u {
                    break;
                }
                s += (u - r).powi(beta_n as i32 - 1);
            }
            beta_n as f64 * s * h
        }
    }
}

/// Right side of the recovery identity
/// `1_Q(y) u^β = ∫₀¹ 1_{u_n ≥ r}(y) · Π_{i<n} u_i^{β_i} · β_n (u_n − r)^{β_n−1} dr`,
/// with `u = (y − a_Q)/ℓ(Q)` the lower-corner coordinates. The integrand is
/// an indicator of the top part of `Q` times a monomial one degree lower.
pub fn monomial_identity_rhs(q: &DyadicCube, beta: &[u32], y: &[f64], quad: Quadrature) -> Result<f64> {
    check_beta(q, beta)?;
    if !q.contains_point(y) {
        return Ok(0.0);
    }
    let u = lower_coords(q, y);
    let n = beta.len();
    let lower: f64 = (0..n - 1).map(|i| u[i].powi(beta[i] as i32)).product();
    Ok(lower * recovery_integral_1d(beta[n - 1], u[n - 1], quad))
}

fn check_beta(q: &DyadicCube, beta: &[u32]) -> Result<()> {
    if beta.len() != q.dim() || beta.is_empty() {
        return invalid("multiindex length must equal the cube dimension");
    }
    if beta[beta.len() - 1] == 0 {
        return invalid("beta_n = 0: the identity integrates along the last axis; permute axes first");
    }
    Ok(())
}

/// Maximum deviation between `1_Q u^β` and the `nodes`-point midpoint
/// evaluation of the recovery identity over an evaluation grid of `Q`.
///
/// The grid has `4·nodes` points along the last axis (so every quadrature
/// node is a grid point) and 8 per other axis.
pub fn monomial_recovery_error(q: &DyadicCube, beta: &[u32], nodes: usize) -> Result<f64> {
    check_beta(q, beta)?;
    if nodes == 0 {
        return invalid("quadrature needs at least one node");
    }
    let n = beta.len();
    let g_last = 4 * nodes;
    let lower = q.lower();
    let side = q.side();
    // The integrand factorizes, so the last-axis values are shared by all
    // points of the transverse grid.
    let last: Vec<(f64, f64)> = (0..g_last)
        .map(|j| {
            let y = lower[n - 1] + side * j as f64 / g_last as f64;
            let u = (y - lower[n - 1]) / side;
            (u.powi(beta[n - 1] as i32), recovery_integral_1d(beta[n - 1], u, Quadrature::Midpoint(nodes)))
        })
        .collect();
    let g = 8usize;
    let transverse = g.pow(n as u32 - 1);
    let mut worst = 0.0f64;
    for t in 0..transverse {
        let mut rest = t;
        let mut factor = 1.0;
        for &b in &beta[..n - 1] {
            let u = (rest % g) as f64 / g as f64;
            rest /= g;
            factor *= u.powi(b as i32);
        }
        for &(lhs, rhs) in &last {
            worst = worst.max((factor * lhs - factor * rhs).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_identity_exact() {
        let q = DyadicCube::unit(1);
        let v = monomial_identity_rhs(&q, &[1], &[0.5], Quadrature::Exact).unwrap();
        assert_eq!(v, 0.5);
        let v = monomial_identity_rhs(&q, &[2], &[0.5], Quadrature::Exact).unwrap();
        assert_eq!(v, 0.25);
    }

    #[test]
    fn midpoint_matches_exact_value_closely() {
        let q = DyadicCube::new(2, [1]);
        let y = [0.25 + 0.3 * 0.25];
        let e = monomial_identity_rhs(&q, &[2], &y, Quadrature::Exact).unwrap();
        let a = monomial_identity_rhs(&q, &[2], &y, Quadrature::Midpoint(4096)).unwrap();
        assert!((a - e).abs() < 1e-3);
        assert_eq!(monomial_identity_rhs(&q, &[2], &[0.9], Quadrature::Exact).unwrap(), 0.0);
    }

    #[test]
    fn linear_error_is_half_step() {
        let e = monomial_recovery_error(&DyadicCube::unit(1), &[1], 1024).unwrap();
        assert!(e <= 4.0 / 1024.0);
        assert!((e - 0.5 / 1024.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_flat_last_axis() {
        assert!(monomial_recovery_error(&DyadicCube::unit(2), &[1, 0], 16).is_err());
        assert!(monomial_recovery_error(&DyadicCube::unit(1), &[1], 0).is_err());
    }

    #[test]
    fn multidimensional_error_small() {
        let e = monomial_recovery_error(&DyadicCube::new(1, [1, 0]), &[1, 2], 256).unwrap();
        assert!(e < 8.0 / 256.0);
    }

    #[test]
    fn centered_bound_tight_at_corners() {
        let q = DyadicCube::new(3, [2, 5]);
        let beta = [2u32, 1];
        let mono = Monomial::new(&beta, &q, Anchor::Center);
        let lo = q.lower();
        let s = q.side();
        let bound = 0.5f64.powi(3);
        for corner in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] {
            let x = [lo[0] + corner[0] * s, lo[1] + corner[1] * s];
            assert!((mono.eval(&x).abs() - bound).abs() < 1e-12);
        }
        for i in 0..16 {
            for j in 0..16 {
                let x = [lo[0] + s * i as f64 / 16.0, lo[1] + s * j as f64 / 16.0];
                assert!(mono.eval(&x).abs() <= bound + 1e-15);
            }
        }
    }

    #[test]
    fn multiindex_counts() {
        assert_eq!(multiindices_of_degree(2, 2).len(), 3);
        assert_eq!(multiindices_of_degree(3, 2).len(), 6);
        assert_eq!(multiindices_below(2, 3).len(), 6);
        assert_eq!(multiindices_below(1, 4), (0..4).map(|d| MultiIndex::from_slice(&[d])).collect::<Vec<_>>());
    }
}
