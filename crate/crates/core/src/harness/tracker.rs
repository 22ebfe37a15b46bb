//! Explicit constants for the polynomial-testing and full-testing bounds.

use serde::{Deserialize, Serialize};

use super::report::TrackedStep;
use crate::error::{invalid, Result};
use crate::geometry::refinement_depth;

/// `C(κ,ε)`, `A(κ,ε)` and the refinement depth `m` in closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplicitConstant {
    pub kappa: u32,
    pub eps: f64,
    pub n: usize,
    pub m: u32,
    /// Cube-count bound `B = 2·2^{(n−1)m}` (1 for `n = 1`).
    pub count: f64,
    /// `C_{m,d−1}` for `d = 1..=κ`.
    pub per_level: Vec<f64>,
    pub c: f64,
    pub a: f64,
}

/// Per-level constants `C_{m,d−1} = d·√(2B)` (`= d` when `n = 1`, where no
/// splitting into cubes happens), multiplied over `d = 1..=κ`, and
/// `A = 1 + C_{m,κ−1} + C_{m,κ−1}C_{m,κ−2} + …` with `κ` terms.
///
/// ```
/// let e = czbench::harness::explicit_constant(3, 0.1, 1).unwrap();
/// assert_eq!(e.c, 6.0);
/// assert_eq!(e.a, 1.0 + 3.0 + 3.0 * 2.0);
/// ```
pub fn explicit_constant(kappa: u32, eps: f64, n: usize) -> Result<ExplicitConstant> {
    if kappa == 0 {
        return invalid("kappa must be at least 1");
    }
    if !(eps > 0.0 && eps < 1.0) {
        return invalid(format!("eps must lie in (0,1), got {eps}"));
    }
    if n == 0 {
        return invalid("dimension must be positive");
    }
    let m = refinement_depth(eps);
    let count = if n == 1 { 1.0 } else { 2.0 * 2f64.powi(((n - 1) as u32 * m) as i32) };
    let per_level: Vec<f64> =
        (1..=kappa).map(|d| if n == 1 { d as f64 } else { d as f64 * (2.0 * count).sqrt() }).collect();
    let c = per_level.iter().product();
    let mut a = 0.0;
    let mut prod = 1.0;
    for k in 0..kappa as usize {
        a += prod;
        prod *= per_level[kappa as usize - 1 - k];
    }
    Ok(ExplicitConstant { kappa, eps, n, m, count, per_level, c, a })
}

/// One degree of the rigorous polynomial-testing recursion
/// `G_d ≤ e_d·𝔑 + C_d·G_{d−1}`, where `G_d` is the full testing constant
/// over `|β| ≤ d` with lower-corner monomials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpLevel {
    pub degree: u32,
    pub m: u32,
    /// Largest number of cubes in a depth-`m` decomposition.
    pub count: f64,
    /// `d·√2·2^{−m/2}`.
    pub e: f64,
    /// `d·√(2·count)`.
    pub c: f64,
    /// Product of the constants of the higher degrees.
    pub outer: f64,
}

/// `𝔉𝔗^{(κ)} ≤ c·𝔉𝔗 + a·𝔑` with `a ≤ eps`, valid on any cube family that
/// contains every dyadic subcube of its members down to the lattice cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpBound {
    pub kappa: u32,
    pub eps: f64,
    pub n: usize,
    /// Highest degree first.
    pub levels: Vec<TpLevel>,
    /// `(3/2)^{κ−1}`: centered monomials in terms of lower-corner ones.
    pub recenter: f64,
    pub c: f64,
    pub a: f64,
}

/// Largest cube count of a depth-`m` decomposition of an `n`-dimensional
/// slab rectangle: `max(2·2^{(n−1)m}, Σ_{k=1}^m 2^{(n−1)k})`. The second
/// term only matters for `n = 1`, where it equals `m`.
pub fn decomposition_count(n: usize, m: u32) -> f64 {
    let q = 2f64.powi((n - 1) as i32);
    let ceiling: f64 = (1..=m as i32).map(|k| q.powi(k)).sum();
    (2.0 * q.powi(m as i32)).max(ceiling)
}

/// Tracks the recursion from the top degree inward. Each level `d` takes the
/// smallest `m_d` with `outer_d·e_d ≤ ε/((3/2)^{κ−1}(κ−1))`, so the `𝔑`
/// coefficients sum to at most `ε` after recentering.
///
/// ```
/// let b = czbench::harness::tp_bound(2, 0.5, 1).unwrap();
/// assert_eq!(b.levels[0].m, 5);
/// assert!(b.a <= 0.5);
/// ```
pub fn tp_bound(kappa: u32, eps: f64, n: usize) -> Result<TpBound> {
    if kappa == 0 {
        return invalid("kappa must be at least 1");
    }
    if !(eps > 0.0 && eps < 1.0) {
        return invalid(format!("eps must lie in (0,1), got {eps}"));
    }
    if n == 0 {
        return invalid("dimension must be positive");
    }
    let recenter = 1.5f64.powi(kappa as i32 - 1);
    let mut levels = Vec::new();
    let mut outer = 1.0;
    if kappa > 1 {
        let share = eps / (recenter * (kappa - 1) as f64);
        for d in (1..kappa).rev() {
            let df = d as f64;
            let e_of = |m: u32| df * 2f64.sqrt() * 2f64.powf(-(m as f64) / 2.0);
            let mut m = (2.0 * (outer * df * 2f64.sqrt() / share).log2()).ceil().max(1.0) as u32;
            while outer * e_of(m) > share {
                m += 1;
            }
            while m > 1 && outer * e_of(m - 1) <= share {
                m -= 1;
            }
            let count = decomposition_count(n, m);
            let c = df * (2.0 * count).sqrt();
            levels.push(TpLevel { degree: d, m, count, e: e_of(m), c, outer });
            outer *= c;
        }
    }
    let a = recenter * levels.iter().map(|l| l.outer * l.e).sum::<f64>();
    let c = recenter * outer;
    Ok(TpBound { kappa, eps, n, levels, recenter, c, a })
}

impl TpBound {
    pub fn steps(&self) -> Vec<TrackedStep> {
        let mut out = vec![TrackedStep { step: "recenter (3/2)^(kappa-1)".into(), value: self.recenter }];
        for l in &self.levels {
            let d = l.degree;
            out.push(TrackedStep { step: format!("degree {d}: depth m"), value: l.m as f64 });
            out.push(TrackedStep { step: format!("degree {d}: cube count B"), value: l.count });
            out.push(TrackedStep { step: format!("degree {d}: slab factor d*sqrt(2)*2^(-m/2)"), value: l.e });
            out.push(TrackedStep { step: format!("degree {d}: cube factor d*sqrt(2B)"), value: l.c });
        }
        out.push(TrackedStep { step: "C(kappa,eps)".into(), value: self.c });
        out.push(TrackedStep { step: "norm coefficient".into(), value: self.a });
        out
    }
}

/// Off-support factor `C_CZ²·K^{2(n−α)}`, `K = 1 + (1+√n/2)·2^m`, in
/// `∫_{Q^c}|T1_{Q'}|²dω ≤ factor·𝒜₂*·|Q|_σ` for `Q'` the cube left after
/// removing a boundary shell of width `2^{−m}ℓ(Q)`.
pub fn off_support_factor(n: usize, alpha: f64, m: u32, c_cz: f64) -> f64 {
    let k = 1.0 + (1.0 + (n as f64).sqrt() / 2.0) * 2f64.powi(m as i32);
    c_cz * c_cz * k.powf(2.0 * (n as f64 - alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::decompose_rectangle;

    #[test]
    fn one_dimensional_chain_is_factorial() {
        for kappa in 1..=5u32 {
            let e = explicit_constant(kappa, 0.3, 1).unwrap();
            let fact: f64 = (1..=kappa).map(|d| d as f64).product();
            assert_eq!(e.c, fact);
            // A = Σ_{j=0}^{κ−1} κ!/(κ−j)!
            let a: f64 = (0..kappa).map(|j| ((kappa - j + 1)..=kappa).map(|d| d as f64).product::<f64>()).sum();
            assert_eq!(e.a, a);
        }
    }

    #[test]
    fn single_level_by_hand() {
        // eps = 1/2: m = 2, B = 2·2² = 8, C_{m,0} = 1·√16
        let e = explicit_constant(1, 0.5, 2).unwrap();
        assert_eq!((e.m, e.count, e.c, e.a), (2, 8.0, 4.0, 1.0));
    }

    #[test]
    fn grows_as_eps_shrinks() {
        for n in 1..=3 {
            for kappa in 1..=4 {
                let mut last = 0.0;
                for eps in [0.9, 0.5, 0.3, 0.1, 0.05, 0.01] {
                    let c = explicit_constant(kappa, eps, n).unwrap().c;
                    assert!(c >= last);
                    last = c;
                }
            }
        }
    }

    #[test]
    fn count_bounds_every_decomposition() {
        for n in 1..=3usize {
            for k in 1..200 {
                let t = k as f64 / 200.0 + 1e-3;
                for eps in [0.3, 0.1, 0.01] {
                    let d = decompose_rectangle(n, t.min(0.999), eps).unwrap();
                    assert!(d.count() as f64 <= decomposition_count(n, d.m));
                }
            }
        }
    }

    #[test]
    fn tp_bound_hand_expansion() {
        // κ = 2, n = 1, ε = 1/2: the single level needs √2·2^{-m/2} ≤ 1/3,
        // first met at m = 5 (2^{2.5} ≈ 5.66 > 3√2 ≈ 4.24 > 2²).
        let b = tp_bound(2, 0.5, 1).unwrap();
        let l = &b.levels[0];
        assert_eq!((l.degree, l.m, l.count), (1, 5, 5.0));
        assert!((l.e - 0.25).abs() < 1e-15);
        assert!((b.c - 1.5 * 10f64.sqrt()).abs() < 1e-12);
        assert!((b.a - 0.375).abs() < 1e-15);
    }

    #[test]
    fn tp_bound_coefficient_stays_below_eps() {
        for n in 1..=3 {
            for kappa in 1..=4 {
                for eps in [0.5, 0.1, 0.01] {
                    let b = tp_bound(kappa, eps, n).unwrap();
                    assert!(b.a <= eps * (1.0 + 1e-12), "{b:?}");
                    assert!(b.c >= 1.0 && b.c.is_finite());
                }
            }
        }
        let b = tp_bound(1, 0.2, 2).unwrap();
        assert_eq!((b.c, b.a), (1.0, 0.0));
    }
}
