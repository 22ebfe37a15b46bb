use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use crate::error::{invalid, CzError, Result};

/// Ellipticity margins for one sign vector `m ∈ {1,−1}^n`.
///
/// The plain margin ranges over the closed n-ant (the closed n-ants cover
/// the sphere), the strong margin over the open n-ant `{m_i u_i > 0}`; it is
/// `None` when no sampled direction lies in the open n-ant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityMargin {
    pub orthant: Vec<i8>,
    /// `min_u max_j |K_j(x, x+tu)|·t^{n−α}`.
    pub plain: f64,
    /// `max_λ min_u |Σ_j λ_j K_j(x, x+tu)|·t^{n−α}` over unit `λ`.
    pub strong: Option<f64>,
    pub lambda: Option<Vec<f64>>,
    pub directions: usize,
    pub open_directions: usize,
}

/// Deterministic direction samples: the normalized nonzero points of
/// `{0..=s}^n`, reflected into every n-ant.
pub fn orthant_directions(n: usize, s: u32) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let total = (s as usize + 1).pow(n as u32);
    for signs in 0..(1u32 << n) {
        for idx in 0..total {
            let mut rest = idx;
            let mut v = vec![0.0; n];
            for (axis, vi) in v.iter_mut().enumerate() {
                let k = (rest % (s as usize + 1)) as f64;
                rest /= s as usize + 1;
                *vi = if signs >> axis & 1 == 1 { -k } else { k };
            }
            let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if r > 0.0 {
                out.push(v.into_iter().map(|a| a / r).collect());
            }
        }
    }
    out
}

fn sign_vectors(n: usize) -> Vec<Vec<i8>> {
    (0..(1u32 << n)).map(|s| (0..n).map(|a| if s >> a & 1 == 1 { -1 } else { 1 }).collect()).collect()
}

fn in_closed_orthant(u: &[f64], m: &[i8]) -> bool {
    u.iter().zip(m).all(|(&x, &s)| x == 0.0 || (x > 0.0) == (s > 0))
}

fn in_open_orthant(u: &[f64], m: &[i8]) -> bool {
    u.iter().zip(m).all(|(&x, &s)| x != 0.0 && (x > 0.0) == (s > 0))
}

fn scaled_values(k: &KernelSpec, u: &[f64], t: f64) -> Vec<f64> {
    let x = vec![0.0; k.n];
    let y: Vec<f64> = u.iter().map(|a| t * a).collect();
    let scale = t.powf(k.n as f64 - k.alpha);
    (0..k.components()).map(|j| k.eval_unchecked(j, &x, &y) * scale).collect()
}

/// Plain and strong ellipticity margins per n-ant, with the coefficient
/// search over the grid `{−g..g}^J/g` (normalized) plus `λ = m`.
///
/// Scale invariance is checked at `t ∈ {1/4, 1, 4}` first.
pub fn ellipticity_margin(k: &KernelSpec, directions: &[Vec<f64>], g: u32) -> Result<Vec<EllipticityMargin>> {
    if directions.is_empty() {
        return invalid("empty direction set");
    }
    if directions.iter().any(|u| u.len() != k.n) {
        return invalid("direction dimension does not match the kernel");
    }
    let base: Vec<Vec<f64>> = directions.iter().map(|u| scaled_values(k, u, 1.0)).collect();
    let mut worst = 0.0f64;
    for t in [0.25, 4.0] {
        for (u, b) in directions.iter().zip(&base) {
            for (v, w) in scaled_values(k, u, t).iter().zip(b) {
                let d = (v - w).abs() / w.abs().max(f64::MIN_POSITIVE);
                if w.abs() > 0.0 || v.abs() > 0.0 {
                    worst = worst.max(d);
                }
            }
        }
    }
    if worst > 1e-8 {
        return Err(CzError::NotScaleInvariant(worst));
    }
    let comps = k.components();
    let mut lambdas: Vec<Vec<f64>> = Vec::new();
    let side = 2 * g as usize + 1;
    for idx in 0..side.pow(comps as u32) {
        let mut rest = idx;
        let l: Vec<f64> = (0..comps)
            .map(|_| {
                let v = (rest % side) as f64 - g as f64;
                rest /= side;
                v
            })
            .collect();
        let r = l.iter().map(|a| a * a).sum::<f64>().sqrt();
        if r > 0.0 {
            lambdas.push(l.into_iter().map(|a| a / r).collect());
        }
    }
    let mut out = Vec::new();
    for m in sign_vectors(k.n) {
        let members: Vec<&Vec<f64>> =
            directions.iter().zip(&base).filter(|(u, _)| in_closed_orthant(u, &m)).map(|(_, b)| b).collect();
        if members.is_empty() {
            continue;
        }
        let plain = members.iter().map(|b| b.iter().fold(0.0f64, |a, v| a.max(v.abs()))).fold(f64::INFINITY, f64::min);
        let open: Vec<&Vec<f64>> =
            directions.iter().zip(&base).filter(|(u, _)| in_open_orthant(u, &m)).map(|(_, b)| b).collect();
        let (strong, lambda) = if open.is_empty() {
            (None, None)
        } else {
            let mut cands = lambdas.clone();
            if comps == k.n {
                let r = (comps as f64).sqrt();
                cands.push(m.iter().map(|&s| s as f64 / r).collect());
            }
            let mut best = (f64::NEG_INFINITY, Vec::new());
            for l in cands {
                let v = open
                    .iter()
                    .map(|b| b.iter().zip(&l).map(|(a, c)| a * c).sum::<f64>().abs())
                    .fold(f64::INFINITY, f64::min);
                if v > best.0 {
                    best = (v, l);
                }
            }
            (Some(best.0), Some(best.1))
        };
        out.push(EllipticityMargin {
            orthant: m,
            plain,
            strong,
            lambda,
            directions: members.len(),
            open_directions: open.len(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelName;

    #[test]
    fn hilbert_margin_is_one() {
        let m = ellipticity_margin(&KernelSpec::hilbert(), &orthant_directions(1, 1), 2).unwrap();
        assert_eq!(m.len(), 2);
        for e in m {
            assert_eq!(e.plain, 1.0);
            assert_eq!(e.strong, Some(1.0));
        }
    }

    #[test]
    fn riesz_strongly_elliptic() {
        let k = KernelSpec::builtin(KernelName::Riesz, 2, 0.0).unwrap();
        let dirs = orthant_directions(2, 16);
        let m = ellipticity_margin(&k, &dirs, 3).unwrap();
        assert_eq!(m.len(), 4);
        for e in &m {
            assert!(e.strong.unwrap() > 0.7, "{e:?}");
            // |K_1| t² = 1 along the first axis
            assert!(e.plain >= 1.0 / 2f64.sqrt() - 1e-12);
        }
        let axis = ellipticity_margin(&k, &[vec![1.0, 0.0]], 1).unwrap();
        assert_eq!(axis[0].plain, 1.0);
        // an axis direction lies in no open quadrant
        assert!(axis.iter().all(|e| e.strong.is_none()));
    }

    #[test]
    fn fractional_integral_margin() {
        let k = KernelSpec::builtin(KernelName::FracInt, 1, 0.5).unwrap();
        let m = ellipticity_margin(&k, &orthant_directions(1, 1), 1).unwrap();
        assert!(m.iter().all(|e| (e.strong.unwrap() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rejects_inhomogeneous() {
        let k = KernelSpec::custom("bump", 1, 0.0, 1, 1.0, false, std::sync::Arc::new(|_, x: &[f64], y: &[f64]| (-(x[0] - y[0]).powi(2)).exp())).unwrap();
        assert!(matches!(ellipticity_margin(&k, &[vec![1.0]], 1), Err(CzError::NotScaleInvariant(_))));
        assert!(ellipticity_margin(&KernelSpec::hilbert(), &[], 1).is_err());
    }
}
