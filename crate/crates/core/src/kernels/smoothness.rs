use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{dist, KernelSpec};
use crate::error::{invalid, Result};

/// Points for the finite-difference checks: `x ≠ y`, and `x'` near `x` for
/// the Hölder quotient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub x_prime: Vec<f64>,
}

/// Random pairs with `|x − y|` log-uniform in `[10^-2, 1]` and
/// `|x − x'| ≤ |x − y|/2`.
pub fn sample_pairs(n: usize, count: usize, seed: u64) -> Vec<SamplePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if r > 1e-3 && r <= 1.0 {
                return v.into_iter().map(|a| a / r).collect();
            }
        }
    };
    (0..count)
        .map(|_| {
            let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let r = 10f64.powf(-2.0 * rng.random::<f64>());
            let u = unit(&mut rng);
            let x: Vec<f64> = y.iter().zip(&u).map(|(a, b)| a + r * b).collect();
            let s = 0.5 * r * rng.random::<f64>();
            let v = unit(&mut rng);
            let x_prime = x.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            SamplePair { x, y, x_prime }
        })
        .collect()
}

/// Measured size and smoothness constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    /// `sup |∇₁^j K_i(x,y)|·|x−y|^{n+j−α}` for `j = 0..=j_max`, max over
    /// components; `j = 1` is the Euclidean gradient norm, `j = 2` the
    /// Frobenius norm of the Hessian.
    pub orders: Vec<f64>,
    /// Largest relative change between the step-`h` and step-`h/2`
    /// difference quotients, per order.
    pub richardson_gap: Vec<f64>,
    /// `sup |∇^κ K(x,y) − ∇^κ K(x',y)|·|x−y|^{n+κ+δ−α}/|x−x'|^δ` with
    /// `κ = kappa1` (0 or 1) and `δ = delta_smooth`.
    pub holder: f64,
    pub samples: usize,
    pub skipped: usize,
}

const STEP: f64 = 1e-4;

fn shifted(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut z = x.to_vec();
    for &(i, d) in moves {
        z[i] += d;
    }
    z
}

fn gradient(k: &KernelSpec, j: usize, x: &[f64], y: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| (k.eval_unchecked(j, &shifted(x, &[(i, h)]), y) - k.eval_unchecked(j, &shifted(x, &[(i, -h)]), y)) / (2.0 * h))
        .collect()
}

fn hessian(k: &KernelSpec, j: usize, x: &[f64], y: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let f = |m: &[(usize, f64)]| k.eval_unchecked(j, &shifted(x, m), y);
    let mut out = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            out[a * n + b] = if a == b {
                (f(&[(a, h)]) - 2.0 * f(&[]) + f(&[(a, -h)])) / (h * h)
            } else {
                (f(&[(a, h), (b, h)]) - f(&[(a, h), (b, -h)]) - f(&[(a, -h), (b, h)]) + f(&[(a, -h), (b, -h)])) / (4.0 * h * h)
            };
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Derivative tensor of order `order` (flattened), Richardson-combined from
/// steps `h` and `h/2`, plus the relative gap between the two.
fn derivative(k: &KernelSpec, j: usize, x: &[f64], y: &[f64], order: usize, h: f64) -> (Vec<f64>, f64) {
    let eval = |h: f64| match order {
        0 => vec![k.eval_unchecked(j, x, y)],
        1 => gradient(k, j, x, y, h),
        _ => hessian(k, j, x, y, h),
    };
    if order == 0 {
        return (eval(h), 0.0);
    }
    let coarse = eval(h);
    let fine = eval(h / 2.0);
    let combined: Vec<f64> = coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect();
    let diff: Vec<f64> = coarse.iter().zip(&fine).map(|(c, f)| c - f).collect();
    let scale = norm(&fine);
    let gap = if scale > 0.0 { norm(&diff) / scale } else { 0.0 };
    (combined, gap)
}

/// Finite-difference size/smoothness constants under the scaling
/// `|∇₁^j K| ≤ C|x−y|^{α−j−n}`; compare `orders` with `c_cz`.
pub fn verify_smoothness(k: &KernelSpec, j_max: usize, samples: &[SamplePair]) -> Result<SmoothnessReport> {
    if j_max > 2 {
        return invalid("finite-difference smoothness is implemented up to order 2");
    }
    if k.kappa1 > 1 {
        return invalid("Hölder quotient is implemented for smoothness order 0 or 1");
    }
    let n = k.n as f64;
    let mut orders = vec![0.0f64; j_max + 1];
    let mut gaps = vec![0.0f64; j_max + 1];
    let mut holder = 0.0f64;
    let mut skipped = 0;
    let mut used = 0;
    for s in samples {
        if s.x.len() != k.n || s.y.len() != k.n || s.x_prime.len() != k.n {
            return invalid("sample dimension does not match the kernel");
        }
        let r = dist(&s.x, &s.y);
        if r == 0.0 {
            skipped += 1;
            continue;
        }
        used += 1;
        let h = r * STEP;
        for j in 0..k.components() {
            for (order, slot) in orders.iter_mut().enumerate() {
                let (d, gap) = derivative(k, j, &s.x, &s.y, order, h);
                *slot = slot.max(norm(&d) * r.powf(n + order as f64 - k.alpha));
                gaps[order] = gaps[order].max(gap);
            }
        }
        let rp = dist(&s.x, &s.x_prime);
        if rp == 0.0 || rp > 0.5 * r {
            skipped += 1;
            continue;
        }
        let kappa = k.kappa1 as usize;
        for j in 0..k.components() {
            let (a, _) = derivative(k, j, &s.x, &s.y, kappa, h);
            let (b, _) = derivative(k, j, &s.x_prime, &s.y, kappa, h);
            let diff: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
            let q = norm(&diff) * r.powf(n + kappa as f64 + k.delta_smooth - k.alpha) / rp.powf(k.delta_smooth);
            holder = holder.max(q);
        }
    }
    Ok(SmoothnessReport { orders, richardson_gap: gaps, holder, samples: used, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelName;

    #[test]
    fn fractional_size_constant_is_one() {
        let k = KernelSpec::builtin(KernelName::FracInt, 1, 0.5).unwrap();
        let rep = verify_smoothness(&k, 0, &sample_pairs(1, 200, 1)).unwrap();
        assert!((rep.orders[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hilbert_first_derivative() {
        let k = KernelSpec::hilbert();
        let rep = verify_smoothness(&k, 2, &sample_pairs(1, 200, 2)).unwrap();
        assert!((rep.orders[1] - 1.0).abs() < 1e-7, "{rep:?}");
        assert!((rep.orders[2] - 2.0).abs() < 1e-4, "{rep:?}");
        assert!(rep.richardson_gap[1] < 1e-6);
        // mean value theorem with |x'−y| ≥ |x−y|/2: |K'(x) − K'(x')| ≤ 16|x−x'|/|x−y|³
        assert!(rep.holder > 0.0 && rep.holder <= 16.0 + 1e-6);
        let mut k0 = KernelSpec::hilbert();
        k0.kappa1 = 0;
        let rep = verify_smoothness(&k0, 0, &sample_pairs(1, 200, 2)).unwrap();
        assert!(rep.holder > 0.0 && rep.holder <= 2.0 + 1e-9);
    }

    #[test]
    fn riesz_size_over_directions() {
        let k = KernelSpec::builtin(KernelName::Riesz, 2, 0.0).unwrap();
        let samples: Vec<SamplePair> = (0..360)
            .map(|d| {
                let t = (d as f64).to_radians();
                SamplePair { x: vec![t.cos(), t.sin()], y: vec![0.0, 0.0], x_prime: vec![t.cos(), t.sin()] }
            })
            .collect();
        let rep = verify_smoothness(&k, 0, &samples).unwrap();
        assert!((rep.orders[0] - 1.0).abs() < 1e-12);
        assert_eq!(rep.skipped, 360);
    }

    #[test]
    fn declared_constant_dominates() {
        for (name, n, alpha) in [(KernelName::Riesz, 2, 0.0), (KernelName::Riesz, 3, 0.5), (KernelName::FracInt, 2, 0.5)] {
            let k = KernelSpec::builtin(name, n, alpha).unwrap();
            let rep = verify_smoothness(&k, 1, &sample_pairs(n, 300, 3)).unwrap();
            assert!(rep.orders[0] <= k.c_cz * (1.0 + 1e-9));
            assert!(rep.orders[1] <= k.c_cz * (1.0 + 1e-6), "{name:?}: {rep:?}");
        }
    }
}
