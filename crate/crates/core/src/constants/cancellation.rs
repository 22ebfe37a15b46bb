use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::report::{BallSample, ConstantReport, FamilyDescriptor};
use crate::error::{invalid, CzError, Result};
use crate::kernels::{dist, KernelSpec};
use crate::measures::DiscreteMeasure;

/// `|B(x₀,N)|_μ` in counts, with atoms on cell centers (`|y−x₀| < N`).
pub fn ball_count(mu: &DiscreteMeasure, center: &[f64], radius: f64) -> u64 {
    mu.support().into_iter().filter(|&c| dist(&mu.cell_center(c), center) < radius).map(|c| mu.count(c)).sum()
}

/// `∫_{ε<|x−y|<N} K(x,y) dσ(y)` per kernel component.
pub fn inner_integral(k: &KernelSpec, sigma: &DiscreteMeasure, x: &[f64], eps: f64, big_n: f64) -> Vec<f64> {
    let mut out = vec![0.0; k.components()];
    for cell in sigma.support() {
        let y = sigma.cell_center(cell);
        let d = dist(x, &y);
        if d > eps && d < big_n {
            for (c, o) in out.iter_mut().enumerate() {
                *o += k.eval_unchecked(c, x, &y) * sigma.mass(cell);
            }
        }
    }
    out
}

/// `∫_{B(x₀,N)} |∫_{ε<|x−y|<N} K dσ|² dω / |B(x₀,N)|_σ`; `None` when the
/// ball carries no σ-mass.
pub fn cancellation_on_ball(
    k: &KernelSpec,
    sigma: &DiscreteMeasure,
    omega: &DiscreteMeasure,
    ball: &BallSample,
) -> Result<Option<f64>> {
    if !(ball.eps > 0.0 && ball.eps < ball.radius) {
        return invalid(format!("need 0 < eps < N, got eps={} N={}", ball.eps, ball.radius));
    }
    if ball.center.len() != sigma.dim() {
        return Err(CzError::DimensionMismatch { expected: sigma.dim(), got: ball.center.len() });
    }
    let count = ball_count(sigma, &ball.center, ball.radius);
    if count == 0 {
        return Ok(None);
    }
    let mut num = 0.0;
    for cell in omega.support() {
        let x = omega.cell_center(cell);
        if dist(&x, &ball.center) < ball.radius {
            let v = inner_integral(k, sigma, &x, ball.eps, ball.radius);
            num += v.iter().map(|a| a * a).sum::<f64>() * omega.mass(cell);
        }
    }
    Ok(Some(num / (count as f64 / crate::measures::UNIT as f64)))
}

/// Stein-type cancellation constant `𝔄_K(σ,ω)` over sampled balls. The
/// starred constant `𝔄_{K*}(ω,σ)` is
/// `cancellation_constant(&k.adjoint(), omega, sigma, ..)`.
pub fn cancellation_constant(
    k: &KernelSpec,
    sigma: &DiscreteMeasure,
    omega: &DiscreteMeasure,
    samples: &[BallSample],
) -> Result<ConstantReport> {
    if sigma.dim() != omega.dim() || sigma.dim() != k.n {
        return Err(CzError::DimensionMismatch { expected: k.n, got: sigma.dim().max(omega.dim()) });
    }
    let vals: Vec<Option<f64>> =
        samples.par_iter().map(|b| cancellation_on_ball(k, sigma, omega, b)).collect::<Result<_>>()?;
    let mut r = ConstantReport::new(format!("cancellation({})", k.name()), FamilyDescriptor::default());
    r.family.cubes = samples.len();
    let mut best: Option<(f64, usize)> = None;
    for (i, v) in vals.iter().enumerate() {
        match v {
            Some(v) if !v.is_finite() => return Err(CzError::NonFinite(format!("cancellation sample {i}"))),
            Some(v) => {
                if best.is_none_or(|(b, _)| *v > b) {
                    best = Some((*v, i));
                }
            }
            None => r.skipped += 1,
        }
    }
    if let Some((v, i)) = best {
        r.value = v;
        r.argmax.ball = Some(samples[i].clone());
    }
    Ok(r)
}

/// Deterministic ball samples: `centers` points drawn on the half-cell grid
/// of the root, each combined with every `(N, ε)` pair with `ε < N`.
pub fn ball_samples(n: usize, depth: u32, centers: usize, radii: &[f64], eps: &[f64], seed: u64) -> Vec<BallSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = 1u64 << (depth + 1);
    let mut out = Vec::new();
    for _ in 0..centers {
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(0..=grid) as f64 / grid as f64).collect();
        for &r in radii {
            for &e in eps.iter().filter(|&&e| e > 0.0 && e < r) {
                out.push(BallSample { center: c.clone(), radius: r, eps: e });
            }
        }
    }
    out
}
