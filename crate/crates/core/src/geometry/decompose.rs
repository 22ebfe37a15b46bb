use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::cube::{Corner, DyadicCube};
use crate::error::{invalid, Result};

/// `num / 2^log2_den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicRational {
    pub num: u64,
    pub log2_den: u32,
}

impl DyadicRational {
    pub fn to_f64(self) -> f64 {
        self.num as f64 * 2f64.powi(-(self.log2_den as i32))
    }
}

/// `[0,1)^{n−1} × [lo, hi)` with the slab direction along `axis`.
///
/// Endpoints are stored as `f64`; every finite double is a dyadic rational,
/// and the endpoints produced here are the exact input `t` or exact `b/2^m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabRectangle {
    pub n: usize,
    pub axis: usize,
    pub lo: f64,
    pub hi: f64,
}

impl SlabRectangle {
    pub fn is_empty(&self) -> bool {
        self.lo >= self.hi
    }
}

/// A rectangle `[0,1)^{n−1}×[0,t)` (or its reflection) split into a finite
/// union of disjoint dyadic cubes plus a thin leftover slab.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub n: usize,
    pub axis: usize,
    /// The input height `t` (or `r` for the complementary form).
    pub t: f64,
    pub m: u32,
    /// Dyadic height `b/2^m` reached by the binary expansion.
    pub t_star: DyadicRational,
    /// The region tiled exactly by `cubes`.
    pub cover: SlabRectangle,
    /// The leftover slab between the input height and `t_star`.
    pub slab: SlabRectangle,
    pub cubes: Vec<DyadicCube>,
    pub reflected: bool,
}

/// Smallest `m` with `2^-m < eps`.
pub fn refinement_depth(eps: f64) -> u32 {
    let mut m = 0;
    while 2f64.powi(-(m as i32)) >= eps {
        m += 1;
    }
    m
}

fn check_unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        invalid(format!("{name} must lie in (0,1), got {v}"))
    }
}

/// Binary-expansion decomposition of `[0,1)^{n−1} × [0,t)`.
///
/// `t_star = b/2^m` with `b = ⌊2^m t⌋` (so `t_star = t` when `2^m t` is an
/// integer); for each set bit `k` of `b` the layer of height `2^-k` is tiled by
/// `2^{(n−1)k}` cubes of side `2^-k`.
pub fn decompose_rectangle(n: usize, t: f64, eps: f64) -> Result<Decomposition> {
    if n == 0 {
        return invalid("dimension must be at least 1");
    }
    check_unit_open("t", t)?;
    check_unit_open("eps", eps)?;
    let m = refinement_depth(eps);
    if (n - 1) as u64 * m as u64 > 40 {
        return invalid(format!("decomposition with n={n}, m={m} is too large to enumerate"));
    }
    let scaled = t * 2f64.powi(m as i32);
    let b = scaled.floor() as u64;
    let axis = n - 1;
    let mut cubes = Vec::new();
    // running height in units of 2^-k
    let mut height: u64 = 0;
    for k in 1..=m {
        height <<= 1;
        if (b >> (m - k)) & 1 == 1 {
            let side = 1i64 << k;
            let ranges: SmallVec<[(i64, i64); 4]> = (0..n)
                .map(|i| if i == axis { (height as i64, height as i64 + 1) } else { (0, side) })
                .collect();
            super::cube::for_each_in_ranges(&ranges, |c| cubes.push(DyadicCube::new(k, c.iter().copied())));
            height += 1;
        }
    }
    cubes.sort();
    let t_star = DyadicRational { num: b, log2_den: m };
    let ts = t_star.to_f64();
    Ok(Decomposition {
        n,
        axis,
        t,
        m,
        t_star,
        cover: SlabRectangle { n, axis, lo: 0.0, hi: ts },
        slab: SlabRectangle { n, axis, lo: ts, hi: t },
        cubes,
        reflected: false,
    })
}

/// Decomposition of `[0,1)^{n−1} × [r,1)`: the `t = 1 − r` decomposition
/// reflected along the last axis.
pub fn complementary_decomposition(n: usize, r: f64, eps: f64) -> Result<Decomposition> {
    check_unit_open("r", r)?;
    Ok(decompose_rectangle(n, 1.0 - r, eps)?.reflect(r))
}

impl Decomposition {
    pub fn count(&self) -> usize {
        self.cubes.len()
    }

    /// The bound `2·2^{(n−1)m}` for an `m`-bit expansion.
    pub fn count_bound(&self) -> u128 {
        2u128 << ((self.n as u32 - 1) * self.m)
    }

    /// The bound `2^{nm−n−m+2}` belonging to an `(m−1)`-bit expansion.
    pub fn short_expansion_bound(&self) -> u128 {
        let (n, m) = (self.n as i64, self.m as i64);
        let e = n * m - n - m + 2;
        if e < 0 {
            0
        } else {
            1u128 << e
        }
    }

    /// Largest possible count for this `(n, m)`: `Σ_{k=1}^m 2^{(n−1)k}`.
    pub fn count_ceiling(&self) -> u128 {
        (1..=self.m).map(|k| 1u128 << ((self.n as u32 - 1) * k)).sum()
    }

    /// Reflects about the mid-plane `y_axis = 1/2`; `r` is recorded as the new
    /// input height.
    pub fn reflect(&self, r: f64) -> Decomposition {
        let flip = |s: &SlabRectangle| SlabRectangle { lo: 1.0 - s.hi, hi: 1.0 - s.lo, ..s.clone() };
        let mut cubes: Vec<DyadicCube> = self.cubes.iter().map(|c| c.reflect(self.axis)).collect();
        cubes.sort();
        let mut slab = flip(&self.slab);
        slab.lo = r;
        Decomposition {
            t: r,
            cover: flip(&self.cover),
            slab,
            cubes,
            reflected: !self.reflected,
            ..self.clone()
        }
    }

    /// Checks disjointness and exact coverage of `cover` in integer
    /// arithmetic, in time linear in the number of cubes.
    pub fn verify(&self) -> Result<()> {
        let m = self.m;
        let b = self.t_star.num as u128;
        // cover along the axis in units of 2^-m
        let (lo, hi) = if self.reflected { ((1u128 << m) - b, 1u128 << m) } else { (0, b) };
        let mut seen: HashSet<(u32, Corner)> = HashSet::with_capacity(self.cubes.len());
        let mut volume: u128 = 0;
        let mut layers: Vec<(u128, u128)> = Vec::new();
        for c in &self.cubes {
            if c.dim() != self.n || c.level > m || c.level == 0 || !c.is_inside_root() {
                return invalid(format!("cube {c:?} is not a valid piece"));
            }
            let f = 1u128 << (m - c.level);
            let a_lo = c.corner[self.axis] as u128 * f;
            let a_hi = a_lo + f;
            if a_lo < lo || a_hi > hi {
                return invalid(format!("cube {c:?} leaves the covered region"));
            }
            if !seen.insert((c.level, c.corner.clone())) {
                return invalid(format!("cube {c:?} repeated"));
            }
            layers.push((a_lo, a_hi));
            volume += f.pow(self.n as u32);
        }
        // Cubes with equal axis interval have equal side, so distinct corners
        // are disjoint; different intervals must not overlap at all.
        layers.sort_unstable();
        layers.dedup();
        if layers.windows(2).any(|w| w[1].0 < w[0].1) {
            return invalid("cube layers overlap along the slab axis");
        }
        let expected = (hi - lo) << ((self.n as u32 - 1) * m);
        if volume != expected {
            return invalid(format!("cube volumes sum to {volume}, expected {expected} (units 2^-nm)"));
        }
        Ok(())
    }
}
