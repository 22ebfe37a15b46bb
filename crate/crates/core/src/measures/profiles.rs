use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::measure::DiscreteMeasure;
use crate::error::{invalid, CzError, Result};
use crate::geometry::{for_each_in_ranges, DyadicCube, LatticeCube};

/// A nonnegative ratio of integer masses compared exactly; `den = 0` with
/// `num > 0` is `+∞`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactRatio {
    pub num: u64,
    pub den: u64,
}

impl ExactRatio {
    pub fn value(self) -> f64 {
        if self.den == 0 {
            if self.num == 0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.num as f64 / self.den as f64
        }
    }

    pub fn exact_cmp(self, other: ExactRatio) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

/// Keeps the larger key; on ties the lexicographically smaller cube.
pub(crate) fn better<K>(a: &(K, LatticeCube), b: &(K, LatticeCube), cmp: impl Fn(&K, &K) -> Ordering) -> bool {
    match cmp(&a.0, &b.0) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.1 < b.1,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingProfile {
    /// `sup |2Q ∩ root|_μ / |Q|_μ`.
    pub c_doub: f64,
    /// `sup |3Q ∩ root|_μ / |Q|_μ`.
    pub c_triple: f64,
    /// `log2 c_doub`.
    pub theta: f64,
    pub doub_ratio: ExactRatio,
    pub triple_ratio: ExactRatio,
    pub doub_argmax: Option<LatticeCube>,
    pub triple_argmax: Option<LatticeCube>,
    /// Lexicographically first cube of zero mass, if any (then both
    /// constants are infinite).
    pub zero_mass: Option<LatticeCube>,
}

/// Exact doubling and tripling constants over a family.
pub fn doubling_profile(mu: &DiscreteMeasure, family: &[LatticeCube]) -> Result<DoublingProfile> {
    if family.is_empty() {
        return invalid("empty cube family");
    }
    let rows: Vec<(ExactRatio, ExactRatio)> = family
        .par_iter()
        .map(|q| {
            let own = mu.lattice_count(q)?;
            let two = mu.lattice_count(&q.doubled())?;
            let three = mu.lattice_count(&q.tripled())?;
            Ok((ExactRatio { num: two, den: own }, ExactRatio { num: three, den: own }))
        })
        .collect::<Result<_>>()?;
    let mut doub: Option<(ExactRatio, LatticeCube)> = None;
    let mut triple: Option<(ExactRatio, LatticeCube)> = None;
    let mut zero: Option<LatticeCube> = None;
    for (q, &(d, t)) in family.iter().zip(&rows) {
        if d.den == 0 {
            if zero.as_ref().is_none_or(|z| q < z) {
                zero = Some(q.clone());
            }
            continue;
        }
        let cd = (d, q.clone());
        if doub.as_ref().is_none_or(|b| better(&cd, b, |x, y| x.exact_cmp(*y))) {
            doub = Some(cd);
        }
        let ct = (t, q.clone());
        if triple.as_ref().is_none_or(|b| better(&ct, b, |x, y| x.exact_cmp(*y))) {
            triple = Some(ct);
        }
    }
    let inf = ExactRatio { num: 1, den: 0 };
    let (doub_ratio, doub_argmax) = match (&zero, doub) {
        (Some(z), _) => (inf, Some(z.clone())),
        (None, Some((r, q))) => (r, Some(q)),
        (None, None) => unreachable!("nonempty family"),
    };
    let (triple_ratio, triple_argmax) = match (&zero, triple) {
        (Some(z), _) => (inf, Some(z.clone())),
        (None, Some((r, q))) => (r, Some(q)),
        (None, None) => unreachable!("nonempty family"),
    };
    Ok(DoublingProfile {
        c_doub: doub_ratio.value(),
        c_triple: triple_ratio.value(),
        theta: doub_ratio.value().log2(),
        doub_ratio,
        triple_ratio,
        doub_argmax,
        triple_argmax,
        zero_mass: zero,
    })
}

/// Sampled A∞ behaviour of `ω` over a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AInfinityProfile {
    pub eps: Vec<f64>,
    /// Worst case over the family of the largest `ω`-fraction of a cell
    /// union `E ⊂ Q` with `|E| < ε|Q|` (heaviest cells first).
    pub eta: Vec<f64>,
    pub eta_argmax: Vec<Option<LatticeCube>>,
    /// Sup over the family of the smallest such fraction (lightest cells).
    pub floor: Vec<f64>,
    /// Cubes skipped because `|Q|_ω = 0`.
    pub excluded: usize,
}

impl AInfinityProfile {
    /// Whether `|E| < ε|Q| ⇒ |E|_ω < η|Q|_ω` holds on the family, using the
    /// first grid value at or above `eps`.
    pub fn satisfies(&self, eps: f64, eta: f64) -> Option<bool> {
        let i = self.eps.iter().position(|&e| e >= eps)?;
        Some(self.eta[i] < eta)
    }
}

pub fn a_infinity_profile(omega: &DiscreteMeasure, family: &[LatticeCube], eps_grid: &[f64]) -> Result<AInfinityProfile> {
    if eps_grid.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return invalid("A-infinity eps grid values must lie in (0,1]");
    }
    let mut grid = eps_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    // per cube: Some((heavy fractions, light fractions)) or None if massless
    type Row = Option<(Vec<f64>, Vec<f64>)>;
    let rows: Vec<Row> = family
        .par_iter()
        .map(|q| {
            let cells = omega.cells_in(q)?;
            let mut c: Vec<u64> = cells.iter().map(|&i| omega.count(i)).collect();
            let total: u128 = c.iter().map(|&x| x as u128).sum();
            if total == 0 {
                return Ok(None);
            }
            c.sort_unstable();
            let n = c.len();
            let mut heavy = Vec::with_capacity(grid.len());
            let mut light = Vec::with_capacity(grid.len());
            for &e in &grid {
                // largest k with k/n < e
                let k = ((e * n as f64).ceil() as usize).saturating_sub(1).min(n);
                let lo: u128 = c[..k].iter().map(|&x| x as u128).sum();
                let hi: u128 = c[n - k..].iter().map(|&x| x as u128).sum();
                heavy.push(hi as f64 / total as f64);
                light.push(lo as f64 / total as f64);
            }
            Ok(Some((heavy, light)))
        })
        .collect::<Result<_>>()?;
    let mut eta = vec![0.0; grid.len()];
    let mut floor = vec![0.0; grid.len()];
    let mut arg: Vec<Option<LatticeCube>> = vec![None; grid.len()];
    let mut excluded = 0;
    for (q, row) in family.iter().zip(rows) {
        let Some((heavy, light)) = row else {
            excluded += 1;
            continue;
        };
        for i in 0..grid.len() {
            let take = match &arg[i] {
                None => true,
                Some(b) => heavy[i] > eta[i] || (heavy[i] == eta[i] && q < b),
            };
            if take {
                eta[i] = heavy[i];
                arg[i] = Some(q.clone());
            }
            floor[i] = f64::max(floor[i], light[i]);
        }
    }
    Ok(AInfinityProfile { eps: grid, eta, eta_argmax: arg, floor, excluded })
}

/// Outcome of the boundary-mass estimate on one cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMass {
    pub m: u32,
    /// `|Q ∖ (1 − 2·2^-m)Q|_μ` in count units.
    pub shell: u64,
    pub cube: u64,
    /// `shell / cube`.
    pub ratio: f64,
    /// Tripling constant `max |3I|_μ/|I|_μ` over the rings `I ∈ H^(k)`,
    /// `2 ≤ k ≤ m`.
    pub triple: ExactRatio,
    pub triple_witness: Option<DyadicCube>,
    /// `triple / (m − 1)`.
    pub bound: f64,
    /// `ratio·(m−1) ≤ triple`, decided in integer arithmetic.
    pub holds: bool,
}

/// The quantitative boundary estimate `(m−1)·|Q∖(1−2·2^-m)Q|_μ ≤ D·|Q|_μ`,
/// with `D` the tripling constant of the ring cubes used in its proof.
pub fn boundary_mass_check(mu: &DiscreteMeasure, q: &DyadicCube, m: u32) -> Result<BoundaryMass> {
    if m < 2 {
        return invalid("boundary estimate needs m >= 2");
    }
    mu.check_dim(q.dim())?;
    if q.level + m > mu.depth() {
        return Err(CzError::NotAligned { level: q.level + m, depth: mu.depth() });
    }
    let cube = mu.cube_count(q)?;
    if cube == 0 {
        return Err(CzError::ZeroMass(format!("cube {q:?}")));
    }
    let inner = q.to_lattice().shrunk(m).expect("m >= 2 leaves an inner cube");
    let shell = cube - mu.lattice_count(&inner)?;
    let n = q.dim();
    let mut best: Option<(ExactRatio, DyadicCube)> = None;
    for k in 2..=m {
        let scale = 1i64 << k;
        let ranges: SmallVec<[(i64, i64); 4]> = SmallVec::from_elem((1, scale - 1), n);
        let mut ring = Vec::new();
        for_each_in_ranges(&ranges, |r| {
            if r.iter().any(|&x| x == 1 || x == scale - 2) {
                ring.push(DyadicCube::new(q.level + k, r.iter().zip(&q.corner).map(|(&x, &c)| c * scale + x)));
            }
        });
        for i in ring {
            let own = mu.cube_count(&i)?;
            let three = mu.lattice_count(&i.to_lattice().tripled())?;
            if own == 0 && three == 0 {
                continue;
            }
            let r = ExactRatio { num: three, den: own };
            let replace = match &best {
                None => true,
                Some((b, bq)) => match r.exact_cmp(*b) {
                    Ordering::Greater => true,
                    Ordering::Equal => i < *bq,
                    Ordering::Less => false,
                },
            };
            if replace {
                best = Some((r, i));
            }
        }
    }
    let (triple, witness) = match best {
        Some((r, i)) => (r, Some(i)),
        None => (ExactRatio { num: 0, den: 1 }, None),
    };
    let holds = if triple.den == 0 {
        true
    } else {
        shell as u128 * (m as u128 - 1) * triple.den as u128 <= triple.num as u128 * cube as u128
    };
    Ok(BoundaryMass {
        m,
        shell,
        cube,
        ratio: shell as f64 / cube as f64,
        triple,
        triple_witness: witness,
        bound: triple.value() / (m - 1) as f64,
        holds,
    })
}
