use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{ConstantReport, CubeFamily, SupTracker};
use crate::error::{invalid, CzError, Result};
use crate::geometry::LatticeCube;
use crate::measures::{DiscreteMeasure, MASS_PER_COUNT};
use crate::operators::OperatorMatrix;

/// Largest number of σ-cells the exhaustive search accepts.
pub const EXHAUSTIVE_CELLS: usize = 12;

/// Best bilinear indicator pair found on one cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BictOutcome {
    /// `|∫_F T_σ 1_E ω| / √(|Q|_σ |Q|_ω)`.
    pub value: f64,
    pub component: usize,
    /// σ-cells of `E` and ω-cells of `F`.
    pub e: Vec<usize>,
    pub f: Vec<usize>,
    /// Normalized `|B(E,F)|` after every half-step of the winning start.
    pub history: Vec<f64>,
}

/// The block `G_ij = w_i K(x_i,y_j) s_j` of one component restricted to a cube.
struct Block {
    rows: Vec<usize>,
    cols: Vec<usize>,
    g: Vec<Vec<f64>>,
    norm: f64,
}

fn blocks(t: &OperatorMatrix, sigma: &DiscreteMeasure, omega: &DiscreteMeasure, q: &LatticeCube) -> Result<Option<Vec<Block>>> {
    let sc = sigma.lattice_count(q)?;
    let wc = omega.lattice_count(q)?;
    if sc == 0 || wc == 0 {
        return Ok(None);
    }
    let norm = (sc as f64 * MASS_PER_COUNT * (wc as f64 * MASS_PER_COUNT)).sqrt();
    let lookup = |cells: Vec<usize>, mu: &DiscreteMeasure, f: &dyn Fn(usize) -> Option<usize>| -> Result<Vec<usize>> {
        cells
            .into_iter()
            .filter(|&c| mu.count(c) > 0)
            .map(|c| f(c).ok_or_else(|| CzError::InvalidArgument(format!("cell {c} missing from the operator"))))
            .collect()
    };
    let cols = lookup(sigma.cells_in(q)?, sigma, &|c| t.col_of_cell(c))?;
    let rows = lookup(omega.cells_in(q)?, omega, &|c| t.row_of_cell(c))?;
    let out = (0..t.components())
        .map(|c| {
            let g = rows
                .iter()
                .map(|&i| {
                    let sw = t.row_mass()[i].sqrt();
                    cols.iter().map(|&j| t.entry(c, i, j) * sw * t.col_mass()[j].sqrt()).collect()
                })
                .collect();
            Block { rows: rows.clone(), cols: cols.clone(), g, norm }
        })
        .collect();
    Ok(Some(out))
}

/// Best subset for fixed partner sums: the positive or the negative part,
/// whichever has the larger absolute total. Returns (mask, |total|).
fn best_subset(sums: &[f64]) -> (Vec<bool>, f64) {
    let pos: f64 = sums.iter().filter(|&&v| v > 0.0).sum();
    let neg: f64 = sums.iter().filter(|&&v| v < 0.0).sum();
    if pos >= -neg {
        (sums.iter().map(|&v| v > 0.0).collect(), pos)
    } else {
        (sums.iter().map(|&v| v < 0.0).collect(), -neg)
    }
}

impl Block {
    fn col_sums(&self, f: &[bool]) -> Vec<f64> {
        let mut s = vec![0.0; self.cols.len()];
        for (row, _) in self.g.iter().zip(f).filter(|(_, &on)| on) {
            for (a, v) in s.iter_mut().zip(row) {
                *a += v;
            }
        }
        s
    }

    fn row_sums(&self, e: &[bool]) -> Vec<f64> {
        self.g.iter().map(|row| row.iter().zip(e).filter(|(_, &on)| on).map(|(v, _)| v).sum()).collect()
    }

    fn alternate(&self, mut f: Vec<bool>, rounds: usize) -> (f64, Vec<bool>, Vec<bool>, Vec<f64>) {
        let mut history = Vec::new();
        let mut e = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for _ in 0..rounds {
            let (ne, ve) = best_subset(&self.col_sums(&f));
            history.push(ve / self.norm);
            let (nf, vf) = best_subset(&self.row_sums(&ne));
            history.push(vf / self.norm);
            let stable = ne == e && nf == f;
            e = ne;
            f = nf;
            if stable || vf <= last {
                break;
            }
            last = vf;
        }
        let value = *history.last().unwrap_or(&0.0);
        (value, e, f, history)
    }

    fn starts(&self) -> Vec<Vec<bool>> {
        let m = self.rows.len();
        let mut out = vec![vec![true; m]];
        let step = m.div_ceil(16).max(1);
        for i in (0..m).step_by(step) {
            let mut f = vec![false; m];
            f[i] = true;
            out.push(f);
        }
        out
    }

    fn outcome(&self, comp: usize, value: f64, e: &[bool], f: &[bool], history: Vec<f64>, t: &OperatorMatrix) -> BictOutcome {
        BictOutcome {
            value,
            component: comp,
            e: self.cols.iter().zip(e).filter(|(_, &on)| on).map(|(&j, _)| t.col_cells()[j]).collect(),
            f: self.rows.iter().zip(f).filter(|(_, &on)| on).map(|(&i, _)| t.row_cells()[i]).collect(),
            history,
        }
    }
}

fn keep(best: &Option<BictOutcome>, value: f64) -> bool {
    best.as_ref().is_none_or(|b| value > b.value)
}

/// Alternating maximization on one cube; `None` when `|Q|_σ|Q|_ω = 0`.
pub fn bict_on_cube(
    t: &OperatorMatrix,
    sigma: &DiscreteMeasure,
    omega: &DiscreteMeasure,
    q: &LatticeCube,
    rounds: usize,
) -> Result<Option<BictOutcome>> {
    if rounds == 0 {
        return invalid("bict needs at least one round");
    }
    let Some(bs) = blocks(t, sigma, omega, q)? else {
        return Ok(None);
    };
    let mut best: Option<BictOutcome> = None;
    for (c, b) in bs.iter().enumerate() {
        for start in b.starts() {
            let (v, e, f, h) = b.alternate(start, rounds);
            if keep(&best, v) {
                best = Some(b.outcome(c, v, &e, &f, h, t));
            }
        }
    }
    Ok(best)
}

/// Exact subset supremum on one cube by enumerating every `E` (the optimal
/// `F` for a fixed `E` is explicit). At most [`EXHAUSTIVE_CELLS`] σ-cells.
pub fn bict_exhaustive_on_cube(
    t: &OperatorMatrix,
    sigma: &DiscreteMeasure,
    omega: &DiscreteMeasure,
    q: &LatticeCube,
) -> Result<Option<BictOutcome>> {
    let Some(bs) = blocks(t, sigma, omega, q)? else {
        return Ok(None);
    };
    let k = bs[0].cols.len();
    if k > EXHAUSTIVE_CELLS {
        return invalid(format!("{k} sigma cells exceed the exhaustive cap {EXHAUSTIVE_CELLS}"));
    }
    let mut best: Option<BictOutcome> = None;
    for (c, b) in bs.iter().enumerate() {
        for mask in 1u32..(1 << k) {
            let e: Vec<bool> = (0..k).map(|j| mask >> j & 1 == 1).collect();
            let (f, v) = best_subset(&b.row_sums(&e));
            let v = v / b.norm;
            if keep(&best, v) {
                best = Some(b.outcome(c, v, &e, &f, vec![v], t));
            }
        }
    }
    Ok(best)
}

/// Certified lower bound for the bilinear indicator cube testing constant.
pub fn bict(
    t: &OperatorMatrix,
    sigma: &DiscreteMeasure,
    omega: &DiscreteMeasure,
    family: &CubeFamily,
    rounds: usize,
) -> Result<ConstantReport> {
    let rows: Vec<Option<BictOutcome>> =
        family.cubes.par_iter().map(|q| bict_on_cube(t, sigma, omega, q, rounds)).collect::<Result<_>>()?;
    let mut best = SupTracker::new();
    let mut skipped = 0;
    for (q, r) in family.cubes.iter().zip(&rows) {
        match r {
            Some(o) => best.offer(o.value, q, 0),
            None => skipped += 1,
        }
    }
    let mut r = ConstantReport::new("BICT", family.descriptor.clone());
    r.value = best.value_or_zero();
    r.argmax.cube = best.cube;
    r.skipped = skipped;
    Ok(r)
}
