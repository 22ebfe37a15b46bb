use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{ConstantReport, CubeFamily, FamilyDescriptor, SupTracker};
use crate::error::{invalid, CzError, Result};
use crate::geometry::{eval_normalized, multiindices_below, Anchor, LatticeCube, MultiIndex};
use crate::measures::{DiscreteMeasure, MASS_PER_COUNT};
use crate::operators::OperatorMatrix;

/// Which testing constant to report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestingOptions {
    pub kappa: u32,
    /// Integrate over the whole space instead of over `Q`.
    pub full: bool,
    /// Only the top degree `|β| = κ − 1` instead of all `|β| < κ`.
    pub exact_degree: bool,
    pub anchor: Anchor,
}

impl TestingOptions {
    pub fn new(kappa: u32, full: bool) -> Self {
        TestingOptions { kappa, full, exact_degree: false, anchor: Anchor::Center }
    }
}

/// Squared, normalized testing values of one cube, one entry per multiindex:
/// `‖T_σ(1_Q m_Q^β)‖² / |Q|_σ` over `Q` (`local`) and over the root (`full`).
#[derive(Clone, Debug, PartialEq)]
pub struct CubeTesting {
    pub cube: LatticeCube,
    pub local: Vec<f64>,
    pub full: Vec<f64>,
}

/// Testing values of every cube in a family for every `|β| < κ`, from which
/// local, full and per-degree constants are read off.
#[derive(Clone, Debug)]
pub struct TestingSweep {
    pub betas: Vec<MultiIndex>,
    pub anchor: Anchor,
    pub cubes: Vec<CubeTesting>,
    pub skipped: usize,
    pub family: FamilyDescriptor,
}

fn check_operator(t: &OperatorMatrix, sigma: &DiscreteMeasure) -> Result<()> {
    if t.dim() != sigma.dim() {
        return Err(CzError::DimensionMismatch { expected: t.dim(), got: sigma.dim() });
    }
    if t.depth() != sigma.depth() || t.col_cells() != sigma.support().as_slice() {
        return invalid("operator columns do not match the support of sigma");
    }
    Ok(())
}

/// Testing values of a single cube; `None` when `|Q|_σ = 0`.
pub fn testing_on_cube(
    t: &OperatorMatrix,
    sigma: &DiscreteMeasure,
    q: &LatticeCube,
    betas: &[MultiIndex],
    anchor: Anchor,
) -> Result<Option<CubeTesting>> {
    let count = sigma.lattice_count(q)?;
    if count == 0 {
        return Ok(None);
    }
    let mass = count as f64 * MASS_PER_COUNT;
    let cols: Vec<usize> = sigma
        .cells_in(q)?
        .into_iter()
        .filter(|&c| sigma.count(c) > 0)
        .map(|c| t.col_of_cell(c).ok_or_else(|| CzError::InvalidArgument(format!("sigma cell {c} has no column"))))
        .collect::<Result<_>>()?;
    let nb = betas.len();
    let origin = match anchor {
        Anchor::Center => q.center(),
        Anchor::LowerCorner => q.lower(),
    };
    let side = q.side();
    let mut v = Vec::with_capacity(cols.len() * nb);
    for &j in &cols {
        let y = t.col_point(j);
        let s = t.col_mass()[j].sqrt();
        v.extend(betas.iter().map(|b| eval_normalized(b, &origin, side, y) * s));
    }
    let inside: Vec<bool> = (0..t.nrows()).map(|i| q.contains_point(t.row_point(i))).collect();
    let mut local = vec![0.0; nb];
    let mut full = vec![0.0; nb];
    let mut u = vec![0.0; nb];
    let nc = t.ncols();
    for c in 0..t.components() {
        let a = t.component(c);
        for (i, &ins) in inside.iter().enumerate() {
            let row = &a[i * nc..(i + 1) * nc];
            u.fill(0.0);
            for (k, &j) in cols.iter().enumerate() {
                let aij = row[j];
                if aij != 0.0 {
                    for (ub, vb) in u.iter_mut().zip(&v[k * nb..(k + 1) * nb]) {
                        *ub += aij * vb;
                    }
                }
            }
            for b in 0..nb {
                let s = u[b] * u[b];
                full[b] += s;
                if ins {
                    local[b] += s;
                }
            }
        }
    }
    local.iter_mut().chain(full.iter_mut()).for_each(|x| *x /= mass);
    Ok(Some(CubeTesting { cube: q.clone(), local, full }))
}

/// Splits the family into groups of cubes with pairwise disjoint cells,
/// first fit in family order.
fn disjoint_groups(sigma: &DiscreteMeasure, cubes: &[LatticeCube]) -> Result<Vec<(Vec<usize>, Vec<u32>)>> {
    let mut groups: Vec<(Vec<usize>, Vec<u32>)> = Vec::new();
    for (k, q) in cubes.iter().enumerate() {
        let cells = sigma.cells_in(q)?;
        let slot = groups.iter().position(|(_, owner)| cells.iter().all(|&c| owner[c] == u32::MAX));
        let g = match slot {
            Some(g) => g,
            None => {
                groups.push((Vec::new(), vec![u32::MAX; sigma.num_cells()]));
                groups.len() - 1
            }
        };
        let (members, owner) = &mut groups[g];
        for c in cells {
            owner[c] = members.len() as u32;
        }
        members.push(k);
    }
    Ok(groups)
}

/// [`testing_on_cube`] for a group of disjoint cubes, reading every operator
/// row once. Sums run in the same order as the single-cube version, so the
/// results agree bit for bit.
fn testing_on_group(
    t: &OperatorMatrix,
    sigma: &DiscreteMeasure,
    cubes: &[&LatticeCube],
    owner: &[u32],
    betas: &[MultiIndex],
    anchor: Anchor,
) -> Result<Vec<Option<CubeTesting>>> {
    let nb = betas.len();
    let counts: Vec<u64> = cubes.iter().map(|q| sigma.lattice_count(q)).collect::<Result<_>>()?;
    let geom: Vec<(Vec<f64>, f64)> = cubes
        .iter()
        .map(|q| {
            let origin = match anchor {
                Anchor::Center => q.center(),
                Anchor::LowerCorner => q.lower(),
            };
            (origin, q.side())
        })
        .collect();
    let nc = t.ncols();
    let col_owner: Vec<u32> = t.col_cells().iter().map(|&c| owner[c]).collect();
    let row_owner: Vec<u32> = t.row_cells().iter().map(|&c| owner[c]).collect();
    let mut v = vec![0.0; nc * nb];
    for (j, &g) in col_owner.iter().enumerate() {
        if g != u32::MAX {
            let (origin, side) = &geom[g as usize];
            let y = t.col_point(j);
            let s = t.col_mass()[j].sqrt();
            for (b, beta) in betas.iter().enumerate() {
                v[j * nb + b] = eval_normalized(beta, origin, *side, y) * s;
            }
        }
    }
    let k = cubes.len();
    let mut u = vec![0.0; k * nb];
    let mut local = vec![0.0; k * nb];
    let mut full = vec![0.0; k * nb];
    for c in 0..t.components() {
        let a = t.component(c);
        for (i, &ri) in row_owner.iter().enumerate() {
            let row = &a[i * nc..(i + 1) * nc];
            u.fill(0.0);
            for (j, &g) in col_owner.iter().enumerate() {
                let aij = row[j];
                if g != u32::MAX && aij != 0.0 {
                    let g = g as usize;
                    for (ub, vb) in u[g * nb..(g + 1) * nb].iter_mut().zip(&v[j * nb..(j + 1) * nb]) {
                        *ub += aij * vb;
                    }
                }
            }
            for g in 0..k {
                for b in 0..nb {
                    let s = u[g * nb + b] * u[g * nb + b];
                    full[g * nb + b] += s;
                    if ri == g as u32 {
                        local[g * nb + b] += s;
                    }
                }
            }
        }
    }
    Ok((0..k)
        .map(|g| {
            (counts[g] > 0).then(|| {
                let mass = counts[g] as f64 * MASS_PER_COUNT;
                CubeTesting {
                    cube: cubes[g].clone(),
                    local: local[g * nb..(g + 1) * nb].iter().map(|x| x / mass).collect(),
                    full: full[g * nb..(g + 1) * nb].iter().map(|x| x / mass).collect(),
                }
            })
        })
        .collect())
}

/// Evaluates every cube of the family for all `|β| < κ` in one pass.
///
/// Groups of disjoint cubes covering a sizable share of the columns are
/// evaluated together; sparse groups fall back to one cube at a time.
pub fn testing_sweep(
    t: &OperatorMatrix,
    sigma: &DiscreteMeasure,
    family: &CubeFamily,
    kappa: u32,
    anchor: Anchor,
) -> Result<TestingSweep> {
    if kappa == 0 {
        return invalid("kappa must be at least 1");
    }
    check_operator(t, sigma)?;
    let betas = multiindices_below(sigma.dim(), kappa);
    let groups = disjoint_groups(sigma, &family.cubes)?;
    let parts: Vec<Vec<(usize, Option<CubeTesting>)>> = groups
        .par_iter()
        .map(|(members, owner)| {
            let cubes: Vec<&LatticeCube> = members.iter().map(|&k| &family.cubes[k]).collect();
            let covered = t.col_cells().iter().filter(|&&c| owner[c] != u32::MAX).count();
            let rows = if covered * 16 >= t.ncols() {
                testing_on_group(t, sigma, &cubes, owner, &betas, anchor)?
            } else {
                cubes.iter().map(|q| testing_on_cube(t, sigma, q, &betas, anchor)).collect::<Result<_>>()?
            };
            Ok(members.iter().copied().zip(rows).collect())
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<Option<CubeTesting>> = vec![None; family.cubes.len()];
    for (k, r) in parts.into_iter().flatten() {
        rows[k] = r;
    }
    let skipped = rows.iter().filter(|r| r.is_none()).count();
    let cubes: Vec<CubeTesting> = rows.into_iter().flatten().collect();
    if let Some(c) = cubes.iter().find(|c| c.full.iter().any(|v| !v.is_finite())) {
        return Err(CzError::NonFinite(format!("testing value on cube {:?}", c.cube)));
    }
    Ok(TestingSweep { betas, anchor, cubes, skipped, family: family.descriptor.clone() })
}

impl TestingSweep {
    /// Square root of the supremum over the family and the selected
    /// multiindices.
    pub fn constant(&self, name: &str, full: bool, select: impl Fn(&MultiIndex) -> bool) -> ConstantReport {
        let chosen: Vec<usize> = (0..self.betas.len()).filter(|&b| select(&self.betas[b])).collect();
        let mut best = SupTracker::new();
        for c in &self.cubes {
            let vals = if full { &c.full } else { &c.local };
            for &b in &chosen {
                best.offer(vals[b], &c.cube, b);
            }
        }
        let mut r = ConstantReport::new(name, self.family.clone());
        r.value = best.value_or_zero().sqrt();
        r.skipped = self.skipped;
        if best.cube.is_some() {
            r.argmax.beta = Some(self.betas[best.index].clone());
        }
        r.argmax.cube = best.cube;
        r
    }

    pub fn kappa(&self) -> u32 {
        self.betas.iter().map(|b| b.iter().sum::<u32>()).max().unwrap_or(0) + 1
    }

    /// Constant for `|β| < κ` (local `𝔗^{(κ)}` or full `𝔉𝔗^{(κ)}`).
    pub fn below(&self, kappa: u32, full: bool) -> ConstantReport {
        self.constant(&name(kappa, full), full, |b| b.iter().sum::<u32>() < kappa)
    }

    /// Constant for `|β| = d` exactly.
    pub fn degree(&self, d: u32, full: bool) -> ConstantReport {
        let n = if full { format!("FT[{d}]") } else { format!("T[{d}]") };
        self.constant(&n, full, |b| b.iter().sum::<u32>() == d)
    }

    /// `degree(d)` for every `d < κ`.
    pub fn per_degree(&self, full: bool) -> Vec<ConstantReport> {
        (0..self.kappa()).map(|d| self.degree(d, full)).collect()
    }
}

fn name(kappa: u32, full: bool) -> String {
    if full {
        format!("FT({kappa})")
    } else {
        format!("T({kappa})")
    }
}

/// κ-cube testing constant `𝔗^{(κ)}` or its full variant `𝔉𝔗^{(κ)}`.
pub fn kappa_testing(
    t: &OperatorMatrix,
    sigma: &DiscreteMeasure,
    omega: &DiscreteMeasure,
    family: &CubeFamily,
    opts: &TestingOptions,
) -> Result<ConstantReport> {
    if t.row_cells() != omega.support().as_slice() {
        return invalid("operator rows do not match the support of omega");
    }
    let sweep = testing_sweep(t, sigma, family, opts.kappa, opts.anchor)?;
    Ok(if opts.exact_degree { sweep.degree(opts.kappa - 1, opts.full) } else { sweep.below(opts.kappa, opts.full) })
}

/// Re-evaluates a reported testing witness; reproduces the reported value
/// bit for bit.
pub fn replay_testing(
    t: &OperatorMatrix,
    sigma: &DiscreteMeasure,
    report: &ConstantReport,
    full: bool,
    anchor: Anchor,
) -> Result<f64> {
    let (Some(q), Some(beta)) = (&report.argmax.cube, &report.argmax.beta) else {
        return Ok(0.0);
    };
    let c = testing_on_cube(t, sigma, q, std::slice::from_ref(beta), anchor)?
        .ok_or_else(|| CzError::ZeroMass(format!("{q:?}")))?;
    Ok(if full { c.full[0] } else { c.local[0] }.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FamilySpec;
    use crate::kernels::{KernelName, KernelSpec, TruncationWindow};
    use crate::measures::generate_doubling_measure;
    use crate::operators::{default_window, operator_norm};

    fn ulps_close(a: f64, b: f64, k: f64) -> bool {
        (a - b).abs() <= k * f64::EPSILON * a.abs().max(b.abs())
    }

    #[test]
    fn hilbert_uniform_matches_direct_sum() {
        let depth = 8;
        let u = DiscreteMeasure::uniform(1, depth).unwrap();
        let k = KernelSpec::hilbert();
        let w = default_window(1, depth);
        let t = OperatorMatrix::assemble(&k, &w, &u, &u).unwrap();
        let fam = CubeFamily::build(&FamilySpec::dyadic(depth - 1), 1, depth).unwrap();
        let opts = TestingOptions { kappa: 2, full: true, exact_degree: false, anchor: Anchor::Center };
        let r = kappa_testing(&t, &u, &u, &fam, &opts).unwrap();

        // direct sum: Σ_i w_i |Σ_{j∈Q} K(x_i,y_j) m(y_j) s_j|² / |Q|_σ
        let pts: Vec<f64> = (0..1usize << depth).map(|c| u.cell_center(c)[0]).collect();
        let h = u.mass(0);
        let mut best = 0.0f64;
        for q in &fam.cubes {
            let (lo, side) = (q.lower()[0], q.side());
            let c = lo + side / 2.0;
            for deg in 0..2 {
                let mut total = 0.0;
                for &x in &pts {
                    let mut s = 0.0;
                    for &y in pts.iter().filter(|&&y| y >= lo && y < lo + side) {
                        let d = (x - y).abs();
                        if d >= w.delta && d <= w.r {
                            s += ((y - c) / side).powi(deg) / (x - y) * h;
                        }
                    }
                    total += s * s * h;
                }
                best = best.max(total / side);
            }
        }
        let oracle = best.sqrt();
        assert!(ulps_close(r.value, oracle, 8.0), "{} vs {oracle}", r.value);
        assert_eq!(replay_testing(&t, &u, &r, true, Anchor::Center).unwrap(), r.value);
    }

    #[test]
    fn kappa_one_is_cube_testing() {
        let s = generate_doubling_measure(1, 6, 0.3, 3).unwrap();
        let w = generate_doubling_measure(1, 6, 0.3, 4).unwrap();
        let t = OperatorMatrix::assemble(&KernelSpec::hilbert(), &default_window(1, 6), &s, &w).unwrap();
        let fam = CubeFamily::build(&FamilySpec::dyadic(5), 1, 6).unwrap();
        let r = kappa_testing(&t, &s, &w, &fam, &TestingOptions::new(1, false)).unwrap();
        assert_eq!(r.argmax.beta.as_deref(), Some(&[0u32][..]));
        let q = r.argmax.cube.clone().unwrap();
        let cols: Vec<f64> =
            t.col_cells().iter().map(|&c| if q.contains_point(&s.cell_center(c)) { 1.0 } else { 0.0 }).collect();
        let out = t.apply(&cols).unwrap();
        let local: f64 = out[0]
            .iter()
            .zip(t.row_cells())
            .filter(|(_, &c)| q.contains_point(&w.cell_center(c)))
            .map(|(v, &c)| v * v * w.mass(c))
            .sum();
        let direct = (local / s.lattice_mass(&q).unwrap()).sqrt();
        assert!(ulps_close(r.value, direct, 64.0), "{} vs {direct}", r.value);
    }

    #[test]
    fn sanity_chain_and_monotonicity() {
        for (n, depth) in [(1usize, 6u32), (2, 4)] {
            let kern = if n == 1 {
                KernelSpec::hilbert()
            } else {
                KernelSpec::builtin(KernelName::Riesz, 2, 0.0).unwrap()
            };
            let s = generate_doubling_measure(n, depth, 0.3, 7).unwrap();
            let w = generate_doubling_measure(n, depth, 0.3, 8).unwrap();
            let t = OperatorMatrix::assemble(&kern, &default_window(n, depth), &s, &w).unwrap();
            let fam = CubeFamily::build(&FamilySpec::dyadic(depth - 1), n, depth).unwrap();
            let sweep = testing_sweep(&t, &s, &fam, 3, Anchor::Center).unwrap();
            let norm = operator_norm(&t, 1e-10).unwrap();
            let mut prev = 0.0;
            for kappa in 1..=3 {
                let loc = sweep.below(kappa, false).value;
                let full = sweep.below(kappa, true).value;
                assert!(loc <= full);
                assert!(full <= norm.upper * (1.0 + 8.0 * f64::EPSILON), "{full} > {}", norm.upper);
                assert!(loc >= prev);
                prev = loc;
            }
            let coarse = CubeFamily::build(&FamilySpec::dyadic(depth - 2), n, depth).unwrap();
            let small = testing_sweep(&t, &s, &coarse, 3, Anchor::Center).unwrap();
            assert!(small.below(3, true).value <= sweep.below(3, true).value);
        }
    }

    #[test]
    fn zero_mass_cubes_are_skipped() {
        let depth = 4;
        let s = DiscreteMeasure::atom(1, depth, &[0.1]).unwrap();
        let w = DiscreteMeasure::uniform(1, depth).unwrap();
        let t = OperatorMatrix::assemble(&KernelSpec::hilbert(), &default_window(1, depth), &s, &w).unwrap();
        let fam = CubeFamily::build(&FamilySpec::dyadic(depth), 1, depth).unwrap();
        let r = kappa_testing(&t, &s, &w, &fam, &TestingOptions::new(2, true)).unwrap();
        assert_eq!(r.skipped, fam.len() - (depth as usize + 1));
        assert!(r.value > 0.0);
    }

    #[test]
    fn exact_degree_selects_top_degree() {
        let depth = 6;
        let u = DiscreteMeasure::uniform(1, depth).unwrap();
        let t = OperatorMatrix::assemble(&KernelSpec::hilbert(), &TruncationWindow::sharp(2.0 / 64.0, 1.0).unwrap(), &u, &u)
            .unwrap();
        let fam = CubeFamily::build(&FamilySpec::dyadic(4), 1, depth).unwrap();
        let opts = TestingOptions { kappa: 3, full: true, exact_degree: true, anchor: Anchor::LowerCorner };
        let r = kappa_testing(&t, &u, &u, &fam, &opts).unwrap();
        assert_eq!(r.argmax.beta.as_deref(), Some(&[2u32][..]));
        let sweep = testing_sweep(&t, &u, &fam, 3, Anchor::LowerCorner).unwrap();
        let per = sweep.per_degree(true);
        assert_eq!(per.len(), 3);
        assert_eq!(per[2].value, r.value);
        assert_eq!(sweep.below(3, true).value, per.iter().map(|p| p.value).fold(0.0, f64::max));
    }

    #[test]
    fn grouped_sweep_matches_single_cubes_bitwise() {
        let (n, depth) = (2usize, 4u32);
        let kern = KernelSpec::builtin(KernelName::Riesz, 2, 0.0).unwrap();
        let s = generate_doubling_measure(n, depth, 0.3, 1).unwrap();
        let w = generate_doubling_measure(n, depth, 0.3, 2).unwrap();
        let t = OperatorMatrix::assemble(&kern, &default_window(n, depth), &s, &w).unwrap();
        let spec = FamilySpec { translates: 1, ..Default::default() };
        let fam = CubeFamily::build(&spec, n, depth).unwrap();
        for anchor in [Anchor::Center, Anchor::LowerCorner] {
            let sweep = testing_sweep(&t, &s, &fam, 2, anchor).unwrap();
            let single: Vec<CubeTesting> =
                fam.cubes.iter().filter_map(|q| testing_on_cube(&t, &s, q, &sweep.betas, anchor).unwrap()).collect();
            assert_eq!(sweep.cubes, single);
        }
    }
}
