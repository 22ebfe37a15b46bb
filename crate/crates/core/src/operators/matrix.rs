use rayon::prelude::*;

use crate::error::{invalid, CzError, Result};
use crate::kernels::{KernelSpec, TruncationWindow};
use crate::measures::DiscreteMeasure;

/// Default memory budget for dense operators (1 GiB).
pub const DEFAULT_BUDGET: usize = 1 << 30;

const NONE: u32 = u32::MAX;

/// Dense realization of `T_σ : L²(σ) → L²(ω)` for atomic measures:
/// `A_ij = √w_i · K_{δ,R}(x_i, y_j) · √s_j`, one matrix per kernel component.
///
/// Rows are the ω-support cells and columns the σ-support cells, both in
/// increasing cell order. `‖T_σ f‖_{L²(ω)} = ‖A(√s f)‖`, with vector kernels
/// combined in `ℓ²` over components.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    n: usize,
    depth: u32,
    rows: Vec<usize>,
    cols: Vec<usize>,
    row_points: Vec<f64>,
    col_points: Vec<f64>,
    row_mass: Vec<f64>,
    col_mass: Vec<f64>,
    row_of_cell: Vec<u32>,
    col_of_cell: Vec<u32>,
    components: usize,
    data: Vec<f64>,
    kernel_name: String,
    window: TruncationWindow,
}

/// The truncation used when a scenario does not set one: `δ = 2·spacing`
/// and `R = √n`, which exceeds every distance between cell centers.
pub fn default_window(n: usize, depth: u32) -> TruncationWindow {
    let h = crate::geometry::dyadic_scale(depth);
    TruncationWindow::sharp(2.0 * h, (n as f64).sqrt()).expect("valid default window")
}

fn support_data(mu: &DiscreteMeasure) -> (Vec<usize>, Vec<f64>, Vec<f64>, Vec<u32>) {
    let cells = mu.support();
    let mut points = Vec::with_capacity(cells.len() * mu.dim());
    let mut mass = Vec::with_capacity(cells.len());
    let mut lookup = vec![NONE; mu.num_cells()];
    for (k, &c) in cells.iter().enumerate() {
        points.extend_from_slice(&mu.cell_center(c));
        mass.push(mu.mass(c));
        lookup[c] = k as u32;
    }
    (cells, points, mass, lookup)
}

impl OperatorMatrix {
    pub fn assemble(k: &KernelSpec, w: &TruncationWindow, sigma: &DiscreteMeasure, omega: &DiscreteMeasure) -> Result<Self> {
        Self::assemble_with_budget(k, w, sigma, omega, DEFAULT_BUDGET)
    }

    pub fn assemble_with_budget(
        k: &KernelSpec,
        w: &TruncationWindow,
        sigma: &DiscreteMeasure,
        omega: &DiscreteMeasure,
        budget: usize,
    ) -> Result<Self> {
        let n = sigma.dim();
        if omega.dim() != n || k.n != n {
            return Err(CzError::DimensionMismatch { expected: n, got: if omega.dim() != n { omega.dim() } else { k.n } });
        }
        if omega.depth() != sigma.depth() {
            return invalid("sigma and omega must share the lattice depth");
        }
        let spacing = sigma.spacing();
        if w.delta < spacing {
            return invalid(format!("truncation delta {} is below the lattice spacing {spacing}", w.delta));
        }
        let (rows, row_points, row_mass, row_of_cell) = support_data(omega);
        let (cols, col_points, col_mass, col_of_cell) = support_data(sigma);
        let comps = k.components();
        let entries = rows.len() * cols.len() * comps;
        let needed = entries * std::mem::size_of::<f64>();
        if needed > budget {
            return Err(CzError::MemoryBudget { needed, budget });
        }
        let mut data = vec![0.0; entries];
        let nc = cols.len();
        let block = rows.len() * nc;
        if nc > 0 {
            for c in 0..comps {
                data[c * block..(c + 1) * block].par_chunks_mut(nc).enumerate().for_each(|(i, row)| {
                    let x = &row_points[i * n..(i + 1) * n];
                    let sw = row_mass[i].sqrt();
                    for (j, a) in row.iter_mut().enumerate() {
                        let y = &col_points[j * n..(j + 1) * n];
                        let v = k.eval_truncated(w, c, x, y);
                        if v != 0.0 {
                            *a = (sw * col_mass[j].sqrt()) * v;
                        }
                    }
                });
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CzError::NonFinite("operator entry".into()));
        }
        Ok(OperatorMatrix {
            n,
            depth: sigma.depth(),
            rows,
            cols,
            row_points,
            col_points,
            row_mass,
            col_mass,
            row_of_cell,
            col_of_cell,
            components: comps,
            data,
            kernel_name: k.name(),
            window: *w,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn kernel_name(&self) -> &str {
        &self.kernel_name
    }

    pub fn window(&self) -> &TruncationWindow {
        &self.window
    }

    /// ω-support cells, increasing.
    pub fn row_cells(&self) -> &[usize] {
        &self.rows
    }

    /// σ-support cells, increasing.
    pub fn col_cells(&self) -> &[usize] {
        &self.cols
    }

    pub fn row_mass(&self) -> &[f64] {
        &self.row_mass
    }

    pub fn col_mass(&self) -> &[f64] {
        &self.col_mass
    }

    pub fn row_point(&self, i: usize) -> &[f64] {
        &self.row_points[i * self.n..(i + 1) * self.n]
    }

    pub fn col_point(&self, j: usize) -> &[f64] {
        &self.col_points[j * self.n..(j + 1) * self.n]
    }

    /// Row index of an ω cell, if it carries mass.
    pub fn row_of_cell(&self, cell: usize) -> Option<usize> {
        self.row_of_cell.get(cell).filter(|&&r| r != NONE).map(|&r| r as usize)
    }

    /// Column index of a σ cell, if it carries mass.
    pub fn col_of_cell(&self, cell: usize) -> Option<usize> {
        self.col_of_cell.get(cell).filter(|&&r| r != NONE).map(|&r| r as usize)
    }

    /// Row-major block of component `c`.
    pub fn component(&self, c: usize) -> &[f64] {
        let block = self.rows.len() * self.cols.len();
        &self.data[c * block..(c + 1) * block]
    }

    pub fn entry(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[c * self.rows.len() * self.cols.len() + i * self.cols.len() + j]
    }

    /// `(T_σ f)(x_i) = Σ_j K_{δ,R}(x_i, y_j) f(y_j) s_j`, per component.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<Vec<f64>>> {
        if f.len() != self.cols.len() {
            return Err(CzError::DimensionMismatch { expected: self.cols.len(), got: f.len() });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(CzError::NonFinite("input function".into()));
        }
        let v: Vec<f64> = f.iter().zip(&self.col_mass).map(|(a, s)| a * s.sqrt()).collect();
        let mut out = self.mul(&v);
        for comp in out.iter_mut() {
            for (u, w) in comp.iter_mut().zip(&self.row_mass) {
                *u /= w.sqrt();
            }
        }
        Ok(out)
    }

    /// `‖T_σ f‖_{L²(ω)}` with components combined in `ℓ²`.
    pub fn apply_norm(&self, f: &[f64]) -> Result<f64> {
        let v: Vec<f64> = f.iter().zip(&self.col_mass).map(|(a, s)| a * s.sqrt()).collect();
        if f.len() != self.cols.len() {
            return Err(CzError::DimensionMismatch { expected: self.cols.len(), got: f.len() });
        }
        Ok(self.mul(&v).iter().flatten().map(|u| u * u).sum::<f64>().sqrt())
    }

    /// `A_c v` for every component.
    pub fn mul(&self, v: &[f64]) -> Vec<Vec<f64>> {
        (0..self.components)
            .map(|c| self.component(c).par_chunks(self.cols.len().max(1)).map(|row| dot(row, v)).collect())
            .collect()
    }

    /// `Σ_c A_cᵀ u_c`.
    pub fn mul_transpose(&self, u: &[Vec<f64>]) -> Vec<f64> {
        const BLOCK: usize = 64;
        let nc = self.cols.len();
        let mut out = vec![0.0; nc];
        for (c, uc) in u.iter().enumerate() {
            let block = self.component(c);
            out.par_chunks_mut(BLOCK).enumerate().for_each(|(b, acc)| {
                let j0 = b * BLOCK;
                for (i, &ui) in uc.iter().enumerate() {
                    let row = &block[i * nc + j0..i * nc + j0 + acc.len()];
                    for (a, &r) in acc.iter_mut().zip(row) {
                        *a += r * ui;
                    }
                }
            });
        }
        out
    }

    /// The matrix of `(T^α)^*_ω : L²(ω) → L²(σ)`: every block transposed.
    ///
    /// For a vector kernel this is the vector operator with components
    /// `K_j^*`, stacked like the original; its norm matches the original
    /// norm only in the scalar case.
    pub fn adjoint(&self) -> OperatorMatrix {
        let (r, c) = (self.rows.len(), self.cols.len());
        let mut data = vec![0.0; self.data.len()];
        for comp in 0..self.components {
            let src = self.component(comp);
            let dst = &mut data[comp * r * c..(comp + 1) * r * c];
            for i in 0..r {
                for j in 0..c {
                    dst[j * r + i] = src[i * c + j];
                }
            }
        }
        let kernel_name = match self.kernel_name.strip_suffix('*') {
            Some(base) => base.to_string(),
            None => format!("{}*", self.kernel_name),
        };
        OperatorMatrix {
            n: self.n,
            depth: self.depth,
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            row_points: self.col_points.clone(),
            col_points: self.row_points.clone(),
            row_mass: self.col_mass.clone(),
            col_mass: self.row_mass.clone(),
            row_of_cell: self.col_of_cell.clone(),
            col_of_cell: self.row_of_cell.clone(),
            components: self.components,
            data,
            kernel_name,
            window: self.window,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelName;

    fn atom_pair() -> (DiscreteMeasure, DiscreteMeasure) {
        let mut s = vec![0u64; 16];
        s[2] = 3 << 38;
        let mut w = vec![0u64; 16];
        w[11] = 1 << 37;
        (DiscreteMeasure::from_counts(1, 4, s).unwrap(), DiscreteMeasure::from_counts(1, 4, w).unwrap())
    }

    #[test]
    fn single_atoms() {
        let (sigma, omega) = atom_pair();
        let k = KernelSpec::hilbert();
        let t = OperatorMatrix::assemble(&k, &default_window(1, 4), &sigma, &omega).unwrap();
        assert_eq!((t.nrows(), t.ncols()), (1, 1));
        let (x, y) = (11.5 / 16.0, 2.5 / 16.0);
        let (s, w) = (0.75f64, 0.125f64);
        let kv = 1.0 / (x - y);
        assert!((t.entry(0, 0, 0) - w.sqrt() * kv * s.sqrt()).abs() < 1e-15);
        let out = t.apply(&[2.0]).unwrap();
        assert!((out[0][0] - kv * 2.0 * s).abs() < 1e-14);
        let adj = t.adjoint();
        assert_eq!(adj.entry(0, 0, 0), t.entry(0, 0, 0));
        assert_eq!(adj.kernel_name(), "hilbert*");
        assert_eq!(adj.adjoint(), t);
    }

    #[test]
    fn symmetric_kernel_gives_symmetric_matrix() {
        let mu = crate::measures::generate_doubling_measure(1, 5, 0.3, 1).unwrap();
        let k = KernelSpec::builtin(KernelName::FracInt, 1, 0.5).unwrap();
        let t = OperatorMatrix::assemble(&k, &default_window(1, 5), &mu, &mu).unwrap();
        for i in 0..t.nrows() {
            for j in 0..t.ncols() {
                assert_eq!(t.entry(0, i, j), t.entry(0, j, i));
            }
        }
    }

    #[test]
    fn hilbert_uniform_antisymmetric() {
        let mu = DiscreteMeasure::uniform(1, 3).unwrap();
        let t = OperatorMatrix::assemble(&KernelSpec::hilbert(), &default_window(1, 3), &mu, &mu).unwrap();
        for i in 0..8 {
            assert_eq!(t.entry(0, i, i), 0.0);
            for j in 0..8 {
                assert_eq!(t.entry(0, i, j), -t.entry(0, j, i));
                let d = (i as f64 - j as f64).abs();
                if d >= 2.0 {
                    assert!((t.entry(0, i, j) - (1.0 / 8.0) * 8.0 / (i as f64 - j as f64)).abs() < 1e-14);
                } else {
                    assert_eq!(t.entry(0, i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn linearity_and_zero() {
        let mu = crate::measures::generate_doubling_measure(2, 3, 0.2, 5).unwrap();
        let k = KernelSpec::builtin(KernelName::Riesz, 2, 0.0).unwrap();
        let t = OperatorMatrix::assemble(&k, &default_window(2, 3), &mu, &mu).unwrap();
        let m = t.ncols();
        let f: Vec<f64> = (0..m).map(|i| (i as f64 * 0.37).sin()).collect();
        let g: Vec<f64> = (0..m).map(|i| (i as f64 * 0.11).cos()).collect();
        let fg: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
        let (a, b, c) = (t.apply(&f).unwrap(), t.apply(&g).unwrap(), t.apply(&fg).unwrap());
        for comp in 0..2 {
            for i in 0..t.nrows() {
                let scale = a[comp][i].abs() + b[comp][i].abs();
                assert!((c[comp][i] - a[comp][i] - b[comp][i]).abs() <= 8.0 * f64::EPSILON * scale.max(1e-300) * m as f64);
            }
        }
        assert!(t.apply(&vec![0.0; m]).unwrap().iter().flatten().all(|&v| v == 0.0));
        assert!(t.apply(&[1.0]).is_err());
    }

    #[test]
    fn rejects_small_delta_and_budget() {
        let mu = DiscreteMeasure::uniform(1, 4).unwrap();
        let w = TruncationWindow::sharp(0.01, 1.0).unwrap();
        assert!(OperatorMatrix::assemble(&KernelSpec::hilbert(), &w, &mu, &mu).is_err());
        let r = OperatorMatrix::assemble_with_budget(&KernelSpec::hilbert(), &default_window(1, 4), &mu, &mu, 100);
        assert!(matches!(r, Err(CzError::MemoryBudget { .. })));
    }
}
