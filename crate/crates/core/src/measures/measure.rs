use std::fmt::Write as _;

use smallvec::SmallVec;

use crate::error::{invalid, CzError, Result};
use crate::geometry::{for_each_in_ranges, Corner, DyadicCube, LatticeCube};

/// Number of mass units in one unit of mass.
pub const UNIT: u64 = 1 << 40;
/// Largest admissible total count; keeps every cell mass an exact `f64`.
pub const MAX_TOTAL: u64 = 1 << 53;
/// Largest admissible number of cells.
pub const MAX_CELLS: usize = 1 << 24;

pub(crate) const MASS_PER_COUNT: f64 = 1.0 / UNIT as f64;

/// An atomic measure on the `2^L`-per-side lattice of `[0,1)^n`.
///
/// Masses are integer multiples of `2^-40`, so cube masses are exact
/// integers. Cells are indexed row-major with axis 0 slowest; for kernel
/// evaluation each cell's mass sits at the cell center.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscreteMeasure {
    n: usize,
    depth: u32,
    counts: Vec<u64>,
    /// Summed-area table with `side + 1` entries per axis; wrapping sums.
    prefix: Vec<u64>,
    total: u64,
}

fn grid_cells(n: usize, depth: u32) -> Result<usize> {
    if n == 0 || n > 4 {
        return invalid(format!("dimension must be in 1..=4, got {n}"));
    }
    let bits = n as u64 * depth as u64;
    if bits > MAX_CELLS.trailing_zeros() as u64 {
        return invalid(format!("lattice with n={n}, L={depth} exceeds {MAX_CELLS} cells"));
    }
    Ok(1usize << bits)
}

impl DiscreteMeasure {
    pub fn from_counts(n: usize, depth: u32, counts: Vec<u64>) -> Result<Self> {
        let cells = grid_cells(n, depth)?;
        if counts.len() != cells {
            return Err(CzError::DimensionMismatch { expected: cells, got: counts.len() });
        }
        let mut total: u64 = 0;
        for &c in &counts {
            total = total
                .checked_add(c)
                .filter(|&t| t <= MAX_TOTAL)
                .ok_or_else(|| CzError::InvalidArgument("total mass exceeds 2^13".into()))?;
        }
        let prefix = build_prefix(n, depth, &counts);
        Ok(DiscreteMeasure { n, depth, counts, prefix, total })
    }

    /// Quantizes real masses to the nearest multiple of `2^-40`.
    pub fn from_masses(n: usize, depth: u32, masses: &[f64]) -> Result<Self> {
        let counts = masses.iter().map(|&m| mass_to_count(m)).collect::<Result<Vec<_>>>()?;
        Self::from_counts(n, depth, counts)
    }

    /// Lebesgue surrogate: every cell carries mass `2^{-nL}`.
    pub fn uniform(n: usize, depth: u32) -> Result<Self> {
        let cells = grid_cells(n, depth)?;
        if n as u32 * depth > 40 {
            return invalid("uniform lattice finer than the mass unit");
        }
        Self::from_counts(n, depth, vec![UNIT / cells as u64; cells])
    }

    /// A unit atom in the cell containing `x`.
    pub fn atom(n: usize, depth: u32, x: &[f64]) -> Result<Self> {
        let cells = grid_cells(n, depth)?;
        let mut counts = vec![0; cells];
        let mut mu = DiscreteMeasure { n, depth, counts: Vec::new(), prefix: Vec::new(), total: 0 };
        let idx = mu.cell_of_point(x).ok_or_else(|| CzError::InvalidArgument("atom outside the root".into()))?;
        counts[idx] = UNIT;
        mu = Self::from_counts(n, depth, counts)?;
        Ok(mu)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn side_cells(&self) -> i64 {
        1i64 << self.depth
    }

    pub fn num_cells(&self) -> usize {
        self.counts.len()
    }

    /// Cell width `2^-L`.
    pub fn spacing(&self) -> f64 {
        crate::geometry::dyadic_scale(self.depth)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, cell: usize) -> u64 {
        self.counts[cell]
    }

    pub fn mass(&self, cell: usize) -> f64 {
        self.counts[cell] as f64 * MASS_PER_COUNT
    }

    pub fn total_count(&self) -> u64 {
        self.total
    }

    pub fn total_mass(&self) -> f64 {
        self.total as f64 * MASS_PER_COUNT
    }

    pub fn cell_index(&self, coords: &[i64]) -> usize {
        coords.iter().fold(0usize, |acc, &c| (acc << self.depth) | c as usize)
    }

    pub fn cell_coords(&self, cell: usize) -> Corner {
        let mask = (1usize << self.depth) - 1;
        let mut out: Corner = SmallVec::from_elem(0, self.n);
        let mut rest = cell;
        for axis in (0..self.n).rev() {
            out[axis] = (rest & mask) as i64;
            rest >>= self.depth;
        }
        out
    }

    pub fn cell_center(&self, cell: usize) -> SmallVec<[f64; 4]> {
        let h = self.spacing();
        self.cell_coords(cell).iter().map(|&c| (c as f64 + 0.5) * h).collect()
    }

    pub fn cell_of_point(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.n {
            return None;
        }
        let side = self.side_cells();
        let mut coords: Corner = SmallVec::new();
        for &xi in x {
            let c = (xi * side as f64).floor();
            if !(0.0..side as f64).contains(&c) {
                return None;
            }
            coords.push(c as i64);
        }
        Some(self.cell_index(&coords))
    }

    /// Indices of cells with positive mass, increasing.
    pub fn support(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&i| self.counts[i] > 0).collect()
    }

    /// Exact count in a box of cells, clipped to the lattice.
    pub fn box_count(&self, ranges: &[(i64, i64)]) -> u64 {
        let side = self.side_cells();
        let clipped: SmallVec<[(i64, i64); 4]> =
            ranges.iter().map(|&(lo, hi)| (lo.clamp(0, side), hi.clamp(0, side))).collect();
        if clipped.iter().any(|&(lo, hi)| hi <= lo) {
            return 0;
        }
        let stride = side as usize + 1;
        let mut sum: u64 = 0;
        for mask in 0..(1u32 << self.n) {
            let mut idx = 0usize;
            let mut upper = 0;
            for (axis, &(lo, hi)) in clipped.iter().enumerate() {
                let take_hi = mask >> (self.n - 1 - axis) & 1 == 1;
                upper += take_hi as usize;
                idx = idx * stride + if take_hi { hi } else { lo } as usize;
            }
            let v = self.prefix[idx];
            sum = if (self.n - upper) % 2 == 0 { sum.wrapping_add(v) } else { sum.wrapping_sub(v) };
        }
        sum
    }

    /// `|Q ∩ root|_μ` in count units; `Q` must be resolved by the lattice.
    pub fn lattice_count(&self, q: &LatticeCube) -> Result<u64> {
        self.check_dim(q.dim())?;
        Ok(self.box_count(&q.cell_ranges(self.depth)?))
    }

    pub fn cube_count(&self, q: &DyadicCube) -> Result<u64> {
        self.lattice_count(&q.to_lattice())
    }

    /// `|Q|_μ` (exact for counts below `2^53`).
    pub fn cube_mass(&self, q: &DyadicCube) -> Result<f64> {
        Ok(self.cube_count(q)? as f64 * MASS_PER_COUNT)
    }

    pub fn lattice_mass(&self, q: &LatticeCube) -> Result<f64> {
        Ok(self.lattice_count(q)? as f64 * MASS_PER_COUNT)
    }

    /// Cells of `q ∩ root`, increasing.
    pub fn cells_in(&self, q: &LatticeCube) -> Result<Vec<usize>> {
        self.check_dim(q.dim())?;
        let ranges = q.clipped_cell_ranges(self.depth)?;
        let mut out = Vec::new();
        for_each_in_ranges(&ranges, |c| out.push(self.cell_index(c)));
        Ok(out)
    }

    pub(crate) fn check_dim(&self, n: usize) -> Result<()> {
        if n == self.n {
            Ok(())
        } else {
            Err(CzError::DimensionMismatch { expected: self.n, got: n })
        }
    }

    /// Serializes to the text format: header `n=<dim>,L=<depth>` then one
    /// `i1,...,in,mass` line per nonzero cell.
    pub fn to_text(&self) -> String {
        let mut out = format!("n={},L={}\n", self.n, self.depth);
        for cell in self.support() {
            for c in self.cell_coords(cell) {
                write!(out, "{c},").unwrap();
            }
            writeln!(out, "{}", self.mass(cell)).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, message: String| CzError::MeasureFormat { line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let (n, depth) = parse_header(header.trim()).ok_or_else(|| bad(1, format!("bad header `{header}`")))?;
        let cells = grid_cells(n, depth).map_err(|e| bad(1, e.to_string()))?;
        let side = 1i64 << depth;
        let mut counts = vec![0u64; cells];
        let mut seen = vec![false; cells];
        let shape = DiscreteMeasure { n, depth, counts: Vec::new(), prefix: Vec::new(), total: 0 };
        for (i, line) in lines {
            let lineno = i + 1;
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != n + 1 {
                return Err(bad(lineno, format!("expected {} fields, got {}", n + 1, fields.len())));
            }
            let mut coords: Corner = SmallVec::new();
            for f in &fields[..n] {
                let c: i64 = f.trim().parse().map_err(|_| bad(lineno, format!("bad index `{f}`")))?;
                if !(0..side).contains(&c) {
                    return Err(bad(lineno, format!("index {c} outside 0..{side}")));
                }
                coords.push(c);
            }
            let m: f64 = fields[n].trim().parse().map_err(|_| bad(lineno, format!("bad mass `{}`", fields[n])))?;
            let idx = shape.cell_index(&coords);
            if seen[idx] {
                return Err(bad(lineno, "duplicate cell".into()));
            }
            seen[idx] = true;
            counts[idx] = mass_to_count(m).map_err(|e| bad(lineno, e.to_string()))?;
        }
        Self::from_counts(n, depth, counts)
    }
}

fn parse_header(h: &str) -> Option<(usize, u32)> {
    let (a, b) = h.split_once(',')?;
    let n = a.trim().strip_prefix("n=")?.parse().ok()?;
    let l = b.trim().strip_prefix("L=")?.parse().ok()?;
    Some((n, l))
}

fn mass_to_count(m: f64) -> Result<u64> {
    if !m.is_finite() || m < 0.0 {
        return Err(CzError::NonFinite(format!("mass {m}")));
    }
    let c = (m * UNIT as f64).round();
    if c > MAX_TOTAL as f64 {
        return invalid(format!("mass {m} too large"));
    }
    Ok(c as u64)
}

fn build_prefix(n: usize, depth: u32, counts: &[u64]) -> Vec<u64> {
    let side = 1usize << depth;
    let stride = side + 1;
    let mut prefix = vec![0u64; stride.pow(n as u32)];
    // scatter counts to the shifted positions
    for (cell, &c) in counts.iter().enumerate() {
        let mut idx = 0usize;
        for axis in 0..n {
            let coord = (cell >> (depth as usize * (n - 1 - axis))) & (side - 1);
            idx = idx * stride + coord + 1;
        }
        prefix[idx] = c;
    }
    // running sums along each axis
    for axis in 0..n {
        let step = stride.pow((n - 1 - axis) as u32);
        for idx in 0..prefix.len() {
            if (idx / step) % stride != 0 {
                prefix[idx] = prefix[idx].wrapping_add(prefix[idx - step]);
            }
        }
    }
    prefix
}

/// Splits `total` into integer parts proportional to `weights`; the floor
/// parts are topped up in order of largest remainder, ties to the lower index.
pub fn quantize(weights: &[f64], total: u64) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        let mut out = vec![0; weights.len()];
        if let Some(first) = out.first_mut() {
            *first = total;
        }
        return out;
    }
    let scaled: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<u64> = scaled.iter().map(|s| s.floor() as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    let frac = |i: usize| scaled[i] - scaled[i].floor();
    if assigned <= total {
        order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
        let mut rest = total - assigned;
        let mut k = 0;
        while rest > 0 {
            out[order[k % order.len()]] += 1;
            rest -= 1;
            k += 1;
        }
    } else {
        order.sort_by(|&a, &b| frac(a).total_cmp(&frac(b)).then(a.cmp(&b)));
        let mut extra = assigned - total;
        let mut k = 0;
        while extra > 0 {
            let i = order[k % order.len()];
            if out[i] > 0 {
                out[i] -= 1;
                extra -= 1;
            }
            k += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_box(mu: &DiscreteMeasure, ranges: &[(i64, i64)]) -> u64 {
        let side = mu.side_cells();
        let r: Vec<(i64, i64)> = ranges.iter().map(|&(a, b)| (a.clamp(0, side), b.clamp(0, side))).collect();
        let mut s = 0;
        for_each_in_ranges(&r, |c| s += mu.count(mu.cell_index(c)));
        s
    }

    #[test]
    fn uniform_half_interval() {
        let mu = DiscreteMeasure::uniform(1, 6).unwrap();
        assert_eq!(mu.cube_mass(&DyadicCube::new(1, [0])).unwrap(), 0.5);
        assert_eq!(mu.total_count(), UNIT);
    }

    #[test]
    fn atom_away_from_cube() {
        let mu = DiscreteMeasure::atom(1, 6, &[0.3]).unwrap();
        assert_eq!(mu.cube_mass(&DyadicCube::new(2, [0])).unwrap(), 0.0);
        assert_eq!(mu.cube_mass(&DyadicCube::new(2, [1])).unwrap(), 1.0);
    }

    #[test]
    fn prefix_matches_brute_force() {
        for (n, depth) in [(1, 5), (2, 3), (3, 2)] {
            let cells = 1usize << (n * depth as usize);
            let counts: Vec<u64> = (0..cells as u64).map(|i| (i * 7919 + 13) % 101).collect();
            let mu = DiscreteMeasure::from_counts(n, depth, counts).unwrap();
            let side = mu.side_cells();
            let mut state = 12345u64;
            for _ in 0..200 {
                let ranges: Vec<(i64, i64)> = (0..n)
                    .map(|_| {
                        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        let a = (state >> 33) as i64 % (side + 3) - 1;
                        let b = (state >> 13) as i64 % (side + 3) - 1;
                        (a.min(b), a.max(b))
                    })
                    .collect();
                assert_eq!(mu.box_count(&ranges), brute_box(&mu, &ranges));
            }
        }
    }

    #[test]
    fn cell_round_trip() {
        let mu = DiscreteMeasure::uniform(3, 3).unwrap();
        for cell in [0, 5, 77, 511] {
            assert_eq!(mu.cell_index(&mu.cell_coords(cell)), cell);
            assert_eq!(mu.cell_of_point(&mu.cell_center(cell)), Some(cell));
        }
        assert_eq!(mu.cell_of_point(&[1.0, 0.0, 0.0]), None);
    }

    #[test]
    fn text_format_round_trip() {
        let counts: Vec<u64> = (0..16u64).map(|i| if i % 3 == 0 { 0 } else { i * 123_456_789 }).collect();
        let mu = DiscreteMeasure::from_counts(2, 2, counts).unwrap();
        let text = mu.to_text();
        assert!(text.starts_with("n=2,L=2\n"));
        let back = DiscreteMeasure::from_text(&text).unwrap();
        assert_eq!(back, mu);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn text_format_errors() {
        assert!(matches!(DiscreteMeasure::from_text("n=1,L=2\n0,0.5\n0,0.5\n"), Err(CzError::MeasureFormat { line: 3, .. })));
        assert!(DiscreteMeasure::from_text("n=1,L=2\n4,0.5\n").is_err());
        assert!(DiscreteMeasure::from_text("n=1,L=2\n1,-0.5\n").is_err());
        assert!(DiscreteMeasure::from_text("dims=1\n").is_err());
        let mu = DiscreteMeasure::from_text("n=1,L=2\n\n1,0.25\n").unwrap();
        assert_eq!(mu.mass(1), 0.25);
    }

    #[test]
    fn quantize_preserves_total() {
        let q = quantize(&[1.0, 1.0, 1.0], 10);
        assert_eq!(q.iter().sum::<u64>(), 10);
        assert_eq!(q, vec![4, 3, 3]);
        let w: Vec<f64> = (1..50).map(|i| (i as f64).sqrt()).collect();
        assert_eq!(quantize(&w, UNIT).iter().sum::<u64>(), UNIT);
    }
}
