use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{invalid, CzError, Result};

/// Integer lattice coordinates; inline for dimensions up to four.
pub type Corner = SmallVec<[i64; 4]>;

/// `2^-level` as an exact binary fraction.
pub(crate) fn dyadic_scale(level: u32) -> f64 {
    2f64.powi(-(level as i32))
}

/// A half-open dyadic cube `corner·2^-level + [0, 2^-level)^n` relative to the
/// unit root cube `[0,1)^n`.
///
/// Cubes order lexicographically by `(level, corner)`; every family sweep in
/// the crate breaks ties with this order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub level: u32,
    pub corner: Corner,
}

impl DyadicCube {
    pub fn new(level: u32, corner: impl IntoIterator<Item = i64>) -> Self {
        DyadicCube { level, corner: corner.into_iter().collect() }
    }

    /// The root cube `[0,1)^n`.
    pub fn unit(dim: usize) -> Self {
        DyadicCube { level: 0, corner: SmallVec::from_elem(0, dim) }
    }

    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    pub fn side(&self) -> f64 {
        dyadic_scale(self.level)
    }

    pub fn lower(&self) -> Vec<f64> {
        let s = self.side();
        self.corner.iter().map(|&c| c as f64 * s).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        let s = self.side();
        self.corner.iter().map(|&c| (c as f64 + 0.5) * s).collect()
    }

    pub fn is_inside_root(&self) -> bool {
        let n = 1i64 << self.level;
        self.corner.iter().all(|&c| (0..n).contains(&c))
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        let s = self.side();
        self.corner.iter().zip(x).all(|(&c, &xi)| {
            let lo = c as f64 * s;
            lo <= xi && xi < lo + s
        })
    }

    /// The ancestor at `level` (which must not exceed `self.level`).
    pub fn ancestor(&self, level: u32) -> DyadicCube {
        debug_assert!(level <= self.level);
        let shift = self.level - level;
        DyadicCube { level, corner: self.corner.iter().map(|&c| c >> shift).collect() }
    }

    /// Dyadic nesting: `other ⊂ self`.
    pub fn contains(&self, other: &DyadicCube) -> bool {
        other.level >= self.level && other.ancestor(self.level) == *self
    }

    /// Two dyadic cubes meet iff one contains the other.
    pub fn intersects(&self, other: &DyadicCube) -> bool {
        self.contains(other) || other.contains(self)
    }

    pub fn to_lattice(&self) -> LatticeCube {
        LatticeCube { level: self.level, corner: self.corner.clone(), span: 1 }
    }

    /// Reflection `y_axis ↦ 1 − y_axis` about the mid-plane of the root.
    pub fn reflect(&self, axis: usize) -> DyadicCube {
        let mut corner = self.corner.clone();
        corner[axis] = (1i64 << self.level) - 1 - corner[axis];
        DyadicCube { level: self.level, corner }
    }
}

/// An axis-parallel cube of side `span·2^-level` with lower corner
/// `corner·2^-level`. Covers dyadic cubes (`span = 1`), their dilates `2Q`,
/// `3Q`, shrunken cubes `(1−2δ)Q` and sub-dyadic translates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticeCube {
    pub level: u32,
    pub corner: Corner,
    pub span: i64,
}

impl From<&DyadicCube> for LatticeCube {
    fn from(q: &DyadicCube) -> Self {
        q.to_lattice()
    }
}

impl LatticeCube {
    pub fn new(level: u32, corner: impl IntoIterator<Item = i64>, span: i64) -> Self {
        LatticeCube { level, corner: corner.into_iter().collect(), span }
    }

    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    pub fn side(&self) -> f64 {
        self.span as f64 * dyadic_scale(self.level)
    }

    pub fn lower(&self) -> Vec<f64> {
        let s = dyadic_scale(self.level);
        self.corner.iter().map(|&c| c as f64 * s).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        let s = dyadic_scale(self.level);
        let h = 0.5 * self.span as f64;
        self.corner.iter().map(|&c| (c as f64 + h) * s).collect()
    }

    /// Volume `|Q|` (exact for the spans in use).
    pub fn volume(&self) -> f64 {
        self.side().powi(self.dim() as i32)
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        let s = dyadic_scale(self.level);
        self.corner.iter().zip(x).all(|(&c, &xi)| {
            xi >= c as f64 * s && xi < (c + self.span) as f64 * s
        })
    }

    pub fn is_inside_root(&self) -> bool {
        let n = 1i64 << self.level;
        self.corner.iter().all(|&c| c >= 0 && c + self.span <= n)
    }

    /// Canonical form: the coarsest level that represents the same cube.
    pub fn normalized(mut self) -> LatticeCube {
        while self.level > 0 && self.span % 2 == 0 && self.corner.iter().all(|c| c % 2 == 0) {
            self.level -= 1;
            self.span /= 2;
            self.corner.iter_mut().for_each(|c| *c /= 2);
        }
        self
    }

    /// The dyadic cube this is, if any.
    pub fn as_dyadic(&self) -> Option<DyadicCube> {
        let c = self.clone().normalized();
        (c.span == 1).then(|| DyadicCube { level: c.level, corner: c.corner })
    }

    /// Concentric dilate `2Q` (one level finer).
    pub fn doubled(&self) -> LatticeCube {
        LatticeCube {
            level: self.level + 1,
            corner: self.corner.iter().map(|&c| 2 * c - self.span).collect(),
            span: 4 * self.span,
        }
    }

    /// Concentric dilate `3Q`.
    pub fn tripled(&self) -> LatticeCube {
        LatticeCube {
            level: self.level,
            corner: self.corner.iter().map(|&c| c - self.span).collect(),
            span: 3 * self.span,
        }
    }

    /// The concentric cube `(1 − 2·2^-m)Q` left after removing a boundary
    /// shell of width `2^-m ℓ(Q)`. `None` when nothing remains.
    pub fn shrunk(&self, m: u32) -> Option<LatticeCube> {
        let scale = 1i64 << m;
        let span = self.span * scale - 2;
        (span > 0).then(|| LatticeCube {
            level: self.level + m,
            corner: self.corner.iter().map(|&c| c * scale + 1).collect(),
            span,
        })
    }

    /// Half-open cell ranges `[lo, hi)` per axis on the depth-`depth` lattice,
    /// not clipped to the root.
    pub fn cell_ranges(&self, depth: u32) -> Result<SmallVec<[(i64, i64); 4]>> {
        if self.level > depth {
            return Err(CzError::NotAligned { level: self.level, depth });
        }
        let f = 1i64 << (depth - self.level);
        Ok(self.corner.iter().map(|&c| (c * f, (c + self.span) * f)).collect())
    }

    /// Cell ranges clipped to the root `[0, 2^depth)`; empty ranges allowed.
    pub fn clipped_cell_ranges(&self, depth: u32) -> Result<SmallVec<[(i64, i64); 4]>> {
        let n = 1i64 << depth;
        Ok(self
            .cell_ranges(depth)?
            .into_iter()
            .map(|(lo, hi)| (lo.clamp(0, n), hi.clamp(0, n)))
            .collect())
    }
}

/// Visits every lattice point of a product of half-open ranges in
/// lexicographic order (axis 0 slowest).
pub fn for_each_in_ranges(ranges: &[(i64, i64)], mut f: impl FnMut(&[i64])) {
    if ranges.iter().any(|&(lo, hi)| hi <= lo) {
        return;
    }
    let mut idx: SmallVec<[i64; 4]> = ranges.iter().map(|r| r.0).collect();
    loop {
        f(&idx);
        let mut axis = ranges.len();
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < ranges[axis].1 {
                break;
            }
            idx[axis] = ranges[axis].0;
        }
    }
}

/// The `2^{nk}` dyadic descendants of `q` at depth `k`, lexicographic.
pub fn generation_children(q: &DyadicCube, k: u32) -> Result<Vec<DyadicCube>> {
    if k < 1 {
        return invalid("generation depth k must be at least 1");
    }
    let scale = 1i64 << k;
    let ranges: SmallVec<[(i64, i64); 4]> =
        q.corner.iter().map(|&c| (c * scale, c * scale + scale)).collect();
    let mut out = Vec::with_capacity(1usize << (k as usize * q.dim()));
    for_each_in_ranges(&ranges, |c| out.push(DyadicCube::new(q.level + k, c.iter().copied())));
    Ok(out)
}

/// The collections used by the boundary-mass argument: `G` holds the depth-`m`
/// children touching `∂Q`, `H` the children `I` with `3I ⊂ Q` and
/// `∂(3I) ∩ ∂Q ≠ ∅`.
pub fn boundary_collections(q: &DyadicCube, m: u32) -> Result<(Vec<DyadicCube>, Vec<DyadicCube>)> {
    if m < 2 {
        return invalid("boundary collections need m >= 2");
    }
    let scale = 1i64 << m;
    let mut g = Vec::new();
    let mut h = Vec::new();
    for child in generation_children(q, m)? {
        let rel: SmallVec<[i64; 4]> =
            child.corner.iter().zip(&q.corner).map(|(&c, &p)| c - p * scale).collect();
        if rel.iter().any(|&r| r == 0 || r == scale - 1) {
            g.push(child);
        } else if rel.iter().any(|&r| r == 1 || r == scale - 2) {
            h.push(child);
        }
    }
    Ok((g, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_of_unit_square() {
        let kids = generation_children(&DyadicCube::unit(2), 1).unwrap();
        assert_eq!(kids.len(), 4);
        assert!(kids.iter().all(|k| k.side() == 0.5));
        let kids = generation_children(&DyadicCube::unit(1), 3).unwrap();
        assert_eq!(kids.len(), 8);
        assert_eq!(kids[3].lower(), vec![3.0 / 8.0]);
    }

    #[test]
    fn children_partition_parent() {
        let q = DyadicCube::new(2, [1, 3, 0]);
        for k in 1..=3 {
            let kids = generation_children(&q, k).unwrap();
            assert!(kids.iter().all(|c| q.contains(c)));
            // exact volume count in units of the child volume
            assert_eq!(kids.len() as u64, 1u64 << (3 * k));
            for (i, a) in kids.iter().enumerate() {
                for b in &kids[i + 1..] {
                    assert!(!a.intersects(b));
                }
            }
        }
        assert!(generation_children(&q, 0).is_err());
    }

    #[test]
    fn boundary_shell_of_interval() {
        let (g, h) = boundary_collections(&DyadicCube::unit(1), 3).unwrap();
        assert_eq!(g, vec![DyadicCube::new(3, [0]), DyadicCube::new(3, [7])]);
        assert_eq!(h, vec![DyadicCube::new(3, [1]), DyadicCube::new(3, [6])]);
    }

    #[test]
    fn boundary_shell_of_square() {
        let (g, h) = boundary_collections(&DyadicCube::unit(2), 2).unwrap();
        assert_eq!(g.len(), 12);
        assert_eq!(h.len(), 4);
        assert!(boundary_collections(&DyadicCube::unit(2), 1).is_err());
    }

    #[test]
    fn boundary_h_triples_cover_g() {
        let q = DyadicCube::new(1, [1, 0]);
        for m in 2..=4 {
            let (g, h) = boundary_collections(&q, m).unwrap();
            let ql = q.to_lattice();
            let q_ranges = ql.cell_ranges(q.level + m).unwrap();
            for i in &h {
                let t = i.to_lattice().tripled();
                let r = t.cell_ranges(q.level + m).unwrap();
                assert!(r.iter().zip(&q_ranges).all(|(a, b)| a.0 >= b.0 && a.1 <= b.1));
            }
            for j in &g {
                let c = j.center();
                assert!(h.iter().any(|i| i.to_lattice().tripled().contains_point(&c)));
            }
            // G is exactly Q minus (1 − 2·2^-m)Q
            let inner = ql.shrunk(m).unwrap();
            let inner_cells = inner.span.pow(2) as usize;
            assert_eq!(g.len() + inner_cells, 1usize << (2 * m));
            assert!(g.iter().all(|j| !inner.contains_point(&j.center())));
        }
    }

    #[test]
    fn dilates_are_concentric() {
        let q = DyadicCube::new(3, [2, 5]).to_lattice();
        for d in [q.doubled(), q.tripled()] {
            let (a, b) = (d.center(), q.center());
            assert_eq!(a, b);
        }
        assert_eq!(q.doubled().side(), 2.0 * q.side());
        assert_eq!(q.tripled().side(), 3.0 * q.side());
        assert_eq!(q.shrunk(2).unwrap().side(), 0.5 * q.side());
    }

    #[test]
    fn half_open_membership() {
        let q = DyadicCube::new(1, [1]);
        assert!(q.contains_point(&[0.5]));
        assert!(!q.contains_point(&[1.0]));
        assert!(!q.contains_point(&[0.499]));
    }
}
