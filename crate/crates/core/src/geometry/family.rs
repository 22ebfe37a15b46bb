use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::cube::{for_each_in_ranges, LatticeCube};
use crate::error::{invalid, Result};

/// A finite family of lattice cubes standing in for "all cubes".
///
/// Holds every cube of side `2^-k`, `min_level ≤ k ≤ max_level`, whose
/// corner lies on the `2^-(k+translates)` grid and which fits in the root.
/// `translates = 0` gives the dyadic grid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    #[serde(default)]
    pub min_level: u32,
    /// Defaults to the lattice depth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_level: Option<u32>,
    #[serde(default)]
    pub translates: u32,
    /// Keep only cubes with `3Q` inside the root.
    #[serde(default)]
    pub interior_only: bool,
}

/// Hard cap on family size; sweeps are dense and per-cube work is large.
pub const MAX_FAMILY: usize = 1 << 22;

impl FamilySpec {
    pub fn dyadic(max_level: u32) -> Self {
        FamilySpec { max_level: Some(max_level), ..Default::default() }
    }

    pub fn max_level(&self, lattice_depth: u32) -> u32 {
        self.max_level.unwrap_or(lattice_depth).min(lattice_depth)
    }

    /// Enumerates the family, ordered by side (largest first) then corner.
    pub fn cubes(&self, n: usize, lattice_depth: u32) -> Result<Vec<LatticeCube>> {
        let top = self.max_level(lattice_depth);
        if self.min_level > top {
            return invalid(format!("family min_level {} exceeds max_level {top}", self.min_level));
        }
        let mut out = Vec::new();
        for k in self.min_level..=top {
            let s = self.translates.min(lattice_depth - k);
            let level = k + s;
            let span = 1i64 << s;
            let grid = 1i64 << level;
            let (lo, hi) = if self.interior_only { (span, grid - 2 * span + 1) } else { (0, grid - span + 1) };
            if hi <= lo {
                continue;
            }
            let per_axis = (hi - lo) as usize;
            if out.len() + per_axis.saturating_pow(n as u32) > MAX_FAMILY {
                return invalid(format!("cube family exceeds {MAX_FAMILY} cubes"));
            }
            let ranges: SmallVec<[(i64, i64); 4]> = SmallVec::from_elem((lo, hi), n);
            for_each_in_ranges(&ranges, |c| {
                out.push(LatticeCube::new(level, c.iter().copied(), span).normalized());
            });
        }
        Ok(out)
    }
}
