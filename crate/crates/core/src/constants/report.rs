use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{FamilySpec, LatticeCube, MultiIndex};

/// A ball `B(x₀, N)` together with the inner truncation radius `ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallSample {
    pub center: Vec<f64>,
    pub radius: f64,
    pub eps: f64,
}

/// Where a supremum was attained.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Argmax {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cube: Option<LatticeCube>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ball: Option<BallSample>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<MultiIndex>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyDescriptor {
    /// Finest cube level in the family.
    pub depth: u32,
    pub translates: u32,
    pub cubes: usize,
}

/// A supremum-type constant with its witness.
///
/// `skipped` counts family members (or ball samples) left out because the
/// normalizing mass vanished.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantReport {
    pub constant_name: String,
    pub value: f64,
    pub argmax: Argmax,
    pub family: FamilyDescriptor,
    pub skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl ConstantReport {
    pub(crate) fn new(name: impl Into<String>, family: FamilyDescriptor) -> Self {
        ConstantReport {
            constant_name: name.into(),
            value: 0.0,
            argmax: Argmax::default(),
            family,
            skipped: 0,
            config_hash: None,
        }
    }

    pub fn with_config_hash(mut self, hash: &str) -> Self {
        self.config_hash = Some(hash.to_string());
        self
    }
}

/// An explicit cube family with its descriptor.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeFamily {
    pub cubes: Vec<LatticeCube>,
    pub descriptor: FamilyDescriptor,
}

impl CubeFamily {
    pub fn build(spec: &FamilySpec, n: usize, lattice_depth: u32) -> Result<Self> {
        let cubes = spec.cubes(n, lattice_depth)?;
        let mut f = Self::from_cubes(cubes)?;
        f.descriptor.translates = spec.translates;
        Ok(f)
    }

    /// Wraps an arbitrary nonempty list of cubes.
    pub fn from_cubes(cubes: Vec<LatticeCube>) -> Result<Self> {
        if cubes.is_empty() {
            return invalid("empty cube family");
        }
        let depth = cubes.iter().map(|q| q.level).max().unwrap_or(0);
        let translates = cubes.iter().map(|q| q.span.max(1).ilog2()).max().unwrap_or(0);
        let descriptor = FamilyDescriptor { depth, translates, cubes: cubes.len() };
        Ok(CubeFamily { cubes, descriptor })
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }
}

/// Running supremum with deterministic tie-breaking: larger value, then the
/// lexicographically smaller cube, then the earlier secondary index.
#[derive(Clone, Debug)]
pub(crate) struct SupTracker {
    pub value: f64,
    pub cube: Option<LatticeCube>,
    pub index: usize,
}

impl SupTracker {
    pub fn new() -> Self {
        SupTracker { value: f64::NEG_INFINITY, cube: None, index: 0 }
    }

    pub fn offer(&mut self, value: f64, cube: &LatticeCube, index: usize) {
        let take = match &self.cube {
            None => true,
            Some(c) => {
                value > self.value || (value == self.value && (cube < c || (cube == c && index < self.index)))
            }
        };
        if take {
            self.value = value;
            self.cube = Some(cube.clone());
            self.index = index;
        }
    }

    pub fn value_or_zero(&self) -> f64 {
        if self.cube.is_some() {
            self.value
        } else {
            0.0
        }
    }
}
