use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::measure::{quantize, DiscreteMeasure, UNIT};
use crate::error::{invalid, CzError, Result};
use crate::geometry::for_each_in_ranges;

/// Dyadic multiplicative cascade with total mass 1.
///
/// Level by level, each cell's count is split among its `2^n` children in
/// proportion to factors drawn uniformly from `[1−a, 1+a]`. Draws are made in
/// lexicographic cell order, one stream per seed, so the depth-`L` measure is
/// the coarse-graining of the depth-`L+1` measure with the same seed.
pub fn generate_doubling_measure(n: usize, depth: u32, a: f64, seed: u64) -> Result<DiscreteMeasure> {
    if !(0.0..1.0).contains(&a) {
        return invalid(format!("cascade perturbation must lie in [0,1), got {a}"));
    }
    if n == 0 || n > 4 || n as u32 * depth > 24 {
        return invalid(format!("cascade lattice n={n}, L={depth} too large"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kids = 1usize << n;
    let mut counts = vec![UNIT];
    let mut weights = vec![0.0; kids];
    for level in 0..depth {
        let side = 1usize << level;
        let mut next = vec![0u64; counts.len() * kids];
        for (cell, &c) in counts.iter().enumerate() {
            for w in weights.iter_mut() {
                *w = 1.0 + a * (2.0 * rng.random::<f64>() - 1.0);
            }
            let parts = quantize(&weights, c);
            for (k, &p) in parts.iter().enumerate() {
                // child coordinate along axis i is 2·parent_i + bit (n−1−i) of k
                let mut idx = 0usize;
                for axis in 0..n {
                    let parent = (cell >> (level as usize * (n - 1 - axis))) & (side - 1);
                    let bit = (k >> (n - 1 - axis)) & 1;
                    idx = (idx << (level + 1)) | (2 * parent + bit);
                }
                next[idx] = p;
            }
        }
        counts = next;
    }
    DiscreteMeasure::from_counts(n, depth, counts)
}

/// The weight `x^a dx` on `[0,1)`, normalized to mass 1; cell masses are the
/// closed-form integrals `((i+1)/N)^{a+1} − (i/N)^{a+1}`.
pub fn power_weight_measure(exponent: f64, depth: u32) -> Result<DiscreteMeasure> {
    if !(exponent > -1.0) || !exponent.is_finite() {
        return invalid(format!("power weight exponent must exceed -1, got {exponent}"));
    }
    if depth > 24 {
        return invalid("power weight lattice too fine");
    }
    if exponent == 0.0 {
        return DiscreteMeasure::uniform(1, depth);
    }
    let p = exponent + 1.0;
    let side = 1u64 << depth;
    let weights: Vec<f64> = (0..side)
        .map(|i| {
            if i == 0 {
                (1.0 / side as f64).powf(p)
            } else {
                // (i/N)^p · ((1 + 1/i)^p − 1), free of cancellation
                (i as f64 / side as f64).powf(p) * (p * (1.0 / i as f64).ln_1p()).exp_m1()
            }
        })
        .collect();
    DiscreteMeasure::from_counts(1, depth, quantize(&weights, UNIT))
}

/// A point mass of the given weight at a position in the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub at: Vec<f64>,
    pub weight: f64,
}

/// Atoms plus a uniform background carrying the remaining mass of 1.
pub fn mixture_measure(n: usize, depth: u32, atoms: &[Atom]) -> Result<DiscreteMeasure> {
    let atom_mass: f64 = atoms.iter().map(|a| a.weight).sum();
    if atoms.iter().any(|a| !(a.weight >= 0.0)) || atom_mass > 1.0 {
        return invalid("atom weights must be nonnegative with sum at most 1");
    }
    let shape = DiscreteMeasure::uniform(n, depth)?;
    let cells = shape.num_cells();
    let mut weights = vec![(1.0 - atom_mass) / cells as f64; cells];
    for a in atoms {
        let cell = shape
            .cell_of_point(&a.at)
            .ok_or_else(|| CzError::InvalidArgument(format!("atom at {:?} lies outside the root cube", a.at)))?;
        weights[cell] += a.weight;
    }
    DiscreteMeasure::from_counts(n, depth, quantize(&weights, UNIT))
}

/// Declarative measure description used by scenarios and the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureSpec {
    Uniform,
    Power {
        exponent: f64,
    },
    Cascade {
        a: f64,
        /// Overrides the scenario seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Mixture {
        atoms: Vec<Atom>,
    },
    File {
        path: String,
    },
}

impl MeasureSpec {
    pub fn build(&self, n: usize, depth: u32, seed: u64) -> Result<DiscreteMeasure> {
        let mu = match self {
            MeasureSpec::Uniform => DiscreteMeasure::uniform(n, depth)?,
            MeasureSpec::Power { exponent } => {
                if n != 1 {
                    return invalid("power weights are one-dimensional");
                }
                power_weight_measure(*exponent, depth)?
            }
            MeasureSpec::Cascade { a, seed: s } => generate_doubling_measure(n, depth, *a, s.unwrap_or(seed))?,
            MeasureSpec::Mixture { atoms } => mixture_measure(n, depth, atoms)?,
            MeasureSpec::File { path } => {
                let mu = DiscreteMeasure::from_text(&std::fs::read_to_string(path)?)?;
                if mu.dim() != n || mu.depth() != depth {
                    return invalid(format!(
                        "measure file {path} has n={}, L={}, scenario needs n={n}, L={depth}",
                        mu.dim(),
                        mu.depth()
                    ));
                }
                mu
            }
        };
        Ok(mu)
    }

    /// Parses `kind` plus comma-separated `key=value` parameters, e.g.
    /// `cascade` with `a=0.3` or `mixture` with `at=0.5,weight=0.4`.
    pub fn from_kind_params(kind: &str, params: &str) -> Result<MeasureSpec> {
        let mut kv = std::collections::BTreeMap::new();
        for item in params.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CzError::InvalidArgument(format!("parameter `{item}` is not key=value")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |key: &str| -> Result<f64> {
            kv.get(key)
                .ok_or_else(|| CzError::InvalidArgument(format!("missing parameter `{key}`")))?
                .parse::<f64>()
                .map_err(|_| CzError::InvalidArgument(format!("parameter `{key}` is not a number")))
        };
        let allow = |keys: &[&str]| -> Result<()> {
            match kv.keys().find(|k| !keys.contains(&k.as_str())) {
                Some(k) => invalid(format!("unknown parameter `{k}` for kind {kind}")),
                None => Ok(()),
            }
        };
        match kind {
            "uniform" => {
                allow(&[])?;
                Ok(MeasureSpec::Uniform)
            }
            "power" => {
                allow(&["a", "exponent"])?;
                let exponent = if kv.contains_key("exponent") { num("exponent")? } else { num("a")? };
                Ok(MeasureSpec::Power { exponent })
            }
            "cascade" => {
                allow(&["a"])?;
                Ok(MeasureSpec::Cascade { a: num("a")?, seed: None })
            }
            "mixture" => {
                allow(&["at", "weight"])?;
                let at = kv
                    .get("at")
                    .ok_or_else(|| CzError::InvalidArgument("missing parameter `at`".into()))?
                    .split(':')
                    .map(|s| s.parse::<f64>().map_err(|_| CzError::InvalidArgument(format!("bad coordinate `{s}`"))))
                    .collect::<Result<Vec<_>>>()?;
                Ok(MeasureSpec::Mixture { atoms: vec![Atom { at, weight: num("weight")? }] })
            }
            other => invalid(format!("unknown measure kind `{other}`")),
        }
    }
}

/// Coarse-grains `mu` to depth `depth` by summing children.
pub fn coarsen(mu: &DiscreteMeasure, depth: u32) -> Result<DiscreteMeasure> {
    if depth > mu.depth() {
        return invalid("cannot coarsen to a finer lattice");
    }
    let n = mu.dim();
    let shift = mu.depth() - depth;
    let side = 1i64 << depth;
    let mut counts = Vec::with_capacity(1usize << (n as u32 * depth));
    let ranges: Vec<(i64, i64)> = vec![(0, side); n];
    let f = 1i64 << shift;
    for_each_in_ranges(&ranges, |c| {
        let r: Vec<(i64, i64)> = c.iter().map(|&x| (x * f, (x + 1) * f)).collect();
        counts.push(mu.box_count(&r));
    });
    DiscreteMeasure::from_counts(n, depth, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DyadicCube;

    #[test]
    fn cascade_without_perturbation_is_uniform() {
        let mu = generate_doubling_measure(2, 4, 0.0, 7).unwrap();
        assert_eq!(mu, DiscreteMeasure::uniform(2, 4).unwrap());
    }

    #[test]
    fn cascade_total_is_one() {
        for seed in 0..5 {
            let mu = generate_doubling_measure(1, 10, 0.3, seed).unwrap();
            assert_eq!(mu.total_count(), UNIT);
            assert!(mu.counts().iter().all(|&c| c > 0));
        }
    }

    #[test]
    fn cascade_refines_consistently() {
        let fine = generate_doubling_measure(2, 6, 0.25, 11).unwrap();
        let coarse = generate_doubling_measure(2, 5, 0.25, 11).unwrap();
        assert_eq!(coarsen(&fine, 5).unwrap(), coarse);
    }

    #[test]
    fn power_weight_closed_forms() {
        let mu = power_weight_measure(0.0, 6).unwrap();
        assert_eq!(mu, DiscreteMeasure::uniform(1, 6).unwrap());
        let mu = power_weight_measure(1.0, 8).unwrap();
        let m = mu.cube_mass(&DyadicCube::new(1, [0])).unwrap();
        assert!((m - 0.25).abs() < 1e-9);
        let mu = power_weight_measure(-0.5, 10).unwrap();
        let m = mu.cube_mass(&DyadicCube::new(2, [0])).unwrap();
        assert!((m - 0.5).abs() < 1e-9);
        assert!(power_weight_measure(-1.0, 4).is_err());
    }

    #[test]
    fn mixture_places_atom() {
        let mu = mixture_measure(1, 4, &[Atom { at: vec![0.5], weight: 0.5 }]).unwrap();
        assert_eq!(mu.total_count(), UNIT);
        assert_eq!(mu.count(8), UNIT / 2 + UNIT / 32);
        assert!(mixture_measure(1, 4, &[Atom { at: vec![1.5], weight: 0.5 }]).is_err());
    }

    #[test]
    fn parse_kind_params() {
        assert_eq!(MeasureSpec::from_kind_params("cascade", "a=0.3").unwrap(), MeasureSpec::Cascade { a: 0.3, seed: None });
        assert_eq!(MeasureSpec::from_kind_params("power", "exponent=-0.5").unwrap(), MeasureSpec::Power { exponent: -0.5 });
        assert!(MeasureSpec::from_kind_params("uniform", "").is_ok());
        assert!(MeasureSpec::from_kind_params("uniform", "a=1").is_err());
        assert!(MeasureSpec::from_kind_params("cantor", "").is_err());
        let m = MeasureSpec::from_kind_params("mixture", "at=0.25:0.5,weight=0.3").unwrap();
        assert_eq!(m, MeasureSpec::Mixture { atoms: vec![Atom { at: vec![0.25, 0.5], weight: 0.3 }] });
    }
}
