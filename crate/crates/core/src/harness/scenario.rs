use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CzError, Result};
use crate::geometry::FamilySpec;
use crate::kernels::{KernelConfig, KernelSpec, TruncationWindow};
use crate::measures::{DiscreteMeasure, MeasureSpec, MAX_CELLS};
use crate::operators::DEFAULT_BUDGET;

/// Verification suites a scenario can request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    FactorialChain,
    TpControl,
    FullControl,
    T1,
    Cancellation,
    /// Every suite; inapplicable ones are reported as such.
    All,
}

impl SuiteName {
    pub const EACH: [SuiteName; 5] =
        [SuiteName::FactorialChain, SuiteName::TpControl, SuiteName::FullControl, SuiteName::T1, SuiteName::Cancellation];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::FactorialChain => "factorial-chain",
            SuiteName::TpControl => "tp-control",
            SuiteName::FullControl => "full-control",
            SuiteName::T1 => "t1",
            SuiteName::Cancellation => "cancellation",
            SuiteName::All => "all",
        }
    }
}

impl std::str::FromStr for SuiteName {
    type Err = CzError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "factorial-chain" => Ok(SuiteName::FactorialChain),
            "tp-control" => Ok(SuiteName::TpControl),
            "full-control" => Ok(SuiteName::FullControl),
            "t1" => Ok(SuiteName::T1),
            "cancellation" => Ok(SuiteName::Cancellation),
            "all" => Ok(SuiteName::All),
            other => Err(CzError::InvalidArgument(format!("unknown suite `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative slack of the 1-D factorial chain.
    pub chain: f64,
    /// Largest relative change of a ratio between depth `L` and `L+1`.
    pub stability: f64,
    /// Slack of exact discrete inequalities, in units of `f64::EPSILON`.
    pub ulps: f64,
    /// Relative distance of the unweighted Hilbert norm from `π`.
    pub hilbert_band: f64,
    /// Fraction of the exhaustive optimum that alternating maximization
    /// must reach on signed kernels.
    pub signed_bict: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { chain: 0.10, stability: 0.25, ulps: 8.0, hilbert_band: 0.05, signed_bict: 0.95 }
    }
}

/// Ball sampling for the cancellation constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CancellationSampling {
    pub centers: usize,
    pub radii: Vec<f64>,
    pub eps: Vec<f64>,
}

impl Default for CancellationSampling {
    fn default() -> Self {
        CancellationSampling { centers: 8, radii: vec![0.125, 0.25], eps: vec![0.03125, 0.0625] }
    }
}

/// `|E| < eps·|Q| ⇒ |E|_ω < eta·|Q|_ω`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AInfinityThreshold {
    pub eps: f64,
    pub eta: f64,
}

impl Default for AInfinityThreshold {
    fn default() -> Self {
        AInfinityThreshold { eps: 0.25, eta: 0.75 }
    }
}

fn default_name() -> String {
    "scenario".into()
}
fn one() -> u32 {
    1
}
fn default_eps() -> Vec<f64> {
    vec![0.5]
}
fn default_rounds() -> usize {
    8
}
fn default_cap() -> f64 {
    64.0
}
fn default_budget() -> usize {
    DEFAULT_BUDGET
}
fn default_norm_tol() -> f64 {
    1e-10
}
fn yes() -> bool {
    true
}
fn three() -> u32 {
    3
}

/// Everything that determines a run. Two equal scenarios produce
/// byte-identical reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub n: usize,
    /// Lattice depth `L`: cells of side `2^-L`.
    pub depth: u32,
    #[serde(default)]
    pub seed: u64,
    pub sigma: MeasureSpec,
    /// Generated with `seed + 1`.
    pub omega: MeasureSpec,
    pub kernel: KernelConfig,
    /// Defaults to `default_window(n, depth)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<TruncationWindow>,
    #[serde(default)]
    pub family: FamilySpec,
    #[serde(default = "one")]
    pub kappa: u32,
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    /// Empty: constants only.
    #[serde(default)]
    pub verify: Vec<SuiteName>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub cancellation: CancellationSampling,
    #[serde(default = "default_rounds")]
    pub bict_rounds: usize,
    /// Largest doubling constant accepted where σ must be doubling.
    #[serde(default = "default_cap")]
    pub doubling_cap: f64,
    #[serde(default)]
    pub a_infinity: AInfinityThreshold,
    /// Bytes available to one dense operator.
    #[serde(default = "default_budget")]
    pub memory_budget: usize,
    #[serde(default = "default_norm_tol")]
    pub norm_tol: f64,
    /// Run the depth `L+1` comparison where a suite asks for one.
    #[serde(default = "yes")]
    pub refine: bool,
    /// Highest degree of the factorial chain.
    #[serde(default = "three")]
    pub chain_degree: u32,
}

fn config_err(path: impl Into<String>, message: impl Into<String>) -> CzError {
    CzError::Config { path: path.into(), message: message.into() }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}

fn path_or_root(p: &serde_path_to_error::Path) -> String {
    let s = p.to_string();
    if s.is_empty() || s == "?" {
        ".".into()
    } else {
        s
    }
}

impl Scenario {
    /// Parses TOML.
    pub fn from_toml(text: &str) -> Result<Scenario> {
        let de = toml::Deserializer::parse(text).map_err(|e| {
            let at = e.span().map(|s| line_col(text, s.start));
            config_err(".", match at {
                Some((l, c)) => format!("line {l}, column {c}: {}", e.message()),
                None => e.message().to_string(),
            })
        })?;
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = path_or_root(e.path());
            config_err(path, e.into_inner().message().to_string())
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let mut de = serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = path_or_root(e.path());
            config_err(path, e.into_inner().to_string())
        })?;
        s.validate()?;
        Ok(s)
    }

    /// JSON when the text starts with `{`, TOML otherwise.
    pub fn parse(text: &str) -> Result<Scenario> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_toml(text)
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(".", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Semantic checks; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.n) {
            return Err(config_err("n", format!("dimension must be 1..=4, got {}", self.n)));
        }
        if self.depth == 0 {
            return Err(config_err("depth", "lattice depth must be at least 1"));
        }
        let cells_log2 = self.n as u64 * (self.depth as u64 + self.refine as u64);
        if cells_log2 > MAX_CELLS.trailing_zeros() as u64 {
            return Err(config_err("depth", format!("2^{cells_log2} cells exceed the lattice cap {MAX_CELLS}")));
        }
        KernelSpec::from_config(&self.kernel, self.n).map_err(|e| config_err("kernel", e.to_string()))?;
        for (field, spec) in [("sigma", &self.sigma), ("omega", &self.omega)] {
            check_measure(field, spec, self.n)?;
        }
        if let Some(w) = &self.window {
            TruncationWindow::new(w.delta, w.r, w.shape).map_err(|e| config_err("window", e.to_string()))?;
            let h = crate::geometry::dyadic_scale(self.depth);
            if w.delta < h {
                return Err(config_err("window.delta", format!("{} is below the lattice spacing {h}", w.delta)));
            }
        }
        let top = self.family.max_level(self.depth);
        if self.family.min_level > top {
            return Err(config_err("family.min_level", format!("exceeds max_level {top}")));
        }
        if self.kappa == 0 {
            return Err(config_err("kappa", "must be at least 1"));
        }
        if self.eps.is_empty() {
            return Err(config_err("eps", "needs at least one value"));
        }
        for (i, &e) in self.eps.iter().enumerate() {
            if !(e > 0.0 && e < 1.0) {
                return Err(config_err(format!("eps[{i}]"), format!("must lie in (0,1), got {e}")));
            }
        }
        let t = &self.tolerances;
        for (f, v) in [("chain", t.chain), ("stability", t.stability), ("ulps", t.ulps), ("hilbert_band", t.hilbert_band)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_err(format!("tolerances.{f}"), format!("must be finite and nonnegative, got {v}")));
            }
        }
        if !(t.signed_bict > 0.0 && t.signed_bict <= 1.0) {
            return Err(config_err("tolerances.signed_bict", "must lie in (0,1]"));
        }
        let c = &self.cancellation;
        for (i, &r) in c.radii.iter().enumerate() {
            if !(r > 0.0 && r.is_finite()) {
                return Err(config_err(format!("cancellation.radii[{i}]"), format!("must be positive, got {r}")));
            }
        }
        for (i, &e) in c.eps.iter().enumerate() {
            if !(e > 0.0 && e.is_finite()) {
                return Err(config_err(format!("cancellation.eps[{i}]"), format!("must be positive, got {e}")));
            }
        }
        if self.bict_rounds == 0 {
            return Err(config_err("bict_rounds", "must be at least 1"));
        }
        if !(self.doubling_cap >= 1.0) {
            return Err(config_err("doubling_cap", "must be at least 1"));
        }
        let a = self.a_infinity;
        if !(a.eps > 0.0 && a.eps <= 1.0) {
            return Err(config_err("a_infinity.eps", "must lie in (0,1]"));
        }
        if !(a.eta > 0.0 && a.eta <= 1.0) {
            return Err(config_err("a_infinity.eta", "must lie in (0,1]"));
        }
        if !(self.norm_tol > 0.0 && self.norm_tol < 1.0) {
            return Err(config_err("norm_tol", "must lie in (0,1)"));
        }
        if self.memory_budget == 0 {
            return Err(config_err("memory_budget", "must be positive"));
        }
        Ok(())
    }

    /// Requested suites with `all` expanded, in canonical order.
    pub fn suites(&self) -> Vec<SuiteName> {
        let mut out: Vec<SuiteName> = if self.verify.contains(&SuiteName::All) {
            SuiteName::EACH.to_vec()
        } else {
            self.verify.clone()
        };
        out.sort();
        out.dedup();
        out
    }

    /// Hex SHA-256 of the canonical JSON form plus the bytes of any measure
    /// files it references.
    pub fn config_hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).map_err(|e| config_err(".", e.to_string()))?);
        for spec in [&self.sigma, &self.omega] {
            if let MeasureSpec::File { path } = spec {
                h.update(std::fs::read(path)?);
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn sigma_measure(&self, depth: u32) -> Result<DiscreteMeasure> {
        build_at(&self.sigma, self.n, self.depth, depth, self.seed)
    }

    pub fn omega_measure(&self, depth: u32) -> Result<DiscreteMeasure> {
        build_at(&self.omega, self.n, self.depth, depth, self.seed.wrapping_add(1))
    }
}

fn check_measure(field: &str, spec: &MeasureSpec, n: usize) -> Result<()> {
    match spec {
        MeasureSpec::Power { exponent } => {
            if n != 1 {
                return Err(config_err(field, "power weights need n = 1"));
            }
            if !(*exponent > -1.0 && exponent.is_finite()) {
                return Err(config_err(format!("{field}.exponent"), format!("must exceed -1, got {exponent}")));
            }
        }
        MeasureSpec::Cascade { a, .. } => {
            if !(*a >= 0.0 && *a < 1.0) {
                return Err(config_err(format!("{field}.a"), format!("must lie in [0,1), got {a}")));
            }
        }
        MeasureSpec::Mixture { atoms } => {
            for (i, at) in atoms.iter().enumerate() {
                if at.at.len() != n {
                    return Err(config_err(format!("{field}.atoms[{i}].at"), format!("needs {n} coordinates")));
                }
                if !(at.weight >= 0.0 && at.weight <= 1.0) {
                    return Err(config_err(format!("{field}.atoms[{i}].weight"), "must lie in [0,1]"));
                }
            }
        }
        MeasureSpec::Uniform | MeasureSpec::File { .. } => {}
    }
    Ok(())
}

/// Builds a measure at `depth ≥ base`. Generated measures are regenerated;
/// file measures are refined by splitting each cell's mass equally among its
/// `2^{n(depth−base)}` descendants.
fn build_at(spec: &MeasureSpec, n: usize, base: u32, depth: u32, seed: u64) -> Result<DiscreteMeasure> {
    match spec {
        MeasureSpec::File { .. } if depth != base => {
            let mu = spec.build(n, base, seed)?;
            split_cells(&mu, depth)
        }
        _ => spec.build(n, depth, seed),
    }
}

fn split_cells(mu: &DiscreteMeasure, depth: u32) -> Result<DiscreteMeasure> {
    let n = mu.dim();
    let shift = depth - mu.depth();
    let per = 1u64 << (n as u32 * shift);
    let side = 1i64 << depth;
    let mut counts = vec![0u64; 1usize << (n as u32 * depth)];
    let ranges = vec![(0, side); n];
    let mut k = 0;
    crate::geometry::for_each_in_ranges(&ranges, |c| {
        let parent: Vec<i64> = c.iter().map(|&x| x >> shift).collect();
        let total = mu.count(mu.cell_index(&parent));
        // the remainder goes to the first descendants in local order
        let rank: u64 = c.iter().fold(0u64, |acc, &x| (acc << shift) | (x & ((1 << shift) - 1)) as u64);
        counts[k] = total / per + u64::from(rank < total % per);
        k += 1;
    });
    DiscreteMeasure::from_counts(n, depth, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::coarsen;

    const DEMO: &str = r#"
name = "demo"
n = 1
depth = 6
seed = 3
sigma = { kind = "cascade", a = 0.2 }
omega = { kind = "uniform" }
kernel = { name = "hilbert" }
kappa = 2
eps = [0.5, 0.25]
verify = ["tp-control"]
"#;

    #[test]
    fn toml_and_json_agree() {
        let a = Scenario::from_toml(DEMO).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let b = Scenario::parse(&json).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.config_hash().unwrap(), b.config_hash().unwrap());
        assert_eq!(a.kappa, 2);
        assert_eq!(a.bict_rounds, 8);
    }

    #[test]
    fn errors_carry_field_paths() {
        let bad = DEMO.replace("kappa = 2", "kappa = 2\nbogus = 1");
        match Scenario::from_toml(&bad) {
            Err(CzError::Config { message, .. }) => assert!(message.contains("bogus"), "{message}"),
            other => panic!("{other:?}"),
        }
        let bad = DEMO.replace("a = 0.2", "a = \"x\"");
        match Scenario::from_toml(&bad) {
            Err(CzError::Config { path, .. }) => assert_eq!(path, "sigma"),
            other => panic!("{other:?}"),
        }
        let bad = DEMO.replace("eps = [0.5, 0.25]", "eps = [0.5, 1.5]");
        match Scenario::from_toml(&bad) {
            Err(CzError::Config { path, .. }) => assert_eq!(path, "eps[1]"),
            other => panic!("{other:?}"),
        }
        let bad = r#"{"n": 1, "depth": 4, "sigma": {"kind": "uniform"}, "omega": {"kind": "uniform"},
            "kernel": {"name": "hilbert"}, "tolerances": {"chain": "wide"}}"#;
        match Scenario::parse(bad) {
            Err(CzError::Config { path, .. }) => assert_eq!(path, "tolerances.chain"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hash_tracks_every_field() {
        let a = Scenario::from_toml(DEMO).unwrap();
        let mut b = a.clone();
        b.tolerances.chain = 0.2;
        assert_ne!(a.config_hash().unwrap(), b.config_hash().unwrap());
        assert_eq!(a.config_hash().unwrap().len(), 64);
    }

    #[test]
    fn split_cells_coarsens_back() {
        let mu = crate::measures::generate_doubling_measure(2, 3, 0.3, 5).unwrap();
        let fine = split_cells(&mu, 5).unwrap();
        assert_eq!(fine.total_count(), mu.total_count());
        assert_eq!(coarsen(&fine, 3).unwrap(), mu);
    }

    #[test]
    fn all_expands() {
        let mut a = Scenario::from_toml(DEMO).unwrap();
        a.verify = vec![SuiteName::All, SuiteName::T1];
        assert_eq!(a.suites(), SuiteName::EACH.to_vec());
    }
}
