use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::window::TruncationWindow;
use crate::error::{invalid, CzError, Result};

/// Built-in kernel families, selected by name in configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelName {
    /// `1/(x − y)`, `n = 1`, `α = 0`.
    Hilbert,
    /// `(x_j − y_j)/|x − y|^{n−α+1}`, one component per axis.
    Riesz,
    /// `|x − y|^{α−n}`, `0 < α < n`.
    FracInt,
}

impl std::str::FromStr for KernelName {
    type Err = CzError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hilbert" => Ok(KernelName::Hilbert),
            "riesz" => Ok(KernelName::Riesz),
            "frac-int" => Ok(KernelName::FracInt),
            other => invalid(format!("unknown kernel `{other}` (expected hilbert, riesz or frac-int)")),
        }
    }
}

/// `kernel = { name = "...", alpha = ... }` in scenario files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub name: KernelName,
    #[serde(default)]
    pub alpha: f64,
}

/// User-supplied component function `(j, x, y) ↦ K_j(x, y)`.
pub type KernelFn = Arc<dyn Fn(usize, &[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Family {
    Builtin(KernelName),
    Custom { name: String, components: usize, f: KernelFn, homogeneous: bool },
}

/// An α-fractional kernel `K^α = (K_j^α)` with its declared size and
/// smoothness data `|∇₁^j K(x,y)| ≤ C_CZ |x−y|^{α−j−n}`.
#[derive(Clone)]
pub struct KernelSpec {
    family: Family,
    pub n: usize,
    pub alpha: f64,
    pub kappa1: u32,
    pub kappa2: u32,
    pub delta_smooth: f64,
    pub c_cz: f64,
    adjoint: bool,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("name", &self.name())
            .field("n", &self.n)
            .field("alpha", &self.alpha)
            .field("c_cz", &self.c_cz)
            .field("adjoint", &self.adjoint)
            .finish()
    }
}

impl KernelSpec {
    pub fn builtin(name: KernelName, n: usize, alpha: f64) -> Result<Self> {
        if n == 0 || n > 4 {
            return invalid(format!("dimension must be in 1..=4, got {n}"));
        }
        let nf = n as f64;
        match name {
            KernelName::Hilbert if n != 1 || alpha != 0.0 => {
                return invalid("the Hilbert kernel needs n = 1 and alpha = 0");
            }
            KernelName::Riesz if !(0.0..nf).contains(&alpha) => {
                return invalid(format!("Riesz kernel needs 0 <= alpha < n, got {alpha}"));
            }
            KernelName::FracInt if !(alpha > 0.0 && alpha < nf) => {
                return invalid(format!("fractional integral needs 0 < alpha < n, got {alpha}"));
            }
            _ => {}
        }
        // size constant 1; first-order constant 1 (Hilbert) or max(1, n − α)
        let c_cz = match name {
            KernelName::Hilbert => 1.0,
            KernelName::Riesz | KernelName::FracInt => f64::max(1.0, nf - alpha),
        };
        Ok(KernelSpec {
            family: Family::Builtin(name),
            n,
            alpha,
            kappa1: 1,
            kappa2: 1,
            delta_smooth: 1.0,
            c_cz,
            adjoint: false,
        })
    }

    pub fn from_config(cfg: &KernelConfig, n: usize) -> Result<Self> {
        Self::builtin(cfg.name, n, cfg.alpha)
    }

    pub fn hilbert() -> Self {
        Self::builtin(KernelName::Hilbert, 1, 0.0).expect("valid builtin")
    }

    /// Registers a custom kernel. Smoothness data default to order 1 and
    /// can be overwritten through the public fields.
    pub fn custom(name: &str, n: usize, alpha: f64, components: usize, c_cz: f64, homogeneous: bool, f: KernelFn) -> Result<Self> {
        if components == 0 || !(0.0..n as f64).contains(&alpha) {
            return invalid("custom kernel needs at least one component and 0 <= alpha < n");
        }
        Ok(KernelSpec {
            family: Family::Custom { name: name.to_string(), components, f, homogeneous },
            n,
            alpha,
            kappa1: 1,
            kappa2: 1,
            delta_smooth: 1.0,
            c_cz,
            adjoint: false,
        })
    }

    pub fn name(&self) -> String {
        let base = match &self.family {
            Family::Builtin(KernelName::Hilbert) => "hilbert",
            Family::Builtin(KernelName::Riesz) => "riesz",
            Family::Builtin(KernelName::FracInt) => "frac-int",
            Family::Custom { name, .. } => name,
        };
        if self.adjoint {
            format!("{base}*")
        } else {
            base.to_string()
        }
    }

    pub fn builtin_name(&self) -> Option<KernelName> {
        match self.family {
            Family::Builtin(k) => Some(k),
            Family::Custom { .. } => None,
        }
    }

    pub fn components(&self) -> usize {
        match &self.family {
            Family::Builtin(KernelName::Riesz) => self.n,
            Family::Builtin(_) => 1,
            Family::Custom { components, .. } => *components,
        }
    }

    pub fn is_adjoint(&self) -> bool {
        self.adjoint
    }

    /// `K^*(x, y) = K(y, x)`.
    pub fn adjoint(&self) -> KernelSpec {
        KernelSpec { adjoint: !self.adjoint, ..self.clone() }
    }

    /// `K(sx, sy) = s^{α−n} K(x, y)` for `s > 0`.
    pub fn is_homogeneous(&self) -> bool {
        match &self.family {
            Family::Builtin(_) => true,
            Family::Custom { homogeneous, .. } => *homogeneous,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        matches!(self.family, Family::Builtin(KernelName::FracInt))
    }

    pub fn eval(&self, j: usize, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.n || y.len() != self.n {
            return Err(CzError::DimensionMismatch { expected: self.n, got: x.len().min(y.len()) });
        }
        if j >= self.components() {
            return invalid(format!("component {j} out of range"));
        }
        if x == y {
            return Err(CzError::DiagonalPoint);
        }
        Ok(self.eval_unchecked(j, x, y))
    }

    /// `K_j(x, y)` without argument checks; infinite or NaN on the diagonal.
    pub fn eval_unchecked(&self, j: usize, x: &[f64], y: &[f64]) -> f64 {
        let (x, y) = if self.adjoint { (y, x) } else { (x, y) };
        match &self.family {
            Family::Builtin(name) => {
                let p = self.n as f64 - self.alpha;
                match name {
                    KernelName::Hilbert => 1.0 / (x[0] - y[0]),
                    KernelName::Riesz => {
                        let r = dist(x, y);
                        (x[j] - y[j]) / r.powf(p + 1.0)
                    }
                    KernelName::FracInt => dist(x, y).powf(-p),
                }
            }
            Family::Custom { f, .. } => f(j, x, y),
        }
    }

    /// `η_{δ,R}(|x−y|) K_j(x, y)`; zero on the diagonal.
    pub fn eval_truncated(&self, w: &TruncationWindow, j: usize, x: &[f64], y: &[f64]) -> f64 {
        let eta = w.eval(dist(x, y));
        if eta == 0.0 {
            0.0
        } else {
            eta * self.eval_unchecked(j, x, y)
        }
    }
}

pub(crate) fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_values() {
        assert_eq!(KernelSpec::hilbert().eval(0, &[1.0], &[0.0]).unwrap(), 1.0);
        let r = KernelSpec::builtin(KernelName::Riesz, 2, 0.0).unwrap();
        assert_eq!(r.eval(0, &[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(r.eval(1, &[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        let f = KernelSpec::builtin(KernelName::FracInt, 1, 0.5).unwrap();
        assert_eq!(f.eval(0, &[4.0], &[0.0]).unwrap(), 0.5);
    }

    #[test]
    fn diagonal_rejected() {
        assert!(matches!(KernelSpec::hilbert().eval(0, &[0.3], &[0.3]), Err(CzError::DiagonalPoint)));
    }

    #[test]
    fn parameter_checks() {
        assert!(KernelSpec::builtin(KernelName::Hilbert, 2, 0.0).is_err());
        assert!(KernelSpec::builtin(KernelName::FracInt, 1, 0.0).is_err());
        assert!(KernelSpec::builtin(KernelName::Riesz, 2, 2.0).is_err());
        assert!("frac-int".parse::<KernelName>().is_ok());
        assert!("cauchy".parse::<KernelName>().is_err());
    }

    #[test]
    fn adjoint_involution() {
        let k = KernelSpec::builtin(KernelName::Riesz, 2, 0.5).unwrap();
        let kk = k.adjoint().adjoint();
        let (x, y) = ([0.1, 0.7], [0.4, 0.2]);
        for j in 0..2 {
            assert_eq!(kk.eval(j, &x, &y).unwrap(), k.eval(j, &x, &y).unwrap());
            assert_eq!(k.adjoint().eval(j, &x, &y).unwrap(), k.eval(j, &y, &x).unwrap());
        }
    }

    #[test]
    fn homogeneity() {
        let (x, y) = ([0.13, 0.71], [0.42, 0.25]);
        for k in [KernelSpec::builtin(KernelName::Riesz, 2, 0.5).unwrap(), KernelSpec::builtin(KernelName::FracInt, 2, 1.5).unwrap()] {
            for s in [0.25, 3.0, 17.0] {
                let xs = [x[0] * s, x[1] * s];
                let ys = [y[0] * s, y[1] * s];
                let a = k.eval(0, &xs, &ys).unwrap();
                let b = s.powf(k.alpha - 2.0) * k.eval(0, &x, &y).unwrap();
                assert!((a - b).abs() <= 8.0 * f64::EPSILON * b.abs());
            }
        }
    }

    #[test]
    fn truncation() {
        let k = KernelSpec::hilbert();
        let w = TruncationWindow::sharp(0.1, 1.0).unwrap();
        assert_eq!(k.eval_truncated(&w, 0, &[0.05], &[0.0]), 0.0);
        assert_eq!(k.eval_truncated(&w, 0, &[0.5], &[0.0]), 2.0);
        assert_eq!(k.eval_truncated(&w, 0, &[0.3], &[0.3]), 0.0);
    }

    #[test]
    fn custom_kernel() {
        let k = KernelSpec::custom("cubic", 1, 0.0, 1, 1.0, true, Arc::new(|_, x: &[f64], y: &[f64]| (x[0] - y[0]).powi(-3) * (x[0] - y[0]).abs().powi(2))).unwrap();
        assert_eq!(k.eval(0, &[2.0], &[0.0]).unwrap(), 0.5);
        assert_eq!(k.adjoint().name(), "cubic*");
    }
}
