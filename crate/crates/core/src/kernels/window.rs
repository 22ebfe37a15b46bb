use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WindowShape {
    /// Indicator of `[δ, R]`.
    #[default]
    Sharp,
    /// Smoothstep ramps on `[δ(1−ramp), δ]` and `[R, R(1+ramp)]`.
    SmoothRamp { ramp: f64 },
}

/// Radial cutoff `η_{δ,R}(|x−y|)` of a truncated kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationWindow {
    pub delta: f64,
    pub r: f64,
    #[serde(default)]
    pub shape: WindowShape,
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

impl TruncationWindow {
    pub fn sharp(delta: f64, r: f64) -> Result<Self> {
        Self::new(delta, r, WindowShape::Sharp)
    }

    pub fn new(delta: f64, r: f64, shape: WindowShape) -> Result<Self> {
        if !(delta > 0.0 && r > delta && r.is_finite()) {
            return invalid(format!("truncation window needs 0 < delta < R, got delta={delta}, R={r}"));
        }
        if let WindowShape::SmoothRamp { ramp } = shape {
            if !(ramp > 0.0 && ramp < 1.0) {
                return invalid(format!("ramp width must lie in (0,1), got {ramp}"));
            }
        }
        Ok(TruncationWindow { delta, r, shape })
    }

    /// Smallest distance with a nonzero weight.
    pub fn support_lo(&self) -> f64 {
        match self.shape {
            WindowShape::Sharp => self.delta,
            WindowShape::SmoothRamp { ramp } => self.delta * (1.0 - ramp),
        }
    }

    /// Largest distance with a nonzero weight.
    pub fn support_hi(&self) -> f64 {
        match self.shape {
            WindowShape::Sharp => self.r,
            WindowShape::SmoothRamp { ramp } => self.r * (1.0 + ramp),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self.shape {
            WindowShape::Sharp => {
                if s >= self.delta && s <= self.r {
                    1.0
                } else {
                    0.0
                }
            }
            WindowShape::SmoothRamp { ramp } => {
                if s < self.delta {
                    smoothstep((s - self.delta * (1.0 - ramp)) / (self.delta * ramp))
                } else if s <= self.r {
                    1.0
                } else {
                    smoothstep((self.r * (1.0 + ramp) - s) / (self.r * ramp))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sharp_window() {
        let w = TruncationWindow::sharp(0.1, 2.0).unwrap();
        assert_eq!(w.eval(0.05), 0.0);
        assert_eq!(w.eval(0.1), 1.0);
        assert_eq!(w.eval(2.0), 1.0);
        assert_eq!(w.eval(2.01), 0.0);
    }

    #[test]
    fn ramp_window_range() {
        let w = TruncationWindow::new(0.1, 2.0, WindowShape::SmoothRamp { ramp: 0.5 }).unwrap();
        assert_eq!(w.eval(0.05), 0.0);
        assert_eq!(w.eval(0.04), 0.0);
        assert_eq!(w.eval(3.0), 0.0);
        for i in 0..400 {
            let s = i as f64 * 0.01;
            let v = w.eval(s);
            assert!((0.0..=1.0).contains(&v));
            if (0.1..=2.0).contains(&s) {
                assert_eq!(v, 1.0);
            }
        }
        assert!(w.eval(0.075) > 0.0 && w.eval(0.075) < 1.0);
    }

    #[test]
    fn rejects_bad_windows() {
        assert!(TruncationWindow::sharp(0.0, 1.0).is_err());
        assert!(TruncationWindow::sharp(1.0, 1.0).is_err());
        assert!(TruncationWindow::new(0.1, 1.0, WindowShape::SmoothRamp { ramp: 1.0 }).is_err());
    }
}
