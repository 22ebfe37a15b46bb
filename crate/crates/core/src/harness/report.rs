use serde::{Deserialize, Serialize};

use super::scenario::SuiteName;
use crate::constants::{Argmax, ConstantReport};
use crate::error::{CzError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    /// A precondition of the statement does not hold on this scenario.
    Inapplicable,
}

/// One named summand of a right-hand side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub value: f64,
}

/// A constant fixed by one step of an inequality chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedStep {
    pub step: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub label: String,
    #[serde(flatten)]
    pub argmax: Argmax,
}

/// Outcome of one inequality `left ≤ right` on one scenario instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub id: String,
    pub suite: SuiteName,
    /// Lattice depth of the instance (the finer one for refinement checks).
    pub depth: u32,
    pub left: f64,
    pub right: f64,
    pub terms: Vec<Term>,
    pub constants: Vec<TrackedStep>,
    /// Relative: passes when `left ≤ right·(1 + tolerance)`.
    pub tolerance: f64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<Witness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl VerificationReport {
    pub fn check(id: impl Into<String>, suite: SuiteName, depth: u32, left: f64, right: f64, tolerance: f64) -> Self {
        let pass = !left.is_nan() && !right.is_nan() && left <= right * (1.0 + tolerance);
        VerificationReport {
            id: id.into(),
            suite,
            depth,
            left,
            right,
            terms: Vec::new(),
            constants: Vec::new(),
            tolerance,
            status: if pass { Status::Pass } else { Status::Fail },
            witnesses: Vec::new(),
            note: None,
        }
    }

    pub fn inapplicable(id: impl Into<String>, suite: SuiteName, depth: u32, reason: impl Into<String>) -> Self {
        let mut r = Self::check(id, suite, depth, 0.0, 0.0, 0.0);
        r.status = Status::Inapplicable;
        r.note = Some(reason.into());
        r
    }

    pub fn term(mut self, name: &str, value: f64) -> Self {
        self.terms.push(Term { name: name.into(), value });
        self
    }

    pub fn step(mut self, step: impl Into<String>, value: f64) -> Self {
        self.constants.push(TrackedStep { step: step.into(), value });
        self
    }

    pub fn witness(mut self, label: &str, argmax: &Argmax) -> Self {
        self.witnesses.push(Witness { label: label.into(), argmax: argmax.clone() });
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Marks the check failed regardless of the numbers (e.g. a companion
    /// oracle disagreed).
    pub fn fail(mut self, why: impl Into<String>) -> Self {
        self.status = Status::Fail;
        self.note = Some(why.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    /// `right·(1+tolerance) − left`.
    pub fn slack(&self) -> f64 {
        self.right * (1.0 + self.tolerance) - self.left
    }
}

/// Everything one scenario run produces. Contains no timestamps, so equal
/// scenarios give byte-identical JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub config_hash: String,
    pub constants: Vec<ConstantReport>,
    pub verifications: Vec<VerificationReport>,
    /// No verification failed (inapplicable ones do not count).
    pub all_pass: bool,
}

impl RunReport {
    pub fn new(scenario: &str, config_hash: &str, constants: Vec<ConstantReport>, verifications: Vec<VerificationReport>) -> Self {
        let all_pass = verifications.iter().all(|v| v.status != Status::Fail);
        RunReport { scenario: scenario.into(), config_hash: config_hash.into(), constants, verifications, all_pass }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| CzError::InvalidArgument(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// One row per verification.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CzError::InvalidArgument(e.to_string());
        w.write_record(["id", "suite", "depth", "status", "left", "right", "tolerance", "slack"]).map_err(err)?;
        for v in &self.verifications {
            let status = match v.status {
                Status::Pass => "pass",
                Status::Fail => "fail",
                Status::Inapplicable => "inapplicable",
            };
            w.write_record([
                v.id.clone(),
                v.suite.as_str().to_string(),
                v.depth.to_string(),
                status.to_string(),
                format!("{:e}", v.left),
                format!("{:e}", v.right),
                v.tolerance.to_string(),
                format!("{:e}", v.slack()),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| CzError::InvalidArgument(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CzError::InvalidArgument(e.to_string()))
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_pass {
            0
        } else {
            1
        }
    }
}
