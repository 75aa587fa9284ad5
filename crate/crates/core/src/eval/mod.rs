//! Downstream evaluation protocol on frozen embeddings.

pub mod io;
mod kshot;
mod metrics;
mod probe;

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kshot::{build_kshot_split, kshot_protocol, KShotReport, KShotSpec};
pub use metrics::{balanced_accuracy, dice_no_background, pearson_mean, LabelMask};
pub use probe::{train_linear_probe, LinearProbe, MajorityClass, Probe, ProbeConfig};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {0} outside 0..{1}")]
    LabelOutOfRange(u32, u32),
    #[error("target column {0} has zero variance")]
    ZeroVariance(usize),
    #[error("no non-background class occurs in either mask")]
    NoScorableClasses,
    #[error("class {class} has {have} examples, {need} needed")]
    InsufficientClassExamples { class: u32, have: usize, need: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("dataset has no {0}")]
    MissingField(&'static str),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for EvalError {
    fn from(e: std::io::Error) -> Self {
        EvalError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Split {
    Train = 0,
    Val = 1,
    Test = 2,
}

impl TryFrom<u8> for Split {
    type Error = EvalError;
    fn try_from(v: u8) -> Result<Self, EvalError> {
        match v {
            0 => Ok(Split::Train),
            1 => Ok(Split::Val),
            2 => Ok(Split::Test),
            _ => Err(EvalError::Format(format!("bad split code {v}"))),
        }
    }
}

impl FromStr for Split {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(EvalError::Format(format!("unknown split {other:?}"))),
        }
    }
}

/// Embeddings with whichever annotations a task provides.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddings {
    pub n: usize,
    pub d: usize,
    /// `n × d` row-major features.
    pub x: Vec<f64>,
    pub labels: Option<Vec<u32>>,
    /// Number of regression targets per row.
    pub g: usize,
    /// `n × g` row-major targets.
    pub targets: Option<Vec<f64>>,
    pub patient_ids: Option<Vec<String>>,
    pub splits: Option<Vec<Split>>,
}

impl LabeledEmbeddings {
    pub fn classification(x: Vec<f64>, d: usize, labels: Vec<u32>, splits: Vec<Split>) -> Result<Self, EvalError> {
        let data = LabeledEmbeddings {
            n: labels.len(),
            d,
            x,
            labels: Some(labels),
            g: 0,
            targets: None,
            patient_ids: None,
            splits: Some(splits),
        };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let n = self.n;
        if self.x.len() != n * self.d {
            return Err(EvalError::ShapeMismatch(format!(
                "{} features for {n}x{}",
                self.x.len(),
                self.d
            )));
        }
        let check = |name: &str, len: Option<usize>, want: usize| match len {
            Some(l) if l != want => Err(EvalError::ShapeMismatch(format!("{name} has {l} entries, expected {want}"))),
            _ => Ok(()),
        };
        check("labels", self.labels.as_ref().map(Vec::len), n)?;
        check("targets", self.targets.as_ref().map(Vec::len), n * self.g)?;
        check("patient ids", self.patient_ids.as_ref().map(Vec::len), n)?;
        check("splits", self.splits.as_ref().map(Vec::len), n)?;
        Ok(())
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Features of the given rows, concatenated.
    pub fn gather(&self, rows: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len() * self.d);
        for &i in rows {
            out.extend_from_slice(self.row(i));
        }
        out
    }
}
