use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FeatureVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Polynomial,
}

/// Similarity kernel, written `rbf:<ℓ>` or `poly:<ℓ>:<degree>`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub length_scale: f64,
    pub degree: u32,
}

impl KernelSpec {
    pub fn rbf(length_scale: f64) -> Self {
        Self {
            kind: KernelKind::Rbf,
            length_scale,
            degree: 1,
        }
    }

    pub fn poly(length_scale: f64, degree: u32) -> Self {
        Self {
            kind: KernelKind::Polynomial,
            length_scale,
            degree,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) || self.degree < 1 {
            return Err(Error::Config(format!("invalid kernel {self}")));
        }
        Ok(())
    }

    /// The six settings of the standard sweep grid.
    pub fn grid() -> Vec<KernelSpec> {
        vec![
            Self::rbf(0.1),
            Self::rbf(1.0),
            Self::poly(0.1, 2),
            Self::poly(0.1, 3),
            Self::poly(1.0, 2),
            Self::poly(1.0, 3),
        ]
    }

    pub fn eval(&self, x: &FeatureVector, y: &FeatureVector) -> f64 {
        let l2 = self.length_scale * self.length_scale;
        match self.kind {
            KernelKind::Rbf => (-x.sq_dist(y) / (2.0 * l2)).exp(),
            KernelKind::Polynomial => {
                let dot: f64 = x.dot(y.as_slice());
                (dot / l2 + 1.0).powi(self.degree as i32).max(0.0)
            }
        }
    }

    /// Unclamped polynomial value; used to check positive semidefiniteness.
    pub fn eval_raw(&self, x: &FeatureVector, y: &FeatureVector) -> f64 {
        match self.kind {
            KernelKind::Rbf => self.eval(x, y),
            KernelKind::Polynomial => {
                let l2 = self.length_scale * self.length_scale;
                (x.dot(y.as_slice()) / l2 + 1.0).powi(self.degree as i32)
            }
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &FeatureVector, y: &FeatureVector) -> f64 {
    spec.eval(x, y)
}

pub fn kernel_matrix(spec: &KernelSpec, xs: &[FeatureVector]) -> DMatrix<f64> {
    let n = xs.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = spec.eval(&xs[i], &xs[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            KernelKind::Rbf => write!(f, "rbf:{:?}", self.length_scale),
            KernelKind::Polynomial => write!(f, "poly:{:?}:{}", self.length_scale, self.degree),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse kernel '{s}' (want rbf:<l> or poly:<l>:<d>)"));
        let parts: Vec<&str> = s.split(':').collect();
        let spec = match parts.as_slice() {
            ["rbf", l] => Self::rbf(l.parse().map_err(|_| bad())?),
            ["poly", l, d] => Self::poly(l.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl TryFrom<String> for KernelSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KernelSpec> for String {
    fn from(k: KernelSpec) -> String {
        k.to_string()
    }
}
