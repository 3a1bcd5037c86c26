//! Fixed-dimension numeric port values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed-length vector of finite reals. All component inputs, outputs, and
/// system inputs/outputs are carried as `ValueVec`s; discrete symbols are
/// represented one-hot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueVec(Vec<f64>);

impl ValueVec {
    /// Builds a value, rejecting NaN/Inf entries and zero dimension.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::validation("value vector must have dim >= 1"));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "value vector contains non-finite entry {bad}"
            )));
        }
        Ok(ValueVec(data))
    }

    /// Zero vector of the given dimension.
    pub fn zeros(dim: usize) -> Self {
        ValueVec(vec![0.0; dim])
    }

    pub fn scalar(v: f64) -> Self {
        ValueVec(vec![v])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Concatenates several values into one.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a ValueVec>) -> Self {
        let mut data = Vec::new();
        for p in parts {
            data.extend_from_slice(&p.0);
        }
        ValueVec(data)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Checks finiteness after arithmetic that may have produced NaN/Inf.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.0.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::numeric(format!("non-finite value in {context}")))
        }
    }
}

impl std::ops::Index<usize> for ValueVec {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for ValueVec {
    /// Infallible construction for internal arithmetic; finiteness is
    /// enforced at execution boundaries via `check_finite`.
    fn from(data: Vec<f64>) -> Self {
        ValueVec(data)
    }
}

/// Squared Euclidean distance between two equal-dimension values.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
