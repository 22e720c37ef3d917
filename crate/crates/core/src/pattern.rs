//! Sampled interference curves and their visibility.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sampled curve `x -> g(x)`, optionally with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferencePattern {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub stderrs: Option<Vec<f64>>,
    pub visibility: f64,
}

/// `(max - min) / (max + min)` over a set of nonnegative values.
///
/// A single value is a flat pattern and has visibility 0.
pub fn visibility(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyPattern);
    }
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for &v in values {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidPatternValue(v));
        }
        max = max.max(v);
        min = min.min(v);
    }
    if max == 0.0 {
        return Err(Error::AllZeroPattern);
    }
    Ok((max - min) / (max + min))
}

impl InterferencePattern {
    pub fn new(xs: Vec<f64>, values: Vec<f64>, stderrs: Option<Vec<f64>>) -> Result<Self> {
        if xs.len() != values.len() || stderrs.as_ref().is_some_and(|s| s.len() != values.len()) {
            return Err(Error::BadScan("coordinate, value and error lengths differ".into()));
        }
        let visibility = visibility(&values)?;
        Ok(InterferencePattern {
            xs,
            values,
            stderrs,
            visibility,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn argmax(&self) -> usize {
        arg_by(&self.values, |a, b| a > b)
    }

    pub fn argmin(&self) -> usize {
        arg_by(&self.values, |a, b| a < b)
    }

    /// First-order propagated error of the visibility from the errors at the
    /// extremal points. Zero when the pattern carries no errors.
    pub fn visibility_stderr(&self) -> f64 {
        let Some(errs) = &self.stderrs else {
            return 0.0;
        };
        if self.values.is_empty() {
            return 0.0;
        }
        let (i, j) = (self.argmax(), self.argmin());
        let (hi, lo) = (self.values[i], self.values[j]);
        let s = hi + lo;
        if s == 0.0 || i == j {
            return 0.0;
        }
        2.0 / (s * s) * ((lo * errs[i]).powi(2) + (hi * errs[j]).powi(2)).sqrt()
    }

    /// CSV with header `x_rad,g_value[,stderr]`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match &self.stderrs {
            Some(errs) => {
                out.push_str("x_rad,g_value,stderr\n");
                for ((x, v), e) in self.xs.iter().zip(&self.values).zip(errs) {
                    let _ = writeln!(out, "{x},{v},{e}");
                }
            }
            None => {
                out.push_str("x_rad,g_value\n");
                for (x, v) in self.xs.iter().zip(&self.values) {
                    let _ = writeln!(out, "{x},{v}");
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let malformed = |line: usize, message: String| Error::MalformedFile {
            path: "<pattern csv>".into(),
            location: format!("line {line}"),
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| malformed(1, "missing header".into()))?;
        let with_err = match header.trim() {
            "x_rad,g_value" => false,
            "x_rad,g_value,stderr" => true,
            other => return Err(malformed(1, format!("unexpected header '{other}'"))),
        };
        let (mut xs, mut values, mut errs) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| malformed(i + 2, e.to_string()))?;
            if fields.len() != if with_err { 3 } else { 2 } {
                return Err(malformed(i + 2, format!("expected {} fields", if with_err { 3 } else { 2 })));
            }
            xs.push(fields[0]);
            values.push(fields[1]);
            if with_err {
                errs.push(fields[2]);
            }
        }
        Self::new(xs, values, with_err.then_some(errs))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn arg_by(values: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if better(v, values[best]) {
            best = i;
        }
    }
    best
}
