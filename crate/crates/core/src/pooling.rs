//! Strided pooling over the flat histogram vector, then sqrt + L2 normalization.

use crate::error::{input, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Avg,
    Max,
    None,
}

impl PoolMode {
    pub fn name(self) -> &'static str {
        match self {
            PoolMode::Avg => "avg",
            PoolMode::Max => "max",
            PoolMode::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "avg" => PoolMode::Avg,
            "max" => PoolMode::Max,
            "none" => PoolMode::None,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
    pub mode: PoolMode,
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self {
            window: 2,
            stride: 2,
            mode: PoolMode::Avg,
        }
    }
}

impl PoolSpec {
    pub fn avg(p: usize) -> Self {
        Self {
            window: p,
            stride: p,
            mode: PoolMode::Avg,
        }
    }

    /// Output length `(d - P) / S + 1`, or an error when windows do not tile `d`.
    pub fn output_len(&self, d: usize) -> Result<usize> {
        if self.mode == PoolMode::None {
            return Ok(d);
        }
        if self.window == 0 || self.stride == 0 {
            return Err(input("pool window and stride must be >= 1"));
        }
        if d < self.window || !(d - self.window).is_multiple_of(self.stride) {
            return Err(input(format!(
                "length {d} is not tiled by window {} at stride {}",
                self.window, self.stride
            )));
        }
        Ok((d - self.window) / self.stride + 1)
    }
}

pub fn pool(h: &[f64], spec: &PoolSpec) -> Result<Vec<f64>> {
    let n = spec.output_len(h.len())?;
    let window = |j: usize| &h[j * spec.stride..j * spec.stride + spec.window];
    Ok(match spec.mode {
        PoolMode::None => h.to_vec(),
        PoolMode::Avg => (0..n)
            .map(|j| window(j).iter().sum::<f64>() / spec.window as f64)
            .collect(),
        PoolMode::Max => (0..n)
            .map(|j| window(j).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect(),
    })
}

/// Normalized vector plus a flag set when the input was all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    pub was_zero: bool,
}

/// Elementwise square root followed by division by the Euclidean norm.
pub fn normalize(v: &[f64]) -> Result<Normalized> {
    if let Some(pos) = v.iter().position(|&x| x.is_nan() || x < 0.0) {
        return Err(input(format!("negative or NaN entry {} at {pos}", v[pos])));
    }
    let mut values: Vec<f64> = v.iter().map(|x| x.sqrt()).collect();
    let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(Normalized {
            values,
            was_zero: true,
        });
    }
    values.iter_mut().for_each(|x| *x /= norm);
    Ok(Normalized {
        values,
        was_zero: false,
    })
}
