//! Complex Gabor wavelets and the orientation-condensed ensemble.
//!
//! A wavelet at orientation `u` and scale `v` is
//!
//! ```text
//! psi(z) = |k|^2 / sigma^2 * exp(-|k|^2 |z|^2 / (2 sigma^2)) * (exp(i k.z) - exp(-sigma^2 / 2))
//! ```
//!
//! with `k = k_max / f^v * (cos theta_u, sin theta_u)`, sampled at unit spacing on a
//! centered odd grid. Columns map to `x`, rows to `y`, both offset from the center.

use std::f64::consts::{PI, SQRT_2};

use ndarray::Array2;

use crate::error::{param, Result};
use crate::filter::{BankKind, ComplexFilter, FilterBank};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborParams {
    /// Envelope width.
    pub sigma: f64,
    pub k_max: f64,
    /// Spacing factor between successive scales.
    pub f: f64,
    pub u_max: usize,
    pub v_max: usize,
    /// Odd side length of the sampled filter.
    pub support: usize,
}

impl Default for GaborParams {
    fn default() -> Self {
        Self {
            sigma: 2.0 * PI,
            k_max: PI / 2.0,
            f: SQRT_2,
            u_max: 8,
            v_max: 5,
            support: 7,
        }
    }
}

impl GaborParams {
    pub fn with_support(support: usize) -> Self {
        Self {
            support,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma.is_nan() || self.sigma <= 0.0 {
            return Err(param(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.k_max.is_nan() || self.k_max <= 0.0 {
            return Err(param(format!("k_max must be > 0, got {}", self.k_max)));
        }
        if self.f.is_nan() || self.f <= 1.0 {
            return Err(param(format!("f must be > 1, got {}", self.f)));
        }
        if self.u_max == 0 || self.v_max == 0 {
            return Err(param("u_max and v_max must be >= 1"));
        }
        if self.support < 3 || self.support.is_multiple_of(2) {
            return Err(param(format!(
                "support must be odd and >= 3, got {}",
                self.support
            )));
        }
        Ok(())
    }

    /// Orientation angle of index `u`.
    pub fn theta(&self, u: usize) -> f64 {
        u as f64 * PI / self.u_max as f64
    }

    /// Wavelet frequency magnitude of scale `v`.
    pub fn k_v(&self, v: usize) -> f64 {
        self.k_max / self.f.powi(v as i32)
    }
}

pub fn gabor_filter(u: usize, v: usize, p: &GaborParams) -> Result<ComplexFilter> {
    p.validate()?;
    if u >= p.u_max {
        return Err(param(format!("orientation {u} out of range 0..{}", p.u_max)));
    }
    if v >= p.v_max {
        return Err(param(format!("scale {v} out of range 0..{}", p.v_max)));
    }
    let k = p.support;
    let c = (k / 2) as f64;
    let kv = p.k_v(v);
    let theta = p.theta(u);
    let (kx, ky) = (kv * theta.cos(), kv * theta.sin());
    let kk = kv * kv;
    let s2 = p.sigma * p.sigma;
    let dc = (-s2 / 2.0).exp();

    let mut re = Array2::zeros((k, k));
    let mut im = Array2::zeros((k, k));
    for row in 0..k {
        let y = row as f64 - c;
        for col in 0..k {
            let x = col as f64 - c;
            let envelope = kk / s2 * (-kk * (x * x + y * y) / (2.0 * s2)).exp();
            let phase = kx * x + ky * y;
            re[[row, col]] = envelope * (phase.cos() - dc);
            im[[row, col]] = envelope * phase.sin();
        }
    }
    ComplexFilter::new(re, im)
}

/// All `u_max * v_max` wavelets, scale-major (v outer, u inner).
pub fn standard_ensemble(p: &GaborParams) -> Result<FilterBank> {
    p.validate()?;
    let mut filters = Vec::with_capacity(p.u_max * p.v_max);
    for v in 0..p.v_max {
        for u in 0..p.u_max {
            filters.push(gabor_filter(u, v, p)?);
        }
    }
    FilterBank::new(BankKind::GaborStd, filters)
}

/// One filter per orientation: the plain average of that orientation over all scales.
pub fn condensed_ensemble(p: &GaborParams) -> Result<FilterBank> {
    p.validate()?;
    let k = p.support;
    let scale = 1.0 / p.v_max as f64;
    let mut filters = Vec::with_capacity(p.u_max);
    for u in 0..p.u_max {
        let mut re = Array2::<f64>::zeros((k, k));
        let mut im = Array2::<f64>::zeros((k, k));
        for v in 0..p.v_max {
            let g = gabor_filter(u, v, p)?;
            re += &g.re;
            im += &g.im;
        }
        re *= scale;
        im *= scale;
        filters.push(ComplexFilter::new(re, im)?);
    }
    FilterBank::new(BankKind::GaborCond, filters)
}
