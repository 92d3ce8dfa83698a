//! Discrete filters and filter banks shared by every stage.

use ndarray::Array2;

use crate::error::{input, Result};

/// A square filter kept as separate real and imaginary planes.
///
/// Real-valued filters (PCA/ICA) carry an all-zero imaginary plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexFilter {
    pub re: Array2<f64>,
    pub im: Array2<f64>,
}

impl ComplexFilter {
    pub fn new(re: Array2<f64>, im: Array2<f64>) -> Result<Self> {
        let (r, c) = re.dim();
        if r != c || r == 0 {
            return Err(input(format!("filter must be square and nonempty, got {r}x{c}")));
        }
        if im.dim() != re.dim() {
            return Err(input(format!(
                "real and imaginary planes differ in shape: {:?} vs {:?}",
                re.dim(),
                im.dim()
            )));
        }
        Ok(Self { re, im })
    }

    pub fn real(re: Array2<f64>) -> Result<Self> {
        let im = Array2::zeros(re.dim());
        Self::new(re, im)
    }

    /// Imaginary-only filter; used for the imaginary-part offspring set.
    pub fn imaginary(im: Array2<f64>) -> Result<Self> {
        let re = Array2::zeros(im.dim());
        Self::new(re, im)
    }

    /// The centered unit impulse of side `k`.
    pub fn impulse(k: usize) -> Self {
        let mut re = Array2::zeros((k, k));
        re[[k / 2, k / 2]] = 1.0;
        Self {
            re,
            im: Array2::zeros((k, k)),
        }
    }

    pub fn side(&self) -> usize {
        self.re.nrows()
    }

    pub fn part(&self, part: Part) -> &Array2<f64> {
        match part {
            Part::Re => &self.re,
            Part::Im => &self.im,
        }
    }
}

/// Which constituent of a complex filter (or response) is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Part {
    Re,
    Im,
}

impl Part {
    pub fn name(self) -> &'static str {
        match self {
            Part::Re => "re",
            Part::Im => "im",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BankKind {
    GaborStd,
    GaborCond,
    Pca,
    Ica,
}

impl BankKind {
    pub fn name(self) -> &'static str {
        match self {
            BankKind::GaborStd => "gabor_std",
            BankKind::GaborCond => "gabor_cond",
            BankKind::Pca => "pca",
            BankKind::Ica => "ica",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gabor_std" => BankKind::GaborStd,
            "gabor_cond" => BankKind::GaborCond,
            "pca" => BankKind::Pca,
            "ica" => BankKind::Ica,
            _ => return None,
        })
    }

    pub fn is_gabor(self) -> bool {
        matches!(self, BankKind::GaborStd | BankKind::GaborCond)
    }
}

/// An ordered list of filters sharing one support.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    filters: Vec<ComplexFilter>,
    kind: BankKind,
    support: usize,
}

impl FilterBank {
    pub fn new(kind: BankKind, filters: Vec<ComplexFilter>) -> Result<Self> {
        let support = filters
            .first()
            .map(ComplexFilter::side)
            .ok_or_else(|| input("filter bank must hold at least one filter"))?;
        if let Some(bad) = filters.iter().find(|f| f.side() != support) {
            return Err(input(format!(
                "mixed supports in bank: {support} and {}",
                bad.side()
            )));
        }
        Ok(Self {
            filters,
            kind,
            support,
        })
    }

    pub fn filters(&self) -> &[ComplexFilter] {
        &self.filters
    }

    pub fn kind(&self) -> BankKind {
        self.kind
    }

    pub fn support(&self) -> usize {
        self.support
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// Real-valued bank holding the chosen plane of every filter.
    pub fn part_as_real(&self, part: Part) -> FilterBank {
        let filters = self
            .filters
            .iter()
            .map(|f| ComplexFilter {
                re: f.part(part).clone(),
                im: Array2::zeros(f.re.dim()),
            })
            .collect();
        FilterBank {
            filters,
            kind: self.kind,
            support: self.support,
        }
    }
}
