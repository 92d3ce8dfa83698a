//! Multi-fold filter-to-filter convolution.
//!
//! Cross-convolving `M` banks of `F_1..F_M` filters of side `k` yields
//! `L = F_1 * ... * F_M` offspring of side `M(k-1)+1`. Offspring are enumerated with
//! the last fold varying fastest, so the logical index of fold choice
//! `(i_1, .., i_M)` is `((i_1 * F_2 + i_2) * F_3 + ..) + i_M` (zero-based).

use ndarray::{s, Array2};

use crate::conv::conv2_full;
use crate::error::{input, Error, Result};
use crate::filter::{BankKind, ComplexFilter, FilterBank, Part};

/// Fold composition of an offspring set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OffspringKind {
    GaborGabor,
    GaborPca,
    GaborIca,
    PcaPca,
    IcaIca,
    Generic,
}

impl OffspringKind {
    pub fn name(self) -> &'static str {
        match self {
            OffspringKind::GaborGabor => "gabor_gabor",
            OffspringKind::GaborPca => "gabor_pca",
            OffspringKind::GaborIca => "gabor_ica",
            OffspringKind::PcaPca => "pca_pca",
            OffspringKind::IcaIca => "ica_ica",
            OffspringKind::Generic => "generic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gabor_gabor" => OffspringKind::GaborGabor,
            "gabor_pca" => OffspringKind::GaborPca,
            "gabor_ica" => OffspringKind::GaborIca,
            "pca_pca" => OffspringKind::PcaPca,
            "ica_ica" => OffspringKind::IcaIca,
            "generic" => OffspringKind::Generic,
            _ => return None,
        })
    }

    fn infer(folds: &[FilterBank]) -> Self {
        let kinds: Vec<BankKind> = folds.iter().map(FilterBank::kind).collect();
        let (last, head) = kinds.split_last().expect("nonempty folds");
        if kinds.iter().all(|k| k.is_gabor()) {
            return OffspringKind::GaborGabor;
        }
        if head.iter().all(|k| k.is_gabor()) && !head.is_empty() {
            return match last {
                BankKind::Pca => OffspringKind::GaborPca,
                BankKind::Ica => OffspringKind::GaborIca,
                _ => OffspringKind::Generic,
            };
        }
        if kinds.iter().all(|&k| k == BankKind::Pca) {
            return OffspringKind::PcaPca;
        }
        if kinds.iter().all(|&k| k == BankKind::Ica) {
            return OffspringKind::IcaIca;
        }
        OffspringKind::Generic
    }
}

/// Descriptor family selecting which folds feed the diversification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DescriptorKind {
    Gabor,
    GaborPca,
    GaborIca,
}

impl DescriptorKind {
    pub fn name(self) -> &'static str {
        match self {
            DescriptorKind::Gabor => "gabor",
            DescriptorKind::GaborPca => "gabor-pca",
            DescriptorKind::GaborIca => "gabor-ica",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.replace('_', "-").as_str() {
            "gabor" => DescriptorKind::Gabor,
            "gabor-pca" => DescriptorKind::GaborPca,
            "gabor-ica" => DescriptorKind::GaborIca,
            _ => return None,
        })
    }

    pub fn learned_bank(self) -> Option<BankKind> {
        match self {
            DescriptorKind::Gabor => None,
            DescriptorKind::GaborPca => Some(BankKind::Pca),
            DescriptorKind::GaborIca => Some(BankKind::Ica),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffspringSet {
    /// Computed filters; when `dedup` is set, only the unique representatives.
    filters: Vec<ComplexFilter>,
    fold_sizes: Vec<usize>,
    side: usize,
    kind: OffspringKind,
    /// Every fold was the same bank, so fold order is interchangeable.
    self_cross: bool,
    /// Logical offspring index to position in `filters`.
    dedup: Option<Vec<usize>>,
}

impl OffspringSet {
    /// Reassembles a set from stored parts, checking the cardinality laws.
    pub fn from_parts(
        kind: OffspringKind,
        fold_sizes: Vec<usize>,
        filters: Vec<ComplexFilter>,
        self_cross: bool,
        dedup: Option<Vec<usize>>,
    ) -> Result<Self> {
        if fold_sizes.is_empty() || fold_sizes.contains(&0) {
            return Err(input("fold sizes must be nonempty and positive"));
        }
        let side = filters
            .first()
            .map(ComplexFilter::side)
            .ok_or_else(|| input("offspring set has no filters"))?;
        if filters.iter().any(|f| f.side() != side) {
            return Err(input("offspring filters differ in side"));
        }
        let logical: usize = fold_sizes.iter().product();
        match &dedup {
            Some(map) => {
                if map.len() != logical || map.iter().any(|&u| u >= filters.len()) {
                    return Err(input("dedup map does not cover the logical offspring"));
                }
            }
            None if filters.len() != logical => {
                return Err(input(format!(
                    "{} filters stored but fold sizes imply {logical}",
                    filters.len()
                )));
            }
            None => {}
        }
        Ok(Self {
            filters,
            fold_sizes,
            side,
            kind,
            self_cross,
            dedup,
        })
    }

    /// Logical offspring count `L`.
    pub fn len(&self) -> usize {
        self.fold_sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn unique_count(&self) -> usize {
        self.filters.len()
    }

    pub fn unique_filters(&self) -> &[ComplexFilter] {
        &self.filters
    }

    /// Filter at logical index `l` (zero-based).
    pub fn filter(&self, l: usize) -> &ComplexFilter {
        &self.filters[self.unique_index(l)]
    }

    pub fn unique_index(&self, l: usize) -> usize {
        match &self.dedup {
            Some(map) => map[l],
            None => l,
        }
    }

    pub fn dedup_map(&self) -> Option<&[usize]> {
        self.dedup.as_deref()
    }

    pub fn fold_sizes(&self) -> &[usize] {
        &self.fold_sizes
    }

    pub fn folds(&self) -> usize {
        self.fold_sizes.len()
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn kind(&self) -> OffspringKind {
        self.kind
    }

    pub fn is_self_cross(&self) -> bool {
        self.self_cross
    }

    /// Responses per feature image, `F_M`.
    pub fn bits(&self) -> usize {
        *self.fold_sizes.last().expect("nonempty folds")
    }

    /// Feature image count `T = F_1 * .. * F_{M-1}`.
    pub fn feature_images(&self) -> usize {
        self.fold_sizes[..self.fold_sizes.len() - 1].iter().product()
    }

    /// Same set with every filter reduced to its central `k x k` window.
    pub fn cropped(&self, k: usize) -> Result<Self> {
        let filters = self
            .filters
            .iter()
            .map(|f| central_crop(f, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            filters,
            side: k,
            ..self.clone()
        })
    }

    fn with_part(mut self, part: Part) -> Self {
        if part == Part::Im {
            for f in &mut self.filters {
                std::mem::swap(&mut f.re, &mut f.im);
            }
        }
        self
    }
}

/// Full convolution of two complex filters.
pub fn conv2_full_complex(a: &ComplexFilter, b: &ComplexFilter) -> ComplexFilter {
    let a_im_zero = a.im.iter().all(|&v| v == 0.0);
    let b_im_zero = b.im.iter().all(|&v| v == 0.0);
    let mut re = conv2_full(&a.re, &b.re);
    let mut im = Array2::zeros(re.dim());
    if !a_im_zero && !b_im_zero {
        re -= &conv2_full(&a.im, &b.im);
    }
    if !b_im_zero {
        im += &conv2_full(&a.re, &b.im);
    }
    if !a_im_zero {
        im += &conv2_full(&a.im, &b.re);
    }
    ComplexFilter { re, im }
}

/// Cross-convolves one filter from each fold, for every fold combination.
pub fn mffc(folds: &[FilterBank]) -> Result<OffspringSet> {
    let first = folds.first().ok_or_else(|| input("M-FFC needs at least one fold"))?;
    let k = first.support();
    if let Some(bad) = folds.iter().find(|b| b.support() != k) {
        return Err(input(format!(
            "mixed fold supports: {k} and {}",
            bad.support()
        )));
    }
    let mut partial: Vec<ComplexFilter> = first.filters().to_vec();
    for bank in &folds[1..] {
        let mut next = Vec::with_capacity(partial.len() * bank.len());
        for p in &partial {
            for f in bank.filters() {
                next.push(conv2_full_complex(p, f));
            }
        }
        partial = next;
    }
    let self_cross = folds.len() > 1 && folds.iter().all(|b| b == first);
    OffspringSet::from_parts(
        OffspringKind::infer(folds),
        folds.iter().map(FilterBank::len).collect(),
        partial,
        self_cross,
        None,
    )
}

fn decode(mut l: usize, sizes: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; sizes.len()];
    for (slot, &f) in idx.iter_mut().zip(sizes).rev() {
        *slot = l % f;
        l /= f;
    }
    idx
}

fn encode(idx: &[usize], sizes: &[usize]) -> usize {
    idx.iter().zip(sizes).fold(0, |acc, (&i, &f)| acc * f + i)
}

/// Keeps only offspring whose fold indices are nondecreasing; every other logical
/// index resolves to the offspring of its sorted index tuple.
pub fn dedup_commutative(set: &OffspringSet) -> Result<OffspringSet> {
    if !set.self_cross {
        return Err(Error::Contract(
            "commutative dedup requires every fold to be the same bank".into(),
        ));
    }
    if set.dedup.is_some() {
        return Ok(set.clone());
    }
    let sizes = &set.fold_sizes;
    let mut kept = Vec::new();
    let mut position = vec![usize::MAX; set.len()];
    for (l, pos) in position.iter_mut().enumerate() {
        let idx = decode(l, sizes);
        if idx.windows(2).all(|w| w[0] <= w[1]) {
            *pos = kept.len();
            kept.push(set.filters[l].clone());
        }
    }
    let map = (0..set.len())
        .map(|l| {
            let mut idx = decode(l, sizes);
            idx.sort_unstable();
            position[encode(&idx, sizes)]
        })
        .collect();
    OffspringSet::from_parts(set.kind, sizes.clone(), kept, true, Some(map))
}

/// Central `k x k` window of both planes.
pub fn central_crop(f: &ComplexFilter, k: usize) -> Result<ComplexFilter> {
    let side = f.side();
    if k.is_multiple_of(2) || k > side || !(side - k).is_multiple_of(2) {
        return Err(input(format!("cannot crop a {side}x{side} filter to {k}x{k}")));
    }
    let o = (side - k) / 2;
    Ok(ComplexFilter {
        re: f.re.slice(s![o..o + k, o..o + k]).to_owned(),
        im: f.im.slice(s![o..o + k, o..o + k]).to_owned(),
    })
}

/// Builds the real-part and imaginary-part offspring sets of a descriptor.
///
/// The first `M-1` folds are the condensed Gabor bank (all `M` folds for
/// [`DescriptorKind::Gabor`]); learned kinds take the real learned bank as fold `M`.
/// The real-part set cross-convolves Gabor real planes and is stored in the `re`
/// plane; the imaginary-part set uses Gabor imaginary planes and is stored in `im`.
pub fn make_offspring(
    kind: DescriptorKind,
    folds: usize,
    gabor: &FilterBank,
    learned: Option<&FilterBank>,
) -> Result<(OffspringSet, OffspringSet)> {
    if folds == 0 {
        return Err(input("fold count must be >= 1"));
    }
    if !gabor.kind().is_gabor() {
        return Err(input(format!(
            "expected a Gabor bank, got {}",
            gabor.kind().name()
        )));
    }
    let learned = match (kind.learned_bank(), learned) {
        (None, _) => None,
        (Some(_), _) if folds < 2 => {
            return Err(input("learned descriptor kinds need at least 2 folds"));
        }
        (Some(want), Some(bank)) if bank.kind() == want => Some(bank),
        (Some(want), Some(bank)) => {
            return Err(input(format!(
                "descriptor {} needs a {} bank, got {}",
                kind.name(),
                want.name(),
                bank.kind().name()
            )));
        }
        (Some(want), None) => {
            return Err(input(format!(
                "descriptor {} needs a learned {} bank",
                kind.name(),
                want.name()
            )));
        }
    };

    let build = |part: Part| -> Result<OffspringSet> {
        let g = gabor.part_as_real(part);
        let mut banks = vec![g; if learned.is_some() { folds - 1 } else { folds }];
        if let Some(l) = learned {
            banks.push(l.part_as_real(Part::Re));
        }
        let set = mffc(&banks)?;
        let set = if set.self_cross { dedup_commutative(&set)? } else { set };
        Ok(set.with_part(part))
    };
    Ok((build(Part::Re)?, build(Part::Im)?))
}
