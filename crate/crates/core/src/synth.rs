//! Synthetic face-like corpus for smoke tests and benchmarks.
//!
//! Each class owns a base pattern built from a few oriented sinusoid gratings and
//! Gaussian blobs. Samples are integer translations of the base (at most
//! `max_shift` pixels per axis) plus Gaussian pixel noise, quantized to 8 bits.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{param, Result};
use crate::eval::Pair;
use crate::io::{write_pgm, DatasetManifest, ManifestEntry, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitScheme {
    /// The first `gallery` samples of every class go to the gallery, the rest are probes.
    GalleryProbe { gallery: usize },
    /// Classes are dealt round-robin into `k` subject-disjoint folds.
    Folds(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub classes: usize,
    pub per_class: usize,
    pub size: (usize, usize),
    pub noise_sigma: f64,
    pub max_shift: usize,
    pub seed: u64,
    pub split: SplitScheme,
}

impl SynthOptions {
    pub fn new(classes: usize, per_class: usize, size: (usize, usize), seed: u64) -> Self {
        Self {
            classes,
            per_class,
            size,
            noise_sigma: 10.0,
            max_shift: 2,
            seed,
            split: SplitScheme::GalleryProbe { gallery: 1 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub images: Vec<Array2<f64>>,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
}

impl SynthCorpus {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn file_name(&self, i: usize) -> String {
        let within = self.labels[..i].iter().filter(|&&l| l == self.labels[i]).count();
        format!("c{:03}_s{:03}.pgm", self.labels[i], within)
    }

    pub fn manifest(&self, root: &Path) -> Result<DatasetManifest> {
        let entries = (0..self.len())
            .map(|i| ManifestEntry {
                path: self.file_name(i),
                subject_id: format!("c{:03}", self.labels[i]),
                split: self.splits[i].clone(),
                flip_of: None,
            })
            .collect();
        DatasetManifest::new(entries, root)
    }

    /// Writes every image as PGM plus `manifest.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<DatasetManifest> {
        std::fs::create_dir_all(dir)?;
        for (i, img) in self.images.iter().enumerate() {
            write_pgm(&dir.join(self.file_name(i)), img)?;
        }
        let m = self.manifest(dir)?;
        m.write(&dir.join("manifest.csv"))?;
        Ok(m)
    }
}

fn base_pattern(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Array2<f64> {
    let gratings: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let freq = rng.random_range(0.06..0.22) * 2.0 * PI;
            let theta = rng.random_range(0.0..PI);
            (freq * theta.cos(), freq * theta.sin(), rng.random_range(0.0..2.0 * PI), rng.random_range(0.4..1.0))
        })
        .collect();
    let blobs: Vec<(f64, f64, f64, f64)> = (0..5)
        .map(|_| {
            (
                rng.random_range(0.0..h as f64),
                rng.random_range(0.0..w as f64),
                rng.random_range(2.0..(h.min(w) as f64 / 6.0).max(2.5)),
                rng.random_range(-1.5..1.5),
            )
        })
        .collect();
    Array2::from_shape_fn((h, w), |(r, c)| {
        let (y, x) = (r as f64, c as f64);
        let g: f64 = gratings.iter().map(|&(kx, ky, ph, a)| a * (kx * x + ky * y + ph).sin()).sum();
        let b: f64 = blobs
            .iter()
            .map(|&(cy, cx, rad, a)| a * (-((y - cy).powi(2) + (x - cx).powi(2)) / (2.0 * rad * rad)).exp())
            .sum();
        128.0 + 30.0 * (g + b)
    })
}

pub fn synth_corpus(opts: &SynthOptions) -> Result<SynthCorpus> {
    if opts.classes < 2 {
        return Err(param("synthetic corpus needs at least 2 classes"));
    }
    let (h, w) = opts.size;
    if h == 0 || w == 0 || opts.per_class == 0 {
        return Err(param("image size and per-class count must be nonzero"));
    }
    if opts.noise_sigma.is_nan() || opts.noise_sigma < 0.0 {
        return Err(param("noise sigma must be >= 0"));
    }
    match opts.split {
        SplitScheme::GalleryProbe { gallery } if gallery == 0 || gallery >= opts.per_class => {
            return Err(param("gallery count must be in 1..per_class"));
        }
        SplitScheme::Folds(k) if k < 2 || k > opts.classes => {
            return Err(param("fold count must be in 2..=classes"));
        }
        _ => {}
    }
    let m = opts.max_shift;
    let noise = Normal::new(0.0, opts.noise_sigma).expect("finite sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = SynthCorpus {
        images: Vec::new(),
        labels: Vec::new(),
        splits: Vec::new(),
    };
    for class in 0..opts.classes {
        let base = base_pattern(&mut rng, h + 2 * m, w + 2 * m);
        for sample in 0..opts.per_class {
            let dy = rng.random_range(0..=2 * m);
            let dx = rng.random_range(0..=2 * m);
            let mut img = base.slice(s![dy..dy + h, dx..dx + w]).to_owned();
            if opts.noise_sigma > 0.0 {
                img.mapv_inplace(|v| v + noise.sample(&mut rng));
            }
            img.mapv_inplace(|v| v.round().clamp(0.0, 255.0));
            out.images.push(img);
            out.labels.push(class);
            out.splits.push(match opts.split {
                SplitScheme::GalleryProbe { gallery } if sample < gallery => Split::Gallery,
                SplitScheme::GalleryProbe { .. } => Split::Probe,
                SplitScheme::Folds(k) => Split::Fold(class % k + 1),
            });
        }
    }
    Ok(out)
}

/// Draws `per_fold` same pairs and `per_fold` not-same pairs inside every fold.
///
/// Indices refer to positions in `labels`/`splits`. Pairs never join an image with
/// itself.
pub fn fold_pairs(labels: &[usize], splits: &[Split], per_fold: usize, seed: u64) -> Result<Vec<Vec<Pair>>> {
    let k = splits
        .iter()
        .filter_map(|s| match s {
            Split::Fold(f) => Some(*f),
            _ => None,
        })
        .max()
        .ok_or_else(|| param("no fold splits present"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = Vec::with_capacity(k);
    for f in 1..=k {
        let members: Vec<usize> = (0..splits.len()).filter(|&i| splits[i] == Split::Fold(f)).collect();
        let mut same = Vec::new();
        let mut diff = Vec::new();
        for (x, &a) in members.iter().enumerate() {
            for &b in &members[x + 1..] {
                if labels[a] == labels[b] {
                    same.push((a, b));
                } else {
                    diff.push((a, b));
                }
            }
        }
        if same.is_empty() || diff.is_empty() {
            return Err(param(format!("fold {f} cannot form both same and not-same pairs")));
        }
        let mut pairs = Vec::with_capacity(2 * per_fold);
        for (pool, is_same) in [(&same, true), (&diff, false)] {
            for _ in 0..per_fold {
                let (a, b) = pool[rng.random_range(0..pool.len())];
                pairs.push(Pair { a, b, same: is_same });
            }
        }
        folds.push(pairs);
    }
    Ok(folds)
}
