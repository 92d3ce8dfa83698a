//! End-to-end descriptor extraction: offspring filters, encoding, block
//! histograms, pooling and normalization.

use ndarray::Array2;
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::conv::Backend;
use crate::descriptor::{assemble, raw_dim, BlockSpec};
use crate::diversify::{make_offspring, OffspringSet};
use crate::error::{input, Result};
use crate::filter::{BankKind, FilterBank};
use crate::gabor::condensed_ensemble;
use crate::learn::{bank_from_rows, learn_ica_filters, learn_pca_filters, sample_patches};
use crate::pooling::{normalize, pool, PoolSpec};

/// Learns the PCA or ICA bank the configured descriptor kind needs.
///
/// Returns `None` for the pure Gabor kind.
pub fn learn_bank(cfg: &PipelineConfig, images: &[Array2<f64>]) -> Result<Option<FilterBank>> {
    let Some(kind) = cfg.kind.learned_bank() else {
        return Ok(None);
    };
    let k = cfg.gabor.support;
    let patches = sample_patches(images, k, cfg.patches, cfg.seed)?;
    let bank = match kind {
        BankKind::Pca => bank_from_rows(&learn_pca_filters(&patches, cfg.learned_filters)?.w_pca, k, BankKind::Pca)?,
        BankKind::Ica => {
            let model = learn_ica_filters(&patches, cfg.learned_filters, cfg.seed)?;
            bank_from_rows(&model.w_ica, k, BankKind::Ica)?
        }
        other => return Err(input(format!("{} is not a learned bank kind", other.name()))),
    };
    Ok(Some(bank))
}

/// One descriptor after pooling and normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f64>,
    /// The pooled histogram was all zeros.
    pub was_zero: bool,
}

#[derive(Debug, Clone)]
pub struct Extractor {
    pub offspring_re: OffspringSet,
    pub offspring_im: OffspringSet,
    pub blocks: BlockSpec,
    pub pool: PoolSpec,
    pub backend: Backend,
    pub image_size: Option<(usize, usize)>,
}

impl Extractor {
    /// Builds the offspring sets for `cfg`; `learned` must be given for learned kinds.
    pub fn new(cfg: &PipelineConfig, learned: Option<&FilterBank>) -> Result<Self> {
        cfg.validate()?;
        let gabor = condensed_ensemble(&cfg.gabor)?;
        let (re, im) = make_offspring(cfg.kind, cfg.folds, &gabor, learned)?;
        Self::from_offspring(re, im, cfg)
    }

    pub fn from_offspring(offspring_re: OffspringSet, offspring_im: OffspringSet, cfg: &PipelineConfig) -> Result<Self> {
        if offspring_re.fold_sizes() != offspring_im.fold_sizes() {
            return Err(input("real and imaginary offspring sets differ in fold shape"));
        }
        let ex = Self {
            offspring_re,
            offspring_im,
            blocks: cfg.blocks(),
            pool: cfg.pool,
            backend: cfg.backend,
            image_size: cfg.image_size,
        };
        ex.dim()?;
        Ok(ex)
    }

    pub fn raw_dim(&self) -> usize {
        raw_dim(&self.offspring_re, &self.blocks)
    }

    /// Length after pooling.
    pub fn dim(&self) -> Result<usize> {
        self.pool.output_len(self.raw_dim())
    }

    pub fn describe(&self, image: &Array2<f64>) -> Result<Descriptor> {
        if let Some(want) = self.image_size {
            if image.dim() != want {
                return Err(input(format!("image is {:?}, expected {:?}", image.dim(), want)));
            }
        }
        let raw = assemble(image, &self.offspring_re, &self.offspring_im, &self.blocks, self.backend)?;
        let pooled = pool(&raw.values, &self.pool)?;
        let n = normalize(&pooled)?;
        Ok(Descriptor {
            values: n.values,
            was_zero: n.was_zero,
        })
    }

    /// Describes every image in parallel; row `i` belongs to `images[i]`.
    pub fn describe_batch(&self, images: &[Array2<f64>]) -> Result<Array2<f64>> {
        let d = self.dim()?;
        let rows = images
            .par_iter()
            .map(|img| self.describe(img))
            .collect::<Result<Vec<_>>>()?;
        let zeros = rows.iter().filter(|r| r.was_zero).count();
        if zeros > 0 {
            log::warn!("{zeros} descriptor(s) had an all-zero histogram");
        }
        let mut out = Array2::zeros((images.len(), d));
        for (mut row, desc) in out.rows_mut().into_iter().zip(rows) {
            row.assign(&ndarray::ArrayView1::from(&desc.values));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::hflip;
    use crate::synth::{synth_corpus, SynthOptions};

    fn small_cfg() -> PipelineConfig {
        let mut cfg = PipelineConfig::preset("feret1").unwrap();
        cfg.gabor.support = 5;
        cfg.grid_rows = 2;
        cfg.grid_cols = 2;
        cfg
    }

    #[test]
    fn feret_dims() {
        let ex = Extractor::new(&PipelineConfig::preset("feret1").unwrap(), None).unwrap();
        assert_eq!(ex.raw_dim(), 262_144);
        assert_eq!(ex.dim().unwrap(), 131_072);
        assert_eq!(ex.offspring_re.side(), 13);
        let ex = Extractor::new(&PipelineConfig::preset("lfw_hpen").unwrap(), None).unwrap();
        assert_eq!(ex.dim().unwrap(), 90_112);
    }

    #[test]
    fn batch_matches_single_and_is_unit() {
        let cfg = small_cfg();
        let ex = Extractor::new(&cfg, None).unwrap();
        let corpus = synth_corpus(&SynthOptions::new(2, 2, (24, 20), 1)).unwrap();
        let batch = ex.describe_batch(&corpus.images).unwrap();
        assert_eq!(batch.dim(), (4, ex.dim().unwrap()));
        for (i, img) in corpus.images.iter().enumerate() {
            let d = ex.describe(img).unwrap();
            assert_eq!(batch.row(i).to_vec(), d.values);
            let norm: f64 = d.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flipped_constant_image_is_unchanged() {
        let ex = Extractor::new(&small_cfg(), None).unwrap();
        let img = Array2::from_elem((16, 16), 77.0);
        assert_eq!(ex.describe(&img).unwrap(), ex.describe(&hflip(&img)).unwrap());
    }

    #[test]
    fn size_check() {
        let mut cfg = small_cfg();
        cfg.image_size = Some((16, 16));
        let ex = Extractor::new(&cfg, None).unwrap();
        assert!(ex.describe(&Array2::zeros((16, 15))).is_err());
    }

    #[test]
    fn learned_kinds() {
        let corpus = synth_corpus(&SynthOptions::new(2, 2, (24, 24), 1)).unwrap();
        for kind in ["gabor-pca", "gabor-ica"] {
            let mut cfg = small_cfg();
            cfg.set("kind", kind).unwrap();
            cfg.patches = 2000;
            let bank = learn_bank(&cfg, &corpus.images).unwrap().unwrap();
            assert_eq!(bank.len(), 8);
            assert!(Extractor::new(&cfg, None).is_err());
            let ex = Extractor::new(&cfg, Some(&bank)).unwrap();
            assert_eq!(ex.offspring_re.len(), 64);
            ex.describe(&corpus.images[0]).unwrap();
        }
        assert!(learn_bank(&small_cfg(), &corpus.images).unwrap().is_none());
    }
}
