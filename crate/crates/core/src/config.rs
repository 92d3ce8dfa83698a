//! Pipeline configuration: named presets, `key=value` files and overrides.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::conv::{Backend, DEFAULT_CROSSOVER};
use crate::descriptor::{BlockSpec, Overlap};
use crate::diversify::DescriptorKind;
use crate::error::{param, Result};
use crate::gabor::GaborParams;
use crate::pooling::{PoolMode, PoolSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub preset: String,
    pub gabor: GaborParams,
    pub kind: DescriptorKind,
    pub folds: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub overlap: Overlap,
    pub pool: PoolSpec,
    pub wpca_q: usize,
    /// Patches sampled for filter learning.
    pub patches: usize,
    /// Learned filters per bank.
    pub learned_filters: usize,
    pub seed: u64,
    pub backend: Backend,
    /// Expected `(h, w)` of every input image.
    pub image_size: Option<(usize, usize)>,
}

pub const PRESETS: [&str; 6] = ["feret1", "feret2", "ar", "lfw_a", "lfw_hpen", "ytf"];

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::preset("feret1").expect("builtin preset")
    }
}

impl PipelineConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let (rows, cols, overlap, p, q) = match name {
            "feret1" => (8, 8, Overlap::None, 2, 1000),
            "feret2" => (8, 8, Overlap::Half, 2, 300),
            "ar" => (8, 8, Overlap::None, 2, 180),
            "lfw_a" => (10, 6, Overlap::Half, 2, 2000),
            "lfw_hpen" => (11, 8, Overlap::Half, 4, 2000),
            "ytf" => (8, 6, Overlap::Half, 2, 2000),
            _ => return Err(param(format!("unknown preset `{name}` (known: {})", PRESETS.join(", ")))),
        };
        Ok(Self {
            preset: name.to_string(),
            gabor: GaborParams::default(),
            kind: DescriptorKind::Gabor,
            folds: 2,
            grid_rows: rows,
            grid_cols: cols,
            overlap,
            pool: PoolSpec::avg(p),
            wpca_q: q,
            patches: 500_000,
            learned_filters: 8,
            seed: 0,
            backend: Backend::Auto { crossover: DEFAULT_CROSSOVER },
            image_size: None,
        })
    }

    pub fn blocks(&self) -> BlockSpec {
        BlockSpec::new(self.grid_rows, self.grid_cols, self.overlap)
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim().parse().map_err(|_| param(format!("bad value `{v}` for `{key}`")))
        }
        let v = value.trim();
        match key.trim() {
            "preset" => {
                let keep_size = self.image_size;
                *self = Self::preset(v)?;
                self.image_size = keep_size;
            }
            "sigma" => self.gabor.sigma = num(key, v)?,
            "k_max" => self.gabor.k_max = num(key, v)?,
            "f" => self.gabor.f = num(key, v)?,
            "u_max" => self.gabor.u_max = num(key, v)?,
            "v_max" => self.gabor.v_max = num(key, v)?,
            "support" => self.gabor.support = num(key, v)?,
            "kind" => {
                self.kind = DescriptorKind::parse(v).ok_or_else(|| param(format!("unknown kind `{v}`")))?
            }
            "folds" => self.folds = num(key, v)?,
            "grid" => {
                let (r, c) = parse_pair(v).ok_or_else(|| param(format!("grid must be RxC, got `{v}`")))?;
                self.grid_rows = r;
                self.grid_cols = c;
            }
            "overlap" => self.overlap = Overlap::from_ratio(num(key, v)?)?,
            "pool_window" => self.pool.window = num(key, v)?,
            "pool_stride" => self.pool.stride = num(key, v)?,
            "pool_mode" => {
                self.pool.mode = PoolMode::parse(v).ok_or_else(|| param(format!("unknown pool mode `{v}`")))?
            }
            "wpca_q" => self.wpca_q = num(key, v)?,
            "patches" => self.patches = num(key, v)?,
            "learned_filters" => self.learned_filters = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "backend" => {
                let crossover = match self.backend {
                    Backend::Auto { crossover } => crossover,
                    _ => DEFAULT_CROSSOVER,
                };
                self.backend = match v {
                    "auto" => Backend::Auto { crossover },
                    _ => Backend::parse(v).ok_or_else(|| param(format!("unknown backend `{v}`")))?,
                };
            }
            "crossover" => {
                let c = num(key, v)?;
                if let Backend::Auto { crossover } = &mut self.backend {
                    *crossover = c;
                }
            }
            "image_size" => {
                self.image_size = if v == "any" {
                    None
                } else {
                    Some(parse_pair(v).ok_or_else(|| param(format!("image_size must be HxW, got `{v}`")))?)
                }
            }
            other => return Err(param(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses a config file. A `preset=` line, if present, is applied first.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| param(format!("line {}: expected key=value", no + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = match pairs.iter().find(|(k, _)| k == "preset") {
            Some((_, p)) => Self::preset(p)?,
            None => Self::default(),
        };
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.gabor.validate()?;
        if self.folds == 0 {
            return Err(param("folds must be >= 1"));
        }
        if self.kind.learned_bank().is_some() && self.folds < 2 {
            return Err(param("learned descriptor kinds need folds >= 2"));
        }
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(param("grid must be nonzero"));
        }
        if self.pool.window == 0 || self.pool.stride == 0 {
            return Err(param("pool window and stride must be >= 1"));
        }
        if self.learned_filters == 0 || self.learned_filters > self.gabor.support * self.gabor.support {
            return Err(param("learned_filters must be in 1..=support^2"));
        }
        Ok(())
    }

    /// Canonical `key=value` text; reparsing it gives back the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let g = &self.gabor;
        let _ = writeln!(s, "preset={}", self.preset);
        let _ = writeln!(s, "sigma={:?}", g.sigma);
        let _ = writeln!(s, "k_max={:?}", g.k_max);
        let _ = writeln!(s, "f={:?}", g.f);
        let _ = writeln!(s, "u_max={}", g.u_max);
        let _ = writeln!(s, "v_max={}", g.v_max);
        let _ = writeln!(s, "support={}", g.support);
        let _ = writeln!(s, "kind={}", self.kind.name());
        let _ = writeln!(s, "folds={}", self.folds);
        let _ = writeln!(s, "grid={}x{}", self.grid_rows, self.grid_cols);
        let _ = writeln!(s, "overlap={:?}", self.overlap.ratio());
        let _ = writeln!(s, "pool_window={}", self.pool.window);
        let _ = writeln!(s, "pool_stride={}", self.pool.stride);
        let _ = writeln!(s, "pool_mode={}", self.pool.mode.name());
        let _ = writeln!(s, "wpca_q={}", self.wpca_q);
        let _ = writeln!(s, "patches={}", self.patches);
        let _ = writeln!(s, "learned_filters={}", self.learned_filters);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "backend={}", self.backend.name());
        if let Backend::Auto { crossover } = self.backend {
            let _ = writeln!(s, "crossover={crossover}");
        }
        match self.image_size {
            Some((h, w)) => {
                let _ = writeln!(s, "image_size={h}x{w}");
            }
            None => {
                let _ = writeln!(s, "image_size=any");
            }
        }
        s
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest[..8].iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

fn parse_pair(v: &str) -> Option<(usize, usize)> {
    let (a, b) = v.split_once(['x', 'X', '×'])?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_table() {
        let want = [
            ("feret1", 8, 8, Overlap::None, 2, 1000),
            ("feret2", 8, 8, Overlap::Half, 2, 300),
            ("ar", 8, 8, Overlap::None, 2, 180),
            ("lfw_a", 10, 6, Overlap::Half, 2, 2000),
            ("lfw_hpen", 11, 8, Overlap::Half, 4, 2000),
            ("ytf", 8, 6, Overlap::Half, 2, 2000),
        ];
        for (name, r, c, o, p, q) in want {
            let cfg = PipelineConfig::preset(name).unwrap();
            assert_eq!((cfg.grid_rows, cfg.grid_cols, cfg.overlap), (r, c, o), "{name}");
            assert_eq!((cfg.pool.window, cfg.pool.stride, cfg.pool.mode), (p, p, PoolMode::Avg));
            assert_eq!(cfg.wpca_q, q);
            assert_eq!(cfg.learned_filters, 8);
            assert_eq!(cfg.patches, 500_000);
            cfg.validate().unwrap();
        }
        assert!(PipelineConfig::preset("lfw").is_err());
    }

    #[test]
    fn text_roundtrip_and_hash() {
        let mut cfg = PipelineConfig::preset("lfw_a").unwrap();
        cfg.set("kind", "gabor_ica").unwrap();
        cfg.set("backend", "fft").unwrap();
        cfg.set("image_size", "80x64").unwrap();
        cfg.set("sigma", "5.5").unwrap();
        let back = PipelineConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 16);
        let mut other = cfg.clone();
        other.seed = 1;
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn parse_orders_preset_first() {
        let cfg = PipelineConfig::parse("wpca_q = 5\n# comment\npreset=ar\n\ngrid=4x2\n").unwrap();
        assert_eq!(cfg.preset, "ar");
        assert_eq!(cfg.wpca_q, 5);
        assert_eq!((cfg.grid_rows, cfg.grid_cols), (4, 2));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PipelineConfig::parse("nonsense").is_err());
        assert!(PipelineConfig::parse("colour=red").is_err());
        assert!(PipelineConfig::parse("folds=x").is_err());
        assert!(PipelineConfig::parse("overlap=0.25").is_err());
        assert!(PipelineConfig::parse("kind=gabor-pca\nfolds=1").is_err());
        assert!(PipelineConfig::parse("learned_filters=50").is_err());
    }
}
