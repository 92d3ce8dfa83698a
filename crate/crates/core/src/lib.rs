//! Multi-fold filter convolution face descriptors.
//!
//! Gabor, PCA and ICA filter banks are cross-convolved into offspring filters.
//! Image responses are binarized, packed into integer feature images and summarized
//! by block histograms, which are pooled, square-rooted and L2-normalized.
//! Whitening PCA and the identification/verification protocols sit on top.

pub mod config;
pub mod conv;
pub mod descriptor;
pub mod diversify;
pub mod error;
pub mod eval;
pub mod filter;
pub mod gabor;
pub mod io;
pub mod learn;
mod linalg;
pub mod pipeline;
pub mod pooling;
pub mod synth;
pub mod wpca;

pub use config::PipelineConfig;
pub use conv::Backend;
pub use descriptor::{BlockSpec, Overlap};
pub use diversify::{make_offspring, DescriptorKind, OffspringKind, OffspringSet};
pub use error::{Error, Result};
pub use filter::{BankKind, ComplexFilter, FilterBank, Part};
pub use gabor::GaborParams;
pub use pipeline::{Extractor, Descriptor};
pub use pooling::{PoolMode, PoolSpec};
pub use wpca::WpcaModel;
