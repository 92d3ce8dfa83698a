//! PCA and ICA filter ensembles learned from mean-removed local patches.
//!
//! Patches are vectorized column-major (`index = col * k + row`) everywhere in the
//! crate; [`bank_from_rows`] and [`vectorize`] are the two directions of that map.

use log::warn;
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{input, param, Error, Result};
use crate::filter::{BankKind, ComplexFilter, FilterBank};
use crate::linalg::{sym_eigen, sym_orthogonalize};

/// Eigenvalues below this fraction of the largest are treated as rank loss.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// `k^2 x N` matrix whose columns are vectorized zero-mean patches.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    data: Array2<f64>,
    side: usize,
}

impl PatchMatrix {
    /// Wraps columns that are already mean-removed.
    pub fn from_columns(data: Array2<f64>, side: usize) -> Result<Self> {
        if data.nrows() != side * side {
            return Err(input(format!(
                "patch rows {} do not match side {side}^2",
                data.nrows()
            )));
        }
        if data.ncols() == 0 {
            return Err(input("patch matrix has no columns"));
        }
        let tol = 1e-9 * (side * side) as f64;
        for (j, col) in data.axis_iter(Axis(1)).enumerate() {
            let scale = col.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if col.sum().abs() > tol * scale {
                return Err(input(format!("patch column {j} is not zero-mean")));
            }
        }
        Ok(Self { data, side })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn count(&self) -> usize {
        self.data.ncols()
    }
}

/// Draws `n` patches uniformly over every (image, position) pair, with replacement.
pub fn sample_patches(images: &[Array2<f64>], k: usize, n: usize, seed: u64) -> Result<PatchMatrix> {
    if k == 0 {
        return Err(param("patch side must be >= 1"));
    }
    if n == 0 {
        return Err(param("patch count must be >= 1"));
    }
    if images.is_empty() {
        return Err(input("no training images"));
    }
    let mut offsets = Vec::with_capacity(images.len() + 1);
    let mut total = 0usize;
    offsets.push(0);
    for (idx, img) in images.iter().enumerate() {
        let (h, w) = img.dim();
        if h < k || w < k {
            return Err(input(format!("image {idx} is {h}x{w}, smaller than patch side {k}")));
        }
        total += (h - k + 1) * (w - k + 1);
        offsets.push(total);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Array2::zeros((k * k, n));
    for j in 0..n {
        let pick = rng.random_range(0..total);
        let idx = offsets.partition_point(|&o| o <= pick) - 1;
        let img = &images[idx];
        let local = pick - offsets[idx];
        let positions_per_row = img.ncols() - k + 1;
        let (top, left) = (local / positions_per_row, local % positions_per_row);
        let mut col = data.column_mut(j);
        for c in 0..k {
            for r in 0..k {
                col[c * k + r] = img[[top + r, left + c]];
            }
        }
        let mean = col.sum() / (k * k) as f64;
        col -= mean;
    }
    Ok(PatchMatrix { data, side: k })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// `i x k^2`, rows are orthonormal eigenfilters.
    pub w_pca: Array2<f64>,
    /// Eigenvalues of the per-patch second-moment matrix `I' I'^T / N`.
    pub eigenvalues: Array1<f64>,
    /// `diag(eigenvalues)^{-1/2} * w_pca`.
    pub whitening: Array2<f64>,
    pub side: usize,
}

/// Top-`i` eigenpairs of `I' I'^T / N` without any rank check.
pub fn principal_basis(patches: &PatchMatrix, i: usize) -> Result<(Array2<f64>, Array1<f64>)> {
    let dim = patches.side * patches.side;
    if i == 0 || i > dim {
        return Err(param(format!("component count {i} outside 1..={dim}")));
    }
    let x = &patches.data;
    let scatter = x.dot(&x.t()) / patches.count() as f64;
    let (values, vectors) = sym_eigen(&scatter);
    let w = vectors.slice(ndarray::s![.., ..i]).t().to_owned();
    let values = values.slice(ndarray::s![..i]).mapv(|v| v.max(0.0));
    Ok((w, values))
}

pub fn learn_pca_filters(patches: &PatchMatrix, i: usize) -> Result<PcaModel> {
    let dim = patches.side * patches.side;
    let (_, all) = principal_basis(patches, dim)?;
    let lead = all[0];
    let rank = all.iter().filter(|&&v| lead > 0.0 && v > EIGEN_FLOOR * lead).count();
    if i > rank {
        return Err(Error::RankDeficient {
            requested: i,
            achieved: rank,
        });
    }
    let (w_pca, eigenvalues) = principal_basis(patches, i)?;
    let scale = eigenvalues.mapv(|v| 1.0 / v.sqrt());
    let whitening = &w_pca * &scale.insert_axis(Axis(1));
    Ok(PcaModel {
        w_pca,
        eigenvalues,
        whitening,
        side: patches.side,
    })
}

/// `V I'`: dimension-reduced, whitened patches.
pub fn whiten(patches: &PatchMatrix, model: &PcaModel) -> Result<Array2<f64>> {
    if patches.side != model.side {
        return Err(input(format!(
            "patch side {} does not match model side {}",
            patches.side, model.side
        )));
    }
    Ok(model.whitening.dot(&patches.data))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IcaOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaOutcome {
    /// Orthogonal unmixing matrix, rows are components.
    pub u: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Symmetric fixed-point FastICA with the kurtosis contrast `g(y) = y^3`.
///
/// Every sweep updates all rows by `E[z g(w.z)] - 3 w` and then restores
/// orthogonality with `(W W^T)^{-1/2} W`. Not converging within `max_iter` is
/// reported through [`IcaOutcome::converged`], with the last (orthogonal) iterate.
pub fn fast_ica(whitened: &Array2<f64>, seed: u64, opts: IcaOptions) -> Result<IcaOutcome> {
    let (dim, n) = whitened.dim();
    if dim == 0 || n == 0 {
        return Err(input("fast_ica needs a nonempty whitened matrix"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Array2::from_shape_simple_fn((dim, dim), || rng.sample::<f64, _>(StandardNormal));
    let mut w = sym_orthogonalize(&init);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let y = w.dot(whitened);
        let g = y.mapv(|v| v * v * v);
        let next = g.dot(&whitened.t()) / n as f64 - &w * 3.0;
        let next = sym_orthogonalize(&next);
        let change = next
            .outer_iter()
            .zip(w.outer_iter())
            .map(|(a, b)| (1.0 - a.dot(&b).abs()).abs())
            .fold(0.0f64, f64::max);
        w = next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("FastICA stopped after {iterations} sweeps without reaching tol {}", opts.tol);
    }
    Ok(IcaOutcome {
        u: w,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaModel {
    pub u: Array2<f64>,
    /// `u * whitening`.
    pub w_ica: Array2<f64>,
    pub pca: PcaModel,
    pub converged: bool,
}

pub fn learn_ica_filters(patches: &PatchMatrix, i: usize, seed: u64) -> Result<IcaModel> {
    learn_ica_filters_with(patches, i, seed, IcaOptions::default())
}

pub fn learn_ica_filters_with(
    patches: &PatchMatrix,
    i: usize,
    seed: u64,
    opts: IcaOptions,
) -> Result<IcaModel> {
    let pca = learn_pca_filters(patches, i)?;
    let z = whiten(patches, &pca)?;
    let ica = fast_ica(&z, seed, opts)?;
    let w_ica = ica.u.dot(&pca.whitening);
    Ok(IcaModel {
        u: ica.u,
        w_ica,
        pca,
        converged: ica.converged,
    })
}

/// Reshapes each length-`k^2` row (column-major) into a real `k x k` filter.
pub fn bank_from_rows(rows: &Array2<f64>, k: usize, kind: BankKind) -> Result<FilterBank> {
    if rows.ncols() != k * k {
        return Err(input(format!(
            "row length {} does not match side {k}^2",
            rows.ncols()
        )));
    }
    let filters = rows
        .outer_iter()
        .map(|row| {
            let plane = Array2::from_shape_fn((k, k), |(r, c)| row[c * k + r]);
            ComplexFilter::real(plane)
        })
        .collect::<Result<Vec<_>>>()?;
    FilterBank::new(kind, filters)
}

/// Column-major vectorization of a square plane.
pub fn vectorize(plane: &Array2<f64>) -> Array1<f64> {
    let k = plane.nrows();
    Array1::from_shape_fn(k * plane.ncols(), |idx| plane[[idx % k, idx / k]])
}
