//! Whitening PCA fitted through the `n x n` Gram matrix.

use log::warn;
use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use crate::error::{input, Error, Result};
use crate::learn::EIGEN_FLOOR;
use crate::linalg::sym_eigen;

#[derive(Debug, Clone, PartialEq)]
pub struct WpcaModel {
    pub mean: Array1<f64>,
    /// `q x d`; row `i` is eigenvector `i` divided by the square root of its eigenvalue.
    pub projection: Array2<f64>,
    /// Sample-covariance eigenvalues (divided by `n - 1`), nonincreasing.
    pub eigenvalues: Array1<f64>,
}

impl WpcaModel {
    pub fn dim_in(&self) -> usize {
        self.mean.len()
    }

    pub fn dim_out(&self) -> usize {
        self.projection.nrows()
    }

    pub fn project(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        if v.len() != self.dim_in() {
            return Err(input(format!(
                "descriptor length {} does not match model input {}",
                v.len(),
                self.dim_in()
            )));
        }
        let centered = &v - &self.mean;
        Ok(self.projection.dot(&centered))
    }

    /// Projects every row of an `n x d` matrix.
    pub fn project_rows(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.dim_in() {
            return Err(input(format!(
                "descriptor length {} does not match model input {}",
                rows.ncols(),
                self.dim_in()
            )));
        }
        let centered = rows - &self.mean.view().insert_axis(Axis(0));
        Ok(centered.dot(&self.projection.t()))
    }
}

fn check_shape(train: &Array2<f64>, q: usize) -> Result<()> {
    let (n, d) = train.dim();
    if n < 2 {
        return Err(input("WPCA needs at least two training descriptors"));
    }
    let cap = d.min(n - 1);
    if q == 0 {
        return Err(input("output dimension must be >= 1"));
    }
    if q > cap {
        return Err(Error::RankDeficient {
            requested: q,
            achieved: cap,
        });
    }
    Ok(())
}

fn kept_components(values: &Array1<f64>, q: usize) -> usize {
    let lead = values[0].max(0.0);
    let rank = values.iter().take_while(|&&v| lead > 0.0 && v > EIGEN_FLOOR * lead).count();
    if rank < q {
        warn!("WPCA output reduced from {q} to {rank}: remaining eigenvalues under the floor");
    }
    rank.min(q)
}

/// Fits on the rows of `train` (`n x d`), keeping at most `q` components.
pub fn fit_wpca(train: &Array2<f64>, q: usize) -> Result<WpcaModel> {
    check_shape(train, q)?;
    let n = train.nrows();
    let mean = train.mean_axis(Axis(0)).expect("nonempty");
    let centered = train - &mean.view().insert_axis(Axis(0));
    let gram = centered.dot(&centered.t());
    let (mu, u) = sym_eigen(&gram);
    let keep = kept_components(&mu, q);
    if keep == 0 {
        return Err(Error::RankDeficient {
            requested: q,
            achieved: 0,
        });
    }
    let dof = (n - 1) as f64;
    // Row i: X^T u_i * sqrt(n-1) / mu_i
    let scale = mu.slice(s![..keep]).mapv(|m| dof.sqrt() / m);
    let basis = u.slice(s![.., ..keep]).to_owned() * &scale;
    let projection = basis.t().dot(&centered);
    let eigenvalues = mu.slice(s![..keep]).mapv(|m| m / dof);
    Ok(WpcaModel {
        mean,
        projection,
        eigenvalues,
    })
}

/// Same model through the `d x d` covariance; only practical for small `d`.
pub fn fit_wpca_direct(train: &Array2<f64>, q: usize) -> Result<WpcaModel> {
    check_shape(train, q)?;
    let n = train.nrows();
    let mean = train.mean_axis(Axis(0)).expect("nonempty");
    let centered = train - &mean.view().insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let (lambda, v) = sym_eigen(&cov);
    let keep = kept_components(&lambda, q);
    if keep == 0 {
        return Err(Error::RankDeficient {
            requested: q,
            achieved: 0,
        });
    }
    let scale = lambda.slice(s![..keep]).mapv(|l| 1.0 / l.sqrt());
    let projection = (v.slice(s![.., ..keep]).to_owned() * &scale).t().to_owned();
    Ok(WpcaModel {
        mean,
        projection,
        eigenvalues: lambda.slice(s![..keep]).to_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn covariance(rows: &Array2<f64>) -> Array2<f64> {
        let n = rows.nrows();
        let mean = rows.mean_axis(Axis(0)).unwrap();
        let c = rows - &mean.insert_axis(Axis(0));
        c.t().dot(&c) / (n - 1) as f64
    }

    #[test]
    fn line_data_whitens() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let train = Array2::from_shape_fn((40, 2), |(_, _)| 0.0);
        let train = train
            .outer_iter()
            .flat_map(|_| {
                let t: f64 = rng.random_range(-5.0..5.0);
                vec![t + rng.random_range(-1e-3..1e-3), 2.0 * t]
            })
            .collect::<Vec<_>>();
        let train = Array2::from_shape_vec((40, 2), train).unwrap();
        let model = fit_wpca(&train, 1).unwrap();
        let p = model.project_rows(&train).unwrap();
        let cov = covariance(&p);
        assert!((cov[[0, 0]] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn project_mean_is_zero_and_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let train = Array2::from_shape_simple_fn((12, 30), || rng.random_range(0.0..1.0));
        let model = fit_wpca(&train, 5).unwrap();
        let z = model.project(model.mean.view()).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
        let x = Array1::from_shape_simple_fn(30, || rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_simple_fn(30, || rng.random_range(-1.0..1.0));
        let base = model.project(model.mean.view()).unwrap();
        let px = model.project((&model.mean + &x).view()).unwrap() - &base;
        let py = model.project((&model.mean + &y).view()).unwrap() - &base;
        let pxy = model.project((&model.mean + &x + &y).view()).unwrap() - &base;
        for i in 0..5 {
            assert!((pxy[i] - px[i] - py[i]).abs() < 1e-12 * (1.0 + pxy[i].abs()));
        }
        assert!(model.project(Array1::zeros(29).view()).is_err());
    }

    #[test]
    fn capacity_errors() {
        let train = Array2::from_shape_fn((5, 8), |(i, j)| (i * j) as f64 + (j as f64).sin());
        assert!(matches!(fit_wpca(&train, 5), Err(Error::RankDeficient { achieved: 4, .. })));
        assert!(fit_wpca(&Array2::zeros((1, 3)), 1).is_err());
    }

    #[test]
    fn degenerate_directions_are_dropped() {
        // rank-2 data in 6 dims, 10 samples: asking for 4 keeps 2
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Array2::from_shape_simple_fn((10, 2), || rng.random_range(-1.0..1.0));
        let b = Array2::from_shape_simple_fn((2, 6), || rng.random_range(-1.0..1.0));
        let model = fit_wpca(&a.dot(&b), 4).unwrap();
        assert_eq!(model.dim_out(), 2);
    }
}
