//! Brute-force oracles shared by the integration tests. Nothing here calls into the
//! library's numeric code.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Array2<f64> {
    Array2::from_shape_fn((h, w), |_| rng.random_range(-1.0..1.0))
}

/// Full 2-D convolution by the defining quadruple sum.
pub fn full_conv(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ah, aw) = a.dim();
    let (bh, bw) = b.dim();
    let mut out = Array2::zeros((ah + bh - 1, aw + bw - 1));
    for i in 0..ah {
        for j in 0..aw {
            for p in 0..bh {
                for q in 0..bw {
                    out[[i + p, j + q]] += a[[i, j]] * b[[p, q]];
                }
            }
        }
    }
    out
}

/// Same-size convolution as a matrix product: each row of the im2col matrix is the
/// zero-padded patch around one pixel, each column of the kernel matrix a flipped
/// kernel. Returns one response image per kernel.
pub fn im2col_conv(image: &Array2<f64>, kernels: &[Array2<f64>]) -> Vec<Array2<f64>> {
    let (h, w) = image.dim();
    let k = kernels[0].nrows();
    let r = (k / 2) as isize;
    let mut cols = Array2::zeros((h * w, k * k));
    for y in 0..h {
        for x in 0..w {
            for p in 0..k {
                for q in 0..k {
                    let (yy, xx) = (y as isize + p as isize - r, x as isize + q as isize - r);
                    if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                        cols[[y * w + x, p * k + q]] = image[[yy as usize, xx as usize]];
                    }
                }
            }
        }
    }
    let mut kmat = Array2::zeros((k * k, kernels.len()));
    for (j, ker) in kernels.iter().enumerate() {
        for p in 0..k {
            for q in 0..k {
                kmat[[p * k + q, j]] = ker[[k - 1 - p, k - 1 - q]];
            }
        }
    }
    let prod = cols.dot(&kmat);
    (0..kernels.len())
        .map(|j| Array2::from_shape_fn((h, w), |(y, x)| prod[[y * w + x, j]]))
        .collect()
}

pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `max|a - b| / max|b|`.
pub fn rel_dev(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / max_abs(b).max(f64::MIN_POSITIVE)
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Eigenvalues descending,
/// eigenvectors as columns.
pub fn jacobi_eigen(m: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        let scale: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]));
    let vals = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let vecs = Array2::from_shape_fn((n, n), |(r, c)| v[[r, order[c]]]);
    (vals, vecs)
}

/// Percent AUC over all positive/negative pairs, ties counting one half.
pub fn pairwise_auc(scores: &[(f64, bool)]) -> f64 {
    let mut twice: u64 = 0;
    let mut pos = 0u64;
    let mut neg = 0u64;
    for &(s, same) in scores {
        if same {
            pos += 1;
        } else {
            neg += 1;
            continue;
        }
        for &(t, other) in scores {
            if other {
                continue;
            }
            twice += if s > t { 2 } else if s == t { 1 } else { 0 };
        }
    }
    100.0 * twice as f64 / (2 * pos * neg) as f64
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Index of the first gallery row with the largest cosine.
pub fn brute_nearest(gallery: &Array2<f64>, probe: &[f64]) -> usize {
    let mut best = 0;
    let mut best_s = f64::NEG_INFINITY;
    for (i, row) in gallery.rows().into_iter().enumerate() {
        let s = cosine(row.as_slice().unwrap(), probe);
        if s > best_s {
            best = i;
            best_s = s;
        }
    }
    best
}

/// Population standard deviation from the mean, in two passes.
pub fn two_pass_sd(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Sample excess kurtosis of one row.
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

/// `max |A A^T - I|`.
pub fn orthogonality_error(a: &Array2<f64>) -> f64 {
    let g = a.dot(&a.t()) - Array2::<f64>::eye(a.nrows());
    max_abs(&g)
}
