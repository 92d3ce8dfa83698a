//! 2-D linear convolution, direct and FFT.
//!
//! All routines convolve (the kernel is flipped), never correlate.

use ndarray::{s, Array2, ArrayView2};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Full linear convolution; output side is `a + b - 1` along each axis.
pub fn conv2_full(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ah, aw) = a.dim();
    let (bh, bw) = b.dim();
    if ah == 0 || aw == 0 || bh == 0 || bw == 0 {
        return Array2::zeros((0, 0));
    }
    let mut out = Array2::<f64>::zeros((ah + bh - 1, aw + bw - 1));
    for ((p, q), &w) in b.indexed_iter() {
        if w == 0.0 {
            continue;
        }
        let mut dst = out.slice_mut(s![p..p + ah, q..q + aw]);
        dst.scaled_add(w, a);
    }
    out
}

/// "Same"-size convolution: the image is zero-padded by `(K-1)/2` on every side and
/// valid-convolved with the odd `K x K` kernel.
pub fn conv2_same(image: &Array2<f64>, kernel: &Array2<f64>) -> Array2<f64> {
    conv2_same_view(image.view(), kernel.view())
}

pub(crate) fn conv2_same_view(image: ArrayView2<f64>, kernel: ArrayView2<f64>) -> Array2<f64> {
    let (h, w) = image.dim();
    let (kh, kw) = kernel.dim();
    debug_assert!(kh % 2 == 1 && kw % 2 == 1, "kernel sides must be odd");
    let (ch, cw) = ((kh / 2) as isize, (kw / 2) as isize);
    let mut out = Array2::<f64>::zeros((h, w));
    for ((p, q), &wt) in kernel.indexed_iter() {
        if wt == 0.0 {
            continue;
        }
        // out[y, x] += wt * image[y + ch - p, x + cw - q]
        let dy = ch - p as isize;
        let dx = cw - q as isize;
        let (y0, y1) = clip_range(dy, h);
        let (x0, x1) = clip_range(dx, w);
        if y0 >= y1 || x0 >= x1 {
            continue;
        }
        let src = image.slice(s![
            (y0 as isize + dy) as usize..(y1 as isize + dy) as usize,
            (x0 as isize + dx) as usize..(x1 as isize + dx) as usize
        ]);
        out.slice_mut(s![y0..y1, x0..x1]).scaled_add(wt, &src);
    }
    out
}

// Output indices `i` in `0..n` for which `i + shift` stays in `0..n`.
fn clip_range(shift: isize, n: usize) -> (usize, usize) {
    let n = n as isize;
    let lo = (-shift).max(0).min(n);
    let hi = (n - shift).min(n).max(0);
    (lo as usize, hi.max(lo) as usize)
}

/// Execution strategy for image-by-filter convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Direct,
    Fft,
    /// FFT once `h * w * K^2` exceeds the crossover, direct otherwise.
    Auto { crossover: usize },
}

/// Measured with `mffc bench-conv` on banks of 36 kernels; below this size the two paths are close.
pub const DEFAULT_CROSSOVER: usize = 1 << 12;

impl Default for Backend {
    fn default() -> Self {
        Backend::Auto {
            crossover: DEFAULT_CROSSOVER,
        }
    }
}

impl Backend {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "direct" => Backend::Direct,
            "fft" => Backend::Fft,
            "auto" => Backend::default(),
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Backend::Direct => "direct",
            Backend::Fft => "fft",
            Backend::Auto { .. } => "auto",
        }
    }

    pub fn use_fft(self, h: usize, w: usize, k: usize) -> bool {
        match self {
            Backend::Direct => false,
            Backend::Fft => true,
            Backend::Auto { crossover } => h * w * k * k > crossover,
        }
    }
}

/// Same-size convolution of one image with many odd kernels of one side.
pub fn convolve_many(image: &Array2<f64>, kernels: &[&Array2<f64>], backend: Backend) -> Vec<Array2<f64>> {
    let Some(first) = kernels.first() else {
        return Vec::new();
    };
    let (h, w) = image.dim();
    if backend.use_fft(h, w, first.nrows()) {
        FftConvolver::new(image, first.nrows()).convolve_all(kernels)
    } else {
        kernels.iter().map(|k| conv2_same(image, k)).collect()
    }
}

/// Pre-transformed image for repeated same-size convolutions with `K x K` kernels.
///
/// Two real kernels share one complex transform: with a real image, the inverse
/// transform of `F(I) * F(a + i b)` carries `I * a` in its real part and `I * b`
/// in its imaginary part.
pub struct FftConvolver {
    h: usize,
    w: usize,
    k: usize,
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    image_spectrum: Vec<Complex<f64>>,
}

impl FftConvolver {
    pub fn new(image: &Array2<f64>, k: usize) -> Self {
        let (h, w) = image.dim();
        let rows = fast_len(h + k - 1);
        let cols = fast_len(w + k - 1);
        let mut planner = FftPlanner::new();
        let mut conv = Self {
            h,
            w,
            k,
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            col_fwd: planner.plan_fft_forward(rows),
            row_inv: planner.plan_fft_inverse(cols),
            col_inv: planner.plan_fft_inverse(rows),
            image_spectrum: vec![Complex::new(0.0, 0.0); rows * cols],
        };
        for ((r, c), &v) in image.indexed_iter() {
            conv.image_spectrum[r * cols + c] = Complex::new(v, 0.0);
        }
        let mut buf = std::mem::take(&mut conv.image_spectrum);
        conv.transform(&mut buf, false);
        conv.image_spectrum = buf;
        conv
    }

    pub fn convolve_all(&self, kernels: &[&Array2<f64>]) -> Vec<Array2<f64>> {
        let mut out = Vec::with_capacity(kernels.len());
        for pair in kernels.chunks(2) {
            let (a, b) = self.convolve_pair(pair[0], pair.get(1).copied());
            out.push(a);
            if let Some(b) = b {
                out.push(b);
            }
        }
        out
    }

    fn convolve_pair(&self, a: &Array2<f64>, b: Option<&Array2<f64>>) -> (Array2<f64>, Option<Array2<f64>>) {
        assert_eq!(a.dim(), (self.k, self.k), "kernel side mismatch");
        let cols = self.cols;
        let mut buf = vec![Complex::new(0.0, 0.0); self.rows * cols];
        for ((r, c), &v) in a.indexed_iter() {
            buf[r * cols + c].re = v;
        }
        if let Some(b) = b {
            assert_eq!(b.dim(), (self.k, self.k), "kernel side mismatch");
            for ((r, c), &v) in b.indexed_iter() {
                buf[r * cols + c].im = v;
            }
        }
        self.transform(&mut buf, false);
        for (x, s) in buf.iter_mut().zip(&self.image_spectrum) {
            *x *= *s;
        }
        self.transform(&mut buf, true);

        let norm = 1.0 / (self.rows * cols) as f64;
        let c = self.k / 2;
        let mut re = Array2::zeros((self.h, self.w));
        let mut im = b.map(|_| Array2::zeros((self.h, self.w)));
        for y in 0..self.h {
            let row = &buf[(y + c) * cols + c..(y + c) * cols + c + self.w];
            for (x, z) in row.iter().enumerate() {
                re[[y, x]] = z.re * norm;
                if let Some(im) = im.as_mut() {
                    im[[y, x]] = z.im * norm;
                }
            }
        }
        (re, im)
    }

    fn transform(&self, buf: &mut [Complex<f64>], inverse: bool) {
        let (row_fft, col_fft) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        let mut scratch = vec![Complex::new(0.0, 0.0); row_fft.get_inplace_scratch_len().max(col_fft.get_inplace_scratch_len())];
        row_fft.process_with_scratch(buf, &mut scratch);
        let mut column = vec![Complex::new(0.0, 0.0); self.rows];
        for c in 0..self.cols {
            for (r, slot) in column.iter_mut().enumerate() {
                *slot = buf[r * self.cols + c];
            }
            col_fft.process_with_scratch(&mut column, &mut scratch);
            for (r, v) in column.iter().enumerate() {
                buf[r * self.cols + c] = *v;
            }
        }
    }
}

/// Smallest 5-smooth length >= n.
fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}
