//! Convolutional stage, binarization/encoding and block-wise histogramming.

use ndarray::Array2;

use crate::conv::{convolve_many, Backend};
use crate::diversify::OffspringSet;
use crate::error::{input, Error, Result};
use crate::filter::Part;

/// Responses of one image to every logical offspring, all the image's size.
#[derive(Debug, Clone)]
pub struct ResponseStack {
    unique: Vec<Array2<f64>>,
    map: Vec<usize>,
    image_size: (usize, usize),
}

impl ResponseStack {
    pub fn from_responses(responses: Vec<Array2<f64>>) -> Result<Self> {
        let image_size = responses
            .first()
            .map(Array2::dim)
            .ok_or_else(|| input("empty response stack"))?;
        if responses.iter().any(|r| r.dim() != image_size) {
            return Err(input("responses differ in size"));
        }
        let map = (0..responses.len()).collect();
        Ok(Self {
            unique: responses,
            map,
            image_size,
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Response to logical offspring `l` (zero-based).
    pub fn get(&self, l: usize) -> &Array2<f64> {
        &self.unique[self.map[l]]
    }

    pub fn image_size(&self) -> (usize, usize) {
        self.image_size
    }
}

/// Convolves the zero-padded image with the chosen plane of every unique offspring.
pub fn convolve_stack(image: &Array2<f64>, set: &OffspringSet, part: Part, backend: Backend) -> Result<ResponseStack> {
    let (h, w) = image.dim();
    if h == 0 || w == 0 {
        return Err(input("empty image"));
    }
    if set.side().is_multiple_of(2) {
        return Err(input(format!("offspring side {} is even", set.side())));
    }
    let kernels: Vec<&Array2<f64>> = set.unique_filters().iter().map(|f| f.part(part)).collect();
    let unique = convolve_many(image, &kernels, backend);
    let map = (0..set.len()).map(|l| set.unique_index(l)).collect();
    Ok(ResponseStack {
        unique,
        map,
        image_size: (h, w),
    })
}

/// `T` integer images holding `F_M`-bit codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureImages {
    pub images: Vec<Array2<u16>>,
    pub bits: usize,
}

pub const MAX_BITS: usize = 16;

/// Groups consecutive runs of `bits` responses; response `beta` of group `t` sets
/// bit `beta` of feature image `t` wherever it is strictly positive.
pub fn binarize_encode(stack: &ResponseStack, bits: usize) -> Result<FeatureImages> {
    if bits == 0 || bits > MAX_BITS {
        return Err(Error::Contract(format!("bit depth {bits} outside 1..={MAX_BITS}")));
    }
    if !stack.len().is_multiple_of(bits) {
        return Err(Error::Contract(format!(
            "{} responses cannot be grouped into runs of {bits}",
            stack.len()
        )));
    }
    let images = (0..stack.len() / bits)
        .map(|t| {
            let mut code = Array2::<u16>::zeros(stack.image_size);
            for beta in 0..bits {
                let g = stack.get(t * bits + beta);
                let bit = 1u16 << beta;
                ndarray::Zip::from(&mut code).and(g).for_each(|c, &v| {
                    if v > 0.0 {
                        *c |= bit;
                    }
                });
            }
            code
        })
        .collect();
    Ok(FeatureImages { images, bits })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Overlap {
    None,
    /// Blocks of twice the tiling side, anchored on the tiling grid.
    Half,
}

impl Overlap {
    pub fn ratio(self) -> f64 {
        match self {
            Overlap::None => 0.0,
            Overlap::Half => 0.5,
        }
    }

    pub fn from_ratio(r: f64) -> Result<Self> {
        if r == 0.0 {
            Ok(Overlap::None)
        } else if r == 0.5 {
            Ok(Overlap::Half)
        } else {
            Err(input(format!("overlap ratio must be 0 or 0.5, got {r}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub rows: usize,
    pub cols: usize,
    pub overlap: Overlap,
}

/// Half-open pixel window `[r0, r1) x [c0, c1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub r0: usize,
    pub r1: usize,
    pub c0: usize,
    pub c1: usize,
}

impl Block {
    pub fn pixels(&self) -> usize {
        (self.r1 - self.r0) * (self.c1 - self.c0)
    }
}

impl BlockSpec {
    pub fn new(rows: usize, cols: usize, overlap: Overlap) -> Self {
        Self { rows, cols, overlap }
    }

    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    /// Blocks in row-major grid order. Without overlap the last row and column
    /// absorb the remainder; with half overlap every block spans two tiles and is
    /// clipped at the image border.
    pub fn blocks(&self, h: usize, w: usize) -> Result<Vec<Block>> {
        if self.rows == 0 || self.cols == 0 {
            return Err(input("block grid must be at least 1x1"));
        }
        if self.rows > h || self.cols > w {
            return Err(input(format!(
                "{}x{} block grid does not fit a {h}x{w} image",
                self.rows, self.cols
            )));
        }
        let (bh, bw) = (h / self.rows, w / self.cols);
        let span = |i: usize, n: usize, side: usize, total: usize| -> (usize, usize) {
            let start = i * side;
            let end = match self.overlap {
                Overlap::None if i + 1 == n => total,
                Overlap::None => start + side,
                Overlap::Half if i + 1 == n => total,
                Overlap::Half => (start + 2 * side).min(total),
            };
            (start, end)
        };
        let mut out = Vec::with_capacity(self.count());
        for r in 0..self.rows {
            let (r0, r1) = span(r, self.rows, bh, h);
            for c in 0..self.cols {
                let (c0, c1) = span(c, self.cols, bw, w);
                out.push(Block { r0, r1, c0, c1 });
            }
        }
        Ok(out)
    }
}

/// Per feature image, per block, counts of every code value. Layout is
/// `t` (slowest), then block, then bin.
pub fn block_histograms(feat: &FeatureImages, spec: &BlockSpec) -> Result<Vec<u32>> {
    let first = feat.images.first().ok_or_else(|| input("no feature images"))?;
    let (h, w) = first.dim();
    let blocks = spec.blocks(h, w)?;
    let bins = 1usize << feat.bits;
    let mut out = vec![0u32; feat.images.len() * blocks.len() * bins];
    for (t, img) in feat.images.iter().enumerate() {
        if img.dim() != (h, w) {
            return Err(input("feature images differ in size"));
        }
        for (b, blk) in blocks.iter().enumerate() {
            let hist = &mut out[(t * blocks.len() + b) * bins..][..bins];
            for r in blk.r0..blk.r1 {
                for &v in img.row(r).iter().skip(blk.c0).take(blk.c1 - blk.c0) {
                    hist[v as usize] += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Concatenated real/imaginary histogram feature.
///
/// Layout: part (re then im), feature image, block, bin.
#[derive(Debug, Clone, PartialEq)]
pub struct RawHistogram {
    pub values: Vec<f64>,
    pub bits: usize,
    pub blocks: usize,
    pub feature_images: usize,
}

impl RawHistogram {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Expected raw length `2^{F_M} * B * T * 2`.
pub fn raw_dim(set: &OffspringSet, spec: &BlockSpec) -> usize {
    (1usize << set.bits()) * spec.count() * set.feature_images() * 2
}

pub fn assemble(
    image: &Array2<f64>,
    offspring_re: &OffspringSet,
    offspring_im: &OffspringSet,
    spec: &BlockSpec,
    backend: Backend,
) -> Result<RawHistogram> {
    if offspring_re.fold_sizes() != offspring_im.fold_sizes() {
        return Err(input("real and imaginary offspring sets differ in fold shape"));
    }
    let bits = offspring_re.bits();
    let mut values = Vec::with_capacity(raw_dim(offspring_re, spec));
    for (set, part) in [(offspring_re, Part::Re), (offspring_im, Part::Im)] {
        let stack = convolve_stack(image, set, part, backend)?;
        let feat = binarize_encode(&stack, bits)?;
        values.extend(block_histograms(&feat, spec)?.into_iter().map(f64::from));
    }
    Ok(RawHistogram {
        values,
        bits,
        blocks: spec.count(),
        feature_images: offspring_re.feature_images(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diversify::make_offspring;
    use crate::diversify::DescriptorKind;
    use crate::gabor::{condensed_ensemble, GaborParams};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn encode_hand_example() {
        let r = |v: f64| array![[v]];
        let stack = ResponseStack::from_responses(vec![r(1.0), r(-1.0), r(2.0), r(0.5)]).unwrap();
        let feat = binarize_encode(&stack, 2).unwrap();
        assert_eq!(feat.images.len(), 2);
        assert_eq!(feat.images[0][[0, 0]], 1);
        assert_eq!(feat.images[1][[0, 0]], 3);
        assert!(matches!(binarize_encode(&stack, 3), Err(Error::Contract(_))));
    }

    #[test]
    fn encode_extremes_and_zero_tie() {
        let neg = vec![Array2::from_elem((3, 4), -1.0); 8];
        let feat = binarize_encode(&ResponseStack::from_responses(neg).unwrap(), 8).unwrap();
        assert!(feat.images[0].iter().all(|&v| v == 0));
        let pos = vec![Array2::from_elem((3, 4), 0.1); 16];
        let feat = binarize_encode(&ResponseStack::from_responses(pos).unwrap(), 8).unwrap();
        assert_eq!(feat.images.len(), 2);
        assert!(feat.images.iter().all(|im| im.iter().all(|&v| v == 255)));
        let zero = vec![Array2::zeros((2, 2)); 4];
        let feat = binarize_encode(&ResponseStack::from_responses(zero).unwrap(), 4).unwrap();
        assert!(feat.images[0].iter().all(|&v| v == 0));
    }

    #[test]
    fn non_overlapping_blocks_tile() {
        let spec = BlockSpec::new(3, 2, Overlap::None);
        let blocks = spec.blocks(10, 7).unwrap();
        assert_eq!(blocks.len(), 6);
        assert_eq!(blocks[0], Block { r0: 0, r1: 3, c0: 0, c1: 3 });
        assert_eq!(blocks[5], Block { r0: 6, r1: 10, c0: 3, c1: 7 });
        let total: usize = blocks.iter().map(Block::pixels).sum();
        assert_eq!(total, 70);
        assert!(BlockSpec::new(11, 1, Overlap::None).blocks(10, 7).is_err());
    }

    #[test]
    fn half_overlap_blocks() {
        // 128x128 with an 8x8 grid: 32x32 windows at a step of 16, clipped at the border
        let spec = BlockSpec::new(8, 8, Overlap::Half);
        let blocks = spec.blocks(128, 128).unwrap();
        assert_eq!(blocks.len(), 64);
        assert_eq!(blocks[0], Block { r0: 0, r1: 32, c0: 0, c1: 32 });
        assert_eq!(blocks[9], Block { r0: 16, r1: 48, c0: 16, c1: 48 });
        assert_eq!(blocks[63], Block { r0: 112, r1: 128, c0: 112, c1: 128 });
    }

    #[test]
    fn constant_feature_histogram() {
        let feat = FeatureImages {
            images: vec![Array2::from_elem((6, 5), 7u16)],
            bits: 3,
        };
        let h = block_histograms(&feat, &BlockSpec::new(1, 1, Overlap::None)).unwrap();
        assert_eq!(h.len(), 8);
        assert_eq!(h[7], 30);
        assert_eq!(h.iter().sum::<u32>(), 30);
    }

    #[test]
    fn histograms_match_naive_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let images: Vec<_> = (0..2)
            .map(|_| Array2::from_shape_simple_fn((16, 16), || rng.random_range(0..16u16)))
            .collect();
        let feat = FeatureImages { images: images.clone(), bits: 4 };
        let got = block_histograms(&feat, &BlockSpec::new(2, 2, Overlap::None)).unwrap();
        let mut want = vec![0u32; 2 * 4 * 16];
        for (t, img) in images.iter().enumerate() {
            for y in 0..16 {
                for x in 0..16 {
                    let b = (y / 8) * 2 + x / 8;
                    want[(t * 4 + b) * 16 + img[[y, x]] as usize] += 1;
                }
            }
        }
        assert_eq!(got, want);
    }

    #[test]
    fn impulse_stack_reproduces_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = Array2::from_shape_simple_fn((9, 11), || rng.random_range(0.0..1.0));
        let bank = crate::filter::FilterBank::new(
            crate::filter::BankKind::GaborCond,
            vec![crate::filter::ComplexFilter::impulse(3)],
        )
        .unwrap();
        let set = crate::diversify::mffc(&[bank]).unwrap();
        for backend in [Backend::Direct, Backend::Fft] {
            let stack = convolve_stack(&img, &set, Part::Re, backend).unwrap();
            for (a, b) in stack.get(0).iter().zip(img.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_image_interior_response() {
        let p = GaborParams::with_support(7);
        let g = condensed_ensemble(&p).unwrap();
        let (re, _) = make_offspring(DescriptorKind::Gabor, 1, &g, None).unwrap();
        let img = Array2::from_elem((20, 20), 100.0);
        let stack = convolve_stack(&img, &re, Part::Re, Backend::Direct).unwrap();
        for l in 0..re.len() {
            let sum = re.filter(l).re.sum();
            let interior = stack.get(l)[[10, 10]];
            assert!((interior - 100.0 * sum).abs() < 1e-9);
            assert!(interior.abs() < 100.0 * 1e-2 * 49.0);
            assert!((stack.get(l)[[0, 0]] - interior).abs() > 1e-6);
        }
    }

    #[test]
    fn assembled_length_and_mass() {
        let p = GaborParams::with_support(3);
        let g = condensed_ensemble(&p).unwrap();
        let (re, im) = make_offspring(DescriptorKind::Gabor, 2, &g, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = Array2::from_shape_simple_fn((24, 20), || rng.random_range(0.0..255.0));
        let spec = BlockSpec::new(3, 2, Overlap::None);
        let h = assemble(&img, &re, &im, &spec, Backend::Direct).unwrap();
        assert_eq!(h.len(), 256 * 6 * 8 * 2);
        assert_eq!(h.len(), raw_dim(&re, &spec));
        let total: f64 = h.values.iter().sum();
        assert_eq!(total, (2 * 8 * 24 * 20) as f64);
    }
}
