//! Visual similarity metrics for screenshot comparison.
//!
//! Three metrics feed the first equivalence tier:
//!
//! * `compute_phash_similarity` — 64-bit DCT perceptual hash; similarity is
//!   1 minus the normalized Hamming distance between the hashes.
//! * `compute_ssim` — mean structural similarity over 8x8 windows on the
//!   grayscale images, with the standard constants C1=(0.01*255)^2 and
//!   C2=(0.03*255)^2.
//! * `compute_pixel_change_ratio` — fraction of pixels whose largest
//!   per-channel delta exceeds 8 of 255.
//!
//! All three are pure functions of the decoded pixels. When dimensions
//! differ the second image is resized to the first with a bilinear filter
//! (the perceptual hash resizes internally and needs no such step).

use image::imageops::FilterType;
use image::{DynamicImage, GenericImageView};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("failed to decode image {path}: {detail}")]
    Decode { path: String, detail: String },
    #[error("image has zero area ({width}x{height})")]
    ZeroArea { width: u32, height: u32 },
    #[error("failed to read image {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// The Tier-1 metric triple for one image pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisualMetrics {
    /// 1.0 means identical hashes; in [0, 1].
    pub phash_similarity: f64,
    /// In [-1, 1]; 1.0 for identical images.
    pub ssim: f64,
    /// Fraction of pixels differing beyond the per-channel delta; in [0, 1].
    pub pixel_change_ratio: f64,
}

impl VisualMetrics {
    pub fn in_valid_ranges(&self) -> bool {
        (0.0..=1.0).contains(&self.phash_similarity)
            && (-1.0..=1.0).contains(&self.ssim)
            && (0.0..=1.0).contains(&self.pixel_change_ratio)
    }
}

/// Decodes PNG bytes, labelling failures with `origin`.
pub fn decode_png(bytes: &[u8], origin: &str) -> Result<DynamicImage, MetricError> {
    image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(|e| {
        MetricError::Decode {
            path: origin.to_string(),
            detail: e.to_string(),
        }
    })
}

/// Computes all three metrics for one pair.
pub fn visual_metrics(a: &DynamicImage, b: &DynamicImage) -> Result<VisualMetrics, MetricError> {
    Ok(VisualMetrics {
        phash_similarity: compute_phash_similarity(a, b),
        ssim: compute_ssim(a, b)?,
        pixel_change_ratio: compute_pixel_change_ratio(a, b)?,
    })
}

// --- perceptual hash ---

const PHASH_INPUT: u32 = 32;
const PHASH_BLOCK: usize = 8;

/// Similarity of the 64-bit DCT perceptual hashes: 1 - hamming/64.
pub fn compute_phash_similarity(a: &DynamicImage, b: &DynamicImage) -> f64 {
    let ha = phash64(a);
    let hb = phash64(b);
    1.0 - f64::from((ha ^ hb).count_ones()) / 64.0
}

/// 64-bit DCT hash: resize to 32x32 grayscale, orthonormal 2D DCT-II, keep
/// the top-left 8x8 block, set each bit by comparing its coefficient to the
/// mean of the block excluding the DC term.
///
/// Coefficients are snapped to a 1e-6 grid before comparison so that float
/// noise on mathematically-zero terms (uniform images) cannot flip bits.
pub fn phash64(img: &DynamicImage) -> u64 {
    let small = img
        .resize_exact(PHASH_INPUT, PHASH_INPUT, FilterType::Triangle)
        .to_luma8();
    let n = PHASH_INPUT as usize;
    let mut pixels = vec![0f64; n * n];
    for (x, y, p) in small.enumerate_pixels() {
        pixels[y as usize * n + x as usize] = f64::from(p.0[0]);
    }
    let coeffs = dct2d(&pixels, n);

    let mut block = [0f64; PHASH_BLOCK * PHASH_BLOCK];
    for v in 0..PHASH_BLOCK {
        for u in 0..PHASH_BLOCK {
            block[v * PHASH_BLOCK + u] = quantize(coeffs[v * n + u]);
        }
    }
    // Mean of the block excluding the DC term at [0,0], which would swamp it.
    let mean: f64 =
        block.iter().skip(1).sum::<f64>() / ((PHASH_BLOCK * PHASH_BLOCK - 1) as f64);

    let mut hash = 0u64;
    for (i, &c) in block.iter().enumerate() {
        if c > mean {
            hash |= 1 << i;
        }
    }
    hash
}

fn quantize(c: f64) -> f64 {
    (c * 1e6).round() / 1e6
}

/// Separable orthonormal 2D DCT-II over an n x n matrix (row pass, then
/// column pass).
fn dct2d(input: &[f64], n: usize) -> Vec<f64> {
    let table = cos_table(n);
    let mut rows = vec![0f64; n * n];
    for y in 0..n {
        dct1d(&input[y * n..(y + 1) * n], &mut rows[y * n..(y + 1) * n], &table, n);
    }
    let mut out = vec![0f64; n * n];
    let mut col_in = vec![0f64; n];
    let mut col_out = vec![0f64; n];
    for x in 0..n {
        for y in 0..n {
            col_in[y] = rows[y * n + x];
        }
        dct1d(&col_in, &mut col_out, &table, n);
        for y in 0..n {
            out[y * n + x] = col_out[y];
        }
    }
    out
}

fn cos_table(n: usize) -> Vec<f64> {
    let mut t = vec![0f64; n * n];
    for u in 0..n {
        for x in 0..n {
            t[u * n + x] = (std::f64::consts::PI * (2.0 * x as f64 + 1.0) * u as f64
                / (2.0 * n as f64))
                .cos();
        }
    }
    t
}

fn dct1d(input: &[f64], output: &mut [f64], table: &[f64], n: usize) {
    let scale0 = (1.0 / n as f64).sqrt();
    let scale = (2.0 / n as f64).sqrt();
    for u in 0..n {
        let mut sum = 0.0;
        for x in 0..n {
            sum += input[x] * table[u * n + x];
        }
        output[u] = sum * if u == 0 { scale0 } else { scale };
    }
}

// --- SSIM ---

const SSIM_C1: f64 = 6.5025; // (0.01 * 255)^2
const SSIM_C2: f64 = 58.5225; // (0.03 * 255)^2
const SSIM_WINDOW: usize = 8;

/// Mean SSIM over non-overlapping 8x8 grayscale windows; partial windows at
/// the right and bottom edges are included clipped.
pub fn compute_ssim(a: &DynamicImage, b: &DynamicImage) -> Result<f64, MetricError> {
    let (w, h) = a.dimensions();
    if w == 0 || h == 0 {
        return Err(MetricError::ZeroArea {
            width: w,
            height: h,
        });
    }
    let ga = a.to_luma8();
    let gb = resize_to(b, w, h).to_luma8();

    let (w, h) = (w as usize, h as usize);
    let pa = ga.as_raw();
    let pb = gb.as_raw();

    let mut total = 0.0;
    let mut windows = 0u32;
    let mut y0 = 0;
    while y0 < h {
        let y1 = (y0 + SSIM_WINDOW).min(h);
        let mut x0 = 0;
        while x0 < w {
            let x1 = (x0 + SSIM_WINDOW).min(w);
            total += window_ssim(pa, pb, w, x0, x1, y0, y1);
            windows += 1;
            x0 += SSIM_WINDOW;
        }
        y0 += SSIM_WINDOW;
    }
    Ok(total / f64::from(windows))
}

fn window_ssim(pa: &[u8], pb: &[u8], stride: usize, x0: usize, x1: usize, y0: usize, y1: usize) -> f64 {
    let n = ((x1 - x0) * (y1 - y0)) as f64;
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    for y in y0..y1 {
        for x in x0..x1 {
            sum_a += f64::from(pa[y * stride + x]);
            sum_b += f64::from(pb[y * stride + x]);
        }
    }
    let mu_a = sum_a / n;
    let mu_b = sum_b / n;

    let mut var_a = 0.0;
    let mut var_b = 0.0;
    let mut cov = 0.0;
    for y in y0..y1 {
        for x in x0..x1 {
            let da = f64::from(pa[y * stride + x]) - mu_a;
            let db = f64::from(pb[y * stride + x]) - mu_b;
            var_a += da * da;
            var_b += db * db;
            cov += da * db;
        }
    }
    var_a /= n;
    var_b /= n;
    cov /= n;

    ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2))
}

// --- pixel change ratio ---

const PIXEL_DELTA: u8 = 8;

/// Fraction of pixels whose largest per-channel absolute delta exceeds 8.
pub fn compute_pixel_change_ratio(
    a: &DynamicImage,
    b: &DynamicImage,
) -> Result<f64, MetricError> {
    let (w, h) = a.dimensions();
    if w == 0 || h == 0 {
        return Err(MetricError::ZeroArea {
            width: w,
            height: h,
        });
    }
    let ra = a.to_rgb8();
    let rb = resize_to(b, w, h).to_rgb8();

    let mut changed = 0u64;
    for (pa, pb) in ra.pixels().zip(rb.pixels()) {
        let delta = pa
            .0
            .iter()
            .zip(pb.0.iter())
            .map(|(&x, &y)| x.abs_diff(y))
            .max()
            .unwrap_or(0);
        if delta > PIXEL_DELTA {
            changed += 1;
        }
    }
    Ok(changed as f64 / f64::from(w * h))
}

fn resize_to(img: &DynamicImage, w: u32, h: u32) -> DynamicImage {
    if img.dimensions() == (w, h) {
        img.clone()
    } else {
        img.resize_exact(w, h, FilterType::Triangle)
    }
}
