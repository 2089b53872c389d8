//! Robustness metrics between two saliency maps: normalized ℓ₂ distance,
//! top-k intersection and SSIM, plus the CSV report.
//!
//! SSIM uses a 7×7 Gaussian window (σ = 1.5) over every fully contained
//! window position, with `C₁ = 0.01²`, `C₂ = 0.03²` on dynamic range 1.
//! Maps are first collapsed to one spatial plane (per-pixel sum of absolute
//! values over channels) and min-max scaled to `[0, 1]`; a constant plane
//! scales to all zeros.

use crate::error::{invalid, Error, Result};
use crate::io::spatial_magnitude;
use crate::numerics::Tensor;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// `‖a/‖a‖ − b/‖b‖‖₂`, in `[0, 2]`.
pub fn normalized_l2_distance(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.check_same_shape(b, "normalized distance")?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput(
            "normalized distance is undefined for an all-zero map".into(),
        ));
    }
    let d = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x / na - y / nb).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(d.min(2.0))
}

/// Indices of the `k` largest `|v_i|`, ties broken by the lower index.
pub fn topk_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| {
        values[j]
            .abs()
            .total_cmp(&values[i].abs())
            .then(i.cmp(&j))
    });
    idx.truncate(k);
    idx
}

/// `|TopK(|a|) ∩ TopK(|b|)| / k` over flattened entries.
pub fn topk_intersection(a: &Tensor, b: &Tensor, k: usize) -> Result<f64> {
    a.check_same_shape(b, "top-k intersection")?;
    topk_ratio(a.data(), b.data(), k)
}

fn topk_ratio(a: &[f64], b: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > a.len() {
        return invalid(format!("k must be in 1..={}, got {k}", a.len()));
    }
    let mut in_b = vec![false; b.len()];
    for i in topk_indices(b, k) {
        in_b[i] = true;
    }
    let shared = topk_indices(a, k).into_iter().filter(|&i| in_b[i]).count();
    Ok(shared as f64 / k as f64)
}

/// Normalized 1-D Gaussian window.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size / 2) as f64;
    let w: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - center).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Collapses a map to one plane and min-max scales it to `[0, 1]`.
pub fn ssim_plane(t: &Tensor) -> (usize, usize, Vec<f64>) {
    let (h, w, mut plane) = spatial_magnitude(t);
    let lo = plane.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for v in plane.iter_mut() {
        *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
    }
    (h, w, plane)
}

/// Valid-mode separable filtering of an `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| kernel[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| kernel[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM between two maps of the same shape.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.check_same_shape(b, "ssim")?;
    let (h, w, pa) = ssim_plane(a);
    let (_, _, pb) = ssim_plane(b);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return invalid(format!(
            "ssim needs a spatial extent of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        ));
    }
    let kernel = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let product = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(&pa, h, w, &kernel);
    let mu_b = filter_valid(&pb, h, w, &kernel);
    let aa = filter_valid(&product(&pa, &pa), h, w, &kernel);
    let bb = filter_valid(&product(&pb, &pb), h, w, &kernel);
    let ab = filter_valid(&product(&pa, &pb), h, w, &kernel);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Default top-k size: 10% of the spatial positions, at least one.
pub fn default_k(map: &Tensor) -> usize {
    let (h, w, _) = spatial_magnitude(map);
    ((h * w) as f64 * 0.1).round().max(1.0) as usize
}

/// Metrics for one clean/perturbed map pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub sample_id: String,
    pub method: String,
    pub epsilon: f64,
    pub normalized_distance: f64,
    pub topk_ratio: f64,
    /// `None` when the map is smaller than the SSIM window.
    pub ssim: Option<f64>,
}

/// Compares a clean map with its perturbed counterpart.
///
/// Distance uses the raw flattened maps; top-k and SSIM use the per-pixel
/// channel magnitude.
pub fn compare_maps(
    clean: &Tensor,
    perturbed: &Tensor,
    k: usize,
    sample_id: impl Into<String>,
    method: impl Into<String>,
    epsilon: f64,
) -> Result<SampleMetrics> {
    clean.check_same_shape(perturbed, "map pair")?;
    let normalized_distance = normalized_l2_distance(clean, perturbed)?;
    let (_, _, sa) = spatial_magnitude(clean);
    let (_, _, sb) = spatial_magnitude(perturbed);
    let topk_ratio = topk_ratio(&sa, &sb, k)?;
    let (h, w, _) = spatial_magnitude(clean);
    let ssim = if h >= SSIM_WINDOW && w >= SSIM_WINDOW {
        Some(ssim(clean, perturbed)?)
    } else {
        None
    };
    Ok(SampleMetrics {
        sample_id: sample_id.into(),
        method: method.into(),
        epsilon,
        normalized_distance,
        topk_ratio,
        ssim,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
}

fn summarize(values: impl Iterator<Item = f64>) -> Summary {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return Summary { mean: f64::NAN, median: f64::NAN };
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    Summary {
        mean: v.iter().sum::<f64>() / n as f64,
        median,
    }
}

pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    summarize(values.into_iter()).median
}

/// Per-sample rows with mean/median aggregates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub rows: Vec<SampleMetrics>,
}

impl MetricsReport {
    pub fn new(k: usize) -> Self {
        Self { k, rows: Vec::new() }
    }

    pub fn distance(&self) -> Summary {
        summarize(self.rows.iter().map(|r| r.normalized_distance))
    }

    pub fn topk(&self) -> Summary {
        summarize(self.rows.iter().map(|r| r.topk_ratio))
    }

    pub fn ssim(&self) -> Summary {
        summarize(self.rows.iter().filter_map(|r| r.ssim))
    }

    /// CSV with header `sample_id,method,epsilon,normalized_distance,topk_ratio,ssim`,
    /// LF line endings; a missing SSIM is an empty field.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        out.write_all(b"sample_id,method,epsilon,normalized_distance,topk_ratio,ssim\n")?;
        for r in &self.rows {
            let ssim = r.ssim.map(|s| s.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&r.sample_id),
                csv_field(&r.method),
                r.epsilon,
                r.normalized_distance,
                r.topk_ratio,
                ssim
            )?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
