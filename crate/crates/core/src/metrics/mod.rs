//! Image-quality metrics on magnitude images, per frame and aggregated.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::phantom::ImageSeries;
use crate::scalar::Real;

fn check_pair<T: Real>(op: &'static str, rec: ArrayView2<'_, T>, reference: ArrayView2<'_, T>) -> Result<()> {
    if rec.dim() != reference.dim() {
        return Err(Error::shape(op, format!("{:?} vs reference {:?}", rec.dim(), reference.dim())));
    }
    Ok(())
}

fn diff_norm<T: Real>(rec: ArrayView2<'_, T>, reference: ArrayView2<'_, T>) -> f64 {
    rec.iter()
        .zip(reference.iter())
        .map(|(a, b)| (b.as_f64() - a.as_f64()).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `20·log₁₀(‖ref‖₂ / ‖ref − rec‖₂)`; `+∞` on an exact match.
pub fn ser<T: Real>(rec: ArrayView2<'_, T>, reference: ArrayView2<'_, T>) -> Result<f64> {
    check_pair("ser", rec, reference)?;
    let signal = reference.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
    if signal == 0.0 {
        return Err(Error::Degenerate("SER reference has zero norm".into()));
    }
    Ok(20.0 * (signal / diff_norm(rec, reference)).log10())
}

/// `20·log₁₀(max(ref) / ‖ref − rec‖₂)`; `+∞` on an exact match.
pub fn psnr<T: Real>(rec: ArrayView2<'_, T>, reference: ArrayView2<'_, T>) -> Result<f64> {
    check_pair("psnr", rec, reference)?;
    let peak = reference.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Degenerate("PSNR reference has no positive peak".into()));
    }
    Ok(20.0 * (peak / diff_norm(rec, reference)).log10())
}

pub const LOG_SIZE: usize = 15;
pub const LOG_SIGMA: f64 = 1.5;

/// Zero-sum Laplacian-of-Gaussian kernel, row-major `size × size`.
pub fn log_kernel(size: usize, sigma: f64) -> Array2<f64> {
    let c = (size / 2) as f64;
    let s2 = sigma * sigma;
    let g = Array2::from_shape_fn((size, size), |(y, x)| {
        let r2 = (y as f64 - c).powi(2) + (x as f64 - c).powi(2);
        (-r2 / (2.0 * s2)).exp()
    });
    let g = &g / g.sum();
    let h = Array2::from_shape_fn((size, size), |(y, x)| {
        let r2 = (y as f64 - c).powi(2) + (x as f64 - c).powi(2);
        g[[y, x]] * (r2 - 2.0 * s2) / (s2 * s2)
    });
    let mean = h.sum() / (size * size) as f64;
    h.mapv(|v| v - mean)
}

/// Zero-padded same-size correlation with an odd square kernel.
pub fn filter_same(image: ArrayView2<'_, f64>, kernel: ArrayView2<'_, f64>) -> Array2<f64> {
    let (h, w) = image.dim();
    let k = kernel.nrows();
    let p = (k / 2) as isize;
    Array2::from_shape_fn((h, w), |(y, x)| {
        let mut acc = 0.0;
        for dy in 0..k {
            let sy = y as isize + dy as isize - p;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for dx in 0..k {
                let sx = x as isize + dx as isize - p;
                if sx >= 0 && sx < w as isize {
                    acc += kernel[[dy, dx]] * image[[sy as usize, sx as usize]];
                }
            }
        }
        acc
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HfenMode {
    /// `‖LoG(ref) − LoG(rec)‖ / ‖LoG(ref)‖`
    #[default]
    Ratio,
    /// `20·log₁₀` of the ratio; `−∞` on an exact match.
    Db,
}

fn to_f64<T: Real>(a: ArrayView2<'_, T>) -> Array2<f64> {
    a.mapv(|v| v.as_f64())
}

pub fn hfen<T: Real>(rec: ArrayView2<'_, T>, reference: ArrayView2<'_, T>, mode: HfenMode) -> Result<f64> {
    check_pair("hfen", rec, reference)?;
    let (h, w) = reference.dim();
    if h < LOG_SIZE || w < LOG_SIZE {
        return Err(Error::shape("hfen", format!("images must be at least {LOG_SIZE}x{LOG_SIZE}, got {h}x{w}")));
    }
    let k = log_kernel(LOG_SIZE, LOG_SIGMA);
    let fr = filter_same(to_f64(reference).view(), k.view());
    let fx = filter_same(to_f64(rec).view(), k.view());
    let den = fr.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::Degenerate("LoG of the reference is identically zero".into()));
    }
    let num = fr.iter().zip(fx.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let ratio = num / den;
    Ok(match mode {
        HfenMode::Ratio => ratio,
        HfenMode::Db => 20.0 * ratio.log10(),
    })
}

pub const SSIM_SIZE: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Normalized Gaussian window.
pub fn gaussian_window(size: usize, sigma: f64) -> Array2<f64> {
    let c = (size / 2) as f64;
    let g = Array2::from_shape_fn((size, size), |(y, x)| {
        (-((y as f64 - c).powi(2) + (x as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()
    });
    let s = g.sum();
    g / s
}

/// Gaussian-weighted SSIM averaged over window positions that fit entirely
/// inside the image. `dynamic_range` sets `C1 = (K1·L)²`, `C2 = (K2·L)²`.
pub fn ssim<T: Real>(rec: ArrayView2<'_, T>, reference: ArrayView2<'_, T>, dynamic_range: f64) -> Result<f64> {
    check_pair("ssim", rec, reference)?;
    if !(dynamic_range > 0.0) || !dynamic_range.is_finite() {
        return Err(Error::Degenerate(format!("SSIM dynamic range must be positive, got {dynamic_range}")));
    }
    let (h, w) = reference.dim();
    if h < SSIM_SIZE || w < SSIM_SIZE {
        return Err(Error::shape("ssim", format!("images must be at least {SSIM_SIZE}x{SSIM_SIZE}, got {h}x{w}")));
    }
    let g = gaussian_window(SSIM_SIZE, SSIM_SIGMA);
    let (x, y) = (to_f64(rec), to_f64(reference));
    let c1 = (SSIM_K1 * dynamic_range).powi(2);
    let c2 = (SSIM_K2 * dynamic_range).powi(2);
    let (oh, ow) = (h - SSIM_SIZE + 1, w - SSIM_SIZE + 1);
    let mut total = 0.0;
    for i in 0..oh {
        for j in 0..ow {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for ((dy, dx), &wt) in g.indexed_iter() {
                let (a, b) = (x[[i + dy, j + dx]], y[[i + dy, j + dx]]);
                mx += wt * a;
                my += wt * b;
                sxx += wt * a * a;
                syy += wt * b * b;
                sxy += wt * a * b;
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cxy = sxy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    Ok(total / (oh * ow) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ser,
    Psnr,
    Hfen,
    Ssim,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Ser, Metric::Psnr, Metric::Hfen, Metric::Ssim];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ser => "ser",
            Metric::Psnr => "psnr",
            Metric::Hfen => "hfen",
            Metric::Ssim => "ssim",
        }
    }
}

fn ser_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&format_value(*v))
    }
}

/// Formats a metric value; non-finite sentinels print as `inf`, `-inf`, `nan`.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.17e}")
    }
}

/// Per-frame metric values with their mean and sample standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub reference: String,
    /// Set for HFEN only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hfen_mode: Option<HfenMode>,
    #[serde(skip)]
    pub values: Vec<f64>,
    #[serde(serialize_with = "ser_f64")]
    pub mean: f64,
    #[serde(serialize_with = "ser_f64")]
    pub std: f64,
    pub n_frames: usize,
}

/// Mean and sample (N − 1) standard deviation; identical values, including
/// identical infinities, have zero spread.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().all(|v| *v == values[0]) {
        return (values[0], 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 || !mean.is_finite() {
        return (mean, if n == 1 { 0.0 } else { f64::NAN });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl MetricReport {
    pub fn from_values(metric: Metric, reference: impl Into<String>, hfen_mode: Option<HfenMode>, values: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&values);
        Self { metric, reference: reference.into(), hfen_mode, n_frames: values.len(), values, mean, std }
    }

    /// `frame,value` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{i},{}\n", format_value(*v)));
        }
        out
    }

    /// Parses values written by [`Self::to_csv`].
    pub fn values_from_csv(csv: &str) -> Result<Vec<f64>> {
        csv.lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let v = l.split(',').nth(1).ok_or_else(|| Error::Format(format!("bad metric line {l:?}")))?;
                match v.trim() {
                    "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    "nan" => Ok(f64::NAN),
                    s => s.parse().map_err(|_| Error::Format(format!("bad metric value {s:?}"))),
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `mean ± std` cell for a comparison table.
    pub fn summary(&self) -> String {
        format!("{:.4} ± {:.4}", self.mean, self.std)
    }
}

/// Evaluates `metric` frame by frame on magnitude images. SSIM uses the
/// maximum of the reference series as its dynamic range.
pub fn evaluate_series<T: Real>(
    metric: Metric,
    rec: &ImageSeries<T>,
    reference: &ImageSeries<T>,
    reference_id: &str,
    hfen_mode: HfenMode,
) -> Result<MetricReport> {
    if rec.frames.dim() != reference.frames.dim() {
        return Err(Error::shape("evaluate_series", format!("{:?} vs reference {:?}", rec.frames.dim(), reference.frames.dim())));
    }
    let (mr, mf) = (rec.magnitude(), reference.magnitude());
    let range = mf.iter().map(|v| v.as_f64()).fold(0.0, f64::max);
    let values = mr
        .axis_iter(Axis(0))
        .zip(mf.axis_iter(Axis(0)))
        .map(|(a, b)| match metric {
            Metric::Ser => ser(a, b),
            Metric::Psnr => psnr(a, b),
            Metric::Hfen => hfen(a, b, hfen_mode),
            Metric::Ssim => ssim(a, b, range),
        })
        .collect::<Result<Vec<_>>>()?;
    let mode = (metric == Metric::Hfen).then_some(hfen_mode);
    Ok(MetricReport::from_values(metric, reference_id, mode, values))
}

/// Mean per-frame SER in dB between two series of magnitude images.
pub fn mean_frame_ser<T: Real>(rec: &ImageSeries<T>, reference: &ImageSeries<T>) -> Result<f64> {
    Ok(evaluate_series(Metric::Ser, rec, reference, "", HfenMode::Ratio)?.mean)
}
