//! Synthetic free-breathing cine phantom, coil maps, golden-angle schedules
//! and noisy acquisition.

use ndarray::{Array2, Array3, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mri::{CoilMaps, KSpaceDataset, OperatorMode, SamplingOperator, Spoke, TrajectorySchedule};
use crate::scalar::{Cplx, Real};

/// Dynamic image series `[frame][y][x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSeries<T: Real> {
    pub frames: Array3<Cplx<T>>,
    pub frame_dt: f64,
}

impl<T: Real> ImageSeries<T> {
    pub fn n_frames(&self) -> usize {
        self.frames.dim().0
    }

    pub fn dim(&self) -> (usize, usize) {
        let (_, h, w) = self.frames.dim();
        (h, w)
    }

    pub fn frame(&self, i: usize) -> ArrayView2<'_, Cplx<T>> {
        self.frames.index_axis(ndarray::Axis(0), i)
    }

    /// Casorati matrix (pixels × frames).
    pub fn casorati(&self) -> Array2<Cplx<T>> {
        let (n, h, w) = self.frames.dim();
        let flat = self.frames.view().into_shape_with_order((n, h * w)).expect("contiguous series");
        flat.t().to_owned()
    }

    /// Rebuilds a series from a Casorati matrix.
    pub fn from_casorati(x: ArrayView2<'_, Cplx<T>>, h: usize, w: usize, frame_dt: f64) -> Self {
        let n = x.ncols();
        let frames = Array3::from_shape_fn((n, h, w), |(i, y, xx)| x[[y * w + xx, i]]);
        Self { frames, frame_dt }
    }

    /// Magnitude images `[frame][y][x]`.
    pub fn magnitude(&self) -> Array3<T> {
        self.frames.mapv(|z| z.norm())
    }
}

fn default_frame_dt() -> f64 {
    0.0468
}

/// Phantom geometry and motion parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    pub height: usize,
    pub width: usize,
    /// Seconds of acquisition.
    pub duration: f64,
    #[serde(default = "default_frame_dt")]
    pub frame_dt: f64,
    pub cardiac_period: f64,
    pub respiratory_period: f64,
    /// Fractional modulation of the ventricle radius.
    pub cardiac_amplitude: f64,
    /// Peak vertical translation in pixels.
    pub respiratory_amplitude: f64,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            duration: 14.0,
            frame_dt: default_frame_dt(),
            cardiac_period: 0.8,
            respiratory_period: 3.5,
            cardiac_amplitude: 0.15,
            respiratory_amplitude: 3.0,
            seed: 7,
        }
    }
}

impl PhantomConfig {
    pub fn n_frames(&self) -> usize {
        (self.duration / self.frame_dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 16 || self.width < 16 {
            return Err(Error::Geometry(format!(
                "image must be at least 16x16, got {}x{}",
                self.height, self.width
            )));
        }
        if !(self.frame_dt > 0.0) || !(self.duration >= self.frame_dt) {
            return Err(Error::Config("duration must cover at least one positive frame interval".into()));
        }
        for (name, p) in [("cardiac", self.cardiac_period), ("respiratory", self.respiratory_period)] {
            if !(p > 2.0 * self.frame_dt) {
                return Err(Error::Config(format!(
                    "{name} period {p} s is not resolvable at {} s per frame",
                    self.frame_dt
                )));
            }
        }
        if !(0.0..0.6).contains(&self.cardiac_amplitude) || self.respiratory_amplitude < 0.0 {
            return Err(Error::Config("motion amplitudes out of range".into()));
        }
        let half_h = self.height as f64 / 2.0;
        let half_w = self.width as f64 / 2.0;
        let (_, body_ay) = body_axes(self.height, self.width);
        if body_ay + self.respiratory_amplitude > half_h - 1.0 || body_axes(self.height, self.width).0 > half_w - 1.0 {
            return Err(Error::Geometry(format!(
                "torso leaves the field of view under {} px translation",
                self.respiratory_amplitude
            )));
        }
        Ok(())
    }
}

fn body_axes(h: usize, w: usize) -> (f64, f64) {
    (0.40 * w as f64, 0.34 * h as f64)
}

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    cx: f64,
    cy: f64,
    ax: f64,
    ay: f64,
    value: f64,
}

impl Ellipse {
    /// Fractional pixel coverage from a one-pixel linear ramp across the
    /// boundary, using a first-order signed distance.
    fn coverage(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let rho = ((dx / self.ax).powi(2) + (dy / self.ay).powi(2)).sqrt();
        if rho < 0.5 {
            return 1.0;
        }
        let grad = ((dx / (self.ax * self.ax)).powi(2) + (dy / (self.ay * self.ay)).powi(2)).sqrt() / rho;
        let dist = (rho - 1.0) / grad;
        (0.5 - dist).clamp(0.0, 1.0)
    }
}

struct Anatomy {
    statics: Vec<Ellipse>,
    heart_center: (f64, f64),
    ventricle_radius: f64,
    wall: f64,
}

fn anatomy(cfg: &PhantomConfig) -> Anatomy {
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    let (bx, by) = body_axes(cfg.height, cfg.width);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut statics = vec![
        Ellipse { cx: 0.0, cy: 0.0, ax: bx, ay: by, value: 0.35 },
        Ellipse { cx: -0.20 * w, cy: -0.06 * h, ax: 0.12 * w, ay: 0.19 * h, value: 0.06 },
        Ellipse { cx: 0.21 * w, cy: -0.06 * h, ax: 0.11 * w, ay: 0.18 * h, value: 0.06 },
        Ellipse { cx: -0.14 * w, cy: 0.19 * h, ax: 0.14 * w, ay: 0.09 * h, value: 0.5 },
        Ellipse { cx: 0.0, cy: 0.27 * h, ax: 0.05 * w, ay: 0.045 * h, value: 0.85 },
    ];
    // small seeded details to give the edge metrics something to resolve
    for _ in 0..4 {
        let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let rad: f64 = rng.random_range(0.55..0.8);
        statics.push(Ellipse {
            cx: rad * bx * ang.cos(),
            cy: rad * by * ang.sin(),
            ax: rng.random_range(1.2..2.4),
            ay: rng.random_range(1.2..2.4),
            value: rng.random_range(0.55..0.9),
        });
    }
    Anatomy {
        statics,
        heart_center: (0.06 * w, 0.04 * h),
        ventricle_radius: 0.095 * w,
        wall: 0.045 * w,
    }
}

fn rasterize<T: Real>(shapes: &[Ellipse], shift_y: f64, h: usize, w: usize) -> Array2<Cplx<T>> {
    let oy = (h / 2) as f64;
    let ox = (w / 2) as f64;
    Array2::from_shape_fn((h, w), |(y, x)| {
        let (px, py) = (x as f64 - ox, y as f64 - oy - shift_y);
        let v = shapes.iter().fold(0.0, |acc, e| {
            let c = e.coverage(px, py);
            acc * (1.0 - c) + c * e.value
        });
        Cplx::new(T::lit(v), T::zero())
    })
}

/// Generates the phantom series: static torso, a ventricle whose radius
/// oscillates with the cardiac period, and a whole-field vertical translation
/// with the respiratory period.
pub fn make_phantom<T: Real>(cfg: &PhantomConfig) -> Result<ImageSeries<T>> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let n = cfg.n_frames();
    let anat = anatomy(cfg);
    let mut frames = Array3::zeros((n, h, w));
    for i in 0..n {
        let t = i as f64 * cfg.frame_dt;
        let shift = cfg.respiratory_amplitude * (std::f64::consts::TAU * t / cfg.respiratory_period).sin();
        let radius = anat.ventricle_radius * (1.0 + cfg.cardiac_amplitude * (std::f64::consts::TAU * t / cfg.cardiac_period).sin());
        let (cx, cy) = anat.heart_center;
        let mut shapes = anat.statics.clone();
        shapes.push(Ellipse { cx, cy, ax: radius + anat.wall, ay: 0.85 * radius + anat.wall, value: 0.6 });
        shapes.push(Ellipse { cx, cy, ax: radius, ay: 0.85 * radius, value: 1.0 });
        frames
            .index_axis_mut(ndarray::Axis(0), i)
            .assign(&rasterize::<T>(&shapes, shift, h, w));
    }
    Ok(ImageSeries { frames, frame_dt: cfg.frame_dt })
}

/// Smooth coil sensitivities: complex Gaussian bumps centered on the image
/// border, normalized so that `Σ_c |s_c|² = 1` at every pixel. One coil gives
/// a flat unit map.
pub fn make_coilmaps<T: Real>(n_coils: usize, h: usize, w: usize, seed: u64) -> Result<CoilMaps<T>> {
    if n_coils == 0 {
        return Err(Error::Config("n_coils must be at least 1".into()));
    }
    if n_coils == 1 {
        return Ok(CoilMaps::flat(h, w));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (oy, ox) = ((h / 2) as f64, (w / 2) as f64);
    let offset: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let sigma = 0.45 * h.max(w) as f64;
    let raw: Vec<Array2<Cplx<f64>>> = (0..n_coils)
        .map(|c| {
            let ang = offset + std::f64::consts::TAU * c as f64 / n_coils as f64;
            let (cy, cx) = (oy * ang.sin(), ox * ang.cos());
            let (gx, gy): (f64, f64) = (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
            let phase0: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            Array2::from_shape_fn((h, w), |(y, x)| {
                let (py, px) = (y as f64 - oy, x as f64 - ox);
                let d2 = (py - cy).powi(2) + (px - cx).powi(2);
                Cplx::from_polar((-d2 / (2.0 * sigma * sigma)).exp(), phase0 + gx * px + gy * py)
            })
        })
        .collect();
    let mut energy = Array2::<f64>::zeros((h, w));
    for m in &raw {
        energy.zip_mut_with(m, |e, s| *e += s.norm_sqr());
    }
    let maps = raw
        .into_iter()
        .map(|m| {
            Array2::from_shape_fn((h, w), |(y, x)| {
                let s = m[[y, x]] / energy[[y, x]].sqrt();
                Cplx::new(T::lit(s.re), T::lit(s.im))
            })
        })
        .collect();
    let maps = CoilMaps::new(maps)?;
    maps.validate()?;
    Ok(maps)
}

/// Radial golden-angle increment `π(√5 − 1)/2` (111.246°) in radians.
pub fn golden_angle() -> f64 {
    std::f64::consts::PI * (5f64.sqrt() - 1.0) / 2.0
}

/// Per frame: navigators at 0 and π/2, then golden-angle spokes
/// `θ_j = (j·θ_G) mod π` over a global golden-spoke counter `j`.
pub fn golden_angle_schedule<T: Real>(n_frames: usize, spokes_per_frame: usize, n_readout: usize) -> Result<TrajectorySchedule<T>> {
    if spokes_per_frame < 3 {
        return Err(Error::Config(format!(
            "need at least 3 spokes per frame (2 navigators + 1 golden), got {spokes_per_frame}"
        )));
    }
    if n_readout < 2 {
        return Err(Error::Config("readout must have at least 2 samples".into()));
    }
    let g = golden_angle();
    let mut j = 0usize;
    let frames = (0..n_frames)
        .map(|_| {
            let mut spokes = vec![
                Spoke { angle: T::zero(), navigator: true },
                Spoke { angle: T::FRAC_PI_2(), navigator: true },
            ];
            for _ in 2..spokes_per_frame {
                spokes.push(Spoke {
                    angle: T::lit((j as f64 * g) % std::f64::consts::PI),
                    navigator: false,
                });
                j += 1;
            }
            spokes
        })
        .collect();
    Ok(TrajectorySchedule { frames, n_readout })
}

/// Multi-coil acquisition of a series plus circular complex Gaussian noise
/// with `E|n|² = noise_sigma²`.
pub fn acquire<T: Real>(
    series: &ImageSeries<T>,
    coilmaps: &CoilMaps<T>,
    schedule: &TrajectorySchedule<T>,
    mode: OperatorMode,
    noise_sigma: f64,
    seed: u64,
) -> Result<KSpaceDataset<T>> {
    if series.dim() != coilmaps.dim() {
        return Err(Error::shape(
            "acquire",
            format!("series {:?} vs coil maps {:?}", series.dim(), coilmaps.dim()),
        ));
    }
    if series.n_frames() != schedule.n_frames() {
        return Err(Error::shape(
            "acquire",
            format!("{} frames vs {}-frame schedule", series.n_frames(), schedule.n_frames()),
        ));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::Config("noise_sigma must be nonnegative".into()));
    }
    let op = SamplingOperator::new(schedule, coilmaps.clone(), mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = noise_sigma / std::f64::consts::SQRT_2;
    let mut samples = Vec::with_capacity(series.n_frames());
    for i in 0..series.n_frames() {
        let mut frame = op.forward_frame(i, series.frame(i))?;
        if noise_sigma > 0.0 {
            for coil in &mut frame {
                for z in coil.iter_mut() {
                    let nr: f64 = StandardNormal.sample(&mut rng);
                    let ni: f64 = StandardNormal.sample(&mut rng);
                    *z = *z + Cplx::new(T::lit(scale * nr), T::lit(scale * ni));
                }
            }
        }
        samples.push(frame);
    }
    Ok(KSpaceDataset {
        samples,
        schedule: schedule.clone(),
        mode,
        coilmaps: coilmaps.clone(),
        noise_sigma: T::lit(noise_sigma),
    })
}

#[cfg(test)]
mod tests;
