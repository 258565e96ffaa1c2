//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,2,3` restricts the run; `ACCEPTANCE_STRICT=1` turns any
//! FAIL into a nonzero exit status.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use deblur_cli::config::{BaselineMethod, PipelineConfig};
use deblur_cli::pipeline::{self, ExportKind, Reference};
use deblur_core::deblur::{data_weight, smooth_gradient, DeblurState, InitMode, ReconConfig};
use deblur_core::generators::{spatial_forward, temporal_forward, GeneratorNet, LatentTrajectory, NetKind, SpatialSeed};
use deblur_core::metrics::{self, HfenMode, Metric};
use deblur_core::mri::{
    casorati, column_image, frame_measure, masked_fft_adjoint, masked_fft_forward, nudft_adjoint, nudft_forward, CartesianMask,
    GramDataTerm, OperatorMode, SamplingOperator,
};
use deblur_core::phantom::{acquire, golden_angle_schedule, make_coilmaps, ImageSeries};
use deblur_core::Cplx;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C = Cplx<f64>;
type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn crandom(rng: &mut ChaCha8Rng) -> C {
    C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn inner(a: impl Iterator<Item = C>, b: impl Iterator<Item = C>) -> C {
    a.zip(b).fold(C::new(0.0, 0.0), |s, (x, y)| s + x.conj() * y)
}

fn criterion_1() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (h, w) = (rng.random_range(4..=64), rng.random_range(4..=64));
        let x = Array2::from_shape_simple_fn((h, w), || crandom(&mut rng));

        let m = rng.random_range(1..=300);
        let pts: Vec<[f64; 2]> = (0..m)
            .map(|_| [rng.random_range(-std::f64::consts::PI..std::f64::consts::PI), rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)])
            .collect();
        let y: Vec<C> = (0..m).map(|_| crandom(&mut rng)).collect();
        let ax = nudft_forward(x.view(), &pts).map_err(|e| e.to_string())?;
        let aty = nudft_adjoint(&y, &pts, h, w).map_err(|e| e.to_string())?;
        let (l, r) = (inner(ax.iter().copied(), y.iter().copied()), inner(x.iter().copied(), aty.iter().copied()));
        worst = worst.max((l - r).norm() / l.norm().max(r.norm()));

        let bits: Vec<bool> = (0..h * w).map(|_| rng.random_bool(0.4)).collect();
        let mask = CartesianMask::new(h, w, bits).map_err(|e| e.to_string())?;
        let ax = masked_fft_forward(x.view(), &mask).map_err(|e| e.to_string())?;
        if ax.is_empty() {
            continue;
        }
        let y: Vec<C> = (0..ax.len()).map(|_| crandom(&mut rng)).collect();
        let aty = masked_fft_adjoint(&y, &mask).map_err(|e| e.to_string())?;
        let (l, r) = (inner(ax.iter().copied(), y.iter().copied()), inner(x.iter().copied(), aty.iter().copied()));
        worst = worst.max((l - r).norm() / l.norm().max(r.norm()));
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(worst < 1e-10 && secs < 10.0, format!("worst relative mismatch {worst:.2e}, {secs:.2} s"))
}

struct Small {
    cfg: ReconConfig,
    state: DeblurState<f64>,
    term: GramDataTerm<f64>,
    op: SamplingOperator<f64>,
    samples: Vec<Vec<Vec<C>>>,
}

fn small_problem(h: usize, rank: usize, n_f: usize, seed: u64) -> Small {
    let cfg = ReconConfig { rank, latent_dim: 2, hidden: 4, data_scale: 1.0, ..ReconConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = |kind, widths, rng: &mut ChaCha8Rng| GeneratorNet::random(kind, widths, cfg.kernel, rng).unwrap();
    let theta = net(NetKind::Spatial, cfg.spatial_widths(), &mut rng);
    let phi = net(NetKind::Temporal, cfg.temporal_widths(), &mut rng);
    let z = LatentTrajectory::random(2, n_f, &mut rng);
    let u0 = Array2::from_shape_simple_fn((h * h, rank), || crandom(&mut rng));
    let state = DeblurState { theta, phi, z, seed: SpatialSeed::from_factor(u0.view(), h, h).unwrap() };
    let truth = ImageSeries::from_casorati(
        Array2::from_shape_simple_fn((h * h, n_f), || crandom(&mut rng)).view(),
        h,
        h,
        0.05,
    );
    let maps = make_coilmaps::<f64>(2, h, h, seed).unwrap();
    let sched = golden_angle_schedule::<f64>(n_f, 6, h).unwrap();
    let data = acquire(&truth, &maps, &sched, OperatorMode::Radial, 0.1, seed).unwrap();
    let op = data.operator().unwrap();
    let term = GramDataTerm::new(op.clone(), &data.samples).unwrap();
    Small { cfg, state, term, op, samples: data.samples }
}

/// Objective recomputed by measuring every materialized frame.
fn direct_objective(p: &Small, s: &DeblurState<f64>, scale: f64) -> f64 {
    let u = spatial_forward(&s.theta, &s.seed).unwrap();
    let v = temporal_forward(&s.phi, &s.z).unwrap();
    let x = casorati(u.view(), v.view());
    let (h, w) = p.op.dim();
    let mut loss = 0.0;
    for i in 0..x.ncols() {
        let ax = p.op.forward_frame(i, column_image(x.column(i), h, w).view()).unwrap();
        for (a, b) in ax.iter().zip(&p.samples[i]) {
            loss += a.iter().zip(b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>();
        }
    }
    scale * loss
}

fn perturb(s: &DeblurState<f64>, dir: &[f64], eps: f64) -> DeblurState<f64> {
    let mut out = s.clone();
    let mut k = 0;
    for net in [&mut out.theta, &mut out.phi] {
        for layer in net.layers_mut() {
            for t in [&mut layer.weights, &mut layer.bias] {
                for v in t.data_mut() {
                    *v += eps * dir[k];
                    k += 1;
                }
            }
        }
    }
    for v in out.z.z.iter_mut() {
        *v += eps * dir[k];
        k += 1;
    }
    out
}

fn flat_gradient(theta: &GeneratorNet<f64>, phi: &GeneratorNet<f64>, z: &Array2<f64>) -> Vec<f64> {
    let mut g = Vec::new();
    for net in [theta, phi] {
        for layer in net.layers() {
            g.extend_from_slice(layer.weights.data());
            g.extend_from_slice(layer.bias.data());
        }
    }
    g.extend(z.iter().copied());
    g
}

fn criterion_2() -> Check {
    let t = Instant::now();
    let p = small_problem(16, 3, 10, 202);
    let scale = data_weight(&p.term, &p.cfg).map_err(|e| e.to_string())?;
    let g = smooth_gradient(&p.term, &p.state, scale).map_err(|e| e.to_string())?;
    let flat = flat_gradient(&g.theta, &g.phi, &g.z);
    let mut rng = ChaCha8Rng::seed_from_u64(203);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let dir: Vec<f64> = (0..flat.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let analytic: f64 = flat.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let eps = 1e-5;
        let fd = (direct_objective(&p, &perturb(&p.state, &dir, eps), scale) - direct_objective(&p, &perturb(&p.state, &dir, -eps), scale))
            / (2.0 * eps);
        worst = worst.max((fd - analytic).abs() / analytic.abs());
    }
    let value_gap = (g.value - direct_objective(&p, &p.state, scale)).abs() / g.value;
    let secs = t.elapsed().as_secs_f64();
    ensure(
        worst < 1e-5 && value_gap < 1e-10 && secs < 60.0,
        format!("worst directional error {worst:.2e}, objective gap {value_gap:.1e} (value {:.6e}), {secs:.1} s", g.value),
    )
}

fn criterion_3() -> Check {
    let p = small_problem(24, 4, 6, 303);
    let mut rng = ChaCha8Rng::seed_from_u64(304);
    let (h, w) = p.op.dim();
    let u = Array2::from_shape_simple_fn((h * w, 4), || crandom(&mut rng));
    let v = Array2::from_shape_simple_fn((6, 4), || rng.random_range(-1.0..1.0));
    let x = casorati(u.view(), v.view());
    let mut worst: f64 = 0.0;
    for i in 0..6 {
        let fast = frame_measure(&p.op, i, u.view(), v.row(i)).map_err(|e| e.to_string())?;
        let slow = p.op.forward_frame(i, column_image(x.column(i), h, w).view()).map_err(|e| e.to_string())?;
        let peak = slow.iter().flatten().fold(0.0f64, |m, z| m.max(z.norm()));
        for (a, b) in fast.iter().flatten().zip(slow.iter().flatten()) {
            worst = worst.max((a - b).norm() / peak);
        }
    }
    ensure(worst < 1e-12, format!("max deviation {worst:.2e} of peak sample"))
}

/// Default-scale pipeline shared by criteria 4 to 8.
struct Study {
    dir: PathBuf,
    cfg: PipelineConfig,
    seconds: BTreeMap<String, f64>,
}

const RUNS: [(&str, &str); 4] = [("main", "storm init, default weights"), ("l1_zero", "lambda_theta = 0"), ("random", "random init"), ("tv_zero", "lambda_tv = 0")];

impl Study {
    fn run() -> Result<Self, String> {
        let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| e.to_string())?;
        }
        let cfg = PipelineConfig::default();
        let mut seconds = BTreeMap::new();
        let mut timed = |name: &str, f: &dyn Fn() -> deblur_core::Result<()>| -> Result<(), String> {
            let t = Instant::now();
            f().map_err(|e| format!("{name}: {e}"))?;
            let s = t.elapsed().as_secs_f64();
            eprintln!("  {name}: {s:.1} s");
            seconds.insert(name.to_string(), s);
            Ok(())
        };
        timed("phantom", &|| pipeline::cmd_phantom(&cfg, &dir))?;
        timed("acquire", &|| pipeline::cmd_acquire(&cfg, &dir))?;
        timed("storm", &|| pipeline::cmd_baseline(&cfg, &dir, BaselineMethod::Storm))?;
        timed("lowrank", &|| pipeline::cmd_baseline(&cfg, &dir, BaselineMethod::Lowrank))?;
        timed("pretrain", &|| pipeline::cmd_pretrain(&cfg, &dir))?;
        let mut random = cfg.clone();
        random.recon.init = InitMode::Random;
        timed("pretrain_random", &|| pipeline::cmd_pretrain(&random, &dir))?;
        for (run, _) in RUNS {
            let mut c = cfg.clone();
            match run {
                "l1_zero" => c.recon.lambda_theta = 0.0,
                "random" => c.recon.init = InitMode::Random,
                "tv_zero" => c.recon.lambda_tv = 0.0,
                _ => {}
            }
            timed(run, &|| pipeline::cmd_reconstruct(&c, &dir, run, &Reference::Truth))?;
            timed(&format!("{run}_export"), &|| pipeline::cmd_export(&c, &dir, run, ExportKind::Latents, false, None))?;
        }
        Ok(Self { dir, cfg, seconds })
    }

    fn mean_ser(&self, which: &Reference) -> Result<f64, String> {
        let rec = pipeline::load_series(&self.cfg, &self.dir, which).map_err(|e| e.to_string())?.unwrap();
        let truth = pipeline::read_truth(&self.cfg, &self.dir).map_err(|e| e.to_string())?;
        metrics::evaluate_series(Metric::Ser, &rec, &truth, "truth", HfenMode::Ratio).map(|r| r.mean).map_err(|e| e.to_string())
    }

    /// SER column of an exported trace.
    fn curve(&self, run: &str) -> Result<Vec<f64>, String> {
        let text = fs::read_to_string(self.dir.join("runs").join(run).join("trace.csv")).map_err(|e| e.to_string())?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
        let col = header.iter().position(|h| *h == "ser_db").ok_or("trace has no ser_db column")?;
        lines
            .map(|l| l.split(',').nth(col).and_then(|v| v.parse().ok()).ok_or_else(|| format!("bad trace line {l:?}")))
            .collect()
    }

    fn latents(&self, run: &str) -> Result<Vec<Vec<f64>>, String> {
        let text = fs::read_to_string(self.dir.join("runs").join(run).join("export/latents.csv")).map_err(|e| e.to_string())?;
        let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect()).collect();
        let d = rows.first().map_or(0, Vec::len);
        Ok((0..d).map(|k| rows.iter().map(|r| r[k]).collect()).collect())
    }

    /// Relative pretraining fit errors (spatial, temporal) from the manifest.
    fn pretrain_errors(&self) -> Result<(f64, f64), String> {
        let text = fs::read_to_string(self.dir.join("pretrain_storm.manifest.json")).map_err(|e| e.to_string())?;
        let m: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        let get = |k: &str| m["summary"]["report"][k].as_f64().ok_or(format!("manifest has no {k}"));
        Ok((get("spatial_error")?, get("temporal_error")?))
    }
}

fn peak(curve: &[f64]) -> (usize, f64) {
    curve.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b })
}

fn criterion_4(s: &Study) -> Check {
    let storm = s.mean_ser(&Reference::Baseline(BaselineMethod::Storm))?;
    let lowrank = s.mean_ser(&Reference::Baseline(BaselineMethod::Lowrank))?;
    let (ts, tl) = (s.seconds["storm"], s.seconds["lowrank"]);
    ensure(
        storm > lowrank && ts < 600.0 && tl < 600.0,
        format!("SToRM {storm:.2} dB ({ts:.0} s) vs low-rank {lowrank:.2} dB ({tl:.0} s)"),
    )
}

fn criterion_5(s: &Study) -> Check {
    let main = s.curve("main")?;
    let random = s.curve("random")?;
    let (_, best_random) = peak(&random);
    let epochs = main.len() - 1;
    let reach = main.iter().position(|&v| v >= best_random);
    let (fm, fr) = (main[epochs], random[random.len() - 1]);
    let fast = reach.is_some_and(|e| e * 4 <= epochs);
    let (es, et) = s.pretrain_errors()?;
    ensure(
        fast && fm - fr >= 2.0,
        format!("random best {best_random:.2} dB reached at epoch {reach:?} of {epochs}; final {fm:.2} vs {fr:.2} dB; pretraining fit errors {es:.3} spatial, {et:.3} temporal"),
    )
}

fn criterion_6(s: &Study) -> Check {
    let storm = s.mean_ser(&Reference::Baseline(BaselineMethod::Storm))?;
    let deblur = s.mean_ser(&Reference::Run("main".into()))?;
    ensure(deblur >= storm + 3.0, format!("DEBLUR {deblur:.2} dB vs SToRM {storm:.2} dB (gain {:+.2})", deblur - storm))
}

fn criterion_7(s: &Study) -> Check {
    let free = s.curve("l1_zero")?;
    let reg = s.curve("main")?;
    let (ef, pf) = peak(&free);
    let (er, pr) = peak(&reg);
    let (ff, fr) = (free[free.len() - 1], reg[reg.len() - 1]);
    ensure(
        pf - ff > 0.3 && pr - fr < 0.5 && fr > pf - 0.5,
        format!("lambda 0: peak {pf:.2} @{ef} final {ff:.2}; lambda 1e-3: peak {pr:.2} @{er} final {fr:.2}"),
    )
}

/// One-sided power spectrum of a mean-removed signal, bins `1..n/2`.
fn power_spectrum(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    (1..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                re += (v - mean) * a.cos();
                im += (v - mean) * a.sin();
            }
            re * re + im * im
        })
        .collect()
}

fn flatness(p: &[f64]) -> f64 {
    let geo = (p.iter().map(|v| v.max(1e-300).ln()).sum::<f64>() / p.len() as f64).exp();
    geo / (p.iter().sum::<f64>() / p.len() as f64)
}

fn criterion_8(s: &Study) -> Check {
    let ph = &s.cfg.phantom;
    let dt = ph.frame_dt;
    let (fc, fresp) = (1.0 / ph.cardiac_period, 1.0 / ph.respiratory_period);
    let z = s.latents("main")?;
    let n = z[0].len();
    let peaks: Vec<f64> = z
        .iter()
        .map(|row| {
            let p = power_spectrum(row);
            (peak(&p).0 + 1) as f64 / (n as f64 * dt)
        })
        .collect();
    let near = |f: f64, target: f64| (f - target).abs() <= 0.1 * target;
    let cardiac = peaks.iter().position(|&f| near(f, fc));
    let resp = peaks.iter().position(|&f| near(f, fresp));
    let found = matches!((cardiac, resp), (Some(a), Some(b)) if a != b);
    let Some(k) = cardiac else {
        return Err(format!("latent peaks {peaks:.3?} Hz; expected {fc:.3} and {fresp:.3} Hz"));
    };
    let smooth = flatness(&power_spectrum(&z[k]));
    let rough = flatness(&power_spectrum(&s.latents("tv_zero")?[k]));
    ensure(
        found && rough > smooth,
        format!("latent peaks {peaks:.3?} Hz (cardiac {fc:.3}, respiratory {fresp:.3}); flatness of latent {k}: {smooth:.3} vs {rough:.3} without TV"),
    )
}

fn criterion_9() -> Check {
    let a = |v: &[f64]| Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap();
    let mut notes = Vec::new();
    let ser = metrics::ser(a(&[3.0, 4.5]).view(), a(&[3.0, 4.0]).view()).map_err(|e| e.to_string())?;
    notes.push(((ser - 20.0).abs() < 1e-12, format!("ser example {ser}")));
    let zero = metrics::ser(a(&[0.0, 0.0]).view(), a(&[3.0, 4.0]).view()).map_err(|e| e.to_string())?;
    notes.push((zero.abs() < 1e-12, format!("ser of zero rec {zero}")));

    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let x = Array2::from_shape_simple_fn((24, 20), || rng.random_range(0.0..2.0));
    let y = &x + &Array2::from_shape_simple_fn((24, 20), || rng.random_range(-0.2..0.2));
    let same = [
        metrics::ser(x.view(), x.view()).unwrap() == f64::INFINITY,
        metrics::psnr(x.view(), x.view()).unwrap() == f64::INFINITY,
        metrics::hfen(x.view(), x.view(), HfenMode::Ratio).unwrap() == 0.0,
        metrics::hfen(x.view(), x.view(), HfenMode::Db).unwrap() == f64::NEG_INFINITY,
        metrics::ssim(x.view(), x.view(), 2.0).unwrap() == 1.0,
    ];
    notes.push((same.iter().all(|&b| b), format!("identical-image sentinels {same:?}")));

    let norm = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let psnr = metrics::psnr(y.view(), x.view()).unwrap();
    let peak = x.iter().copied().fold(f64::MIN, f64::max);
    let want = 20.0 * (peak / norm(&(&x - &y))).log10();
    notes.push(((psnr - want).abs() < 1e-10, format!("psnr {psnr} vs {want}")));

    // HFEN through linearity of the filter: LoG(ref) − LoG(rec) = LoG(ref − rec)
    let k = metrics::log_kernel(metrics::LOG_SIZE, metrics::LOG_SIGMA);
    let conv = |img: &Array2<f64>| {
        let (h, w) = img.dim();
        let r = (k.nrows() / 2) as isize;
        let mut out = Array2::zeros((h, w));
        for ((dy, dx), &kv) in k.indexed_iter() {
            let (oy, ox) = (dy as isize - r, dx as isize - r);
            for yy in 0..h as isize {
                for xx in 0..w as isize {
                    let (sy, sx) = (yy + oy, xx + ox);
                    if (0..h as isize).contains(&sy) && (0..w as isize).contains(&sx) {
                        out[[yy as usize, xx as usize]] += kv * img[[sy as usize, sx as usize]];
                    }
                }
            }
        }
        out
    };
    let hfen = metrics::hfen(y.view(), x.view(), HfenMode::Ratio).unwrap();
    let want = norm(&conv(&(&x - &y))) / norm(&conv(&x));
    notes.push(((hfen - want).abs() < 1e-10 * want, format!("hfen {hfen} vs {want}")));

    // SSIM from centred second moments
    let g = metrics::gaussian_window(metrics::SSIM_SIZE, metrics::SSIM_SIGMA);
    let l = 2.0;
    let (c1, c2) = ((metrics::SSIM_K1 * l).powi(2), (metrics::SSIM_K2 * l).powi(2));
    let n = metrics::SSIM_SIZE;
    let (oh, ow) = (24 - n + 1, 20 - n + 1);
    let mut total = 0.0;
    for i in 0..oh {
        for j in 0..ow {
            let wa = y.slice(ndarray::s![i..i + n, j..j + n]);
            let wb = x.slice(ndarray::s![i..i + n, j..j + n]);
            let (ma, mb) = ((&g * &wa).sum(), (&g * &wb).sum());
            let da = wa.mapv(|v| v - ma);
            let db = wb.mapv(|v| v - mb);
            let (va, vb, cab) = ((&g * &da * &da).sum(), (&g * &db * &db).sum(), (&g * &da * &db).sum());
            total += (2.0 * ma * mb + c1) * (2.0 * cab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    let want = total / (oh * ow) as f64;
    let ssim = metrics::ssim(y.view(), x.view(), l).unwrap();
    notes.push(((ssim - want).abs() < 1e-10, format!("ssim {ssim} vs {want}")));

    let failed: Vec<&String> = notes.iter().filter(|(ok, _)| !ok).map(|(_, s)| s).collect();
    ensure(failed.is_empty(), if failed.is_empty() { format!("{} checks", notes.len()) } else { format!("{failed:?}") })
}

fn artifacts(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.to_string_lossy().ends_with(".timing.json") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_10() -> Check {
    let base = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance_determinism");
    let _ = fs::remove_dir_all(&base);
    fs::create_dir_all(&base).map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::default();
    cfg.phantom.height = 24;
    cfg.phantom.width = 24;
    cfg.phantom.duration = 2.0;
    cfg.phantom.respiratory_amplitude = 1.0;
    cfg.acquisition.coils = 3;
    cfg.baseline.storm.rank = 4;
    cfg.baseline.lowrank.rank = 4;
    cfg.recon.rank = 4;
    cfg.recon.hidden = 6;
    cfg.recon.epochs = 6;
    cfg.recon.checkpoint_every = 3;
    cfg.recon.z_snapshot_every = 2;
    cfg.recon.pretrain_spatial.epochs = 10;
    cfg.recon.pretrain_temporal.epochs = 50;
    let config = base.join("config.json");
    fs::write(&config, serde_json::to_string_pretty(&cfg).unwrap()).map_err(|e| e.to_string())?;
    let stages: [&[&str]; 11] = [
        &["phantom"],
        &["acquire"],
        &["baseline", "--method", "storm"],
        &["baseline", "--method", "lowrank"],
        &["pretrain", "--init", "storm"],
        &["reconstruct", "--init", "storm", "--run", "a"],
        &["evaluate", "--rec", "a", "storm", "lowrank", "--reference", "truth"],
        &["export", "--run", "a", "--what", "frames"],
        &["export", "--run", "a", "--what", "latents"],
        &["export", "--run", "a", "--what", "curves"],
        &["export", "--run", "a", "--what", "profile"],
    ];
    let mut trees = Vec::new();
    for rep in ["first", "second"] {
        let out = base.join(rep);
        for args in stages {
            let o = Command::new(env!("CARGO_BIN_EXE_deblur"))
                .arg("--config")
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .args(args)
                .env("RUST_LOG", "warn")
                .output()
                .map_err(|e| e.to_string())?;
            if !o.status.success() {
                return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr)));
            }
        }
        trees.push(artifacts(&out));
    }
    let (a, b) = (&trees[0], &trees[1]);
    let differing: Vec<String> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    ensure(differing.is_empty(), format!("{} artifacts compared, differing: {differing:?}", a.len()))
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));
    let names = [
        (1, "operator adjoints"),
        (2, "end-to-end gradient"),
        (3, "factored measurement"),
        (4, "baseline ordering"),
        (5, "pretraining benefit"),
        (6, "improvement over SToRM"),
        (7, "overfitting control"),
        (8, "latent disentanglement"),
        (9, "metrics suite"),
        (10, "determinism"),
    ];
    let mut results: BTreeMap<u32, Check> = BTreeMap::new();
    let guard = |f: &dyn Fn() -> Check| std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
    for (n, f) in [(1, criterion_1 as fn() -> Check), (2, criterion_2), (3, criterion_3), (9, criterion_9), (10, criterion_10)] {
        if wanted(n) {
            results.insert(n, guard(&f));
        }
    }
    if (4..=8).any(wanted) {
        eprintln!("running the default-scale study");
        match Study::run() {
            Ok(study) => {
                for (n, f) in [(4, criterion_4 as fn(&Study) -> Check), (5, criterion_5), (6, criterion_6), (7, criterion_7), (8, criterion_8)] {
                    if wanted(n) {
                        results.insert(n, guard(&|| f(&study)));
                    }
                }
            }
            Err(e) => {
                for n in (4..=8).filter(|&n| wanted(n)) {
                    results.insert(n, Err(format!("study failed: {e}")));
                }
            }
        }
    }
    let mut failures = 0;
    for (n, name) in names {
        if let Some(r) = results.get(&n) {
            let (tag, detail) = match r {
                Ok(d) => ("PASS", d),
                Err(d) => {
                    failures += 1;
                    ("FAIL", d)
                }
            };
            println!("criterion {n:>2} {tag} {name}: {detail}");
        }
    }
    println!("{} of {} criteria passed", results.len() - failures, results.len());
    if failures > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
