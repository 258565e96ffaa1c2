//! Pipeline stages. Each stage reads upstream artifacts from the output
//! directory, checks their configuration hashes and digests, and writes its
//! own artifacts plus a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use deblur_core::baselines::{lowrank_from_term, storm_from_term, storm_laplacian, FactorPair};
use deblur_core::deblur::{initialize, reconstruct, Checkpoint, DeblurState, InitMode};
use deblur_core::generators::{GeneratorNet, Layer, LatentTrajectory, NetKind, SpatialSeed};
use deblur_core::metrics::{evaluate_series, HfenMode, Metric, MetricReport};
use deblur_core::mri::{CoilMaps, GramDataTerm, KSpaceDataset, SamplingOperator, Spoke, TrajectorySchedule};
use deblur_core::phantom::{acquire, golden_angle_schedule, make_coilmaps, make_phantom, ImageSeries};
use deblur_core::{difftensor::Tensor, Cplx, Error, Result};
use ndarray::{Array2, Array3, ArrayD, Axis, IxDyn};
use serde_json::{json, Value};

use crate::config::{baseline_for, init_name, BaselineMethod, PipelineConfig, Stage};
use crate::container::{self, TensorData};
use crate::manifest::{digest, FileDigest, RunManifest};

pub const TRUTH: &str = "truth.dtn";
pub const COILMAPS: &str = "coilmaps.dtn";
pub const SCHEDULE: &str = "schedule.dtn";
pub const KSPACE: &str = "kspace.dtn";

/// Writes files relative to a directory and remembers what was written.
struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn tensor(&mut self, rel: &str, t: &TensorData) -> Result<()> {
        self.ensure_parent(rel)?;
        container::write(&self.dir.join(rel), t)?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn text(&mut self, rel: &str, s: &str) -> Result<()> {
        self.bytes(rel, s.as_bytes())
    }

    fn bytes(&mut self, rel: &str, b: &[u8]) -> Result<()> {
        self.ensure_parent(rel)?;
        fs::write(self.dir.join(rel), b)?;
        self.files.push(rel.to_string());
        Ok(())
    }

    fn ensure_parent(&self, rel: &str) -> Result<()> {
        if let Some(p) = self.dir.join(rel).parent() {
            fs::create_dir_all(p)?;
        }
        Ok(())
    }

    fn digests(&self) -> Result<Vec<FileDigest>> {
        self.files.iter().map(|f| digest(self.dir, f)).collect()
    }
}

fn seeds(cfg: &PipelineConfig) -> BTreeMap<String, u64> {
    BTreeMap::from([
        ("phantom".to_string(), cfg.phantom.seed),
        ("coils".to_string(), cfg.acquisition.coil_seed),
        ("noise".to_string(), cfg.acquisition.seed),
        ("recon".to_string(), cfg.recon.seed),
    ])
}

fn write_manifest(cfg: &PipelineConfig, stage: &Stage, dir: &Path, name: &str, inputs: Vec<FileDigest>, out: &Outputs, summary: Value) -> Result<()> {
    RunManifest {
        stage: name.to_string(),
        config_hash: cfg.stage_hash(stage),
        config: cfg.stage_config(stage),
        seeds: seeds(cfg),
        inputs,
        outputs: out.digests()?,
        summary,
    }
    .write(dir)
}

/// Wall-clock timings live apart from the reproducible artifacts.
fn write_timing(dir: &Path, name: &str, started: Instant) -> Result<()> {
    let t = json!({ "stage": name, "seconds": started.elapsed().as_secs_f64() });
    fs::write(dir.join(format!("{name}.timing.json")), serde_json::to_string_pretty(&t)? + "\n")?;
    Ok(())
}

/// Loads an upstream manifest, checks its hash against the current
/// configuration, and verifies the digests of the files it lists.
fn upstream(cfg: &PipelineConfig, stage: &Stage, dir: &Path, wanted: &[&str]) -> Result<(RunManifest, Vec<FileDigest>)> {
    let name = stage.name();
    let m = RunManifest::read(dir, &name)?;
    let expected = cfg.stage_hash(stage);
    if m.config_hash != expected {
        return Err(Error::Config(format!(
            "config hash mismatch for stage {name}: artifacts have {}, current configuration gives {expected}",
            m.config_hash
        )));
    }
    let mut used = Vec::new();
    for rel in wanted {
        let rec = m
            .outputs
            .iter()
            .find(|d| d.path == *rel)
            .ok_or_else(|| Error::Format(format!("stage {name} did not record {rel}")))?;
        let now = digest(dir, rel)?;
        if now.sha256 != rec.sha256 {
            return Err(Error::Format(format!("{rel} changed since stage {name} wrote it")));
        }
        used.push(now);
    }
    Ok((m, used))
}

fn complex_tensor<D: ndarray::Dimension>(a: ndarray::Array<Cplx<f64>, D>) -> TensorData {
    TensorData::Complex(a.into_dyn())
}

fn real_tensor<D: ndarray::Dimension>(a: ndarray::Array<f64, D>) -> TensorData {
    TensorData::Real(a.into_dyn())
}

fn read_complex<D: ndarray::Dimension>(path: &Path) -> Result<ndarray::Array<Cplx<f64>, D>> {
    container::read(path)?
        .into_complex()?
        .into_dimensionality::<D>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn read_real<D: ndarray::Dimension>(path: &Path) -> Result<ndarray::Array<f64, D>> {
    container::read(path)?
        .into_real()?
        .into_dimensionality::<D>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn schedule_tensor(s: &TrajectorySchedule<f64>) -> TensorData {
    let (n, k) = (s.n_frames(), s.spokes_per_frame());
    real_tensor(Array3::from_shape_fn((n, k, 2), |(f, j, c)| {
        let sp = s.frames[f][j];
        if c == 0 {
            sp.angle
        } else if sp.navigator {
            1.0
        } else {
            0.0
        }
    }))
}

fn schedule_from(a: &Array3<f64>, n_readout: usize) -> TrajectorySchedule<f64> {
    let frames = a
        .outer_iter()
        .map(|f| f.outer_iter().map(|s| Spoke { angle: s[0], navigator: s[1] != 0.0 }).collect())
        .collect();
    TrajectorySchedule { frames, n_readout }
}

fn coil_tensor(c: &CoilMaps<f64>) -> TensorData {
    let (h, w) = c.dim();
    complex_tensor(Array3::from_shape_fn((c.n_coils(), h, w), |(k, y, x)| c.maps()[k][[y, x]]))
}

fn coils_from(a: Array3<Cplx<f64>>) -> Result<CoilMaps<f64>> {
    CoilMaps::new(a.outer_iter().map(|m| m.to_owned()).collect())
}

pub fn read_truth(cfg: &PipelineConfig, dir: &Path) -> Result<ImageSeries<f64>> {
    upstream(cfg, &Stage::Phantom, dir, &[TRUTH])?;
    Ok(ImageSeries { frames: read_complex(&dir.join(TRUTH))?, frame_dt: cfg.phantom.frame_dt })
}

pub fn cmd_phantom(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let t0 = Instant::now();
    cfg.validate()?;
    let series = make_phantom::<f64>(&cfg.phantom)?;
    let (h, w) = series.dim();
    let coils = make_coilmaps::<f64>(cfg.acquisition.coils, h, w, cfg.acquisition.coil_seed)?;
    let sched = golden_angle_schedule::<f64>(series.n_frames(), cfg.acquisition.spokes_per_frame, cfg.n_readout())?;
    let mut out = Outputs::new(dir)?;
    out.tensor(TRUTH, &complex_tensor(series.frames.clone()))?;
    out.tensor(COILMAPS, &coil_tensor(&coils))?;
    out.tensor(SCHEDULE, &schedule_tensor(&sched))?;
    let summary = json!({ "n_frames": series.n_frames(), "frame_dt": series.frame_dt, "height": h, "width": w });
    write_manifest(cfg, &Stage::Phantom, dir, "phantom", vec![], &out, summary)?;
    write_timing(dir, "phantom", t0)
}

pub fn cmd_acquire(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let t0 = Instant::now();
    cfg.validate()?;
    let (_, inputs) = upstream(cfg, &Stage::Phantom, dir, &[TRUTH, COILMAPS, SCHEDULE])?;
    let series = ImageSeries { frames: read_complex(&dir.join(TRUTH))?, frame_dt: cfg.phantom.frame_dt };
    let coils = coils_from(read_complex(&dir.join(COILMAPS))?)?;
    let sched = schedule_from(&read_real(&dir.join(SCHEDULE))?, cfg.n_readout());
    let a = &cfg.acquisition;
    let data = acquire(&series, &coils, &sched, a.mode, a.noise_sigma, a.seed)?;
    let flat: Vec<Cplx<f64>> = data.samples.iter().flatten().flatten().copied().collect();
    let mut out = Outputs::new(dir)?;
    out.tensor(KSPACE, &complex_tensor(ndarray::Array1::from(flat)))?;
    let summary = json!({ "mode": a.mode, "noise_sigma": a.noise_sigma, "n_coils": data.n_coils() });
    write_manifest(cfg, &Stage::Acquire, dir, "acquire", inputs, &out, summary)?;
    write_timing(dir, "acquire", t0)
}

/// Rebuilds the acquired dataset from the stored artifacts.
pub fn load_dataset(cfg: &PipelineConfig, dir: &Path) -> Result<(KSpaceDataset<f64>, Vec<FileDigest>)> {
    let (_, mut inputs) = upstream(cfg, &Stage::Phantom, dir, &[COILMAPS, SCHEDULE])?;
    let (_, k) = upstream(cfg, &Stage::Acquire, dir, &[KSPACE])?;
    inputs.extend(k);
    let coilmaps = coils_from(read_complex(&dir.join(COILMAPS))?)?;
    let schedule = schedule_from(&read_real(&dir.join(SCHEDULE))?, cfg.n_readout());
    let flat: ndarray::Array1<Cplx<f64>> = read_complex(&dir.join(KSPACE))?;
    let mut ds = KSpaceDataset {
        samples: Vec::new(),
        schedule,
        mode: cfg.acquisition.mode,
        coilmaps,
        noise_sigma: cfg.acquisition.noise_sigma,
    };
    let op = SamplingOperator::new(&ds.schedule, ds.coilmaps.clone(), ds.mode)?;
    let mut pos = 0;
    let nc = ds.n_coils();
    for f in 0..op.n_frames() {
        let m = op.n_samples(f);
        let mut frame = Vec::with_capacity(nc);
        for _ in 0..nc {
            let end = pos + m;
            if end > flat.len() {
                return Err(Error::Format("k-space file is shorter than the sampling pattern".into()));
            }
            frame.push(flat.slice(ndarray::s![pos..end]).to_vec());
            pos = end;
        }
        ds.samples.push(frame);
    }
    if pos != flat.len() {
        return Err(Error::Format("k-space file is longer than the sampling pattern".into()));
    }
    ds.validate_against(&op)?;
    Ok((ds, inputs))
}

fn baseline_files(m: BaselineMethod) -> (String, String) {
    (format!("baseline_{}_u.dtn", m.name()), format!("baseline_{}_v.dtn", m.name()))
}

pub fn cmd_baseline(cfg: &PipelineConfig, dir: &Path, method: BaselineMethod) -> Result<()> {
    let t0 = Instant::now();
    cfg.validate()?;
    let (ds, inputs) = load_dataset(cfg, dir)?;
    let term = GramDataTerm::new(ds.operator()?, &ds.samples)?;
    let (rec, extra) = match method {
        BaselineMethod::Storm => {
            let s = &cfg.baseline.storm;
            let lap = storm_laplacian(&ds, s.sigma_kernel, s.k_nn)?;
            let rec = storm_from_term(&term, &lap, s)?;
            (rec, json!({ "kernel_sigma": lap.sigma() }))
        }
        BaselineMethod::Lowrank => (lowrank_from_term(&term, &cfg.baseline.lowrank)?, Value::Null),
    };
    let (uf, vf) = baseline_files(method);
    let mut out = Outputs::new(dir)?;
    out.tensor(&uf, &complex_tensor(rec.factors.u.clone()))?;
    out.tensor(&vf, &real_tensor(rec.factors.v.clone()))?;
    let mut hist = String::from("iteration,value\n");
    for (i, v) in rec.history.iter().enumerate() {
        hist.push_str(&format!("{i},{v:.17e}\n"));
    }
    out.text(&format!("baseline_{}_history.csv", method.name()), &hist)?;
    let summary = json!({ "converged": rec.converged, "iterations": rec.history.len(), "details": extra });
    let stage = Stage::Baseline(method);
    write_manifest(cfg, &stage, dir, &stage.name(), inputs, &out, summary)?;
    write_timing(dir, &stage.name(), t0)
}

pub fn load_baseline(cfg: &PipelineConfig, dir: &Path, method: BaselineMethod) -> Result<(FactorPair<f64>, Vec<FileDigest>)> {
    let (uf, vf) = baseline_files(method);
    let (_, inputs) = upstream(cfg, &Stage::Baseline(method), dir, &[&uf, &vf])?;
    Ok((FactorPair::new(read_complex(&dir.join(&uf))?, read_real(&dir.join(&vf))?)?, inputs))
}

fn tensor_to_data(t: &Tensor<f64>) -> TensorData {
    TensorData::Real(ArrayD::from_shape_vec(IxDyn(t.shape()), t.data().to_vec()).expect("tensor shape"))
}

fn data_to_tensor(a: ArrayD<f64>) -> Result<Tensor<f64>> {
    let shape = a.shape().to_vec();
    Tensor::new(shape, a.iter().copied().collect())
}

/// Relative file names of a state under `prefix`.
pub fn state_files(prefix: &str) -> Vec<String> {
    let mut v = Vec::new();
    for net in ["theta", "phi"] {
        for l in 0..deblur_core::generators::N_LAYERS {
            v.push(format!("{prefix}{net}_{l}_w.dtn"));
            v.push(format!("{prefix}{net}_{l}_b.dtn"));
        }
    }
    v.push(format!("{prefix}z.dtn"));
    v.push(format!("{prefix}u0.dtn"));
    v
}

fn write_state(out: &mut Outputs, prefix: &str, s: &DeblurState<f64>) -> Result<()> {
    for (name, net) in [("theta", &s.theta), ("phi", &s.phi)] {
        for (l, layer) in net.layers().iter().enumerate() {
            out.tensor(&format!("{prefix}{name}_{l}_w.dtn"), &tensor_to_data(&layer.weights))?;
            out.tensor(&format!("{prefix}{name}_{l}_b.dtn"), &tensor_to_data(&layer.bias))?;
        }
    }
    out.tensor(&format!("{prefix}z.dtn"), &real_tensor(s.z.z.clone()))?;
    out.tensor(&format!("{prefix}u0.dtn"), &complex_tensor(s.seed.to_factor()))
}

pub fn read_state(dir: &Path, prefix: &str, h: usize, w: usize) -> Result<DeblurState<f64>> {
    let net = |name: &str, kind: NetKind| -> Result<GeneratorNet<f64>> {
        let layers = (0..deblur_core::generators::N_LAYERS)
            .map(|l| {
                Ok(Layer {
                    weights: data_to_tensor(container::read(&dir.join(format!("{prefix}{name}_{l}_w.dtn")))?.into_real()?)?,
                    bias: data_to_tensor(container::read(&dir.join(format!("{prefix}{name}_{l}_b.dtn")))?.into_real()?)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        GeneratorNet::from_layers(kind, layers)
    };
    let z = LatentTrajectory::new(read_real(&dir.join(format!("{prefix}z.dtn")))?)?;
    let u0: Array2<Cplx<f64>> = read_complex(&dir.join(format!("{prefix}u0.dtn")))?;
    Ok(DeblurState { theta: net("theta", NetKind::Spatial)?, phi: net("phi", NetKind::Temporal)?, z, seed: SpatialSeed::from_factor(u0.view(), h, w)? })
}

pub fn pretrain_prefix(init: InitMode) -> String {
    format!("pretrain_{}/", init_name(init))
}

pub fn cmd_pretrain(cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    let t0 = Instant::now();
    cfg.validate()?;
    let init = cfg.recon.init;
    let (base, inputs) = load_baseline(cfg, dir, baseline_for(init))?;
    let (h, w) = (cfg.phantom.height, cfg.phantom.width);
    let (state, report) = initialize(&cfg.recon, &base, h, w)?;
    let mut out = Outputs::new(dir)?;
    write_state(&mut out, &pretrain_prefix(init), &state)?;
    let stage = Stage::Pretrain(init);
    let summary = json!({
        "report": report,
        "spatial_widths": state.theta.widths(),
        "temporal_widths": state.phi.widths(),
    });
    write_manifest(cfg, &stage, dir, &stage.name(), inputs, &out, summary)?;
    write_timing(dir, &stage.name(), t0)
}

/// SER reference for training traces and evaluation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Reference {
    Truth,
    /// A baseline reconstruction.
    Baseline(BaselineMethod),
    /// A stored reconstruction run.
    Run(String),
    None,
}

impl Reference {
    pub fn parse(s: &str) -> Self {
        match s {
            "truth" => Reference::Truth,
            "none" => Reference::None,
            "storm" => Reference::Baseline(BaselineMethod::Storm),
            "lowrank" => Reference::Baseline(BaselineMethod::Lowrank),
            run => Reference::Run(run.to_string()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Reference::Truth => "truth".into(),
            Reference::None => "none".into(),
            Reference::Baseline(m) => m.name().into(),
            Reference::Run(r) => r.clone(),
        }
    }
}

pub fn run_dir(dir: &Path, run: &str) -> Result<PathBuf> {
    if run.is_empty() || run.contains(['/', '\\']) || run.starts_with('.') {
        return Err(Error::Config(format!("invalid run id {run:?}")));
    }
    Ok(dir.join("runs").join(run))
}

fn series_of(f: &FactorPair<f64>, cfg: &PipelineConfig) -> Result<ImageSeries<f64>> {
    f.series(cfg.phantom.height, cfg.phantom.width, cfg.phantom.frame_dt)
}

/// Materializes any reconstruction or the ground truth as a series.
pub fn load_series(cfg: &PipelineConfig, dir: &Path, which: &Reference) -> Result<Option<ImageSeries<f64>>> {
    Ok(match which {
        Reference::None => None,
        Reference::Truth => Some(read_truth(cfg, dir)?),
        Reference::Baseline(m) => Some(series_of(&load_baseline(cfg, dir, *m)?.0, cfg)?),
        Reference::Run(r) => Some(series_of(&load_run(cfg, dir, r)?.0, cfg)?),
    })
}

/// Factors and manifest of a stored reconstruction run.
pub fn load_run(cfg: &PipelineConfig, dir: &Path, run: &str) -> Result<(FactorPair<f64>, RunManifest)> {
    let rd = run_dir(dir, run)?;
    if !RunManifest::path(&rd, "reconstruct").exists() {
        return Err(Error::Config(format!("unknown run id {run:?}")));
    }
    let m = RunManifest::read(&rd, "reconstruct")?;
    for f in ["u.dtn", "v.dtn"] {
        let rec = m.outputs.iter().find(|d| d.path == f).ok_or_else(|| Error::Format(format!("run {run} lacks {f}")))?;
        if digest(&rd, f)?.sha256 != rec.sha256 {
            return Err(Error::Format(format!("{f} of run {run} changed since it was written")));
        }
    }
    let _ = cfg;
    Ok((FactorPair::new(read_complex(&rd.join("u.dtn"))?, read_real(&rd.join("v.dtn"))?)?, m))
}

pub fn cmd_reconstruct(cfg: &PipelineConfig, dir: &Path, run: &str, reference: &Reference) -> Result<()> {
    let t0 = Instant::now();
    cfg.validate()?;
    let init = cfg.recon.init;
    let prefix = pretrain_prefix(init);
    let files = state_files(&prefix);
    let wanted: Vec<&str> = files.iter().map(String::as_str).collect();
    let (_, mut inputs) = upstream(cfg, &Stage::Pretrain(init), dir, &wanted)?;
    let (h, w) = (cfg.phantom.height, cfg.phantom.width);
    let state = read_state(dir, &prefix, h, w)?;
    let (ds, more) = load_dataset(cfg, dir)?;
    inputs.extend(more);
    let term = GramDataTerm::new(ds.operator()?, &ds.samples)?;
    let refseries = load_series(cfg, dir, reference)?;
    let rd = run_dir(dir, run)?;
    if rd.exists() {
        fs::remove_dir_all(&rd)?;
    }
    let mut out = Outputs::new(&rd)?;
    let stage = Stage::Reconstruct(init);
    let hash = cfg.stage_hash(&stage);
    let mut ckpt_err = None;
    let mut save = |c: &Checkpoint<f64>| -> Result<()> {
        let p = format!("checkpoints/epoch_{:06}/", c.epoch);
        write_state(&mut out, &p, &c.state)?;
        let meta = json!({ "epoch": c.epoch, "config_hash": hash, "penalties": c.penalties });
        out.text(&format!("{p}checkpoint.json"), &(serde_json::to_string_pretty(&meta)? + "\n"))
    };
    let result = reconstruct(&term, &cfg.recon, state, refseries.as_ref(), &mut |c| {
        save(c).inspect_err(|e| ckpt_err = Some(e.to_string()))
    });
    let res = match result {
        Ok(r) => r,
        Err(e) => {
            drop(save);
            return Err(e);
        }
    };
    drop(save);
    out.tensor("u.dtn", &complex_tensor(res.factors.u.clone()))?;
    out.tensor("v.dtn", &real_tensor(res.factors.v.clone()))?;
    write_state(&mut out, "final/", &res.state)?;
    out.text("trace.csv", &res.trace.to_csv())?;
    if !res.trace.z_snapshots.is_empty() {
        let s = &res.trace.z_snapshots;
        let (d, n) = s[0].z.dim();
        let stack = Array3::from_shape_fn((s.len(), d, n), |(k, i, j)| s[k].z[[i, j]]);
        out.tensor("z_snapshots.dtn", &real_tensor(stack))?;
        let epochs: Vec<String> = s.iter().map(|z| z.epoch.to_string()).collect();
        out.text("z_snapshots.csv", &format!("snapshot,epoch\n{}", epochs.iter().enumerate().map(|(i, e)| format!("{i},{e}\n")).collect::<String>()))?;
    }
    let summary = json!({
        "run": run,
        "init": init,
        "reference": reference.label(),
        "epochs_run": res.trace.entries.last().map(|e| e.epoch),
        "stopped_early": res.stopped_early,
        "final_ser_db": res.trace.final_ser(),
        "peak_ser": res.trace.peak_ser(),
    });
    RunManifest {
        stage: "reconstruct".into(),
        config_hash: hash.clone(),
        config: cfg.stage_config(&stage),
        seeds: seeds(cfg),
        inputs,
        outputs: out.digests()?,
        summary,
    }
    .write(&rd)?;
    write_timing(&rd, "reconstruct", t0)
}

/// Per-frame metrics of one reconstruction against a reference.
pub fn evaluate_pair(rec: &ImageSeries<f64>, reference: &ImageSeries<f64>, ref_label: &str) -> Result<Vec<MetricReport>> {
    Metric::ALL.iter().map(|&m| evaluate_series(m, rec, reference, ref_label, HfenMode::Ratio)).collect()
}

pub fn cmd_evaluate(cfg: &PipelineConfig, dir: &Path, recs: &[Reference], reference: &Reference) -> Result<()> {
    cfg.validate()?;
    let refseries = load_series(cfg, dir, reference)?.ok_or_else(|| Error::Config("evaluation needs a reference".into()))?;
    let eval_dir = dir.join("evaluation");
    let mut out = Outputs::new(&eval_dir)?;
    let mut table = String::from("method,ser_db,psnr_db,hfen,ssim\n");
    let mut all = serde_json::Map::new();
    for rec in recs {
        let series = load_series(cfg, dir, rec)?.ok_or_else(|| Error::Config("cannot evaluate 'none'".into()))?;
        let reports = evaluate_pair(&series, &refseries, &reference.label())?;
        let label = rec.label();
        let mut csv = String::from("frame,ser_db,psnr_db,hfen,ssim\n");
        for i in 0..series.n_frames() {
            let cells: Vec<String> = reports.iter().map(|r| deblur_core::metrics::format_value(r.values[i])).collect();
            csv.push_str(&format!("{i},{}\n", cells.join(",")));
        }
        out.text(&format!("{label}_vs_{}.csv", reference.label()), &csv)?;
        let cells: Vec<String> = reports.iter().map(MetricReport::summary).collect();
        table.push_str(&format!("{label},{}\n", cells.join(",")));
        all.insert(label, serde_json::to_value(&reports)?);
    }
    out.text(&format!("table_vs_{}.csv", reference.label()), &table)?;
    out.text(&format!("metrics_vs_{}.json", reference.label()), &(serde_json::to_string_pretty(&Value::Object(all))? + "\n"))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ExportKind {
    Frames,
    Latents,
    Curves,
    Profile,
}

/// Plain PGM (binary, `P5`) of magnitudes scaled so `scale` maps to the
/// top gray level.
pub fn pgm(image: &Array2<f64>, scale: f64, bits16: bool) -> Vec<u8> {
    let (h, w) = image.dim();
    let maxval: u32 = if bits16 { 65535 } else { 255 };
    let mut out = format!("P5\n{w} {h}\n{maxval}\n").into_bytes();
    for v in image.iter() {
        let q = if scale > 0.0 { (v / scale * maxval as f64).round().clamp(0.0, maxval as f64) as u32 } else { 0 };
        if bits16 {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    out
}

pub fn cmd_export(cfg: &PipelineConfig, dir: &Path, run: &str, what: ExportKind, bits16: bool, row: Option<usize>) -> Result<()> {
    let (factors, _) = load_run(cfg, dir, run)?;
    let rd = run_dir(dir, run)?;
    let ex = rd.join("export");
    let mut out = Outputs::new(&ex)?;
    let (h, w) = (cfg.phantom.height, cfg.phantom.width);
    match what {
        ExportKind::Latents => {
            let z: Array2<f64> = read_real(&rd.join("final/z.dtn"))?;
            let d = z.nrows();
            let mut csv = String::from("frame");
            for k in 1..=d {
                csv.push_str(&format!(",z{k}"));
            }
            csv.push('\n');
            for (i, col) in z.columns().into_iter().enumerate() {
                let cells: Vec<String> = col.iter().map(|v| format!("{v:.17e}")).collect();
                csv.push_str(&format!("{i},{}\n", cells.join(",")));
            }
            out.text("latents.csv", &csv)?;
        }
        ExportKind::Curves => {
            out.bytes("curves.csv", &fs::read(rd.join("trace.csv"))?)?;
        }
        ExportKind::Frames => {
            let mag = series_of(&factors, cfg)?.magnitude();
            let scale = mag.iter().copied().fold(0.0, f64::max);
            for (i, f) in mag.axis_iter(Axis(0)).enumerate() {
                out.bytes(&format!("frames/frame_{i:04}.pgm"), &pgm(&f.to_owned(), scale, bits16))?;
            }
        }
        ExportKind::Profile => {
            let r = row.unwrap_or(h / 2);
            if r >= h {
                return Err(Error::Config(format!("profile row {r} outside 0..{h}")));
            }
            let mag = series_of(&factors, cfg)?.magnitude();
            let mut csv = String::from("frame");
            for x in 0..w {
                csv.push_str(&format!(",x{x}"));
            }
            csv.push('\n');
            for (i, f) in mag.axis_iter(Axis(0)).enumerate() {
                let cells: Vec<String> = f.row(r).iter().map(|v| format!("{v:.17e}")).collect();
                csv.push_str(&format!("{i},{}\n", cells.join(",")));
            }
            out.text(&format!("xt_profile_row{r}.csv"), &csv)?;
        }
    }
    Ok(())
}
