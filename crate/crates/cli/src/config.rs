//! The single JSON configuration shared by all pipeline stages.

use std::path::Path;

use deblur_core::baselines::{LowRankConfig, StormConfig};
use deblur_core::deblur::{InitMode, ReconConfig};
use deblur_core::mri::OperatorMode;
use deblur_core::phantom::PhantomConfig;
use deblur_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::manifest::config_hash;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    pub coils: usize,
    pub coil_seed: u64,
    pub spokes_per_frame: usize,
    /// Samples per spoke; `None` uses the image width.
    pub n_readout: Option<usize>,
    pub mode: OperatorMode,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self { coils: 5, coil_seed: 1, spokes_per_frame: 10, n_readout: None, mode: OperatorMode::Radial, noise_sigma: 1.0, seed: 3 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    #[default]
    Storm,
    Lowrank,
}

impl BaselineMethod {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Storm => "storm",
            BaselineMethod::Lowrank => "lowrank",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub storm: StormConfig,
    pub lowrank: LowRankConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub phantom: PhantomConfig,
    pub acquisition: AcquisitionConfig,
    pub baseline: BaselineConfig,
    pub recon: ReconConfig,
}

fn value<S: Serialize>(s: &S) -> Value {
    serde_json::to_value(s).expect("config sections serialize")
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Sets every seed (phantom, coils, noise, training) to `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.phantom.seed = seed;
        self.acquisition.coil_seed = seed;
        self.acquisition.seed = seed;
        self.recon.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        let a = &self.acquisition;
        if a.coils == 0 || a.spokes_per_frame < 3 {
            return Err(Error::Config("acquisition needs at least one coil and three spokes per frame".into()));
        }
        if !(a.noise_sigma >= 0.0) || !a.noise_sigma.is_finite() {
            return Err(Error::Config(format!("noise_sigma must be nonnegative, got {}", a.noise_sigma)));
        }
        self.recon.validate()?;
        let r = self.recon.rank;
        if self.baseline.storm.rank != r || self.baseline.lowrank.rank != r {
            return Err(Error::Config(format!(
                "baseline ranks (storm {}, lowrank {}) must match recon.rank {r}",
                self.baseline.storm.rank, self.baseline.lowrank.rank
            )));
        }
        if self.recon.operator != a.mode {
            return Err(Error::Config("recon.operator must match acquisition.mode".into()));
        }
        Ok(())
    }

    pub fn n_readout(&self) -> usize {
        self.acquisition.n_readout.unwrap_or(self.phantom.width)
    }

    fn geometry(&self) -> Value {
        let a = &self.acquisition;
        json!({
            "phantom": value(&self.phantom),
            "coils": a.coils,
            "coil_seed": a.coil_seed,
            "spokes_per_frame": a.spokes_per_frame,
            "n_readout": self.n_readout(),
        })
    }

    /// Configuration sections each stage depends on, cumulatively.
    pub fn stage_config(&self, stage: &Stage) -> Value {
        let acq = || json!({ "geometry": self.geometry(), "acquisition": value(&self.acquisition) });
        let base = |m: BaselineMethod| {
            let params = match m {
                BaselineMethod::Storm => value(&self.baseline.storm),
                BaselineMethod::Lowrank => value(&self.baseline.lowrank),
            };
            let mut v = acq();
            v["baseline"] = json!({ "method": m.name(), "params": params });
            v
        };
        let pre = |init: InitMode| {
            let r = &self.recon;
            let mut v = base(baseline_for(init));
            v["pretrain"] = json!({
                "init": init,
                "rank": r.rank,
                "latent_dim": r.latent_dim,
                "hidden": r.hidden,
                "kernel": r.kernel,
                "seed": r.seed,
                "pretrain_spatial": value(&r.pretrain_spatial),
                "pretrain_temporal": value(&r.pretrain_temporal),
            });
            v
        };
        match stage {
            Stage::Phantom => json!({ "geometry": self.geometry() }),
            Stage::Acquire => acq(),
            Stage::Baseline(m) => base(*m),
            Stage::Pretrain(init) => pre(*init),
            Stage::Reconstruct(init) => {
                let mut v = pre(*init);
                v["recon"] = value(&self.recon);
                v
            }
        }
    }

    pub fn stage_hash(&self, stage: &Stage) -> String {
        config_hash(&self.stage_config(stage))
    }
}

/// Baseline whose factors seed an initialization mode.
pub fn baseline_for(init: InitMode) -> BaselineMethod {
    match init {
        InitMode::Lowrank => BaselineMethod::Lowrank,
        InitMode::Storm | InitMode::Random => BaselineMethod::Storm,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Phantom,
    Acquire,
    Baseline(BaselineMethod),
    Pretrain(InitMode),
    Reconstruct(InitMode),
}

pub fn init_name(init: InitMode) -> &'static str {
    match init {
        InitMode::Storm => "storm",
        InitMode::Lowrank => "lowrank",
        InitMode::Random => "random",
    }
}

impl Stage {
    /// Manifest name of the stage.
    pub fn name(&self) -> String {
        match self {
            Stage::Phantom => "phantom".into(),
            Stage::Acquire => "acquire".into(),
            Stage::Baseline(m) => format!("baseline_{}", m.name()),
            Stage::Pretrain(i) => format!("pretrain_{}", init_name(*i)),
            Stage::Reconstruct(i) => format!("reconstruct_{}", init_name(*i)),
        }
    }
}
