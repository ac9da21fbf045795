//! TOML config schemas for each verb. Unknown keys are rejected; missing
//! required keys are reported by name.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use patchdps::denoiser::ArchDescriptor;
use patchdps::diffusion::ScheduleConfig;
use patchdps::guidance::GuidanceConfig;
use patchdps::synth::{TextureStyle, ViewConfig};

use crate::failure::{CliResult, Failure};

pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::validation(format!("config {}: {e}", path.display())))
}

/// Resolves `p` against the directory holding the config file.
pub fn resolve(config: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    config.parent().unwrap_or(Path::new(".")).join(p)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataConfig {
    #[serde(default)]
    pub seed: u64,
    pub scene: SceneSection,
    pub dataset: DatasetSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    /// Side of the square ground-truth map.
    pub size: usize,
    pub views: usize,
    #[serde(default)]
    pub style: TextureStyle,
    #[serde(default)]
    pub capture: ViewConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub patches: usize,
    pub patch_size: usize,
    /// Number of procedural training maps, separate from the scene.
    #[serde(default = "default_maps")]
    pub maps: usize,
    /// Side of each training map; defaults to the scene size.
    #[serde(default)]
    pub map_size: Option<usize>,
}

fn default_maps() -> usize {
    6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Directory written by `gen-data` (or its `dataset` subdirectory).
    pub dataset: PathBuf,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_clip")]
    pub grad_clip: f64,
    #[serde(default)]
    pub arch: ArchSection,
    #[serde(default)]
    pub schedule: ScheduleConfig,
}

fn default_batch() -> usize {
    8
}

fn default_lr() -> f64 {
    2e-3
}

fn default_clip() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSection {
    pub hidden: usize,
    pub blocks: usize,
    pub time_embed: usize,
    /// Feed the positional-encoded UV to the network.
    pub uv_condition: bool,
    pub pe_bands: usize,
}

impl Default for ArchSection {
    fn default() -> Self {
        let a = ArchDescriptor::default();
        Self {
            hidden: a.hidden,
            blocks: a.blocks,
            time_embed: a.time_embed,
            uv_condition: true,
            pe_bands: a.pe_bands.unwrap_or(6),
        }
    }
}

impl ArchSection {
    pub fn descriptor(&self) -> ArchDescriptor {
        ArchDescriptor {
            hidden: self.hidden,
            blocks: self.blocks,
            time_embed: self.time_embed,
            pe_bands: self.uv_condition.then_some(self.pe_bands),
            ..ArchDescriptor::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructConfig {
    /// Directory written by `gen-data`; views and uv map are read from it.
    pub scene: PathBuf,
    pub checkpoint: PathBuf,
    /// Sampling settings; `guidance.seed` drives the initial noise.
    #[serde(default)]
    pub guidance: GuidanceConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub reconstruction: PathBuf,
    pub truth: PathBuf,
    /// Core tile size for the seam score.
    pub tile: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePatchesConfig {
    pub checkpoint: PathBuf,
    pub count: usize,
    pub patch_size: usize,
    /// Size of the map whose UV grid the patches are cut from.
    #[serde(default = "default_map_size")]
    pub map_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_map_size() -> usize {
    128
}

fn default_stride() -> usize {
    10
}
