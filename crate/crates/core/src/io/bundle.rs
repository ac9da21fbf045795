//! View bundles and patch datasets on disk.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::container::{load_map, save_map};
use crate::denoiser::{PatchDataset, PatchRecord, DATASET_CHANNELS};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::maps::{CHANNEL_NAMES, UV_NAMES};
use crate::render::{Lighting, ViewObservation};

/// Sidecar written next to each view's maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSidecar {
    pub camera: [f64; 3],
    pub lighting: Lighting,
}

fn view_dir(root: &Path, i: usize) -> PathBuf {
    root.join(format!("view_{i:03}"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes `views` as `root/view_NNN/{image,position,uv,mask}.mch` plus
/// `view.json`.
pub fn save_views(root: &Path, views: &[ViewObservation], lighting: &Lighting) -> Result<()> {
    for (i, v) in views.iter().enumerate() {
        let dir = view_dir(root, i);
        std::fs::create_dir_all(&dir)?;
        save_map(&dir.join("image.mch"), &v.image, &["r", "g", "b"])?;
        save_map(&dir.join("position.mch"), &v.position, &["x", "y", "z"])?;
        save_map(&dir.join("uv.mch"), &v.uv, &UV_NAMES)?;
        let mask = Grid::from_vec(
            1,
            v.height(),
            v.width(),
            v.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        )?;
        save_map(&dir.join("mask.mch"), &mask, &["covered"])?;
        write_json(
            &dir.join("view.json"),
            &ViewSidecar {
                camera: v.camera,
                lighting: lighting.clone(),
            },
        )?;
    }
    Ok(())
}

/// Reads every `view_NNN` directory under `root`, in order. The lighting of
/// the first view is returned.
pub fn load_views(root: &Path) -> Result<(Vec<ViewObservation>, Lighting)> {
    let mut views = Vec::new();
    let mut lighting = None;
    loop {
        let dir = view_dir(root, views.len());
        if !dir.is_dir() {
            break;
        }
        let side: ViewSidecar = read_json(&dir.join("view.json"))?;
        let (image, _) = load_map(&dir.join("image.mch"))?;
        let (position, _) = load_map(&dir.join("position.mch"))?;
        let (uv, _) = load_map(&dir.join("uv.mch"))?;
        let (mask, _) = load_map(&dir.join("mask.mch"))?;
        let mask = mask.data().iter().map(|&m| m > 0.5).collect();
        views.push(ViewObservation::new(image, side.camera, position, uv, mask)?);
        lighting.get_or_insert(side.lighting);
    }
    let lighting = lighting.ok_or_else(|| Error::Format(format!("no views under {}", root.display())))?;
    Ok((views, lighting))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetIndex {
    patch_size: usize,
    source_sizes: Vec<(usize, usize)>,
    /// `(source, row, col)` per record.
    records: Vec<(usize, usize, usize)>,
}

/// Patches stacked vertically in `patches.mch`, provenance in `index.json`.
pub fn save_dataset(root: &Path, ds: &PatchDataset) -> Result<()> {
    std::fs::create_dir_all(root)?;
    let p = ds.patch_size;
    let mut all = Grid::zeros(DATASET_CHANNELS, p * ds.len(), p);
    for (k, rec) in ds.records.iter().enumerate() {
        all.paste(&rec.patch, k * p, 0)?;
    }
    let names: Vec<&str> = CHANNEL_NAMES.iter().chain(UV_NAMES.iter()).copied().collect();
    save_map(&root.join("patches.mch"), &all, &names)?;
    write_json(
        &root.join("index.json"),
        &DatasetIndex {
            patch_size: p,
            source_sizes: ds.source_sizes.clone(),
            records: ds.records.iter().map(|r| (r.source, r.origin.0, r.origin.1)).collect(),
        },
    )
}

pub fn load_dataset(root: &Path) -> Result<PatchDataset> {
    let index: DatasetIndex = read_json(&root.join("index.json"))?;
    let (all, _) = load_map(&root.join("patches.mch"))?;
    let p = index.patch_size;
    if all.channels() != DATASET_CHANNELS || all.width() != p || all.height() != p * index.records.len() {
        return Err(Error::Format("patch container does not match its index".into()));
    }
    let records = index
        .records
        .iter()
        .enumerate()
        .map(|(k, &(source, r, c))| {
            Ok(PatchRecord {
                patch: all.crop(k * p, 0, p, p)?,
                source,
                origin: (r, c),
            })
        })
        .collect::<Result<_>>()?;
    Ok(PatchDataset {
        patch_size: p,
        source_sizes: index.source_sizes,
        records,
    })
}
