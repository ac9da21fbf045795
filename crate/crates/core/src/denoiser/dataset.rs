use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::maps::{ReflectanceMap, UvCoordMap, REFL_CHANNELS};

/// Seven reflectance channels followed by the two UV channels.
pub const DATASET_CHANNELS: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    /// Physical reflectance values plus UV, `9 x p x p`.
    pub patch: Grid,
    pub source: usize,
    /// `(row, col)` of the crop in the source map.
    pub origin: (usize, usize),
}

impl PatchRecord {
    pub fn reflectance(&self) -> ReflectanceMap {
        ReflectanceMap::new(self.patch.select_channels(0..REFL_CHANNELS).expect("9 channels")).expect("7 channels")
    }

    pub fn uv(&self) -> Grid {
        self.patch
            .select_channels(REFL_CHANNELS..DATASET_CHANNELS)
            .expect("9 channels")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchDataset {
    pub patch_size: usize,
    /// `(H, W)` of every source map, indexed by `PatchRecord::source`.
    pub source_sizes: Vec<(usize, usize)>,
    pub records: Vec<PatchRecord>,
}

impl PatchDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// `n` uniformly random `p x p` crops of the stacked reflectance + UV maps.
pub fn crop_patch_dataset(
    maps: &[(ReflectanceMap, UvCoordMap)],
    n: usize,
    p: usize,
    seed: u64,
) -> Result<PatchDataset> {
    if maps.is_empty() || n == 0 {
        return Err(Error::Config(
            "patch dataset needs at least one map and one crop".into(),
        ));
    }
    if p == 0 {
        return Err(Error::Dimension("patch size must be positive".into()));
    }
    let mut stacked = Vec::with_capacity(maps.len());
    for (i, (refl, uv)) in maps.iter().enumerate() {
        if (refl.height(), refl.width()) != (uv.height(), uv.width()) {
            return Err(Error::Dimension(format!(
                "map {i}: uv size {}x{} differs from reflectance {}x{}",
                uv.height(),
                uv.width(),
                refl.height(),
                refl.width()
            )));
        }
        if p > refl.height() || p > refl.width() {
            return Err(Error::Dimension(format!(
                "patch size {p} exceeds map {i} of size {}x{}",
                refl.height(),
                refl.width()
            )));
        }
        stacked.push(refl.grid().concat_channels(uv.grid())?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let source = rng.random_range(0..maps.len());
        let g = &stacked[source];
        let r = rng.random_range(0..=g.height() - p);
        let c = rng.random_range(0..=g.width() - p);
        records.push(PatchRecord {
            patch: g.crop(r, c, p, p)?,
            source,
            origin: (r, c),
        });
    }
    Ok(PatchDataset {
        patch_size: p,
        source_sizes: stacked.iter().map(|g| (g.height(), g.width())).collect(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(h: usize, w: usize, k: f64) -> (ReflectanceMap, UvCoordMap) {
        let g = Grid::from_fn(7, h, w, |c, r, col| k + 0.01 * (c * 100 + r * 10 + col) as f64);
        (ReflectanceMap::new(g).unwrap(), UvCoordMap::texel_centers(h, w))
    }

    #[test]
    fn full_size_crop_is_whole_map() {
        let m = map(6, 6, 0.0);
        let d = crop_patch_dataset(std::slice::from_ref(&m), 5, 6, 1).unwrap();
        let whole = m.0.grid().concat_channels(m.1.grid()).unwrap();
        assert!(d.records.iter().all(|r| r.patch == whole && r.origin == (0, 0)));
    }

    #[test]
    fn uv_channels_follow_provenance() {
        let maps = vec![map(20, 24, 0.0), map(16, 16, 1.0)];
        let d = crop_patch_dataset(&maps, 50, 8, 3).unwrap();
        assert_eq!(d.len(), 50);
        for rec in &d.records {
            let (h, w) = d.source_sizes[rec.source];
            let (r0, c0) = rec.origin;
            let uv = rec.uv();
            for r in 0..8 {
                for c in 0..8 {
                    assert_eq!(uv.get(0, r, c), ((c0 + c) as f64 + 0.5) / w as f64);
                    assert_eq!(uv.get(1, r, c), ((r0 + r) as f64 + 0.5) / h as f64);
                }
            }
            let src = maps[rec.source].0.grid().crop(r0, c0, 8, 8).unwrap();
            assert_eq!(rec.reflectance().grid(), &src);
        }
    }

    #[test]
    fn oversize_patch_rejected() {
        let m = map(8, 8, 0.0);
        assert!(matches!(crop_patch_dataset(&[m], 3, 9, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn deterministic_per_seed() {
        let maps = vec![map(12, 12, 0.0)];
        let a = crop_patch_dataset(&maps, 10, 4, 9).unwrap();
        let b = crop_patch_dataset(&maps, 10, 4, 9).unwrap();
        assert_eq!(a, b);
    }
}
