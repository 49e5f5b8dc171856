use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariants::{describe, scami24_catalog, Descriptor};
use crate::moments::{central_moments, MomentTable, Orders, Raster};
use crate::transforms::{apply_pair, sample_transforms, transform_moments, TransformKind, TransformPair};

/// Where deformations are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Warp and recolor the raster, then measure moments.
    Pixel,
    /// Map the source moment table exactly.
    Moment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledItem {
    pub descriptor: Descriptor,
    pub label: usize,
    pub source: usize,
    pub transform: TransformPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub kind: TransformKind,
    pub domain: Domain,
    pub seed: u64,
    pub per_source: usize,
    pub items: Vec<LabeledItem>,
}

impl LabeledDataset {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("dataset serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let ds: LabeledDataset = serde_json::from_value(value.clone())?;
        if let Some(first) = ds.items.first() {
            let n = first.descriptor.len();
            if ds.items.iter().any(|i| i.descriptor.len() != n) {
                return Err(Error::contract("descriptor lengths differ"));
            }
        }
        Ok(ds)
    }

    fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            items: idx.iter().map(|&i| self.items[i].clone()).collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> LabeledDataset {
        LabeledDataset {
            kind: self.kind,
            domain: self.domain,
            seed: self.seed,
            per_source: self.per_source,
            items: Vec::new(),
        }
    }

    /// Per-class random split: `max(1, round(train_frac · n))` items of each
    /// class go to the training set. Both halves keep dataset order.
    pub fn split(&self, train_frac: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
        if !(train_frac > 0.0 && train_frac < 1.0) {
            return Err(Error::domain("train fraction must lie in (0, 1)"));
        }
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, item) in self.items.iter().enumerate() {
            by_class.entry(item.label).or_default().push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        for members in by_class.values() {
            let mut m = members.clone();
            m.shuffle(&mut rng);
            let k = ((train_frac * m.len() as f64).round() as usize).clamp(1, m.len());
            train.extend_from_slice(&m[..k]);
        }
        train.sort_unstable();
        let test: Vec<usize> = (0..self.items.len())
            .filter(|i| train.binary_search(i).is_err())
            .collect();
        Ok((self.subset(&train), self.subset(&test)))
    }
}

/// A generated dataset plus the items left out.
#[derive(Debug, Clone)]
pub struct GenReport {
    pub dataset: LabeledDataset,
    /// `(source, variant)` pairs excluded for invalid descriptors.
    pub flagged: Vec<(usize, usize)>,
}

/// Applies `per_source` sampled deformations to every source and labels
/// each descriptor with its source index. Transforms are drawn as one
/// seeded stream, source by source.
pub fn gen_dataset(
    sources: &[Raster],
    kind: TransformKind,
    per_source: usize,
    seed: u64,
    domain: Domain,
) -> Result<GenReport> {
    if per_source == 0 {
        return Err(Error::domain("per_source must be at least 1"));
    }
    let transforms = sample_transforms(kind, per_source * sources.len(), seed);
    let tables: Vec<MomentTable> = sources
        .par_iter()
        .map(|s| central_moments(s, Orders::default()))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..sources.len())
        .flat_map(|s| (0..per_source).map(move |v| (s, v)))
        .collect();
    let catalog = scami24_catalog();
    let results: Vec<Descriptor> = jobs
        .par_iter()
        .map(|&(s, v)| {
            let t = &transforms[s * per_source + v];
            let table = match domain {
                Domain::Pixel => central_moments(&apply_pair(&sources[s], t)?, Orders::default())?,
                Domain::Moment => transform_moments(&tables[s], &t.shape, &t.color)?,
            };
            describe(catalog, &table)
        })
        .collect::<Result<_>>()?;

    let mut items = Vec::with_capacity(jobs.len());
    let mut flagged = Vec::new();
    for (&(s, v), descriptor) in jobs.iter().zip(results) {
        if descriptor.all_valid() {
            items.push(LabeledItem {
                descriptor,
                label: s,
                source: s,
                transform: transforms[s * per_source + v],
            });
        } else {
            log::warn!("source {s} variant {v}: color-degenerate descriptor, excluded");
            flagged.push((s, v));
        }
    }
    Ok(GenReport {
        dataset: LabeledDataset {
            kind,
            domain,
            seed,
            per_source,
            items,
        },
        flagged,
    })
}

/// A smooth, color-rich `size × size` test image: a random base color plus
/// a few soft Gaussian color blobs, all drawn from `index`. Channels are
/// squashed into `(0.2, 0.6)` so the sampled color maps rarely clamp.
pub fn synthetic_source(index: u64, size: usize) -> Result<Raster> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ca1_ab1e ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let base = [(); 3].map(|_| rng.gen_range(0.35..0.65));
    let n = size as f64;
    let blobs: Vec<([f64; 2], f64, [f64; 3])> = (0..6)
        .map(|_| {
            let center = [rng.gen_range(0.15..0.85) * n, rng.gen_range(0.15..0.85) * n];
            let sigma = rng.gen_range(0.08..0.22) * n;
            let color = [(); 3].map(|_| rng.gen_range(-0.3..0.3));
            (center, sigma, color)
        })
        .collect();
    Raster::from_fn(size, size, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut c = base;
        for (center, sigma, color) in &blobs {
            let d2 = (px - center[0]).powi(2) + (py - center[1]).powi(2);
            let w = (-d2 / (2.0 * sigma * sigma)).exp();
            for k in 0..3 {
                c[k] += w * color[k];
            }
        }
        c.map(|v| 0.4 + 0.2 * ((v - 0.5) / 0.2).tanh())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{mre, nn_classify};

    #[test]
    fn sources_are_colorful_and_distinct() {
        let a = synthetic_source(0, 32).unwrap();
        let b = synthetic_source(1, 32).unwrap();
        assert_ne!(a, b);
        let d = describe(scami24_catalog(), &central_moments(&a, Orders::default()).unwrap()).unwrap();
        assert!(d.all_valid());
    }

    #[test]
    fn counting_and_determinism() {
        let sources: Vec<Raster> = (0..3).map(|i| synthetic_source(i, 24).unwrap()).collect();
        let a = gen_dataset(&sources, TransformKind::Rotation, 4, 7, Domain::Pixel).unwrap();
        assert_eq!(a.dataset.items.len() + a.flagged.len(), 12);
        let b = gen_dataset(&sources, TransformKind::Rotation, 4, 7, Domain::Pixel).unwrap();
        assert_eq!(
            crate::numfmt::to_json_string(&a.dataset.to_json()),
            crate::numfmt::to_json_string(&b.dataset.to_json())
        );
        let back = LabeledDataset::from_json(&a.dataset.to_json()).unwrap();
        assert_eq!(back, a.dataset);
    }

    #[test]
    fn grayscale_sources_are_flagged() {
        let gray = Raster::from_fn(16, 16, |x, y| [(x + y) as f64 / 32.0; 3]).unwrap();
        let r = gen_dataset(&[gray], TransformKind::Scale, 3, 1, Domain::Pixel).unwrap();
        assert!(r.dataset.items.is_empty());
        assert_eq!(r.flagged.len(), 3);
    }

    #[test]
    fn moment_domain_is_exact() {
        let src = synthetic_source(3, 32).unwrap();
        let reference = describe(scami24_catalog(), &central_moments(&src, Orders::default()).unwrap()).unwrap();
        let r = gen_dataset(&[src], TransformKind::Composite, 5, 2, Domain::Moment).unwrap();
        let variants: Vec<Descriptor> = r.dataset.items.iter().map(|i| i.descriptor.clone()).collect();
        let m = mre(&reference, &variants).unwrap();
        assert!(m.mre.iter().all(|&e| e < 1e-9), "{:?}", m.mre);
    }

    #[test]
    fn moment_domain_classification_is_perfect() {
        let sources: Vec<Raster> = (0..3).map(|i| synthetic_source(i, 24).unwrap()).collect();
        let ds = gen_dataset(&sources, TransformKind::Composite, 10, 5, Domain::Moment)
            .unwrap()
            .dataset;
        let (train, test) = ds.split(0.1, 1).unwrap();
        assert_eq!(train.items.len(), 3);
        assert_eq!(nn_classify(&train, &test, false).unwrap().accuracy, 1.0);
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let sources: Vec<Raster> = (0..2).map(|i| synthetic_source(i, 16).unwrap()).collect();
        let ds = gen_dataset(&sources, TransformKind::Shear, 10, 3, Domain::Moment)
            .unwrap()
            .dataset;
        let (train, test) = ds.split(0.2, 9).unwrap();
        assert_eq!(train.items.len(), 4);
        assert_eq!(test.items.len(), 16);
        assert_eq!(train.items.iter().filter(|i| i.label == 0).count(), 2);
        let (train_all, _) = ds.split(0.5, 9).unwrap();
        let subset = LabeledDataset {
            items: train_all.items[..3].to_vec(),
            ..train_all.clone()
        };
        assert_eq!(nn_classify(&train_all, &subset, false).unwrap().accuracy, 1.0);
    }
}
