//! Dataset ingestion, synthetic generation, base augmentation, subsetting
//! and batching.

mod augment;
mod batch;
pub mod cifar;
mod synthetic;

pub use augment::{base_augment, crop_padded, hflip, AUGMENT_PAD};
pub use batch::{batch_indices, make_batches, LabeledBatch};
pub use cifar::{parse_cifar10, parse_cifar100, CifarKind};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use crate::error::{Error, Result};
use crate::views::Image;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Environment variable consulted when no data directory flag is given.
pub const DATA_DIR_ENV: &str = "VADLAB_DATA_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub num_classes: usize,
    pub input_dim: (usize, usize, usize),
    pub train_count: usize,
    pub test_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub label: usize,
    pub image: Image,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub num_classes: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, num_classes: usize, samples: Vec<Sample>) -> Self {
        Dataset {
            name: name.into(),
            num_classes,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> Option<(usize, usize, usize)> {
        self.samples.first().map(|s| s.image.dims())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Checks labels and that every image shares one extent.
    pub fn validate(&self) -> Result<()> {
        let dim = self.input_dim();
        for (i, s) in self.samples.iter().enumerate() {
            if s.label >= self.num_classes {
                return Err(Error::Data(format!(
                    "sample {i}: label {} >= {}",
                    s.label, self.num_classes
                )));
            }
            if Some(s.image.dims()) != dim {
                return Err(Error::Data(format!(
                    "sample {i}: extent {:?} differs from {dim:?}",
                    s.image.dims()
                )));
            }
        }
        Ok(())
    }

    /// Class-balanced subsample: up to `per_class` samples of each label,
    /// chosen by a seeded shuffle and returned in original order.
    pub fn subset(&self, per_class: usize, seed: u64) -> Dataset {
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); self.num_classes];
        for (i, s) in self.samples.iter().enumerate() {
            by_class[s.label].push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep: Vec<usize> = Vec::new();
        for idx in &mut by_class {
            idx.shuffle(&mut rng);
            keep.extend(idx.iter().take(per_class));
        }
        keep.sort_unstable();
        Dataset {
            name: self.name.clone(),
            num_classes: self.num_classes,
            samples: keep.into_iter().map(|i| self.samples[i].clone()).collect(),
        }
    }
}

/// Per-channel standardization applied after view transforms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelNorm {
    pub fn identity(channels: usize) -> Self {
        ChannelNorm {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Statistics of the raw (unaugmented) pixels of `data`.
    pub fn fit(data: &Dataset) -> Result<Self> {
        let (c, h, w) = data.input_dim().ok_or_else(|| {
            Error::Data("cannot compute channel statistics of an empty dataset".into())
        })?;
        let mut sum = vec![0.0f64; c];
        let mut sq = vec![0.0f64; c];
        for s in &data.samples {
            for ch in 0..c {
                for &v in s.image.plane(ch) {
                    sum[ch] += v as f64;
                    sq[ch] += (v as f64) * (v as f64);
                }
            }
        }
        let n = (data.len() * h * w) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| (s / n - m * m).max(0.0).sqrt().max(1e-6))
            .collect();
        Ok(ChannelNorm { mean, std })
    }

    /// Writes the normalized image into `out` (CHW).
    pub fn apply_into(&self, img: &Image, out: &mut [f32]) {
        let hw = img.height() * img.width();
        for c in 0..img.channels() {
            let (m, s) = (self.mean[c] as f32, (1.0 / self.std[c]) as f32);
            for (o, &v) in out[c * hw..(c + 1) * hw].iter_mut().zip(img.plane(c)) {
                *o = (v - m) * s;
            }
        }
    }
}

/// Seeded generator for one purpose (`stream`) of one run.
pub(crate) fn stream_rng(seed: u64, domain: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n_per_class: usize, classes: usize) -> Dataset {
        let samples = (0..n_per_class * classes)
            .map(|i| Sample {
                label: i % classes,
                image: Image::new(3, 1, 1, vec![(i % 7) as f32 / 7.0; 3]).unwrap(),
            })
            .collect();
        Dataset::new("toy", classes, samples)
    }

    #[test]
    fn subset_counts() {
        let d = toy(500, 10);
        assert!(d.subset(0, 1).is_empty());
        let s = d.subset(400, 1);
        assert_eq!(s.len(), 4000);
        assert!(s.class_counts().iter().all(|&c| c == 400));
        let all = d.subset(1000, 1);
        assert_eq!(all, d);
        assert_eq!(d.subset(400, 1), s);
        assert_ne!(d.subset(3, 2), d.subset(3, 1));
    }

    #[test]
    fn channel_norm_fit() {
        let samples = vec![Sample {
            label: 0,
            image: Image::new(3, 1, 2, vec![0.0, 1.0, 0.5, 0.5, 0.2, 0.2]).unwrap(),
        }];
        let n = ChannelNorm::fit(&Dataset::new("x", 1, samples)).unwrap();
        assert!((n.mean[0] - 0.5).abs() < 1e-12 && (n.std[0] - 0.5).abs() < 1e-12);
        assert!((n.mean[1] - 0.5).abs() < 1e-12);
        assert!(n.std[1] >= 1e-6);
        assert!(ChannelNorm::fit(&Dataset::new("e", 1, vec![])).is_err());
    }
}
