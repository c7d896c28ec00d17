//! Class-conditional synthetic images for tests and smoke runs.
//!
//! Each class owns a template: a coloured disc on a coloured background.
//! A sample of class `y` is `s * T_y + (1 - s) * T_d + noise`, where `T_d` is
//! the template of a randomly drawn distractor class, `s` is the
//! separability and the noise is Gaussian with standard deviation 0.05.

use super::{stream_rng, Dataset, Sample};
use crate::views::Image;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

const TEMPLATE_DOMAIN: u64 = 0x7E3A;
const SAMPLE_DOMAIN: u64 = 0x5A3B;
const NOISE_STD: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub separability: f64,
}

impl SyntheticSpec {
    pub fn templates(&self) -> Vec<Image> {
        let (h, w) = (self.height, self.width);
        (0..self.classes)
            .map(|k| {
                let mut rng = stream_rng(self.seed, TEMPLATE_DOMAIN, k as u64);
                let bg: [f32; 3] = [rng.random(), rng.random(), rng.random()];
                let fg: [f32; 3] = [rng.random(), rng.random(), rng.random()];
                let cy = rng.random_range(0.0..h as f64);
                let cx = rng.random_range(0.0..w as f64);
                let radius = (h.min(w) as f64 / 4.0).max(1.0) * rng.random_range(0.75..1.25);
                let mut px = Vec::with_capacity(3 * h * w);
                for c in 0..3 {
                    for r in 0..h {
                        for col in 0..w {
                            let d2 =
                                (r as f64 + 0.5 - cy).powi(2) + (col as f64 + 0.5 - cx).powi(2);
                            px.push(if d2 <= radius * radius { fg[c] } else { bg[c] });
                        }
                    }
                }
                Image::new(3, h, w, px).expect("template values lie in [0, 1]")
            })
            .collect()
    }

    /// `n` samples with labels `i % classes`; `stream` separates splits
    /// drawn from the same templates.
    pub fn generate(&self, n: usize, stream: u64) -> Dataset {
        let templates = self.templates();
        let mut rng = stream_rng(self.seed, SAMPLE_DOMAIN, stream);
        let noise = Normal::new(0.0, NOISE_STD).expect("valid std");
        let s = self.separability.clamp(0.0, 1.0) as f32;
        let samples = (0..n)
            .map(|i| {
                let label = i % self.classes;
                let distractor = &templates[rng.random_range(0..self.classes)];
                let px = templates[label]
                    .pixels()
                    .iter()
                    .zip(distractor.pixels())
                    .map(|(&t, &d)| {
                        let e: f64 = noise.sample(&mut rng);
                        (s * t + (1.0 - s) * d + e as f32).clamp(0.0, 1.0)
                    })
                    .collect();
                Sample {
                    label,
                    image: Image::new(3, self.height, self.width, px).expect("clamped"),
                }
            })
            .collect();
        Dataset::new(format!("synthetic{}", self.classes), self.classes, samples)
    }
}

pub fn generate_synthetic(
    seed: u64,
    n: usize,
    classes: usize,
    height: usize,
    width: usize,
    separability: f64,
) -> Dataset {
    SyntheticSpec {
        seed,
        classes,
        height,
        width,
        separability,
    }
    .generate(n, 0)
}
