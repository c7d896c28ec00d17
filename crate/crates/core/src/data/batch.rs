use super::{base_augment, stream_rng, Dataset};
use crate::autodiff::Tensor;
use crate::views::Image;
use rand::seq::SliceRandom;

const SHUFFLE_DOMAIN: u64 = 0x5B0F;
const AUGMENT_DOMAIN: u64 = 0xA06;

/// A minibatch of base images (raw `[0, 1]` pixels, before any view
/// transform or normalization).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    /// `B x C x H x W`.
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    /// Dataset positions of the batch items.
    pub indices: Vec<usize>,
    /// View label of each row, filled by pipelines that stack views.
    pub view_labels: Option<Vec<usize>>,
}

impl LabeledBatch {
    pub fn from_images(images: &[Image], labels: Vec<usize>, indices: Vec<usize>) -> Self {
        let (c, h, w) = images.first().map(|i| i.dims()).unwrap_or((0, 0, 0));
        let mut data = Vec::with_capacity(images.len() * c * h * w);
        for img in images {
            debug_assert_eq!(img.dims(), (c, h, w));
            data.extend_from_slice(img.pixels());
        }
        LabeledBatch {
            images: Tensor::new([images.len(), c, h, w], data).expect("uniform extents"),
            labels,
            indices,
            view_labels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> Image {
        let s = self.images.shape();
        Image::new(s[1], s[2], s[3], self.images.item_slice(i).to_vec())
            .expect("pixels stay in range")
    }
}

/// Index lists for one epoch. Shuffling is a pure function of
/// `(seed, epoch)`; the final partial batch is kept.
pub fn batch_indices(
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: usize,
    shuffle: bool,
) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        order.shuffle(&mut stream_rng(seed, SHUFFLE_DOMAIN, epoch as u64));
    }
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// Batches for one epoch, with base augmentation drawn per
/// `(seed, epoch, sample index)` so every pipeline sees the same pixels.
pub fn make_batches<'a>(
    data: &'a Dataset,
    batch_size: usize,
    seed: u64,
    epoch: usize,
    shuffle: bool,
    augment: bool,
) -> impl Iterator<Item = LabeledBatch> + 'a {
    batch_indices(data.len(), batch_size, seed, epoch, shuffle)
        .into_iter()
        .map(move |idx| {
            let images: Vec<Image> = idx
                .iter()
                .map(|&i| {
                    let mut rng =
                        stream_rng(seed, AUGMENT_DOMAIN, ((epoch as u64) << 32) | i as u64);
                    base_augment(&data.samples[i].image, &mut rng, augment)
                })
                .collect();
            let labels = idx.iter().map(|&i| data.samples[i].label).collect();
            LabeledBatch::from_images(&images, labels, idx)
        })
}
