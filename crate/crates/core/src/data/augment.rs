//! Base augmentation: reflect-pad by 4, random crop back to the original
//! extent, horizontal flip with probability one half.

use crate::views::Image;
use rand::Rng;

pub const AUGMENT_PAD: usize = 4;

/// Mirror index into `0..n` without repeating edge samples, for any offset.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m >= n as isize { period - m } else { m }) as usize
}

/// Crop of the image padded by `pad` on every side, with the window's
/// top-left corner at `(top, left)` in padded coordinates.
pub fn crop_padded(img: &Image, pad: usize, top: usize, left: usize) -> Image {
    let (ch, h, w) = img.dims();
    let mut out = Vec::with_capacity(ch * h * w);
    for c in 0..ch {
        let plane = img.plane(c);
        for r in 0..h {
            let sr = reflect(r as isize + top as isize - pad as isize, h);
            for k in 0..w {
                let sk = reflect(k as isize + left as isize - pad as isize, w);
                out.push(plane[sr * w + sk]);
            }
        }
    }
    Image::new(ch, h, w, out).expect("values copied from a valid image")
}

pub fn hflip(img: &Image) -> Image {
    let (ch, h, w) = img.dims();
    let mut out = Vec::with_capacity(ch * h * w);
    for row in img.pixels().chunks(w) {
        out.extend(row.iter().rev());
    }
    Image::new(ch, h, w, out).expect("values copied from a valid image")
}

pub fn base_augment(img: &Image, rng: &mut impl Rng, enabled: bool) -> Image {
    if !enabled {
        return img.clone();
    }
    let top = rng.random_range(0..=2 * AUGMENT_PAD);
    let left = rng.random_range(0..=2 * AUGMENT_PAD);
    let flip = rng.random_bool(0.5);
    let cropped = crop_padded(img, AUGMENT_PAD, top, left);
    if flip {
        hflip(&cropped)
    } else {
        cropped
    }
}
