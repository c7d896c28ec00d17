use super::Image;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Bijection on the three colour channels. Output slot `k` takes input
/// channel `perm[k]`.
///
/// Composition convention, used everywhere: applying `p` and then `q`
/// yields `z[k] = x[p[q[k]]]`, i.e. the permutation `k -> p[q[k]]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Permutation([usize; 3]);

impl Permutation {
    pub const IDENTITY: Permutation = Permutation([0, 1, 2]);

    pub fn new(perm: [usize; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for &p in &perm {
            if p >= 3 || seen[p] {
                return Err(Error::Transform(format!(
                    "{perm:?} is not a bijection on {{0,1,2}}"
                )));
            }
            seen[p] = true;
        }
        Ok(Permutation(perm))
    }

    /// All six permutations in the order RGB, RBG, GRB, GBR, BRG, BGR.
    pub fn all() -> [Permutation; 6] {
        ["RGB", "RBG", "GRB", "GBR", "BRG", "BGR"].map(|s| s.parse().expect("valid name"))
    }

    pub fn as_array(&self) -> [usize; 3] {
        self.0
    }

    /// The permutation equivalent to applying `self` then `next`.
    pub fn then(&self, next: &Permutation) -> Permutation {
        let (p, q) = (self.0, next.0);
        Permutation([p[q[0]], p[q[1]], p[q[2]]])
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = [0; 3];
        for (k, &p) in self.0.iter().enumerate() {
            inv[p] = k;
        }
        Permutation(inv)
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

impl std::str::FromStr for Permutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.trim().to_ascii_uppercase().chars().collect();
        if chars.len() != 3 {
            return Err(Error::Transform(format!(
                "permutation `{s}` must name three channels"
            )));
        }
        let mut perm = [0; 3];
        for (slot, c) in perm.iter_mut().zip(chars) {
            *slot = match c {
                'R' => 0,
                'G' => 1,
                'B' => 2,
                other => {
                    return Err(Error::Transform(format!(
                        "unknown channel `{other}` in `{s}`"
                    )))
                }
            };
        }
        Permutation::new(perm)
    }
}

impl TryFrom<String> for Permutation {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Permutation> for String {
    fn from(p: Permutation) -> String {
        p.to_string()
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &c in &self.0 {
            f.write_str(["R", "G", "B"][c])?;
        }
        Ok(())
    }
}

/// A deterministic image-to-image map that produces one view of a sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewTransform {
    /// Counter-clockwise rotation by `quarter_turns * 90` degrees.
    Rotation {
        quarter_turns: u8,
    },
    ChannelPermutation {
        perm: Permutation,
    },
    /// Blend between a blurred copy (`gamma = 0`) and the original
    /// (`gamma = 1`); values above 1 sharpen.
    Sharpness {
        gamma: f64,
    },
    /// Applied left to right.
    Composition {
        steps: Vec<ViewTransform>,
    },
}

impl ViewTransform {
    pub fn rotation(quarter_turns: u8) -> Result<Self> {
        if quarter_turns > 3 {
            return Err(Error::Transform(format!(
                "quarter turns must be 0..=3, got {quarter_turns}"
            )));
        }
        Ok(ViewTransform::Rotation { quarter_turns })
    }

    pub fn permutation(perm: [usize; 3]) -> Result<Self> {
        Ok(ViewTransform::ChannelPermutation {
            perm: Permutation::new(perm)?,
        })
    }

    pub fn sharpness(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::Transform(format!(
                "sharpness gamma must be finite and >= 0, got {gamma}"
            )));
        }
        Ok(ViewTransform::Sharpness { gamma })
    }

    pub fn compose(steps: Vec<ViewTransform>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Transform(
                "composition needs at least one transform".into(),
            ));
        }
        for s in &steps {
            s.validate()?;
        }
        Ok(ViewTransform::Composition { steps })
    }

    /// Re-checks invariants of a value built without the constructors (for
    /// example deserialized from a config).
    pub fn validate(&self) -> Result<()> {
        match self {
            ViewTransform::Rotation { quarter_turns } => Self::rotation(*quarter_turns).map(|_| ()),
            ViewTransform::ChannelPermutation { perm } => Permutation::new(perm.0).map(|_| ()),
            ViewTransform::Sharpness { gamma } => Self::sharpness(*gamma).map(|_| ()),
            ViewTransform::Composition { steps } => {
                if steps.is_empty() {
                    return Err(Error::Transform(
                        "composition needs at least one transform".into(),
                    ));
                }
                steps.iter().try_for_each(|s| s.validate())
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            ViewTransform::Rotation { quarter_turns } => *quarter_turns == 0,
            ViewTransform::ChannelPermutation { perm } => perm.is_identity(),
            ViewTransform::Sharpness { gamma } => *gamma == 1.0,
            ViewTransform::Composition { steps } => steps.iter().all(|s| s.is_identity()),
        }
    }

    /// Whether the output extent can differ from the input extent.
    pub fn swaps_axes(&self) -> bool {
        match self {
            ViewTransform::Rotation { quarter_turns } => quarter_turns % 2 == 1,
            ViewTransform::Composition { steps } => {
                steps.iter().filter(|s| s.swaps_axes()).count() % 2 == 1
            }
            _ => false,
        }
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        match self {
            ViewTransform::Rotation { quarter_turns } => Ok(rotate(img, *quarter_turns)),
            ViewTransform::ChannelPermutation { perm } => permute_channels(img, perm),
            ViewTransform::Sharpness { gamma } => Ok(sharpness(img, *gamma)),
            ViewTransform::Composition { steps } => {
                let mut out = img.clone();
                for s in steps {
                    out = s.apply(&out)?;
                }
                Ok(out)
            }
        }
    }
}

impl fmt::Display for ViewTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViewTransform::Rotation { quarter_turns } => {
                write!(f, "rot{}", 90 * *quarter_turns as u32)
            }
            ViewTransform::ChannelPermutation { perm } => write!(f, "perm{perm}"),
            ViewTransform::Sharpness { gamma } => write!(f, "sharp{gamma}"),
            ViewTransform::Composition { steps } => {
                for (i, s) in steps.iter().enumerate() {
                    if i > 0 {
                        f.write_str("+")?;
                    }
                    write!(f, "{s}")?;
                }
                Ok(())
            }
        }
    }
}

/// Counter-clockwise rotation. One turn maps `out[c][r][k] = in[c][k][W-1-r]`;
/// odd turn counts swap height and width.
pub fn rotate(img: &Image, quarter_turns: u8) -> Image {
    let (ch, h, w) = img.dims();
    let src = img.pixels();
    let mut out = Vec::with_capacity(src.len());
    match quarter_turns % 4 {
        0 => return img.clone(),
        1 => {
            for c in 0..ch {
                for r in 0..w {
                    for k in 0..h {
                        out.push(src[(c * h + k) * w + (w - 1 - r)]);
                    }
                }
            }
            Image::from_parts(ch, w, h, out)
        }
        2 => {
            for c in 0..ch {
                for r in 0..h {
                    for k in 0..w {
                        out.push(src[(c * h + (h - 1 - r)) * w + (w - 1 - k)]);
                    }
                }
            }
            Image::from_parts(ch, h, w, out)
        }
        _ => {
            for c in 0..ch {
                for r in 0..w {
                    for k in 0..h {
                        out.push(src[(c * h + (h - 1 - k)) * w + r]);
                    }
                }
            }
            Image::from_parts(ch, w, h, out)
        }
    }
}

pub fn permute_channels(img: &Image, perm: &Permutation) -> Result<Image> {
    if img.channels() != 3 {
        return Err(Error::Transform(format!(
            "channel permutation needs 3 channels, image has {}",
            img.channels()
        )));
    }
    let mut out = Vec::with_capacity(img.pixels().len());
    for &src in &perm.0 {
        out.extend_from_slice(img.plane(src));
    }
    Ok(Image::from_parts(3, img.height(), img.width(), out))
}

/// Mirror index without repeating the edge sample (`-1 -> 1`, `n -> n-2`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let i = if i < 0 { -i } else { i };
    (if i >= n { 2 * (n - 1) - i } else { i }) as usize
}

/// 3x3 smoothing kernel (centre weight 5, neighbours 1, total 13) with
/// reflected borders.
pub fn blur(img: &Image) -> Image {
    let (ch, h, w) = img.dims();
    let mut out = Vec::with_capacity(img.pixels().len());
    for c in 0..ch {
        let plane = img.plane(c);
        for r in 0..h {
            for k in 0..w {
                let centre = plane[r * w + k];
                // Sum of neighbour deviations, so a constant plane blurs to
                // itself exactly.
                let mut dev = 0.0f32;
                for dr in -1isize..=1 {
                    for dk in -1isize..=1 {
                        if dr == 0 && dk == 0 {
                            continue;
                        }
                        let rr = reflect(r as isize + dr, h);
                        let kk = reflect(k as isize + dk, w);
                        dev += plane[rr * w + kk] - centre;
                    }
                }
                out.push(centre + dev / 13.0);
            }
        }
    }
    Image::from_parts(ch, h, w, out)
}

/// `clamp(x + (1 - gamma) * (blur(x) - x), 0, 1)`, which equals
/// `blur + gamma * (x - blur)` and is exact at `gamma = 1`.
pub fn sharpness(img: &Image, gamma: f64) -> Image {
    if gamma == 1.0 {
        return img.clone();
    }
    let blurred = blur(img);
    let t = (1.0 - gamma) as f32;
    let out = img
        .pixels()
        .iter()
        .zip(blurred.pixels())
        .map(|(&x, &b)| (x + t * (b - x)).clamp(0.0, 1.0))
        .collect();
    Image::from_parts(img.channels(), img.height(), img.width(), out)
}
