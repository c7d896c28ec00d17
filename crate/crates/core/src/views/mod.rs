//! View transforms `T_j`, their compositions, and labelled view sets.

mod image;
pub mod ppm;
mod transform;
mod viewset;

pub use image::Image;
pub use transform::{blur, permute_channels, rotate, sharpness, Permutation, ViewTransform};
pub use viewset::{Family, View, ViewSet, ViewSetSpec};
