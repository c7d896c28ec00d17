use crate::error::{Error, Result};
use crate::views::{ppm, Image, ViewSet, ViewSetSpec};
use std::path::{Path, PathBuf};

const GRID_GAP: usize = 2;

fn file_name(label: usize, transform: &str) -> String {
    let clean: String = transform
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '+' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("view_{label}_{clean}.ppm")
}

/// Side-by-side strip of images on a white background, top-aligned.
pub fn grid(images: &[Image]) -> Result<Image> {
    let h = images.iter().map(Image::height).max().unwrap_or(0);
    let w =
        images.iter().map(Image::width).sum::<usize>() + GRID_GAP * images.len().saturating_sub(1);
    let mut px = vec![1.0f32; 3 * h * w];
    let mut x0 = 0;
    for img in images {
        for c in 0..3 {
            for r in 0..img.height() {
                for col in 0..img.width() {
                    px[(c * h + r) * w + x0 + col] = img.get(c, r, col);
                }
            }
        }
        x0 += img.width() + GRID_GAP;
    }
    Image::new(3, h, w, px)
}

/// Writes one PPM per view (and optionally a strip of all views) into
/// `out_dir`.
pub fn preview(spec: &str, input: &Path, out_dir: &Path, with_grid: bool) -> Result<Vec<PathBuf>> {
    let spec: ViewSetSpec = spec
        .parse()
        .map_err(|e: Error| Error::Config(e.to_string()))?;
    let views = ViewSet::build(&spec).map_err(|e| Error::Config(e.to_string()))?;
    let bytes =
        std::fs::read(input).map_err(|e| Error::Data(format!("{}: {e}", input.display())))?;
    let img = ppm::decode(&bytes)?;
    std::fs::create_dir_all(out_dir)?;
    let rendered = views.expand(&img)?;
    let mut written = Vec::new();
    for (v, out) in views.views().iter().zip(&rendered) {
        let path = out_dir.join(file_name(v.label, &v.transform.to_string()));
        std::fs::write(&path, ppm::encode(out)?)?;
        written.push(path);
    }
    if with_grid {
        let path = out_dir.join("grid.ppm");
        std::fs::write(&path, ppm::encode(&grid(&rendered)?)?)?;
        written.push(path);
    }
    Ok(written)
}
