//! Binary PPM (P6, maxval 255) reading and writing.

use super::Image;
use crate::error::{Error, Result};

pub fn encode(img: &Image) -> Result<Vec<u8>> {
    if img.channels() != 3 {
        return Err(Error::Data(format!(
            "PPM needs 3 channels, image has {}",
            img.channels()
        )));
    }
    let (h, w) = (img.height(), img.width());
    let planar = img.to_bytes();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * h * w);
    for i in 0..h * w {
        for c in 0..3 {
            out.push(planar[c * h * w + i]);
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // Skip whitespace and comments between header tokens.
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse {
                offset: pos,
                msg: "truncated PPM header".into(),
            });
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if fields[0] != "P6" {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("expected P6 magic, found `{}`", fields[0]),
        });
    }
    let num = |i: usize| -> Result<usize> {
        fields[i].parse().map_err(|_| Error::Parse {
            offset: 0,
            msg: format!("bad header field `{}`", fields[i]),
        })
    };
    let (w, h, maxval) = (num(1)?, num(2)?, num(3)?);
    if maxval != 255 {
        return Err(Error::Parse {
            offset: 0,
            msg: format!("only maxval 255 is supported, got {maxval}"),
        });
    }
    let raster = bytes
        .get(pos..pos + 3 * w * h)
        .ok_or_else(|| Error::Parse {
            offset: bytes.len(),
            msg: format!("raster needs {} bytes", 3 * w * h),
        })?;
    let mut planar = vec![0u8; 3 * w * h];
    for i in 0..h * w {
        for c in 0..3 {
            planar[c * h * w + i] = raster[3 * i + c];
        }
    }
    Image::from_bytes(3, h, w, &planar)
}
