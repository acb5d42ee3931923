//! PNG interchange and the native little-endian float container.
//!
//! Container layout: 4-byte magic, `u32` version, `u32` width, `u32` height,
//! then `width * height` little-endian `f32` samples in row-major order.

use std::fs;
use std::path::Path;

use image::{DynamicImage, RgbImage};

use super::{BayerRaw, ImageRgb};
use crate::error::{Error, Result};

pub const BRAW_MAGIC: [u8; 4] = *b"BRAW";
pub const DPTH_MAGIC: [u8; 4] = *b"DPTH";
pub const CONTAINER_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRgb> {
    let path = path.as_ref();
    let dynimg = image::open(path).map_err(|e| Error::from(e).at_path(path))?;
    let rgb = match dynimg {
        DynamicImage::ImageRgb8(img) => img,
        DynamicImage::ImageRgba8(_) | DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => dynimg.to_rgb8(),
        other => {
            return Err(Error::Unsupported(format!(
                "{}: only 8-bit PNG is supported, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let n = w * h;
    let mut data = vec![0.0f32; 3 * n];
    for (i, px) in rgb.pixels().enumerate() {
        for c in 0..3 {
            data[c * n + i] = px.0[c] as f32 / 255.0;
        }
    }
    ImageRgb::new(w, h, data)
}

pub fn save_image(img: &ImageRgb, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = img.dims();
    let mut out = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let p = img.pixel(x, y).map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8);
            out.put_pixel(x as u32, y as u32, image::Rgb(p));
        }
    }
    out.save(path).map_err(|e| Error::from(e).at_path(path))
}

pub fn write_container(magic: [u8; 4], width: usize, height: usize, data: &[f32]) -> Vec<u8> {
    debug_assert_eq!(data.len(), width * height);
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * data.len());
    buf.extend_from_slice(&magic);
    buf.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    buf.extend_from_slice(&(width as u32).to_le_bytes());
    buf.extend_from_slice(&(height as u32).to_le_bytes());
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

/// Parses a container, returning `(width, height, samples)`.
pub fn read_container(bytes: &[u8], magic: [u8; 4]) -> Result<(usize, usize, Vec<f32>)> {
    let word = |off: usize| -> Result<u32> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| Error::Decode {
                offset: bytes.len(),
                reason: format!("truncated header, need {} bytes", off + 4),
            })
    };
    let found = bytes.get(0..4).ok_or_else(|| Error::Decode {
        offset: bytes.len(),
        reason: "truncated magic".into(),
    })?;
    if found != magic {
        return Err(Error::Decode {
            offset: 0,
            reason: format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(found),
                String::from_utf8_lossy(&magic)
            ),
        });
    }
    let version = word(4)?;
    if version != CONTAINER_VERSION {
        return Err(Error::Decode {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let w = word(8)? as usize;
    let h = word(12)? as usize;
    let need = HEADER_LEN + 4 * w * h;
    if bytes.len() < need {
        return Err(Error::Decode {
            offset: bytes.len(),
            reason: format!("truncated payload, need {need} bytes"),
        });
    }
    if bytes.len() > need {
        return Err(Error::Decode {
            offset: need,
            reason: "trailing bytes after payload".into(),
        });
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((w, h, data))
}

pub fn save_raw(raw: &BayerRaw, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_container(BRAW_MAGIC, raw.width(), raw.height(), raw.data()))
        .map_err(|e| Error::from(e).at_path(path))
}

pub fn load_raw(path: impl AsRef<Path>) -> Result<BayerRaw> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
    let (w, h, data) = read_container(&bytes, BRAW_MAGIC).map_err(|e| e.at_path(path))?;
    BayerRaw::new(w, h, data).map_err(|e| e.at_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_container_reports_offset() {
        let bytes = write_container(BRAW_MAGIC, 2, 2, &[0.1, 0.2, 0.3, 0.4]);
        match read_container(&bytes[..20], BRAW_MAGIC) {
            Err(Error::Decode { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("unexpected {other:?}"),
        }
        match read_container(&bytes[..6], BRAW_MAGIC) {
            Err(Error::Decode { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_magic_rejected() {
        let bytes = write_container(DPTH_MAGIC, 1, 1, &[1.0]);
        assert!(matches!(read_container(&bytes, BRAW_MAGIC), Err(Error::Decode { offset: 0, .. })));
    }
}
