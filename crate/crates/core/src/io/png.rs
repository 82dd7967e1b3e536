use std::path::{Component, Path, PathBuf};

use image::{ColorType, DynamicImage, ImageFormat, ImageReader};

use crate::error::{IdfError, Result};
use crate::tensor::Image;

/// Loads an 8-bit grayscale or RGB PNG as values `v/255`.
pub fn load_image(path: &Path) -> Result<Image> {
    let reader = ImageReader::open(path)
        .map_err(|e| IdfError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| IdfError::io(path, e))?;
    if reader.format() != Some(ImageFormat::Png) {
        return Err(IdfError::UnsupportedImage {
            path: path.to_path_buf(),
            detail: "not a PNG file".into(),
        });
    }
    let decoded = reader.decode().map_err(|e| IdfError::Codec {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, bytes) = match decoded {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
        other => {
            return Err(IdfError::UnsupportedImage {
                path: path.to_path_buf(),
                detail: format!(
                    "colour type {:?}; only 8-bit grayscale and RGB are accepted",
                    other.color()
                ),
            })
        }
    };
    let mut data = vec![0.0; channels * h * w];
    for (i, &b) in bytes.iter().enumerate() {
        let (pos, c) = (i / channels, i % channels);
        data[c * h * w + pos] = b as f64 / 255.0;
    }
    Ok(Image::from_parts(channels, h, w, data))
}

/// Quantises `round(clamp01(v)·255)` and writes a PNG with 1 or 3 channels.
pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    let (c, h, w) = img.dims();
    let color = match c {
        1 => ColorType::L8,
        3 => ColorType::Rgb8,
        _ => {
            return Err(IdfError::Shape(format!(
                "cannot save a {c}-channel image as PNG"
            )))
        }
    };
    let mut bytes = vec![0u8; c * h * w];
    for ch in 0..c {
        for (pos, v) in img.channel(ch).iter().enumerate() {
            bytes[pos * c + ch] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| IdfError::io(parent, e))?;
    }
    image::save_buffer_with_format(path, &bytes, w as u32, h as u32, color, ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => IdfError::io(path, io),
            other => IdfError::Codec {
                path: path.to_path_buf(),
                detail: other.to_string(),
            },
        })
}

/// PNG files directly inside `dir`, sorted by file name.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| IdfError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| IdfError::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn lexical_join(root: &Path, path: &Path) -> Option<PathBuf> {
    let mut out = if path.is_absolute() {
        PathBuf::new()
    } else {
        root.to_path_buf()
    };
    for comp in path.components() {
        match comp {
            Component::ParentDir => {
                if !out.pop() {
                    return None;
                }
            }
            Component::CurDir => {}
            other => out.push(other.as_os_str()),
        }
    }
    Some(out)
}

/// Resolves `path` against `root` and rejects it if it leaves `root`,
/// either lexically (`..`) or through a symlink of an existing prefix.
pub fn confine(root: &Path, path: &Path) -> Result<PathBuf> {
    let outside = || IdfError::PathOutsideSandbox(path.to_path_buf());
    let root = root.canonicalize().map_err(|e| IdfError::io(root, e))?;
    let joined = lexical_join(&root, path).ok_or_else(outside)?;
    if !joined.starts_with(&root) {
        return Err(outside());
    }
    let mut existing = joined.as_path();
    while !existing.exists() {
        match existing.parent() {
            Some(p) => existing = p,
            None => break,
        }
    }
    if let Ok(real) = existing.canonicalize() {
        if !real.starts_with(&root) {
            return Err(outside());
        }
    }
    Ok(joined)
}
