use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use aquafuse::imaging::{EdgeMap, ImageRGB};
use image::imageops::FilterType;
use image::{ImageFormat, RgbImage};

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

pub fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Image files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && is_image(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Decodes PNG or JPEG, resizing bilinearly to `size x size` when the
/// image is not already that extent.
pub fn read_image(path: &Path, resize: Option<usize>) -> Result<ImageRGB> {
    let decoded = image::open(path).with_context(|| format!("decoding {}", path.display()))?;
    let mut rgb = decoded.to_rgb8();
    if let Some(s) = resize {
        let s = s as u32;
        if rgb.dimensions() != (s, s) {
            rgb = image::imageops::resize(&rgb, s, s, FilterType::Triangle);
        }
    }
    let (w, h) = rgb.dimensions();
    Ok(ImageRGB::from_rgb8(w as usize, h as usize, rgb.as_raw())?)
}

pub fn write_png(path: &Path, img: &ImageRGB) -> Result<()> {
    let buf = RgbImage::from_raw(img.width as u32, img.height as u32, img.to_rgb8()).context("image buffer size")?;
    buf.save_with_format(path, ImageFormat::Png)
        .with_context(|| format!("writing {}", path.display()))
}

/// Edge pixels white on black.
pub fn edge_image(e: &EdgeMap) -> ImageRGB {
    ImageRGB::from_fn_clamped(e.width, e.height, |x, y| if e.get(x, y) { [1.0; 3] } else { [0.0; 3] })
}

/// Places images left to right on a black canvas.
pub fn side_by_side(images: &[ImageRGB]) -> ImageRGB {
    let width: usize = images.iter().map(|i| i.width).sum();
    let height = images.iter().map(|i| i.height).max().unwrap_or(0);
    let mut canvas = ImageRGB::filled(width, height, [0.0; 3]);
    let mut x0 = 0;
    for img in images {
        for y in 0..img.height {
            for x in 0..img.width {
                canvas.pixels[y * width + x0 + x] = img.pixels[y * img.width + x];
            }
        }
        x0 += img.width;
    }
    canvas
}

/// Output name for an input: same stem, PNG extension.
pub fn png_name(input: &Path) -> String {
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    format!("{stem}.png")
}
