//! PNG read/write for 8-bit RGB images.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::exam::{EyeImage, ImageRef};
use crate::tensor::ImageTensor;

fn image_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Writes an image as 8-bit RGB PNG. Pixels are quantized with round-to-nearest.
pub fn save_png(img: &ImageTensor, path: &Path) -> Result<()> {
    img.validate()?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let file = File::create(path)?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        img.width as u32,
        img.height as u32,
    );
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| image_err(path, e.to_string()))?;
    let bytes: Vec<u8> = img
        .pixels
        .iter()
        .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    writer
        .write_image_data(&bytes)
        .map_err(|e| image_err(path, e.to_string()))?;
    Ok(())
}

/// Loads an 8-bit RGB (or RGBA, alpha dropped) PNG into an [0, 1] tensor.
pub fn load_png(path: &Path) -> Result<ImageTensor> {
    let file = File::open(path).map_err(|e| image_err(path, e.to_string()))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| image_err(path, e.to_string()))?;
    let mut buf = vec![
        0u8;
        reader
            .output_buffer_size()
            .ok_or_else(|| image_err(path, "image dimensions overflow"))?
    ];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| image_err(path, e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(image_err(path, "only 8-bit PNG supported"));
    }
    let (h, w) = (info.height as usize, info.width as usize);
    let mut img = ImageTensor::zeros(h, w);
    match info.color_type {
        png::ColorType::Rgb => {
            for i in 0..h * w * 3 {
                img.pixels[i] = buf[i] as f64 / 255.0;
            }
        }
        png::ColorType::Rgba => {
            for p in 0..h * w {
                for c in 0..3 {
                    img.pixels[p * 3 + c] = buf[p * 4 + c] as f64 / 255.0;
                }
            }
        }
        other => {
            return Err(image_err(path, format!("unsupported color type {other:?}")))
        }
    }
    img.validate()?;
    Ok(img)
}

/// Resolves an exam image to pixels: inline tensors are cloned, path
/// references are loaded relative to the manifest directory.
pub fn resolve_image(manifest_dir: &Path, image: &EyeImage) -> Result<ImageTensor> {
    match &image.reference {
        ImageRef::Inline(t) => Ok(t.clone()),
        ImageRef::Path(p) => {
            let full = if p.is_absolute() {
                p.clone()
            } else {
                manifest_dir.join(p)
            };
            load_png(&full)
        }
    }
}
