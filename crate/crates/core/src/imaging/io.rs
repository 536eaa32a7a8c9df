use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use super::ImageBuffer;
use crate::{Error, Result};

fn from_dynamic(img: DynamicImage) -> ImageBuffer {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img,
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_)
    );
    if gray {
        let raw = img.into_luma8().into_raw();
        ImageBuffer::from_raw_unchecked(w, h, 1, raw.into_iter().map(|v| f64::from(v) / 255.0).collect())
    } else {
        let raw = img.into_rgb8().into_raw();
        ImageBuffer::from_raw_unchecked(w, h, 3, raw.into_iter().map(|v| f64::from(v) / 255.0).collect())
    }
}

fn to_dynamic(img: &ImageBuffer) -> DynamicImage {
    let bytes: Vec<u8> = img
        .samples()
        .iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let (w, h) = (img.width() as u32, img.height() as u32);
    if img.channels() == 1 {
        DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, bytes).expect("sample count"))
    } else {
        DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, bytes).expect("sample count"))
    }
}

/// Decodes PNG, JPEG or binary PPM/PGM bytes; 8-bit values map linearly to `[0, 1]`.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer> {
    let img = image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()?
        .decode()?;
    Ok(from_dynamic(img))
}

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    to_dynamic(img).write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).at(path))?;
    decode_image(&bytes).map_err(|e| e.at(path))
}

pub fn write_png(path: impl AsRef<Path>, img: &ImageBuffer) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::from(e).at(path))
}

/// Writes PNG, or binary PPM/PGM when the extension is `.ppm`/`.pgm`/`.pnm`.
pub fn write_image(path: impl AsRef<Path>, img: &ImageBuffer) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("ppm" | "pgm" | "pnm") => to_dynamic(img)
            .save_with_format(path, ImageFormat::Pnm)
            .map_err(|e| Error::from(e).at(path)),
        _ => write_png(path, img),
    }
}
