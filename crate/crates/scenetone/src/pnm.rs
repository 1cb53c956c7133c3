//! Binary PPM frames and PGM rasters.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use scenetone_core::evaluation::GrayImage;
use scenetone_core::visual::RgbImage;

use crate::error::{Context, Error, Result};

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let file = File::open(path).map_err(|e| Error::io("opening frame", path, e))?;
    let img = image::load(BufReader::new(file), ImageFormat::Pnm)
        .map_err(|e| Error::format("decoding frame", path, e))?
        .into_rgb8();
    let (w, h) = img.dimensions();
    let pixels = img.pixels().map(|p| p.0.map(|c| c as f64 / 255.0)).collect();
    RgbImage::new(w as usize, h as usize, pixels).context(|| format!("frame {}", path.display()))
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<()> {
    let bytes: Vec<u8> = image
        .pixels
        .iter()
        .flat_map(|px| px.map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8))
        .collect();
    encode(path, &bytes, image.width, image.height, PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8)
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    encode(path, &image.pixels, image.width, image.height, PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8)
}

fn encode(path: &Path, bytes: &[u8], w: usize, h: usize, subtype: PnmSubtype, color: ExtendedColorType) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io("creating image", path, e))?;
    PnmEncoder::new(BufWriter::new(file))
        .with_subtype(subtype)
        .write_image(bytes, w as u32, h as u32, color)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io("writing image", path, io),
            other => Error::format("writing image", path, other),
        })
}

/// `.ppm` files of a directory in numeric order of their names.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io("listing frames", dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io("listing frames", dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("ppm")) {
            let number = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.parse::<u64>().ok())
                .ok_or_else(|| Error::format("listing frames", &path, "frame names must be numeric"))?;
            frames.push((number, path));
        }
    }
    frames.sort();
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

/// Zero-padded frame file name.
pub fn frame_name(index: usize) -> String {
    format!("{index:06}.ppm")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::new(2, 1, vec![[1.0, 0.0, 0.2], [0.0, 128.0 / 255.0, 1.0]]).unwrap();
        write_ppm(&dir.path().join("10.ppm"), &img).unwrap();
        write_ppm(&dir.path().join("9.ppm"), &img).unwrap();
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let back = read_ppm(&dir.path().join("10.ppm")).unwrap();
        assert_eq!(back.pixels[1], img.pixels[1]);
        assert_eq!(back.pixels[0][2], 51.0 / 255.0);
        let bytes = fs::read(dir.path().join("10.ppm")).unwrap();
        assert!(bytes.starts_with(b"P6"));
        let names: Vec<_> = list_frames(dir.path()).unwrap().iter().map(|p| p.file_name().unwrap().to_owned()).collect();
        assert_eq!(names, ["9.ppm", "10.ppm"]);
    }

    #[test]
    fn pgm_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.pgm");
        write_pgm(&path, &GrayImage { width: 3, height: 2, pixels: vec![0, 1, 2, 3, 4, 255] }).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5"));
        assert!(bytes.ends_with(&[0, 1, 2, 3, 4, 255]));
    }
}
