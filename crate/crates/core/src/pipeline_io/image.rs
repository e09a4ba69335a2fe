use super::PipelineError;
use crate::barrier_distance::ImagePatch;
use image::{ColorType, ImageFormat, ImageReader};
use std::io::{BufReader, Read, Write};
use std::path::Path;

/// Loads an 8-bit PNG or a binary (P6) PPM as RGB. Gray inputs are
/// replicated to three channels and alpha is dropped.
pub fn load_image(path: &Path) -> Result<ImagePatch, PipelineError> {
    let unsupported = |message: String| PipelineError::UnsupportedImage {
        path: path.display().to_string(),
        message,
    };
    let mut magic = [0u8; 8];
    let n = std::fs::File::open(path)
        .and_then(|mut f| f.read(&mut magic))
        .map_err(|e| PipelineError::io(path, e))?;
    let format = match &magic[..n] {
        [0x89, b'P', b'N', b'G', ..] => ImageFormat::Png,
        [b'P', b'6', ..] => ImageFormat::Pnm,
        _ => return Err(unsupported("expected an 8-bit PNG or a P6 PPM".into())),
    };
    let file = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let img = ImageReader::with_format(BufReader::new(file), format)
        .decode()
        .map_err(|e| unsupported(e.to_string()))?;
    match img.color() {
        ColorType::L8 | ColorType::La8 | ColorType::Rgb8 | ColorType::Rgba8 => {}
        other => return Err(unsupported(format!("{other:?} is not 8 bits per channel"))),
    }
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    ImagePatch::from_rgb_bytes(w, h, rgb.as_raw()).map_err(|e| unsupported(e.to_string()))
}

pub fn load_image_checked(
    path: &Path,
    width: usize,
    height: usize,
) -> Result<ImagePatch, PipelineError> {
    let img = load_image(path)?;
    if (img.width(), img.height()) != (width, height) {
        return Err(PipelineError::DimensionMismatch {
            path: path.display().to_string(),
            expected: (width, height),
            actual: (img.width(), img.height()),
        });
    }
    Ok(img)
}

pub fn write_ppm(path: &Path, patch: &ImagePatch) -> Result<(), PipelineError> {
    let mut buf = format!("P6\n{} {}\n255\n", patch.width(), patch.height()).into_bytes();
    for px in patch.pixels() {
        buf.extend_from_slice(px);
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| PipelineError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ppm");
        let patch = ImagePatch::filled(4, 4, [10, 20, 30]).unwrap();
        write_ppm(&path, &patch).unwrap();
        assert_eq!(load_image(&path).unwrap(), patch);
    }

    #[test]
    fn dimension_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("small.ppm");
        write_ppm(&path, &ImagePatch::filled(320, 240, [0, 0, 0]).unwrap()).unwrap();
        assert!(matches!(
            load_image_checked(&path, 640, 480),
            Err(PipelineError::DimensionMismatch { expected: (640, 480), actual: (320, 240), .. })
        ));
    }

    #[test]
    fn gray_png_is_replicated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let gray = image::GrayImage::from_fn(3, 2, |x, y| image::Luma([(x * 10 + y) as u8]));
        gray.save(&path).unwrap();
        let p = load_image(&path).unwrap();
        assert_eq!((p.width(), p.height()), (3, 2));
        assert_eq!(p.get(2, 1), [21, 21, 21]);
    }

    #[test]
    fn other_formats_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        std::fs::write(&path, b"P5\n1 1\n255\n\x00").unwrap();
        assert!(matches!(load_image(&path), Err(PipelineError::UnsupportedImage { .. })));
    }
}
