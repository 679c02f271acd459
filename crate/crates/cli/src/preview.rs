//! 8-bit previews of feature images: channels 0-2 pushed through the
//! identity tonemap. Without a decoder network the channels are pseudo-RGB;
//! previews are for eyeballing coverage, not color fidelity.

use std::path::Path;

use anyhow::Result;
use stipple_core::scene::FeatureImage;
use stipple_core::tonemap::{tonemap_forward_one, ResponseCurve, DEFAULT_KNOTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PreviewFormat {
    Png,
    Ppm,
    None,
}

fn to_rgb8(img: &FeatureImage, ev: f64) -> Vec<u8> {
    let curve = ResponseCurve::identity(DEFAULT_KNOTS);
    let mut data = Vec::with_capacity(img.features.len() * 3);
    for px in &img.features {
        for c in 0..3 {
            let v = tonemap_forward_one(px[c], ev, &curve);
            data.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    data
}

pub fn save(img: &FeatureImage, path: &Path, format: PreviewFormat, ev: f64) -> Result<()> {
    let data = to_rgb8(img, ev);
    match format {
        PreviewFormat::Png => {
            image::save_buffer(path, &data, img.width, img.height, image::ColorType::Rgb8)?;
        }
        PreviewFormat::Ppm => {
            let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
            out.extend_from_slice(&data);
            std::fs::write(path, out)?;
        }
        PreviewFormat::None => {}
    }
    Ok(())
}
