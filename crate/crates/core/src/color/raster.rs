//! RGB and Lab rasters, PNG I/O and area downscaling.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageReader, Rgb};

use crate::color::cdl::{apply_cdl_pixel, CdlParams};
use crate::color::space::{lab_to_srgb, srgb_to_lab};
use crate::error::{invalid, Result};
use crate::numeric::SampleSet;

/// Encoded sRGB pixels in row-major order, three channels each.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("image must have at least one pixel"));
        }
        if data.len() != width * height * 3 {
            return Err(invalid(format!("expected {} channel values, got {}", width * height * 3, data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("image contains non-finite values"));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn map_pixels(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let data = self.pixels().flat_map(f).collect();
        Self { width: self.width, height: self.height, data }
    }

    pub fn clamped(&self) -> Self {
        self.map_pixels(|p| p.map(|v| v.clamp(0.0, 1.0)))
    }

    /// Loads an 8- or 16-bit PNG (or any format the decoder recognises);
    /// alpha is dropped and values are normalised to `[0, 1]`.
    pub fn load(path: &Path) -> Result<Self> {
        let img = ImageReader::open(path)?.with_guessed_format()?.decode()?;
        Ok(Self::from_dynamic(&img))
    }

    pub fn from_dynamic(img: &DynamicImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = if img.color().bytes_per_pixel() / img.color().channel_count() > 1 {
            img.to_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()
        } else {
            img.to_rgb8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect()
        };
        Self { width: w, height: h, data }
    }

    pub fn to_dynamic(&self, sixteen_bit: bool) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        let clamp = |v: f64| v.clamp(0.0, 1.0);
        if sixteen_bit {
            let raw = self.data.iter().map(|&v| (clamp(v) * 65535.0).round() as u16).collect();
            DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw).expect("buffer size"))
        } else {
            let raw = self.data.iter().map(|&v| (clamp(v) * 255.0).round() as u8).collect();
            DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).expect("buffer size"))
        }
    }

    /// Writes a PNG, clamping channels to `[0, 1]`.
    pub fn save_png(&self, path: &Path, sixteen_bit: bool) -> Result<()> {
        self.to_dynamic(sixteen_bit).save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    /// Distinct colours, capped at `limit` for early exit.
    pub fn count_colors(&self, limit: usize) -> usize {
        let mut seen: Vec<[u64; 3]> = Vec::new();
        for p in self.pixels() {
            let key = p.map(f64::to_bits);
            if !seen.contains(&key) {
                seen.push(key);
                if seen.len() >= limit {
                    break;
                }
            }
        }
        seen.len()
    }
}

/// CIELAB pixels derived from an [`RgbImage`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl LabImage {
    pub fn from_rgb(img: &RgbImage) -> Self {
        let data = img.pixels().flat_map(srgb_to_lab).collect();
        Self { width: img.width, height: img.height, data }
    }

    pub fn to_rgb(&self) -> RgbImage {
        let data = self.data.chunks_exact(3).flat_map(|c| lab_to_srgb([c[0], c[1], c[2]])).collect();
        RgbImage { width: self.width, height: self.height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Pixels as an `N x 3` sample set.
    pub fn to_samples(&self) -> Result<SampleSet> {
        SampleSet::new(self.data.clone(), self.width * self.height, 3)
    }
}

/// Applies the CDL to every pixel, without clamping.
pub fn apply_cdl(img: &RgbImage, cdl: &CdlParams) -> RgbImage {
    img.map_pixels(|p| apply_cdl_pixel(cdl, p))
}

// For each output cell, the input indices it overlaps and their weights.
fn area_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|j| {
            let (lo, hi) = (j as f64 * scale, (j + 1) as f64 * scale);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(n_in);
            (first..last)
                .filter_map(|i| {
                    let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                    (overlap > 0.0).then_some((i, overlap / scale))
                })
                .collect()
        })
        .collect()
}

/// Aspect-preserving area-average downscale so the longer side is at most
/// `max_dim`. Smaller images are returned unchanged.
pub fn resize_max_dim(img: &RgbImage, max_dim: usize) -> Result<RgbImage> {
    if max_dim == 0 {
        return Err(invalid("max_dim must be >= 1"));
    }
    let longest = img.width.max(img.height);
    if longest <= max_dim {
        return Ok(img.clone());
    }
    let fit = |len: usize| ((len * max_dim) as f64 / longest as f64).round().max(1.0) as usize;
    let (w, h) = (fit(img.width), fit(img.height));
    let wx = area_weights(img.width, w);
    let wy = area_weights(img.height, h);

    // horizontal pass, then vertical
    let mut tmp = vec![0.0; img.height * w * 3];
    for y in 0..img.height {
        for (x, taps) in wx.iter().enumerate() {
            for &(i, wt) in taps {
                for c in 0..3 {
                    tmp[3 * (y * w + x) + c] += wt * img.data[3 * (y * img.width + i) + c];
                }
            }
        }
    }
    let mut out = vec![0.0; h * w * 3];
    for (y, taps) in wy.iter().enumerate() {
        for &(i, wt) in taps {
            for x in 0..w {
                for c in 0..3 {
                    out[3 * (y * w + x) + c] += wt * tmp[3 * (i * w + x) + c];
                }
            }
        }
    }
    RgbImage::new(w, h, out)
}

/// Peak signal-to-noise ratio in dB for images with unit peak.
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(invalid(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}
