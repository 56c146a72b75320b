//! Raster types shared by every stage of the pipeline, plus decoding,
//! PNG encoding, luma conversion, histograms and overlay rendering.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

fn check_len(width: u32, height: u32, len: usize) -> Result<()> {
    if width == 0 || height == 0 || (width as usize) * (height as usize) != len {
        return Err(Error::InvalidDimensions { width, height, len });
    }
    Ok(())
}

/// 8-bit RGB raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<Rgb>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<Rgb>) -> Result<Self> {
        check_len(width, height, pixels.len())?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, color: Rgb) -> Result<Self> {
        Self::new(width, height, vec![color; width as usize * height as usize])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> Rgb) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, color: Rgb) {
        let w = self.width;
        self.pixels[(y * w + x) as usize] = color;
    }

    /// Copies the `width`×`height` window whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: u32, y: u32, width: u32, height: u32) -> Result<Self> {
        if x + width > self.width || y + height > self.height {
            return Err(Error::InvalidParameter(format!(
                "crop {width}x{height}+{x}+{y} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for row in y..y + height {
            let start = (row * self.width + x) as usize;
            pixels.extend_from_slice(&self.pixels[start..start + width as usize]);
        }
        Self::new(width, height, pixels)
    }

    pub fn into_pixels(self) -> Vec<Rgb> {
        self.pixels
    }
}

/// 8-bit luminance raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    values: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, values: Vec<u8>) -> Result<Self> {
        check_len(width, height, values.len())?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.values[(y * self.width + x) as usize]
    }
}

/// Counts of each 8-bit intensity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram256 {
    bins: [u64; 256],
    total: u64,
}

impl Histogram256 {
    pub fn from_bins(bins: [u64; 256]) -> Self {
        let total = bins.iter().sum();
        Self { bins, total }
    }

    pub fn bins(&self) -> &[u64; 256] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Per-pixel foreground flags, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        check_len(width, height, bits.len())?;
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: u32, height: u32) -> Result<Self> {
        Self::new(width, height, vec![false; width as usize * height as usize])
    }

    pub fn full(width: u32, height: u32) -> Result<Self> {
        Self::new(width, height, vec![true; width as usize * height as usize])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    /// Like [`get`](Self::get) but reads outside the raster as background.
    pub fn get_or_background(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            false
        } else {
            self.bits[(y as usize) * self.width as usize + x as usize]
        }
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width;
        self.bits[(y * w + x) as usize] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.count_ones() as f64 / self.bits.len() as f64
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.dimensions() == other.dimensions()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Intersection-over-union of the foreground sets; 0 when both are empty.
    pub fn iou(&self, other: &Self) -> Result<f64> {
        if self.dimensions() != other.dimensions() {
            return Err(Error::DimensionMismatch {
                expected: self.dimensions(),
                found: other.dimensions(),
            });
        }
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        Ok(if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        })
    }

    /// Foreground as 255, background as 0.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            values: self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }
}

fn from_dynamic(img: DynamicImage) -> RasterImage {
    let (width, height) = (img.width(), img.height());
    let pixels = match img {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => img
            .to_rgb16()
            .pixels()
            .map(|p| [(p[0] >> 8) as u8, (p[1] >> 8) as u8, (p[2] >> 8) as u8])
            .collect(),
        other => other.to_rgb8().pixels().map(|p| p.0).collect(),
    };
    RasterImage {
        width,
        height,
        pixels,
    }
}

fn decode_dynamic(bytes: &[u8], origin: &Path) -> Result<DynamicImage> {
    let format = image::guess_format(bytes).map_err(|_| Error::UnsupportedFormat(origin.into()))?;
    if !matches!(
        format,
        ImageFormat::Png | ImageFormat::Jpeg | ImageFormat::Tiff
    ) {
        return Err(Error::UnsupportedFormat(origin.into()));
    }
    image::load_from_memory_with_format(bytes, format).map_err(|e| Error::CorruptImage {
        path: origin.into(),
        reason: e.to_string(),
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.is_file() {
        return Err(Error::FileNotFound(path.into()));
    }
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Decodes an in-memory PNG, JPEG or TIFF. `origin` is only used in errors.
pub fn decode_image(bytes: &[u8], origin: &Path) -> Result<RasterImage> {
    decode_dynamic(bytes, origin).map(from_dynamic)
}

/// Loads a PNG, JPEG or TIFF file as 8-bit RGB. 16-bit samples keep their
/// high byte.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    decode_image(&read_file(path)?, path)
}

/// Loads a single-channel image without any luma weighting, so 8-bit
/// grayscale files (label maps) come back with their exact stored values.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let img = decode_dynamic(&read_file(path)?, path)?;
    let (width, height) = (img.width(), img.height());
    match img {
        DynamicImage::ImageLuma8(buf) => GrayImage::new(width, height, buf.into_raw()),
        DynamicImage::ImageLuma16(buf) => GrayImage::new(
            width,
            height,
            buf.into_raw().into_iter().map(|v| (v >> 8) as u8).collect(),
        ),
        other => Ok(to_grayscale(&from_dynamic(other))),
    }
}

/// Reads only the header to obtain the pixel dimensions.
pub fn probe_dimensions(path: impl AsRef<Path>) -> Result<(u32, u32)> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::FileNotFound(path.into()));
    }
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Jpeg | ImageFormat::Tiff) => {}
        _ => return Err(Error::UnsupportedFormat(path.into())),
    }
    reader.into_dimensions().map_err(|e| Error::CorruptImage {
        path: path.into(),
        reason: e.to_string(),
    })
}

fn encode_png_raw(data: &[u8], width: u32, height: u32, color: ExtendedColorType) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    PngEncoder::new(&mut out)
        .write_image(data, width, height, color)
        .map_err(|e| Error::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

pub fn encode_png(img: &RasterImage) -> Result<Vec<u8>> {
    let flat: Vec<u8> = img.pixels.iter().flatten().copied().collect();
    encode_png_raw(&flat, img.width, img.height, ExtendedColorType::Rgb8)
}

pub fn encode_gray_png(img: &GrayImage) -> Result<Vec<u8>> {
    encode_png_raw(&img.values, img.width, img.height, ExtendedColorType::L8)
}

/// Writes `bytes` to `path`, creating parent directories.
pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_png(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_png(img)?)
}

pub fn save_gray_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_gray_png(img)?)
}

/// BT.601 luma of one pixel, rounded half up.
pub fn luma(c: Rgb) -> u8 {
    let weighted = 299 * c[0] as u32 + 587 * c[1] as u32 + 114 * c[2] as u32;
    ((weighted + 500) / 1000).min(255) as u8
}

pub fn to_grayscale(img: &RasterImage) -> GrayImage {
    GrayImage {
        width: img.width,
        height: img.height,
        values: img.pixels.iter().map(|&c| luma(c)).collect(),
    }
}

pub fn histogram(g: &GrayImage) -> Histogram256 {
    let mut bins = [0u64; 256];
    for &v in &g.values {
        bins[v as usize] += 1;
    }
    Histogram256 {
        bins,
        total: g.values.len() as u64,
    }
}

/// Blends `color` over the foreground pixels of `img`. `alpha` is clamped to
/// `[0, 1]`.
pub fn overlay(img: &RasterImage, mask: &BinaryMask, color: Rgb, alpha: f64) -> Result<RasterImage> {
    if img.dimensions() != mask.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: img.dimensions(),
            found: mask.dimensions(),
        });
    }
    let alpha = alpha.clamp(0.0, 1.0);
    let blend = |a: u8, b: u8| ((1.0 - alpha) * a as f64 + alpha * b as f64).round() as u8;
    let pixels = img
        .pixels
        .iter()
        .zip(&mask.bits)
        .map(|(&p, &fg)| {
            if fg {
                [blend(p[0], color[0]), blend(p[1], color[1]), blend(p[2], color[2])]
            } else {
                p
            }
        })
        .collect();
    Ok(RasterImage {
        width: img.width,
        height: img.height,
        pixels,
    })
}

fn scaled_size(width: u32, height: u32, max_dim: u32) -> (u32, u32) {
    let longest = width.max(height);
    if longest <= max_dim {
        return (width, height);
    }
    let scale = |v: u32| ((v as u64 * max_dim as u64) / longest as u64).max(1) as u32;
    (scale(width), scale(height))
}

fn nearest_index(dst: u32, src_len: u32, dst_len: u32) -> u32 {
    ((dst as u64 * src_len as u64 + src_len as u64 / 2) / dst_len as u64).min(src_len as u64 - 1) as u32
}

/// Nearest-neighbour downscale so that neither side exceeds `max_dim`.
/// Images already within bounds are returned unchanged.
pub fn downscale_to_fit(img: &RasterImage, max_dim: u32) -> RasterImage {
    let (w, h) = scaled_size(img.width, img.height, max_dim.max(1));
    if (w, h) == img.dimensions() {
        return img.clone();
    }
    RasterImage::from_fn(w, h, |x, y| {
        img.get(nearest_index(x, img.width, w), nearest_index(y, img.height, h))
    })
    .expect("non-empty target")
}

/// Mask counterpart of [`downscale_to_fit`].
pub fn downscale_mask_to_fit(mask: &BinaryMask, max_dim: u32) -> BinaryMask {
    let (w, h) = scaled_size(mask.width, mask.height, max_dim.max(1));
    if (w, h) == mask.dimensions() {
        return mask.clone();
    }
    BinaryMask::from_fn(w, h, |x, y| {
        mask.get(nearest_index(x, mask.width, w), nearest_index(y, mask.height, h))
    })
    .expect("non-empty target")
}
