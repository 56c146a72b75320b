use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::{self, BinaryMask, GrayImage};
use crate::species::SPECIES_COUNT;

/// Per-pixel class index: 0 is background, 1..=33 a species.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    classes: Vec<u8>,
}

pub const MAX_CLASS: u8 = SPECIES_COUNT as u8;

impl LabelMap {
    pub fn new(width: u32, height: u32, classes: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || width as usize * height as usize != classes.len() {
            return Err(Error::InvalidDimensions {
                width,
                height,
                len: classes.len(),
            });
        }
        if let Some(&bad) = classes.iter().find(|&&c| c > MAX_CLASS) {
            return Err(Error::InvalidSpecies(bad as u32));
        }
        Ok(Self {
            width,
            height,
            classes,
        })
    }

    pub fn from_mask(mask: &BinaryMask, species_id: u8) -> Result<Self> {
        if species_id == 0 || species_id > MAX_CLASS {
            return Err(Error::InvalidSpecies(species_id as u32));
        }
        Ok(Self {
            width: mask.width(),
            height: mask.height(),
            classes: mask.bits().iter().map(|&b| if b { species_id } else { 0 }).collect(),
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

    pub fn classes(&self) -> &[u8] {
        &self.classes
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.classes[(y * self.width + x) as usize]
    }

    /// Pixels with a non-zero class.
    pub fn foreground(&self) -> BinaryMask {
        BinaryMask::new(self.width, self.height, self.classes.iter().map(|&c| c != 0).collect())
            .expect("same dimensions")
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::new(self.width, self.height, self.classes.clone()).expect("same dimensions")
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        imaging::encode_gray_png(&self.to_gray())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let g = imaging::load_gray(path)?;
        Self::new(g.width(), g.height(), g.values().to_vec())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        imaging::write_bytes(path.as_ref(), &self.encode_png()?)
    }
}
