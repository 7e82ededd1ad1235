//! Binary PGM (P5) output and the five-column map grid.

use reconsal_core::saliency::{scale_unit_max, square_map};

use crate::eval::ImageMaps;

pub const GUTTER: usize = 2;
pub const GUTTER_VALUE: u8 = 128;
pub const GRID_COLUMNS: usize = 5;

/// 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, pixels: vec![value; width * height] }
    }

    /// Copies a `[0, 1]` tile with its top-left corner at `(x, y)`;
    /// each value becomes `round(255·v)`.
    pub fn blit_unit(&mut self, x: usize, y: usize, w: usize, h: usize, values: &[f64]) {
        for r in 0..h {
            for c in 0..w {
                self.pixels[(y + r) * self.width + x + c] = to_byte(values[r * w + c]);
            }
        }
    }

    /// `P5` header followed by raw bytes, max value 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

pub fn to_byte(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0)).round() as u8
}

/// One row: input, reconstruction, scaled saliency, squared scaled saliency
/// and scaled reconstruction error, separated by gray gutters.
pub fn map_grid(input: &[f64], maps: &ImageMaps) -> GrayImage {
    let (h, w) = (maps.saliency.height(), maps.saliency.width());
    let scaled_saliency = scale_unit_max(&maps.saliency);
    let squared = square_map(&scaled_saliency);
    let error = scale_unit_max(&maps.recon_error);
    let tiles: [&[f64]; GRID_COLUMNS] = [
        input,
        maps.reconstruction.data(),
        scaled_saliency.values(),
        squared.values(),
        error.values(),
    ];

    let width = GRID_COLUMNS * w + (GRID_COLUMNS - 1) * GUTTER;
    let mut img = GrayImage::filled(width, h, GUTTER_VALUE);
    for (i, tile) in tiles.iter().enumerate() {
        img.blit_unit(i * (w + GUTTER), 0, w, h, tile);
    }
    img
}
