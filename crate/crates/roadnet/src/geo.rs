//! Raster georeferencing: the affine link between pixel and world coordinates.
//!
//! The whole pipeline works in a planar metric frame (meters east/north).
//! A [`GeoTransform`] places a north-up raster grid in that frame; world
//! coordinates of a pixel refer to the pixel *center*.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// North-up affine transform between pixel and metric world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    /// World x (meters east) of the top-left corner of pixel (0, 0).
    pub origin_x: f64,
    /// World y (meters north) of the top-left corner of pixel (0, 0).
    pub origin_y: f64,
    /// Ground sample distance in meters per pixel; strictly positive.
    pub pixel_size: f64,
    pub width: usize,
    pub height: usize,
    /// Opaque CRS label carried through serialization.
    #[serde(default)]
    pub crs_tag: String,
}

impl GeoTransform {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        pixel_size: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if !(pixel_size > 0.0) || !pixel_size.is_finite() {
            return Err(Error::domain(format!(
                "pixel_size must be positive and finite, got {pixel_size}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::domain("raster dimensions must be at least 1x1"));
        }
        Ok(GeoTransform {
            origin_x,
            origin_y,
            pixel_size,
            width,
            height,
            crs_tag: String::new(),
        })
    }

    /// World coordinates of the center of pixel (col, row).
    pub fn pixel_to_world(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.pixel_size,
            self.origin_y - (row as f64 + 0.5) * self.pixel_size,
        )
    }

    /// Pixel containing the world point, or `None` when out of bounds.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let col = (x - self.origin_x) / self.pixel_size;
        let row = (self.origin_y - y) / self.pixel_size;
        if col < 0.0 || row < 0.0 {
            return None;
        }
        let (col, row) = (col.floor() as usize, row.floor() as usize);
        if col >= self.width || row >= self.height {
            return None;
        }
        Some((col, row))
    }

    /// Fractional pixel coordinates (col, row), unclipped.
    pub fn world_to_pixel_f(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) / self.pixel_size,
            (self.origin_y - y) / self.pixel_size,
        )
    }

    /// World-space bounding box (min_x, min_y, max_x, max_y).
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.origin_x,
            self.origin_y - self.height as f64 * self.pixel_size,
            self.origin_x + self.width as f64 * self.pixel_size,
            self.origin_y,
        )
    }
}
