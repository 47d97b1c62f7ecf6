//! Multi-band float raster with georeferencing, plus a simple on-disk
//! container: raw little-endian f32 samples (band-major) next to a JSON
//! sidecar carrying dimensions and the geotransform. The float payload
//! round-trips bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoTransform;

/// Multi-band raster; values live in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RasterMask {
    bands: usize,
    width: usize,
    height: usize,
    data: Vec<f32>,
    pub transform: GeoTransform,
}

impl RasterMask {
    pub fn zeros(bands: usize, transform: GeoTransform) -> Result<Self> {
        if bands == 0 {
            return Err(Error::domain("raster needs at least one band"));
        }
        let (width, height) = (transform.width, transform.height);
        Ok(RasterMask {
            bands,
            width,
            height,
            data: vec![0.0; bands * width * height],
            transform,
        })
    }

    pub fn from_band(band: Vec<f32>, transform: GeoTransform) -> Result<Self> {
        if band.len() != transform.width * transform.height {
            return Err(Error::domain("band length does not match transform dimensions"));
        }
        Ok(RasterMask {
            bands: 1,
            width: transform.width,
            height: transform.height,
            data: band,
            transform,
        })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, band: usize, col: usize, row: usize) -> f32 {
        self.data[(band * self.height + row) * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, band: usize, col: usize, row: usize, v: f32) {
        self.data[(band * self.height + row) * self.width + col] = v;
    }

    pub fn band(&self, band: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[band * n..(band + 1) * n]
    }

    pub fn band_mut(&mut self, band: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.data[band * n..(band + 1) * n]
    }

    pub fn samples(&self) -> &[f32] {
        &self.data
    }

    pub fn samples_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &RasterMask) -> bool {
        self.bands == other.bands && self.width == other.width && self.height == other.height
    }

    /// Per-pixel maximum over a band range, as a new single-band raster.
    /// Flattening the 7 speed channels of a multi-class mask (bands 0..7)
    /// recovers the binary road mask.
    pub fn flatten_max(&self, band_range: std::ops::Range<usize>) -> RasterMask {
        let n = self.width * self.height;
        let mut out = vec![0.0f32; n];
        for b in band_range {
            let src = self.band(b);
            for i in 0..n {
                if src[i] > out[i] {
                    out[i] = src[i];
                }
            }
        }
        RasterMask {
            bands: 1,
            width: self.width,
            height: self.height,
            data: out,
            transform: self.transform.clone(),
        }
    }

    /// Write as `<path>` (raw f32 LE, band-major) + `<path>.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let sidecar = Sidecar {
            bands: self.bands,
            width: self.width,
            height: self.height,
            transform: self.transform.clone(),
        };
        let json = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| Error::domain(format!("sidecar encode: {e}")))?;
        std::fs::write(sidecar_path(path), json)?;
        let mut w = BufWriter::new(File::create(path)?);
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)
            .map_err(|e| Error::domain(format!("sidecar decode for {}: {e}", path.display())))?;
        let n = sidecar.bands * sidecar.width * sidecar.height;
        let mut bytes = Vec::with_capacity(n * 4);
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        if bytes.len() != n * 4 {
            return Err(Error::domain(format!(
                "{}: expected {} bytes, found {}",
                path.display(),
                n * 4,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(RasterMask {
            bands: sidecar.bands,
            width: sidecar.width,
            height: sidecar.height,
            data,
            transform: sidecar.transform,
        })
    }
}

/// Single-band binary raster ({0, 1} per pixel) with georeferencing.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    pub data: Vec<u8>,
    pub transform: GeoTransform,
}

impl BinaryMask {
    pub fn zeros(transform: GeoTransform) -> Self {
        BinaryMask {
            width: transform.width,
            height: transform.height,
            data: vec![0; transform.width * transform.height],
            transform,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> bool {
        self.data[row * self.width + col] != 0
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: bool) {
        self.data[row * self.width + col] = v as u8;
    }

    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn to_raster(&self) -> RasterMask {
        RasterMask {
            bands: 1,
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v as f32).collect(),
            transform: self.transform.clone(),
        }
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    bands: usize,
    width: usize,
    height: usize,
    transform: GeoTransform,
}
