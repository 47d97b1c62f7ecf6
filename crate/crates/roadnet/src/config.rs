//! TOML configuration for full pipeline runs: one section per stage, every
//! threshold overridable, defaults echoed back in run reports.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoTransform;
use crate::graph::{RoadGraph, RoadType};
use crate::graph_clean::CleanConfig;
use crate::infer::InferConfig;
use crate::metrics::{AplsConfig, TopoConfig};
use crate::refine::RefineConfig;
use crate::render::{OracleNoise, DEFAULT_HALFWIDTH_M};
use crate::speed::SpeedTable;
use crate::tiler::TilerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub scene: SceneConfig,
    pub oracle: OracleConfig,
    pub tiler: TilerConfig,
    pub refine: RefineConfig,
    /// Graph cleaning; pipeline runs default to the city-scale 80 m
    /// subgraph threshold.
    #[serde(default = "CleanConfig::city")]
    pub clean: CleanConfig,
    pub infer: InferConfig,
    pub metrics: MetricsConfig,
    pub speeds: SpeedOverrides,
    pub output: OutputConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scene: SceneConfig::default(),
            oracle: OracleConfig::default(),
            tiler: TilerConfig::default(),
            refine: RefineConfig::default(),
            clean: CleanConfig::city(),
            infer: InferConfig::default(),
            metrics: MetricsConfig::default(),
            speeds: SpeedOverrides::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Ground-truth labels (GeoJSON); rendered by the oracle segmenter and
    /// used as metrics reference.
    pub labels: Option<PathBuf>,
    /// External segmentation backend: directory of per-window mask files.
    pub mask_dir: Option<PathBuf>,
    pub mask_ext: String,
    /// Ground sample distance, m/px.
    pub gsd: f64,
    /// Raster grid; derived from label bounds plus `margin_m` when absent.
    pub origin_x: Option<f64>,
    pub origin_y: Option<f64>,
    pub width_px: Option<usize>,
    pub height_px: Option<usize>,
    pub margin_m: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            labels: None,
            mask_dir: None,
            mask_ext: "msk".into(),
            gsd: 0.3,
            origin_x: None,
            origin_y: None,
            width_px: None,
            height_px: None,
            margin_m: 20.0,
        }
    }
}

impl SceneConfig {
    /// Resolve the raster grid, deriving any missing pieces from the label
    /// graph's bounding box.
    pub fn resolve_transform(&self, labels: Option<&RoadGraph>) -> Result<GeoTransform> {
        if let (Some(ox), Some(oy), Some(w), Some(h)) =
            (self.origin_x, self.origin_y, self.width_px, self.height_px)
        {
            return GeoTransform::new(ox, oy, self.gsd, w, h).map_err(to_config);
        }
        let g = labels.ok_or_else(|| {
            Error::config("scene: grid not fully specified and no labels to derive it from")
        })?;
        if g.is_empty() {
            return Err(Error::config("scene: cannot derive a grid from empty labels"));
        }
        let xs = g.nodes().iter().map(|n| n.x);
        let ys = g.nodes().iter().map(|n| n.y);
        let (min_x, max_x) = (xs.clone().fold(f64::INFINITY, f64::min), xs.fold(f64::NEG_INFINITY, f64::max));
        let (min_y, max_y) = (ys.clone().fold(f64::INFINITY, f64::min), ys.fold(f64::NEG_INFINITY, f64::max));
        let m = self.margin_m;
        let ox = self.origin_x.unwrap_or(min_x - m);
        let oy = self.origin_y.unwrap_or(max_y + m);
        let w = self
            .width_px
            .unwrap_or(((max_x + m - ox) / self.gsd).ceil() as usize);
        let h = self
            .height_px
            .unwrap_or(((oy - (min_y - m)) / self.gsd).ceil() as usize);
        GeoTransform::new(ox, oy, self.gsd, w.max(1), h.max(1)).map_err(to_config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub halfwidth_m: f64,
    pub folds: usize,
    /// Noise model, as a nested `[oracle.noise]` table.
    pub noise: OracleNoise,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            halfwidth_m: DEFAULT_HALFWIDTH_M,
            folds: 1,
            noise: OracleNoise::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub enabled: bool,
    pub apls: AplsConfig,
    pub topo: TopoConfig,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            enabled: true,
            apls: AplsConfig::default(),
            topo: TopoConfig::default(),
        }
    }
}

/// Partial speed-table overrides merged over the built-in defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedOverrides {
    pub unpaved_multiplier: Option<f64>,
    /// road type name → mph for lane buckets 1, 2, 3+.
    pub base: HashMap<String, [f64; 3]>,
}

impl SpeedOverrides {
    pub fn build_table(&self) -> Result<SpeedTable> {
        let mut table = SpeedTable::default();
        if let Some(m) = self.unpaved_multiplier {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::config("speeds.unpaved_multiplier must be in [0, 1]"));
            }
            table.unpaved_multiplier = m;
        }
        for (name, speeds) in &self.base {
            let rt = RoadType::parse(name).ok_or_else(|| {
                Error::config(format!("speeds.base: unknown road type '{name}'"))
            })?;
            table.base.insert(rt, *speeds);
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub write_mask: bool,
    pub write_graph: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            write_mask: false,
            write_graph: true,
        }
    }
}

fn to_config(e: Error) -> Error {
    Error::Config(e.to_string())
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.scene.labels.is_none() && self.scene.mask_dir.is_none() {
            return Err(Error::config(
                "scene: needs `labels` (oracle mode) or `mask_dir` (external masks)",
            ));
        }
        if !(self.scene.gsd > 0.0) {
            return Err(Error::config("scene.gsd must be positive"));
        }
        if !(self.oracle.halfwidth_m > 0.0) {
            return Err(Error::config("oracle.halfwidth_m must be positive"));
        }
        self.oracle.noise.validate().map_err(to_config)?;
        self.infer.validate()?;
        if self.metrics.enabled {
            self.metrics.apls.validate()?;
            self.metrics.topo.validate().map_err(to_config)?;
        }
        self.speeds.build_table()?;
        Ok(())
    }
}
