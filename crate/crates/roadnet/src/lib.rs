//! Road-network extraction from segmentation masks.
//!
//! The crate turns rasterized road predictions into routable graphs:
//! mask refinement, skeletonization, graph extraction and cleaning, per-edge
//! speed and travel-time inference, city-scale tiling, and the APLS / TOPO
//! graph similarity metrics. A deterministic "oracle segmenter" rasterizes
//! labeled graphs (optionally with noise) so the whole pipeline can be
//! exercised end to end without a trained model.
//!
//! See the `book/` guide for a narrative walk-through of each stage.
//!
//! ```
//! use roadnet::graph::{RoadMetadata, RoadType};
//! use roadnet::speed::{assign_speed, speed_to_channel, travel_time};
//!
//! let md = RoadMetadata::new(RoadType::Motorway, 3, true);
//! let mph = assign_speed(&md);
//! assert_eq!(mph, 65.0);
//! assert_eq!(speed_to_channel(mph).unwrap(), 6);
//! let secs = travel_time(1000.0, mph).unwrap();
//! assert!((secs - 34.41).abs() < 0.01);
//! ```

pub mod config;
pub mod error;
pub mod geo;
pub mod geojson;
pub mod graph;
pub mod graph_clean;
pub mod infer;
pub mod loss;
pub mod metrics;
pub mod raster;
pub mod refine;
pub mod render;
pub mod route;
pub mod skeleton;
pub mod speed;
pub mod synth;
pub mod tiler;

// The guide's code blocks run as doc-tests so they cannot drift from the
// API; one module per chapter to make failures easy to locate.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/getting-started.md")]
    mod getting_started {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/masks.md")]
    mod masks {}
    #[doc = include_str!("../../../book/src/extraction.md")]
    mod extraction {}
    #[doc = include_str!("../../../book/src/speeds-routing.md")]
    mod speeds_routing {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/tiling.md")]
    mod tiling {}
}

pub use error::{Error, Result};
pub use geo::GeoTransform;
pub use graph::{RoadEdge, RoadGraph, RoadMetadata, RoadNode, RoadType};
pub use raster::{BinaryMask, RasterMask};
