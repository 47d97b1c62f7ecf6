//! GeoJSON (RFC 7946) loading and saving of road graphs.
//!
//! Each LineString feature becomes one edge; endpoints shared between
//! features (within 1e-6 m) merge into one node. Internal coordinates are
//! planar meters; geographic (lon/lat) inputs are projected on load with a
//! local equirectangular projection about the dataset centroid, which is
//! accurate to well under the 4 m metric buffer for chip-sized extents.

use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::graph::{NodeId, Point, RoadGraph, RoadMetadata, RoadType};

/// WGS84 equatorial radius, meters.
const EARTH_RADIUS_M: f64 = 6_378_137.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordMode {
    /// Decide from the coordinate ranges: values inside lon/lat bounds with
    /// a sub-2-degree span are treated as geographic.
    Auto,
    Planar,
    Geographic,
}

/// Result of loading a GeoJSON file: the graph plus warning counters.
#[derive(Debug)]
pub struct LoadSummary {
    pub graph: RoadGraph,
    /// Features skipped because they are not LineStrings.
    pub skipped_non_linestring: usize,
    /// Edges whose road_type string was not recognized (metadata omitted).
    pub unknown_road_type: usize,
    /// Whether a geographic projection was applied.
    pub projected: bool,
}

fn parse_error(e: &serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn parse_metadata(props: &Value, unknown: &mut usize) -> Option<RoadMetadata> {
    let rt_str = props.get("road_type")?.as_str()?;
    match RoadType::parse(rt_str) {
        Some(road_type) => {
            let lanes = props
                .get("lanes")
                .and_then(Value::as_u64)
                .map(|l| l.max(1) as u32)
                .unwrap_or(1);
            let paved = props.get("paved").and_then(Value::as_bool).unwrap_or(true);
            let bridge = props.get("bridge").and_then(Value::as_bool).unwrap_or(false);
            let mut md = RoadMetadata::new(road_type, lanes, paved);
            md.bridge = bridge;
            Some(md)
        }
        None => {
            *unknown += 1;
            None
        }
    }
}

pub fn load_geojson(path: &Path) -> Result<LoadSummary> {
    load_geojson_with(path, CoordMode::Auto)
}

pub fn load_geojson_with(path: &Path, mode: CoordMode) -> Result<LoadSummary> {
    let text = std::fs::read_to_string(path)?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| parse_error(&e))?;

    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::precondition("expected a FeatureCollection with features"))?;

    // First pass: collect LineString coordinate lists and properties.
    let mut lines: Vec<(Vec<Point>, Value)> = Vec::new();
    let mut skipped = 0usize;
    for f in features {
        let geom = f.get("geometry").unwrap_or(&Value::Null);
        if geom.get("type").and_then(Value::as_str) != Some("LineString") {
            skipped += 1;
            continue;
        }
        let coords = geom
            .get("coordinates")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::precondition("LineString without coordinates"))?;
        let mut pts = Vec::with_capacity(coords.len());
        for c in coords {
            let xy = c
                .as_array()
                .filter(|a| a.len() >= 2)
                .ok_or_else(|| Error::precondition("coordinate is not an [x, y] pair"))?;
            let x = xy[0].as_f64().ok_or_else(|| Error::precondition("non-numeric coordinate"))?;
            let y = xy[1].as_f64().ok_or_else(|| Error::precondition("non-numeric coordinate"))?;
            pts.push([x, y]);
        }
        if pts.len() < 2 {
            skipped += 1;
            continue;
        }
        let props = f.get("properties").cloned().unwrap_or(Value::Null);
        lines.push((pts, props));
    }

    // Decide on projection.
    let mut minx = f64::INFINITY;
    let mut maxx = f64::NEG_INFINITY;
    let mut miny = f64::INFINITY;
    let mut maxy = f64::NEG_INFINITY;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut n = 0usize;
    for (pts, _) in &lines {
        for p in pts {
            minx = minx.min(p[0]);
            maxx = maxx.max(p[0]);
            miny = miny.min(p[1]);
            maxy = maxy.max(p[1]);
            sx += p[0];
            sy += p[1];
            n += 1;
        }
    }
    let geographic = match mode {
        CoordMode::Planar => false,
        CoordMode::Geographic => true,
        CoordMode::Auto => {
            n > 0
                && minx >= -180.0
                && maxx <= 180.0
                && miny >= -90.0
                && maxy <= 90.0
                && (maxx - minx) <= 2.0
                && (maxy - miny) <= 2.0
        }
    };
    let (lon0, lat0) = if n > 0 { (sx / n as f64, sy / n as f64) } else { (0.0, 0.0) };
    let project = |p: Point| -> Point {
        if geographic {
            let k = std::f64::consts::PI / 180.0 * EARTH_RADIUS_M;
            [
                (p[0] - lon0) * k * (lat0.to_radians()).cos(),
                (p[1] - lat0) * k,
            ]
        } else {
            p
        }
    };

    let mut unknown = 0usize;
    let mut b = RoadGraph::builder();
    for (pts, props) in lines {
        let pts: Vec<Point> = pts.into_iter().map(project).collect();
        let metadata = parse_metadata(&props, &mut unknown);
        let speed = props.get("inferred_speed_mph").and_then(Value::as_f64);
        b.polyline(pts, speed, metadata)?;
    }
    Ok(LoadSummary {
        graph: b.build(),
        skipped_non_linestring: skipped,
        unknown_road_type: unknown,
        projected: geographic,
    })
}

/// Serialize a graph as a FeatureCollection of LineStrings. Speed and
/// travel time are emitted as `inferred_speed_mph` / `travel_time_s`.
pub fn save_geojson(graph: &RoadGraph, path: &Path) -> Result<()> {
    let mut features = Vec::with_capacity(graph.edge_count());
    for e in graph.edges() {
        let coords: Vec<Value> = e.geometry.iter().map(|p| json!([p[0], p[1]])).collect();
        let mut props = serde_json::Map::new();
        props.insert("length_m".into(), json!(e.length_m));
        if let Some(md) = &e.metadata {
            props.insert("road_type".into(), json!(md.road_type.as_str()));
            props.insert("lanes".into(), json!(md.lanes));
            props.insert("paved".into(), json!(md.paved));
            props.insert("bridge".into(), json!(md.bridge));
        }
        if let Some(s) = e.speed_mph {
            props.insert("inferred_speed_mph".into(), json!(s));
        }
        if let Some(t) = e.travel_time_s {
            props.insert("travel_time_s".into(), json!(t));
        }
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "LineString", "coordinates": coords },
            "properties": Value::Object(props),
        }));
    }
    let doc = json!({ "type": "FeatureCollection", "features": features });
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::domain(format!("geojson encode: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Write a single route polyline as GeoJSON for inspection.
pub fn save_route_geojson(
    graph: &RoadGraph,
    nodes: &[NodeId],
    edges: &[usize],
    path: &Path,
) -> Result<()> {
    let mut coords: Vec<Value> = Vec::new();
    for (i, &ei) in edges.iter().enumerate() {
        let from = nodes[i];
        let geom = graph.edges()[ei].geometry_from(from);
        for (j, p) in geom.iter().enumerate() {
            if i > 0 && j == 0 {
                continue;
            }
            coords.push(json!([p[0], p[1]]));
        }
    }
    if coords.is_empty() {
        if let Some(&n) = nodes.first() {
            if let Some(node) = graph.node(n) {
                coords.push(json!([node.x, node.y]));
                coords.push(json!([node.x, node.y]));
            }
        }
    }
    let doc = json!({
        "type": "FeatureCollection",
        "features": [{
            "type": "Feature",
            "geometry": { "type": "LineString", "coordinates": coords },
            "properties": { "kind": "route" },
        }],
    });
    std::fs::write(path, serde_json::to_string_pretty(&doc).unwrap())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.geojson");
        std::fs::write(&p, content).unwrap();
        (dir, p)
    }

    #[test]
    fn single_linestring_becomes_one_edge() {
        let (_d, p) = write_tmp(
            r#"{"type":"FeatureCollection","features":[
                {"type":"Feature","geometry":{"type":"LineString",
                 "coordinates":[[0,0],[100,0],[100,50]]},"properties":{}}]}"#,
        );
        let s = load_geojson(&p).unwrap();
        assert_eq!(s.graph.node_count(), 2);
        assert_eq!(s.graph.edge_count(), 1);
        assert!((s.graph.edges()[0].length_m - 150.0).abs() < 1e-9);
    }

    #[test]
    fn shared_endpoints_merge() {
        let (_d, p) = write_tmp(
            r#"{"type":"FeatureCollection","features":[
                {"type":"Feature","geometry":{"type":"LineString","coordinates":[[0,0],[100,0]]},"properties":{}},
                {"type":"Feature","geometry":{"type":"LineString","coordinates":[[100,0],[200,0]]},"properties":{}}]}"#,
        );
        let s = load_geojson(&p).unwrap();
        assert_eq!(s.graph.node_count(), 3);
        assert_eq!(s.graph.edge_count(), 2);
        let adj = s.graph.adjacency();
        assert!(adj.values().any(|v| v.len() == 2));
    }

    #[test]
    fn metadata_parses_and_drives_speed() {
        let (_d, p) = write_tmp(
            r#"{"type":"FeatureCollection","features":[
                {"type":"Feature","geometry":{"type":"LineString","coordinates":[[0,0],[500,0]]},
                 "properties":{"road_type":"motorway","lanes":3,"paved":true}}]}"#,
        );
        let s = load_geojson(&p).unwrap();
        let md = s.graph.edges()[0].metadata.unwrap();
        assert_eq!(crate::speed::assign_speed(&md), 65.0);
    }

    #[test]
    fn warnings_counted() {
        let (_d, p) = write_tmp(
            r#"{"type":"FeatureCollection","features":[
                {"type":"Feature","geometry":{"type":"Point","coordinates":[0,0]},"properties":{}},
                {"type":"Feature","geometry":{"type":"LineString","coordinates":[[0,0],[9,9]]},
                 "properties":{"road_type":"hyperloop"}}]}"#,
        );
        let s = load_geojson(&p).unwrap();
        assert_eq!(s.skipped_non_linestring, 1);
        assert_eq!(s.unknown_road_type, 1);
        assert!(s.graph.edges()[0].metadata.is_none());
    }

    #[test]
    fn malformed_json_reports_position() {
        let (_d, p) = write_tmp("{\"type\": \"FeatureCollection\",\n  \"features\": [!]}");
        match load_geojson(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn geographic_coordinates_are_projected() {
        // Two points ~111 m apart in latitude at the equator.
        let (_d, p) = write_tmp(
            r#"{"type":"FeatureCollection","features":[
                {"type":"Feature","geometry":{"type":"LineString",
                 "coordinates":[[32.5,15.5],[32.5,15.501]]},"properties":{}}]}"#,
        );
        let s = load_geojson(&p).unwrap();
        assert!(s.projected);
        let len = s.graph.edges()[0].length_m;
        assert!((len - 111.3).abs() < 1.0, "projected length {len}");
    }

    #[test]
    fn empty_graph_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.geojson");
        save_geojson(&RoadGraph::builder().build(), &p).unwrap();
        let s = load_geojson(&p).unwrap();
        assert!(s.graph.is_empty());
    }

    #[test]
    fn speed_fields_round_trip() {
        let mut b = RoadGraph::builder();
        b.polyline(vec![[0.0, 0.0], [500.0, 0.0]], Some(35.0), None)
            .unwrap();
        let g = b.build();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.geojson");
        save_geojson(&g, &p).unwrap();
        let back = load_geojson(&p).unwrap().graph;
        let e = &back.edges()[0];
        assert_eq!(e.speed_mph, Some(35.0));
        assert!((e.travel_time_s.unwrap() - 500.0 / (35.0 * 0.44704)).abs() < 1e-9);
    }
}
