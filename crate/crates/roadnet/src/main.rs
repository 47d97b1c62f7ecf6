//! Command-line front end: render masks, extract graphs, score proposals,
//! route, and run the full tiled pipeline from a TOML config.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use roadnet::config::{PipelineConfig, SceneConfig};
use roadnet::error::{Error, Result};
use roadnet::geojson::{load_geojson, save_geojson, save_route_geojson};
use roadnet::graph::RoadGraph;
use roadnet::graph_clean::{clean_pipeline, CleanConfig};
use roadnet::infer::{infer_speeds, InferConfig};
use roadnet::metrics::{apls, topo, AplsConfig, TopoConfig, TopoScore};
use roadnet::refine::{refine_pipeline, RefineConfig};
use roadnet::render::{
    oracle_predict, render_binary_mask, render_continuous_mask, render_multiclass_mask,
    OracleNoise, DEFAULT_HALFWIDTH_M,
};
use roadnet::route::{shortest_route, RouteResult, RouteWeight};
use roadnet::speed::{apply_speed_table, SpeedTable, MAX_SPEED_MPH};
use roadnet::synth::gen_synthetic_city;
use roadnet::tiler::{run_city_scale_full, split, SegmentationSource};
use roadnet::RasterMask;

#[derive(Parser)]
#[command(name = "roadnet", version, about = "Road-network extraction, scoring, and routing")]
struct Cli {
    /// Worker-thread cap. This build processes windows sequentially; the
    /// value is validated and echoed in reports for forward compatibility.
    #[arg(long, global = true, env = "ROADNET_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Rasterize labeled roads into a training/oracle mask.
    Render(RenderArgs),
    /// Turn a prediction mask (or oracle-rendered labels) into a graph.
    Extract(ExtractArgs),
    /// Score a proposal graph against ground truth.
    Evaluate(EvaluateArgs),
    /// Shortest route between two nodes of a graph.
    Route(RouteArgs),
    /// Full tiled run driven by a TOML config file.
    Pipeline(PipelineArgs),
    /// Generate a synthetic labeled road network.
    GenSynthetic(GenSyntheticArgs),
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MaskFormat {
    Binary,
    Continuous,
    Multiclass,
}

#[derive(Args)]
struct RenderArgs {
    /// Labeled roads (GeoJSON LineString features).
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_enum, default_value_t = MaskFormat::Binary)]
    format: MaskFormat,
    /// Ground sample distance, m/px.
    #[arg(long, default_value_t = 0.3)]
    gsd: f64,
    /// Road buffer halfwidth, meters.
    #[arg(long, default_value_t = DEFAULT_HALFWIDTH_M)]
    halfwidth: f64,
    /// Margin around the label bounds, meters.
    #[arg(long, default_value_t = 20.0)]
    margin: f64,
    /// Output mask file (raw samples plus a `.json` sidecar).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// Prediction mask in the raster container format.
    #[arg(long, conflicts_with = "labels")]
    mask: Option<PathBuf>,
    /// Labels to run through the built-in oracle segmenter instead.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Ground sample distance for oracle rendering, m/px.
    #[arg(long, default_value_t = 0.3)]
    gsd: f64,
    #[arg(long, default_value_t = DEFAULT_HALFWIDTH_M)]
    halfwidth: f64,
    /// Oracle noise: Gaussian std on all bands.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// Oracle noise: per-edge probability of one simulated gap.
    #[arg(long, default_value_t = 0.0)]
    dropout_prob: f64,
    /// Oracle noise: gap length, meters.
    #[arg(long, default_value_t = 10.0)]
    dropout_len: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// City-scale cleaning thresholds (80 m subgraph filter) instead of
    /// the small-chip defaults (6 m).
    #[arg(long)]
    city_scale: bool,
    /// Skip speed and travel-time inference.
    #[arg(long)]
    no_speed: bool,
    #[arg(long, default_value = "graph.geojson")]
    out: PathBuf,
    /// Also write a JSON run report (timings, thresholds, stats).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum WeightArg {
    Length,
    Time,
    Both,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ground-truth graph (GeoJSON).
    #[arg(long)]
    truth: PathBuf,
    /// Proposal graph (GeoJSON).
    #[arg(long)]
    proposal: PathBuf,
    /// Control-node snap buffer, meters.
    #[arg(long, default_value_t = 4.0)]
    buffer: f64,
    /// Path weights to score: edge length, travel time, or both.
    #[arg(long, value_enum, default_value_t = WeightArg::Length)]
    weight: WeightArg,
    /// Large-area mode: no midpoint injection, control-node cap only.
    #[arg(long)]
    large: bool,
    #[arg(long, default_value_t = 500)]
    max_control: usize,
    /// Midpoint spacing for small-chip mode, meters.
    #[arg(long, default_value_t = 50.0)]
    midpoint_spacing: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Topology matching tolerance ("hole"), meters.
    #[arg(long, default_value_t = 4.0)]
    topo_hole: f64,
    /// Topology local-subregion radius, meters.
    #[arg(long, default_value_t = 300.0)]
    topo_radius: f64,
    #[arg(long, default_value_t = 50)]
    topo_seeds: usize,
    /// Write the JSON report here in addition to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ByArg {
    Length,
    Time,
}

#[derive(Args)]
struct RouteArgs {
    /// Graph to route on (GeoJSON).
    #[arg(long)]
    graph: PathBuf,
    /// Source node id.
    #[arg(long)]
    src: u64,
    /// Destination node id.
    #[arg(long)]
    dst: u64,
    #[arg(long, value_enum, default_value_t = ByArg::Length)]
    by: ByArg,
    /// Write the route as a GeoJSON LineString feature.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Validate the config, echo the resolved run plan, write nothing.
    #[arg(long)]
    dry_run: bool,
    /// Override the configured oracle fold count.
    #[arg(long)]
    folds: Option<usize>,
    /// Override the configured output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GenSyntheticArgs {
    /// Scene side length, meters.
    #[arg(long, default_value_t = 2000.0)]
    extent: f64,
    /// Street density relative to the default 250 m grid spacing.
    #[arg(long, default_value_t = 1.0)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "city.geojson")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(0) = cli.threads {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Exit codes: 0 success, 2 usage/config, 3 precondition, 4 pipeline
/// stage, 5 no result (e.g. no route).
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::NodeNotFound(_) => 2,
        Error::Io(_) | Error::Domain(_) | Error::Precondition(_) => 3,
        Error::Stage { .. } => 4,
    }
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.cmd {
        Cmd::Render(a) => cmd_render(a),
        Cmd::Extract(a) => cmd_extract(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
        Cmd::Route(a) => cmd_route(a),
        Cmd::Pipeline(a) => cmd_pipeline(a),
        Cmd::GenSynthetic(a) => cmd_gen_synthetic(a),
    }
}

fn load_labels(path: &Path) -> Result<RoadGraph> {
    // Fill in speeds/times derivable from metadata so downstream stages
    // (continuous masks, time-weighted scoring) can use them.
    Ok(apply_speed_table(&load_graph(path)?, &SpeedTable::default()))
}

fn load_graph(path: &Path) -> Result<RoadGraph> {
    let summary = load_geojson(path)?;
    if summary.skipped_non_linestring > 0 {
        eprintln!(
            "warning: {}: skipped {} non-LineString features",
            path.display(),
            summary.skipped_non_linestring
        );
    }
    if summary.unknown_road_type > 0 {
        eprintln!(
            "warning: {}: {} edges with unrecognized road_type",
            path.display(),
            summary.unknown_road_type
        );
    }
    Ok(summary.graph)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> Result<u8> {
    let labels = load_labels(&a.labels)?;
    let scene = SceneConfig {
        gsd: a.gsd,
        margin_m: a.margin,
        ..Default::default()
    };
    let t = scene.resolve_transform(Some(&labels))?;
    let mask = match a.format {
        MaskFormat::Binary => render_binary_mask(&labels, &t, a.halfwidth)?,
        MaskFormat::Continuous => render_continuous_mask(&labels, &t, a.halfwidth, MAX_SPEED_MPH)?,
        MaskFormat::Multiclass => render_multiclass_mask(&labels, &t, a.halfwidth)?,
    };
    let out = if a.out.is_dir() {
        a.out.join("mask.msk")
    } else {
        a.out.clone()
    };
    mask.save(&out)?;
    println!(
        "wrote {} ({} band(s), {}x{} px at {} m/px)",
        out.display(),
        mask.bands(),
        mask.width(),
        mask.height(),
        t.pixel_size
    );
    Ok(0)
}

fn cmd_extract(a: &ExtractArgs) -> Result<u8> {
    let mask = match (&a.mask, &a.labels) {
        (Some(path), _) => RasterMask::load(path)?,
        (None, Some(path)) => {
            let labels = load_labels(path)?;
            let scene = SceneConfig {
                gsd: a.gsd,
                ..Default::default()
            };
            let t = scene.resolve_transform(Some(&labels))?;
            let noise = OracleNoise {
                gaussian_sigma: a.noise_sigma,
                dropout_prob: a.dropout_prob,
                dropout_len_m: a.dropout_len,
                seed: a.seed,
            };
            oracle_predict(&labels, &t, a.halfwidth, &noise)?
        }
        (None, None) => {
            return Err(Error::config("extract needs --mask or --labels"));
        }
    };

    let refine_cfg = RefineConfig::default();
    let clean_cfg = if a.city_scale {
        CleanConfig::city()
    } else {
        CleanConfig::chip()
    };
    let infer_cfg = InferConfig::default();

    let mut timings = serde_json::Map::new();
    let mut timed = |name: &str, start: Instant| {
        timings.insert(name.into(), json!(start.elapsed().as_secs_f64() * 1e3));
    };

    let t0 = Instant::now();
    let binary = refine_pipeline(&mask, &refine_cfg).map_err(|e| e.in_stage("refine"))?;
    timed("refine", t0);

    let t0 = Instant::now();
    let skel = roadnet::skeleton::skeletonize(&binary);
    let graph = roadnet::skeleton::skeleton_to_graph(&skel).map_err(|e| e.in_stage("skeleton"))?;
    timed("skeleton", t0);

    let t0 = Instant::now();
    let graph = clean_pipeline(&graph, &clean_cfg);
    timed("clean", t0);

    let graph = if a.no_speed {
        graph
    } else {
        let t0 = Instant::now();
        let g = infer_speeds(&graph, &mask, &infer_cfg).map_err(|e| e.in_stage("infer-speeds"))?;
        timed("infer-speeds", t0);
        g
    };

    save_geojson(&graph, &a.out)?;
    let stats = graph.stats();
    println!(
        "wrote {}: {} nodes, {} edges, {:.3} km",
        a.out.display(),
        stats.node_count,
        stats.edge_count,
        stats.total_length_km
    );

    if let Some(report) = &a.report {
        write_json(
            report,
            &json!({
                "config": {
                    "refine": refine_cfg,
                    "clean": clean_cfg,
                    "infer": if a.no_speed { json!(null) } else { json!(infer_cfg) },
                },
                "timings_ms": timings,
                "stats": stats,
            }),
        )?;
        println!("report: {}", report.display());
    }
    Ok(0)
}

fn bounds(g: &RoadGraph) -> Option<[f64; 4]> {
    if g.is_empty() {
        return None;
    }
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for n in g.nodes() {
        b[0] = b[0].min(n.x);
        b[1] = b[1].min(n.y);
        b[2] = b[2].max(n.x);
        b[3] = b[3].max(n.y);
    }
    Some(b)
}

fn frames_disjoint(g: &RoadGraph, gp: &RoadGraph) -> bool {
    match (bounds(g), bounds(gp)) {
        (Some(a), Some(b)) => a[2] < b[0] || b[2] < a[0] || a[3] < b[1] || b[3] < a[1],
        _ => false,
    }
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<u8> {
    let truth = load_labels(&a.truth)?;
    let proposal = load_labels(&a.proposal)?;

    let apls_cfg = AplsConfig {
        buffer_m: a.buffer,
        large_mode: a.large,
        max_control_nodes: a.max_control,
        midpoint_spacing_m: a.midpoint_spacing,
        seed: a.seed,
        ..Default::default()
    };
    let topo_cfg = TopoConfig {
        hole_m: a.topo_hole,
        radius_m: a.topo_radius,
        n_seeds: a.topo_seeds,
        seed: a.seed,
    };

    let (apls_length, apls_time, topo_score);
    if frames_disjoint(&truth, &proposal) {
        eprintln!(
            "warning: truth and proposal bounding boxes are disjoint; scoring 0"
        );
        apls_length = Some(0.0);
        apls_time = matches!(a.weight, WeightArg::Time | WeightArg::Both).then_some(0.0);
        topo_score = TopoScore {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            true_pos: 0,
            false_pos: 0,
            false_neg: 0,
        };
    } else {
        apls_length = match a.weight {
            WeightArg::Time => None,
            _ => Some(apls(
                &truth,
                &proposal,
                &AplsConfig {
                    weight: RouteWeight::Length,
                    ..apls_cfg
                },
            )?),
        };
        apls_time = match a.weight {
            WeightArg::Length => None,
            _ => Some(apls(
                &truth,
                &proposal,
                &AplsConfig {
                    weight: RouteWeight::Time,
                    ..apls_cfg
                },
            )?),
        };
        topo_score = topo(&truth, &proposal, &topo_cfg)?;
    }

    let report = json!({
        "apls_length": apls_length,
        "apls_time": apls_time,
        "topo": topo_score,
        "config": { "apls": apls_cfg, "topo": topo_cfg },
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(0)
}

fn cmd_route(a: &RouteArgs) -> Result<u8> {
    let graph = load_labels(&a.graph)?;
    let weight = match a.by {
        ByArg::Length => RouteWeight::Length,
        ByArg::Time => RouteWeight::Time,
    };
    match shortest_route(&graph, a.src, a.dst, weight)? {
        RouteResult::Found(route) => {
            if route.skipped_unweighted {
                eprintln!("warning: edges without travel time were skipped");
            }
            let length_m: f64 = route.edges.iter().map(|&i| graph.edges()[i].length_m).sum();
            let time_s: Option<f64> = route
                .edges
                .iter()
                .map(|&i| graph.edges()[i].travel_time_s)
                .sum();
            match time_s {
                Some(t) => println!(
                    "route {} -> {}: {} edge(s), {:.1} m, {:.1} s",
                    a.src, a.dst, route.edges.len(), length_m, t
                ),
                None => println!(
                    "route {} -> {}: {} edge(s), {:.1} m",
                    a.src, a.dst, route.edges.len(), length_m
                ),
            }
            if let Some(out) = &a.out {
                save_route_geojson(&graph, &route.nodes, &route.edges, out)?;
                println!("wrote {}", out.display());
            }
            Ok(0)
        }
        RouteResult::NoPath { skipped_unweighted } => {
            if skipped_unweighted {
                eprintln!("warning: edges without travel time were skipped");
            }
            eprintln!("no path from node {} to node {}", a.src, a.dst);
            Ok(5)
        }
    }
}

fn cmd_pipeline(a: &PipelineArgs) -> Result<u8> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(folds) = a.folds {
        cfg.oracle.folds = folds.max(1);
    }
    if let Some(dir) = &a.out_dir {
        cfg.output.dir = dir.clone();
    }

    let table = cfg.speeds.build_table()?;
    let labels = match &cfg.scene.labels {
        Some(path) => Some(apply_speed_table(&load_graph(path)?, &table)),
        None => None,
    };
    let transform = cfg.scene.resolve_transform(labels.as_ref())?;
    let windows = split(
        transform.width,
        transform.height,
        cfg.tiler.window_px,
        cfg.tiler.overlap_px,
    )
    .map_err(|e| Error::Config(e.to_string()))?;

    let resolved = toml::to_string_pretty(&cfg).expect("config serializes");
    if a.dry_run {
        println!("# resolved configuration\n{resolved}");
        println!(
            "# grid: {}x{} px at {} m/px, origin ({}, {}), {} window(s)",
            transform.width,
            transform.height,
            transform.pixel_size,
            transform.origin_x,
            transform.origin_y,
            windows.len()
        );
        return Ok(0);
    }

    let source = match &cfg.scene.mask_dir {
        Some(dir) => SegmentationSource::MaskDir {
            dir: dir.clone(),
            ext: cfg.scene.mask_ext.clone(),
        },
        None => SegmentationSource::Oracle {
            graph: labels.clone().expect("validated: labels or mask_dir"),
            halfwidth_m: cfg.oracle.halfwidth_m,
            noise: cfg.oracle.noise,
            folds: cfg.oracle.folds,
        },
    };

    let started = Instant::now();
    let run = run_city_scale_full(
        &source,
        &transform,
        &cfg.tiler,
        &cfg.refine,
        &cfg.clean,
        Some(&cfg.infer),
        cfg.output.write_mask,
    )?;
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;

    std::fs::create_dir_all(&cfg.output.dir)?;
    let mut artifacts = Vec::new();
    if cfg.output.write_graph {
        let path = cfg.output.dir.join("graph.geojson");
        save_geojson(&run.graph, &path)?;
        artifacts.push(path);
    }
    if let Some(mask) = &run.mask {
        let path = cfg.output.dir.join("mask.msk");
        mask.save(&path)?;
        artifacts.push(path);
    }

    let metrics = match (&labels, cfg.metrics.enabled) {
        (Some(truth), true) => {
            let apls_length = apls(
                truth,
                &run.graph,
                &AplsConfig {
                    weight: RouteWeight::Length,
                    ..cfg.metrics.apls
                },
            )?;
            // Time-weighted APLS needs travel times on both graphs; skip
            // (rather than fail) when the labels cannot provide them.
            let apls_time = apls(
                truth,
                &run.graph,
                &AplsConfig {
                    weight: RouteWeight::Time,
                    ..cfg.metrics.apls
                },
            )
            .ok();
            let topo_score = topo(truth, &run.graph, &cfg.metrics.topo)?;
            Some(json!({
                "apls_length": apls_length,
                "apls_time": apls_time,
                "topo": topo_score,
            }))
        }
        _ => None,
    };

    let stats = run.graph.stats();
    let report = json!({
        "config": toml::from_str::<toml::Value>(&resolved).expect("round trip"),
        "grid": transform,
        "windows": windows.len(),
        "coverage": run.coverage,
        "stats": stats,
        "metrics": metrics,
        "elapsed_ms": elapsed_ms,
    });
    let report_path = cfg.output.dir.join("report.json");
    write_json(&report_path, &report)?;

    println!(
        "extracted {} nodes, {} edges, {:.3} km in {:.1} s",
        stats.node_count,
        stats.edge_count,
        stats.total_length_km,
        elapsed_ms / 1e3
    );
    if let Some(m) = &metrics {
        println!(
            "metrics: apls_length {:.4}, topo f1 {:.4}",
            m["apls_length"].as_f64().unwrap_or(f64::NAN),
            m["topo"]["f1"].as_f64().unwrap_or(f64::NAN)
        );
    }
    for p in &artifacts {
        println!("wrote {}", p.display());
    }
    println!("report: {}", report_path.display());
    Ok(0)
}

fn cmd_gen_synthetic(a: &GenSyntheticArgs) -> Result<u8> {
    if !(a.extent > 0.0) {
        return Err(Error::config("--extent must be positive"));
    }
    if a.density < 0.0 {
        return Err(Error::config("--density must be non-negative"));
    }
    let g = gen_synthetic_city(a.extent, a.density, a.seed);
    save_geojson(&g, &a.out)?;
    let stats = g.stats();
    println!(
        "wrote {}: {} nodes, {} edges, {:.3} km",
        a.out.display(),
        stats.node_count,
        stats.edge_count,
        stats.total_length_km
    );
    Ok(0)
}
