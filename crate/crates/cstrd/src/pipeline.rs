//! End-to-end ring detection.
//!
//! Wires the stages in processing order: preprocessing, subpixel edge
//! detection, radial-direction filtering plus border extraction, ray
//! sampling, chain merging and ring completion. The result keeps the
//! working-image coordinates together with the scale factors needed to map
//! rings back onto the input file, and records per-stage wall times.

use crate::chain_connect::{connect_chains, ConnectStats};
use crate::devernay::{detect_edges, DevernayParams};
use crate::edge_filter::{filter_edges, get_border_curve, DEFAULT_ALPHA_DEG};
use crate::geometry::{Chain, Point};
use crate::postprocess::{postprocess_chains, PostprocessParams, PostprocessStats};
use crate::preprocess::{preprocess, PreprocessParams};
use crate::sampling::{sampling_edges, DEFAULT_MIN_CHAIN_LENGTH, DEFAULT_NR};
use crate::Result;
use image::RgbImage;
use std::time::Instant;

/// Detector settings; the defaults are the documented standard values.
#[derive(Debug, Clone)]
pub struct DetectParams {
    /// Pith position in input-image coordinates.
    pub pith: Point,
    /// Working height; `None` keeps the native size.
    pub height: Option<u32>,
    /// Working width; `None` keeps the native size.
    pub width: Option<u32>,
    pub sigma: f64,
    pub th_low: f64,
    pub th_high: f64,
    pub alpha_deg: f64,
    pub nr: usize,
    pub min_chain_length: usize,
}

impl DetectParams {
    pub fn new(pith: Point) -> DetectParams {
        let devernay = DevernayParams::default();
        DetectParams {
            pith,
            height: None,
            width: None,
            sigma: devernay.sigma,
            th_low: devernay.th_low,
            th_high: devernay.th_high,
            alpha_deg: DEFAULT_ALPHA_DEG,
            nr: DEFAULT_NR,
            min_chain_length: DEFAULT_MIN_CHAIN_LENGTH,
        }
    }
}

/// Wall-clock seconds spent in each stage.
#[derive(Debug, Clone, Default)]
pub struct StageTimings {
    pub preprocess: f64,
    pub devernay: f64,
    pub edge_filter: f64,
    pub sampling: f64,
    pub connect: f64,
    pub postprocess: f64,
    pub total: f64,
}

#[derive(Debug)]
pub struct Detection {
    /// Closed rings in working-image coordinates, innermost first.
    pub rings: Vec<Chain>,
    /// Pith in working-image coordinates.
    pub pith: Point,
    /// Working-to-input scale factors.
    pub scale_x: f64,
    pub scale_y: f64,
    pub working_height: u32,
    pub working_width: u32,
    pub connect_stats: ConnectStats,
    pub post_stats: PostprocessStats,
    pub timings: StageTimings,
}

pub fn detect_tree_rings(image: &RgbImage, params: &DetectParams) -> Result<Detection> {
    let start = Instant::now();
    let mut timings = StageTimings::default();

    let mut mark = Instant::now();
    let pre = preprocess(
        image,
        &PreprocessParams {
            pith: params.pith,
            height: params.height,
            width: params.width,
        },
    )?;
    timings.preprocess = mark.elapsed().as_secs_f64();

    mark = Instant::now();
    let (curves, gradient) = detect_edges(
        &pre.gray,
        &DevernayParams {
            sigma: params.sigma,
            th_low: params.th_low,
            th_high: params.th_high,
        },
    )?;
    timings.devernay = mark.elapsed().as_secs_f64();

    mark = Instant::now();
    let mut curves = filter_edges(&curves, &gradient, pre.pith, params.alpha_deg);
    // The silhouette needs no radial gradient; a missing border (for
    // example an image without background) only removes the outer bound.
    if let Ok(border) = get_border_curve(&pre.gray, curves.len()) {
        curves.push(border);
    }
    timings.edge_filter = mark.elapsed().as_secs_f64();

    mark = Instant::now();
    let chains = sampling_edges(
        &curves,
        pre.pith,
        pre.gray.height(),
        pre.gray.width(),
        params.nr,
        params.min_chain_length,
    )?;
    timings.sampling = mark.elapsed().as_secs_f64();

    mark = Instant::now();
    let (connected, connect_stats) = connect_chains(chains, pre.pith);
    timings.connect = mark.elapsed().as_secs_f64();

    mark = Instant::now();
    let (rings, post_stats) = postprocess_chains(connected, pre.pith, &PostprocessParams::default());
    timings.postprocess = mark.elapsed().as_secs_f64();

    timings.total = start.elapsed().as_secs_f64();
    Ok(Detection {
        rings,
        pith: pre.pith,
        scale_x: pre.scale_x,
        scale_y: pre.scale_y,
        working_height: pre.gray.height(),
        working_width: pre.gray.width(),
        connect_stats,
        post_stats,
        timings,
    })
}
