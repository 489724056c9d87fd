//! Labelme JSON annotations, overlay rendering and CSV reports.
//!
//! Detected rings leave the pipeline in working-image coordinates; the
//! writer maps them back to the input resolution before serializing, so
//! annotations always refer to the original file. Reading is lossless:
//! radii survive a write/read round trip exactly.

use crate::error::Error;
use crate::geometry::{Chain, Point};
use crate::metrics::MetricsReport;
use crate::Result;
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DETECTION_COLOR: Rgb<u8> = Rgb([255, 0, 0]);
pub const GT_COLOR: Rgb<u8> = Rgb([0, 255, 0]);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelmeShape {
    pub label: String,
    pub points: Vec<[f64; 2]>,
    pub group_id: Option<u32>,
    pub shape_type: String,
    pub flags: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelmeDoc {
    pub version: String,
    pub flags: serde_json::Map<String, serde_json::Value>,
    pub shapes: Vec<LabelmeShape>,
    #[serde(rename = "imagePath")]
    pub image_path: String,
    /// Never embedded; kept so the document round-trips through Labelme.
    #[serde(rename = "imageData")]
    pub image_data: Option<String>,
    #[serde(rename = "imageHeight")]
    pub image_height: u32,
    #[serde(rename = "imageWidth")]
    pub image_width: u32,
}

/// Ring chains as polygons in input-image coordinates. `scale_x` and
/// `scale_y` are the working-to-input factors reported by preprocessing;
/// dividing by them undoes the resize.
pub fn rings_to_polygons(rings: &[Chain], scale_x: f64, scale_y: f64) -> Vec<Vec<Point>> {
    rings
        .iter()
        .map(|ring| {
            (0..ring.nr())
                .filter_map(|ray| ring.node_at_ray(ray))
                .map(|n| Point::new(n.x / scale_x, n.y / scale_y))
                .collect()
        })
        .collect()
}

/// Wraps polygons into a Labelme document, labelling them "1" onwards in
/// the given order (innermost ring first by convention).
pub fn labelme_document(
    polygons: &[Vec<Point>],
    image_path: &str,
    image_height: u32,
    image_width: u32,
) -> LabelmeDoc {
    let shapes = polygons
        .iter()
        .enumerate()
        .map(|(i, poly)| LabelmeShape {
            label: (i + 1).to_string(),
            points: poly.iter().map(|p| [p.x, p.y]).collect(),
            group_id: None,
            shape_type: "polygon".into(),
            flags: serde_json::Map::new(),
        })
        .collect();
    LabelmeDoc {
        version: "5.0.1".into(),
        flags: serde_json::Map::new(),
        shapes,
        image_path: image_path.into(),
        image_data: None,
        image_height,
        image_width,
    }
}

/// All shapes must be polygons with at least three vertices.
pub fn validate_labelme(doc: &LabelmeDoc) -> Result<()> {
    for shape in &doc.shapes {
        if shape.shape_type != "polygon" {
            return Err(Error::InvalidInput(format!(
                "shape '{}' has type '{}', expected polygon",
                shape.label, shape.shape_type
            )));
        }
        if shape.points.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "polygon '{}' has fewer than three points",
                shape.label
            )));
        }
    }
    Ok(())
}

pub fn write_labelme(doc: &LabelmeDoc, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_labelme(path: &Path) -> Result<LabelmeDoc> {
    let text = std::fs::read_to_string(path)?;
    let doc: LabelmeDoc = serde_json::from_str(&text)?;
    validate_labelme(&doc)?;
    Ok(doc)
}

pub fn labelme_polygons(doc: &LabelmeDoc) -> Vec<Vec<Point>> {
    doc.shapes
        .iter()
        .map(|s| s.points.iter().map(|p| Point::new(p[0], p[1])).collect())
        .collect()
}

fn draw_segment(img: &mut RgbImage, a: Point, b: Point, color: Rgb<u8>) {
    let steps = (a.x - b.x).hypot(a.y - b.y).ceil().max(1.0) as usize * 2;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = (a.x + t * (b.x - a.x)).round();
        let y = (a.y + t * (b.y - a.y)).round();
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

fn draw_closed_polyline(img: &mut RgbImage, poly: &[Point], color: Rgb<u8>) {
    if poly.len() < 2 {
        return;
    }
    for i in 0..poly.len() {
        draw_segment(img, poly[i], poly[(i + 1) % poly.len()], color);
    }
}

/// Copy of `image` with detections in red and, when given, ground truth in
/// green underneath.
pub fn render_overlay(
    image: &RgbImage,
    detections: &[Vec<Point>],
    ground_truth: Option<&[Vec<Point>]>,
) -> RgbImage {
    let mut out = image.clone();
    if let Some(gt) = ground_truth {
        for poly in gt {
            draw_closed_polyline(&mut out, poly, GT_COLOR);
        }
    }
    for poly in detections {
        draw_closed_polyline(&mut out, poly, DETECTION_COLOR);
    }
    out
}

/// One evaluated image in a batch report.
pub struct ReportRow {
    pub name: String,
    pub report: MetricsReport,
    pub time_sec: f64,
}

/// CSV matching the results-table columns; true negatives are not defined
/// for ring detection and stay 0.
pub fn write_csv_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut text = String::from("name,TP,FP,TN,FN,P,R,F,RMSE,time_sec\n");
    for row in rows {
        let r = &row.report;
        text.push_str(&format!(
            "{},{},{},0,{},{:.3},{:.3},{:.3},{:.3},{:.2}\n",
            row.name,
            r.true_positives,
            r.false_positives,
            r.false_negatives,
            r.precision,
            r.recall,
            r.fscore,
            r.rmse,
            row.time_sec,
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}
