//! Pre-screening, segmentation, classification and evaluation.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::contour::{ContourInstance, PolygonSolution};
use crate::dp::{dcdp_solve, SolveStats, SplitScheme};
use crate::error::{Error, Result};
use crate::hog::{
    boundary_descriptors, gradient_field, shog, GradientField, RhogIntegral, RHOG_WINDOW,
};
use crate::image::GrayImage;
use crate::model::{LinearModel, Stage};

const HALF_WINDOW: usize = RHOG_WINDOW / 2;

/// Window centre and its pre-screening score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub cx: usize,
    pub cy: usize,
    pub score: f64,
}

impl Candidate {
    pub fn center(&self) -> (f64, f64) {
        (self.cx as f64, self.cy as f64)
    }

    fn distance(&self, other: &Candidate) -> f64 {
        (self.cx as f64 - other.cx as f64).hypot(self.cy as f64 - other.cy as f64)
    }
}

/// Sample layout on the rays. Ray `i` (0-based) points at `2 pi i / rays`;
/// position `p` (1-based) lies `offset + (p - 1) * spacing` from the centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayGeometry {
    pub rays: usize,
    pub positions: usize,
    pub offset: f64,
    pub spacing: f64,
    pub sigma: usize,
}

impl Default for RayGeometry {
    fn default() -> Self {
        Self::from_config(&PipelineConfig::default())
    }
}

impl RayGeometry {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        RayGeometry {
            rays: cfg.rays,
            positions: cfg.positions,
            offset: cfg.ray_offset,
            spacing: cfg.ray_spacing,
            sigma: cfg.sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rays < 3 {
            return Err(Error::invalid(format!(
                "a contour needs at least 3 rays, got {}",
                self.rays
            )));
        }
        if self.positions == 0 || self.sigma == 0 {
            return Err(Error::invalid("positions and sigma must be positive"));
        }
        if !(self.spacing > 0.0 && self.offset >= 0.0) {
            return Err(Error::invalid(
                "spacing must be positive, offset non-negative",
            ));
        }
        Ok(())
    }

    pub fn angle(&self, ray: usize) -> f64 {
        TAU * ray as f64 / self.rays as f64
    }

    pub fn radius(&self, pos: usize) -> f64 {
        self.offset + (pos as f64 - 1.0) * self.spacing
    }

    pub fn outer_radius(&self) -> f64 {
        self.radius(self.positions)
    }

    pub fn radii(&self, p: &[usize]) -> Vec<f64> {
        p.iter().map(|&q| self.radius(q)).collect()
    }
}

/// One candidate after all three stages.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub candidate: Candidate,
    pub radii: Vec<f64>,
    pub classify_score: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub cx: usize,
    pub cy: usize,
    pub prescreen: f64,
    pub classify: f64,
    pub accepted: bool,
    pub radii: Vec<f64>,
}

impl From<&Detection> for DetectionRecord {
    fn from(d: &Detection) -> Self {
        DetectionRecord {
            cx: d.candidate.cx,
            cy: d.candidate.cy,
            prescreen: d.candidate.score,
            classify: d.classify_score,
            accepted: d.accepted,
            radii: d.radii.clone(),
        }
    }
}

impl Detection {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&DetectionRecord::from(self)).expect("finite record serializes")
    }
}

/// Parses detection JSON lines; blank lines are skipped.
pub fn parse_detections(text: &str) -> Result<Vec<DetectionRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                column: e.column(),
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Scores every window whose top-left corner lies on the stride grid.
pub fn score_windows(
    integral: &RhogIntegral,
    width: usize,
    height: usize,
    model: &LinearModel,
    stride: usize,
) -> Result<Vec<Candidate>> {
    model.expect_stage(Stage::Prescreen)?;
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    if width < RHOG_WINDOW || height < RHOG_WINDOW {
        return Ok(Vec::new());
    }
    let ys: Vec<usize> = (0..=height - RHOG_WINDOW).step_by(stride).collect();
    let xs: Vec<usize> = (0..=width - RHOG_WINDOW).step_by(stride).collect();
    let rows: Vec<Vec<Candidate>> = ys
        .par_iter()
        .map(|&y0| {
            xs.iter()
                .map(|&x0| {
                    let d = integral.descriptor(x0, y0)?;
                    Ok(Candidate {
                        cx: x0 + HALF_WINDOW,
                        cy: y0 + HALF_WINDOW,
                        score: model.score(&d)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Keeps windows scoring above `threshold`, then suppresses neighbours.
pub fn prescreen_field(
    field: &GradientField,
    model: &LinearModel,
    stride: usize,
    threshold: f64,
    nms_radius: f64,
) -> Result<Vec<Candidate>> {
    let integral = RhogIntegral::new(field);
    let scored = score_windows(&integral, field.width(), field.height(), model, stride)?;
    let kept: Vec<Candidate> = scored.into_iter().filter(|c| c.score > threshold).collect();
    Ok(nms(kept, nms_radius))
}

/// An image smaller than one window yields no candidates.
pub fn prescreen(
    img: &GrayImage,
    model: &LinearModel,
    stride: usize,
    threshold: f64,
) -> Result<Vec<Candidate>> {
    if img.width() < RHOG_WINDOW || img.height() < RHOG_WINDOW {
        model.expect_stage(Stage::Prescreen)?;
        return Ok(Vec::new());
    }
    let field = gradient_field(img)?;
    prescreen_field(
        &field,
        model,
        stride,
        threshold,
        crate::config::DEFAULT_NMS_RADIUS,
    )
}

/// Greedy suppression: the best remaining window removes every window
/// within `radius` of its centre. Order is score descending, then `y`, then `x`.
pub fn nms(mut windows: Vec<Candidate>, radius: f64) -> Vec<Candidate> {
    windows.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.cy.cmp(&b.cy))
            .then(a.cx.cmp(&b.cx))
    });
    let mut kept: Vec<Candidate> = Vec::new();
    for w in windows {
        if kept.iter().all(|k| k.distance(&w) >= radius) {
            kept.push(w);
        }
    }
    kept
}

/// The `rays x positions` table of boundary scores around `center`.
pub fn build_likeliness_table(
    field: &GradientField,
    center: (f64, f64),
    model: &LinearModel,
    geom: &RayGeometry,
) -> Result<ContourInstance> {
    model.expect_stage(Stage::Boundary)?;
    geom.validate()?;
    let radii: Vec<f64> = (1..=geom.positions).map(|p| geom.radius(p)).collect();
    let mut table = Vec::with_capacity(geom.rays * geom.positions);
    for ray in 0..geom.rays {
        for d in boundary_descriptors(field, center, geom.angle(ray), &radii)? {
            table.push(model.score(&d)?);
        }
    }
    ContourInstance::new(geom.positions, geom.rays, geom.sigma, table)
}

/// Optimal contour around `center` together with its solver statistics.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub instance: ContourInstance,
    pub solution: PolygonSolution,
    pub stats: SolveStats,
    pub radii: Vec<f64>,
}

pub fn segment_detailed(
    field: &GradientField,
    center: (f64, f64),
    model: &LinearModel,
    geom: &RayGeometry,
    scheme: SplitScheme,
) -> Result<Segmentation> {
    let instance = build_likeliness_table(field, center, model, geom)?;
    let (solution, stats) = dcdp_solve(&instance, scheme);
    let radii = geom.radii(&solution.p);
    Ok(Segmentation {
        instance,
        solution,
        stats,
        radii,
    })
}

/// Contour radii, one per ray.
pub fn segment(
    field: &GradientField,
    center: (f64, f64),
    model: &LinearModel,
    geom: &RayGeometry,
    scheme: SplitScheme,
) -> Result<Vec<f64>> {
    Ok(segment_detailed(field, center, model, geom, scheme)?.radii)
}

/// Scores each candidate with its contour; `accepted` iff score > `theta`.
pub fn classify(
    field: &GradientField,
    candidates: &[(Candidate, Vec<f64>)],
    model: &LinearModel,
    theta: f64,
) -> Result<Vec<Detection>> {
    model.expect_stage(Stage::Classify)?;
    candidates
        .par_iter()
        .map(|(c, radii)| {
            let score = model.score(&shog(field, c.center(), radii)?)?;
            Ok(Detection {
                candidate: *c,
                radii: radii.clone(),
                classify_score: score,
                accepted: score > theta,
            })
        })
        .collect()
}

/// The three trained stages plus configuration.
#[derive(Debug, Clone)]
pub struct Detector {
    pub config: PipelineConfig,
    pub prescreen: LinearModel,
    pub boundary: LinearModel,
    pub classify: LinearModel,
}

impl Detector {
    pub fn new(
        config: PipelineConfig,
        prescreen: LinearModel,
        boundary: LinearModel,
        classify: LinearModel,
    ) -> Result<Self> {
        config.validate()?;
        prescreen.expect_stage(Stage::Prescreen)?;
        boundary.expect_stage(Stage::Boundary)?;
        classify.expect_stage(Stage::Classify)?;
        Ok(Detector {
            config,
            prescreen,
            boundary,
            classify,
        })
    }

    pub fn geometry(&self) -> RayGeometry {
        RayGeometry::from_config(&self.config)
    }

    /// Runs all stages; detections come back in `(y, x)` order.
    pub fn detect(&self, img: &GrayImage) -> Result<Vec<Detection>> {
        if img.width() < RHOG_WINDOW || img.height() < RHOG_WINDOW {
            return Ok(Vec::new());
        }
        let field = gradient_field(img)?;
        self.detect_field(&field)
    }

    pub fn detect_field(&self, field: &GradientField) -> Result<Vec<Detection>> {
        let cfg = &self.config;
        let mut candidates = prescreen_field(
            field,
            &self.prescreen,
            cfg.stride,
            cfg.theta_pre,
            cfg.nms_radius,
        )?;
        candidates.sort_by_key(|c| (c.cy, c.cx));
        let geom = self.geometry();
        let segmented: Vec<(Candidate, Vec<f64>)> = candidates
            .par_iter()
            .map(|c| {
                let radii = segment(field, c.center(), &self.boundary, &geom, cfg.scheme)?;
                Ok((*c, radii))
            })
            .collect::<Result<_>>()?;
        classify(field, &segmented, &self.classify, cfg.theta_cls)
    }
}

/// Object-level tallies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Pixel-level tallies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    pub tpa: usize,
    pub fpa: usize,
    pub fna: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Precision, recall and F; an empty denominator counts as 0.
pub fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f)
}

impl DetectionMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let (precision, recall, f_measure) = prf(tp, fp, fn_);
        DetectionMetrics {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f_measure,
        }
    }
}

impl SegMetrics {
    pub fn from_counts(tpa: usize, fpa: usize, fna: usize) -> Self {
        let (precision, recall, f_measure) = prf(tpa, fpa, fna);
        SegMetrics {
            tpa,
            fpa,
            fna,
            precision,
            recall,
            f_measure,
        }
    }
}

/// Greedy one-to-one matching, closest pairs first (ties by detection
/// index, then truth index). Returns `(detection, truth)` pairs.
pub fn match_greedy(
    detections: &[[f64; 2]],
    truth: &[[f64; 2]],
    radius: f64,
) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, d) in detections.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let dist = (d[0] - t[0]).hypot(d[1] - t[1]);
            if dist <= radius {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = vec![false; detections.len()];
    let mut used_t = vec![false; truth.len()];
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_d[i] && !used_t[j] {
            used_d[i] = true;
            used_t[j] = true;
            out.push((i, j));
        }
    }
    out
}

pub fn eval_detection(
    detections: &[[f64; 2]],
    truth: &[[f64; 2]],
    radius: f64,
) -> DetectionMetrics {
    let tp = match_greedy(detections, truth, radius).len();
    DetectionMetrics::from_counts(tp, detections.len() - tp, truth.len() - tp)
}

/// Vertices of the polygon whose `i`-th vertex lies `radii[i]` from
/// `center` along ray `i`.
pub fn polygon_vertices(center: (f64, f64), radii: &[f64]) -> Vec<(f64, f64)> {
    let m = radii.len();
    radii
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let a = TAU * i as f64 / m as f64;
            (center.0 + r * a.cos(), center.1 + r * a.sin())
        })
        .collect()
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(vertices: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = vertices.len() - 1;
    for i in 0..vertices.len() {
        let (xi, yi) = vertices[i];
        let (xj, yj) = vertices[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Pixel-centre rasterization of a star-shaped polygon into a
/// `width x height` row-major mask.
pub fn rasterize_polygon(
    center: (f64, f64),
    radii: &[f64],
    width: usize,
    height: usize,
) -> Result<Vec<bool>> {
    if radii.len() < 3 || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::invalid("degenerate polygon"));
    }
    let verts = polygon_vertices(center, radii);
    let mut mask = vec![false; width * height];
    let reach = radii.iter().cloned().fold(0.0, f64::max);
    let lo = |c: f64| (c - reach).floor().max(0.0) as usize;
    let hi = |c: f64, n: usize| ((c + reach).ceil().max(0.0) as usize).min(n.saturating_sub(1));
    if width == 0 || height == 0 {
        return Ok(mask);
    }
    for y in lo(center.1)..=hi(center.1, height) {
        for x in lo(center.0)..=hi(center.0, width) {
            if point_in_polygon(&verts, x as f64, y as f64) {
                mask[y * width + x] = true;
            }
        }
    }
    Ok(mask)
}

/// Compares the rasterized polygon with a truth mask of the same frame.
pub fn eval_segmentation(
    center: (f64, f64),
    radii: &[f64],
    truth: &[bool],
    width: usize,
    height: usize,
) -> Result<SegMetrics> {
    if truth.len() != width * height {
        return Err(Error::DimensionMismatch {
            expected: width * height,
            got: truth.len(),
        });
    }
    let est = rasterize_polygon(center, radii, width, height)?;
    let (mut tpa, mut fpa, mut fna) = (0, 0, 0);
    for (&e, &t) in est.iter().zip(truth) {
        match (e, t) {
            (true, true) => tpa += 1,
            (true, false) => fpa += 1,
            (false, true) => fna += 1,
            _ => {}
        }
    }
    Ok(SegMetrics::from_counts(tpa, fpa, fna))
}
