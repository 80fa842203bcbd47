//! Descriptor sets for the three stages built from annotated images.
//!
//! Pre-screening positives are windows centred on an object and negatives
//! are windows at random locations. Boundary samples reuse the positive
//! centres: on every ray the position nearest the true boundary is
//! positive and the rest are negative. Classification reuses both window
//! sets, describing each by S-HOG over the contour found by the boundary
//! model.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::SplitScheme;
use crate::error::{Error, Result};
use crate::hog::{
    boundary_descriptors, gradient_field, shog, GradientField, RhogIntegral, BOUNDARY_LENGTH,
    RHOG_WINDOW,
};
use crate::image::GrayImage;
use crate::model::{train, LinearModel, Stage, TrainConfig};
use crate::pipeline::{segment, RayGeometry};
use crate::synth::{Phantom, Truth};

/// Objects narrower than this (equivalent diameter) are ignored.
pub const MIN_DIAMETER: f64 = 50.0;
const HALF_WINDOW: f64 = (RHOG_WINDOW / 2) as f64;
const MARCH_STEP: f64 = 0.25;

#[derive(Debug, Clone)]
pub struct AnnotatedObject {
    pub center: [f64; 2],
    /// Row-major mask in the image frame.
    pub mask: Option<Vec<bool>>,
    /// Used when no mask is available.
    pub radius: Option<f64>,
}

impl AnnotatedObject {
    pub fn equivalent_diameter(&self) -> Option<f64> {
        match (&self.mask, self.radius) {
            (Some(m), _) => Some(2.0 * (m.iter().filter(|&&v| v).count() as f64 / PI).sqrt()),
            (None, Some(r)) => Some(2.0 * r),
            (None, None) => None,
        }
    }

    /// Distance from the centre to the boundary along `angle`.
    pub fn boundary_radius(&self, angle: f64, width: usize, height: usize) -> Option<f64> {
        let Some(mask) = &self.mask else {
            return self.radius;
        };
        let (dx, dy) = (angle.cos(), angle.sin());
        let mut t = 0.0;
        loop {
            let x = (self.center[0] + t * dx).round();
            let y = (self.center[1] + t * dy).round();
            if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
                return Some(t);
            }
            if !mask[y as usize * width + x as usize] {
                return Some((t - MARCH_STEP / 2.0).max(0.0));
            }
            t += MARCH_STEP;
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnnotatedImage {
    pub image: GrayImage,
    pub objects: Vec<AnnotatedObject>,
}

impl AnnotatedImage {
    pub fn from_phantom(ph: &Phantom) -> Self {
        AnnotatedImage {
            image: ph.image.clone(),
            objects: ph
                .objects
                .iter()
                .enumerate()
                .map(|(k, o)| AnnotatedObject {
                    center: o.center,
                    mask: Some(ph.mask(k)),
                    radius: Some(o.radius),
                })
                .collect(),
        }
    }

    /// Pairs an image with its truth; mask paths resolve against `base`.
    pub fn from_truth(image: GrayImage, truth: &Truth, base: &Path) -> Result<Self> {
        let masks = truth.load_masks(base)?;
        let (w, h) = (image.width(), image.height());
        if let Some(ms) = &masks {
            if ms.iter().any(|m| m.width() != w || m.height() != h) {
                return Err(Error::invalid("mask and image sizes differ"));
            }
        }
        let objects = truth
            .centers
            .iter()
            .enumerate()
            .map(|(k, &center)| AnnotatedObject {
                center,
                mask: masks
                    .as_ref()
                    .map(|ms| ms[k].data().iter().map(|&v| v != 0).collect()),
                radius: truth.radii.as_ref().map(|r| r[k]),
            })
            .collect();
        Ok(AnnotatedImage { image, objects })
    }

    /// Objects large enough to count as positives.
    pub fn positives(&self) -> impl Iterator<Item = &AnnotatedObject> {
        self.objects
            .iter()
            .filter(|o| o.equivalent_diameter().is_none_or(|d| d >= MIN_DIAMETER))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub negatives_per_image: usize,
    /// Pre-screening positives are also taken at `+-jitter` pixel offsets.
    pub jitter: usize,
    /// Same for classification positives.
    pub classify_jitter: usize,
    /// Negative centres keep at least this distance from every object.
    pub exclusion: f64,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            negatives_per_image: 40,
            jitter: 5,
            classify_jitter: 0,
            exclusion: 25.0,
            seed: 0,
        }
    }
}

/// Positive and negative feature vectors for one stage.
#[derive(Debug, Clone, Default)]
pub struct SampleSet {
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

impl SampleSet {
    fn extend(&mut self, other: SampleSet) {
        self.positives.extend(other.positives);
        self.negatives.extend(other.negatives);
    }

    pub fn train(&self, stage: Stage, config: &TrainConfig) -> Result<LinearModel> {
        train(stage, &self.positives, &self.negatives, config)
    }
}

fn window_fits(img: &GrayImage, c: (f64, f64)) -> bool {
    c.0 >= HALF_WINDOW
        && c.1 >= HALF_WINDOW
        && c.0 + HALF_WINDOW <= img.width() as f64
        && c.1 + HALF_WINDOW <= img.height() as f64
}

fn positive_centers(a: &AnnotatedImage, jitter: usize) -> Vec<(f64, f64)> {
    let j = jitter as f64;
    let offsets: Vec<f64> = if jitter == 0 {
        vec![0.0]
    } else {
        vec![-j, 0.0, j]
    };
    let mut out = Vec::new();
    for o in a.positives() {
        let (cx, cy) = (o.center[0].round(), o.center[1].round());
        for &oy in &offsets {
            for &ox in &offsets {
                let c = (cx + ox, cy + oy);
                if window_fits(&a.image, c) {
                    out.push(c);
                }
            }
        }
    }
    out
}

/// Random window centres away from every object.
pub fn negative_centers(
    a: &AnnotatedImage,
    cfg: &SampleConfig,
    image_index: usize,
) -> Vec<(f64, f64)> {
    let (w, h) = (a.image.width(), a.image.height());
    if (w as f64) < 2.0 * HALF_WINDOW || (h as f64) < 2.0 * HALF_WINDOW {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(image_index as u64));
    let mut out = Vec::with_capacity(cfg.negatives_per_image);
    let mut attempts = 0;
    while out.len() < cfg.negatives_per_image && attempts < 100 * cfg.negatives_per_image.max(1) {
        attempts += 1;
        let cx = rng
            .random_range(HALF_WINDOW..=w as f64 - HALF_WINDOW)
            .round();
        let cy = rng
            .random_range(HALF_WINDOW..=h as f64 - HALF_WINDOW)
            .round();
        let clear = a
            .objects
            .iter()
            .all(|o| (o.center[0] - cx).hypot(o.center[1] - cy) >= cfg.exclusion);
        if clear {
            out.push((cx, cy));
        }
    }
    out
}

fn top_left(c: (f64, f64)) -> (usize, usize) {
    ((c.0 - HALF_WINDOW) as usize, (c.1 - HALF_WINDOW) as usize)
}

pub fn prescreen_samples(set: &[AnnotatedImage], cfg: &SampleConfig) -> Result<SampleSet> {
    let parts: Vec<SampleSet> = set
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let field = gradient_field(&a.image)?;
            let integral = RhogIntegral::new(&field);
            let describe = |c: (f64, f64)| -> Result<Vec<f64>> {
                let (x0, y0) = top_left(c);
                Ok(integral.descriptor(x0, y0)?.into_values())
            };
            Ok(SampleSet {
                positives: positive_centers(a, cfg.jitter)
                    .into_iter()
                    .map(describe)
                    .collect::<Result<_>>()?,
                negatives: negative_centers(a, cfg, i)
                    .into_iter()
                    .map(describe)
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(merge(parts))
}

fn merge(parts: Vec<SampleSet>) -> SampleSet {
    let mut out = SampleSet::default();
    for p in parts {
        out.extend(p);
    }
    out
}

/// Position whose radius is nearest `r`. A boundary beyond either end of
/// the sampled range maps to that end while it stays within half a
/// boundary window of it.
pub fn nearest_position(geom: &RayGeometry, r: f64) -> Option<usize> {
    let reach = BOUNDARY_LENGTH as f64 / 2.0;
    if r < geom.radius(1) - reach || r > geom.outer_radius() + reach {
        return None;
    }
    let k = ((r - geom.offset) / geom.spacing).round();
    Some((k.max(0.0) as usize + 1).min(geom.positions))
}

pub fn boundary_samples(set: &[AnnotatedImage], geom: &RayGeometry) -> Result<SampleSet> {
    geom.validate()?;
    let parts: Vec<SampleSet> = set
        .par_iter()
        .map(|a| {
            let field = gradient_field(&a.image)?;
            let (w, h) = (a.image.width(), a.image.height());
            let radii: Vec<f64> = (1..=geom.positions).map(|p| geom.radius(p)).collect();
            let mut out = SampleSet::default();
            for o in a.positives() {
                let center = (o.center[0].round(), o.center[1].round());
                if !window_fits(&a.image, center) {
                    continue;
                }
                for ray in 0..geom.rays {
                    let angle = geom.angle(ray);
                    let truth_pos = o
                        .boundary_radius(angle, w, h)
                        .and_then(|r| nearest_position(geom, r));
                    let ds = boundary_descriptors(&field, center, angle, &radii)?;
                    for (d, pos) in ds.into_iter().zip(1..) {
                        if Some(pos) == truth_pos {
                            out.positives.push(d.into_values());
                        } else {
                            out.negatives.push(d.into_values());
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(merge(parts))
}

fn shog_at(
    field: &GradientField,
    c: (f64, f64),
    boundary: &LinearModel,
    geom: &RayGeometry,
    scheme: SplitScheme,
) -> Result<Vec<f64>> {
    let radii = segment(field, c, boundary, geom, scheme)?;
    Ok(shog(field, c, &radii)?.into_values())
}

pub fn classify_samples(
    set: &[AnnotatedImage],
    cfg: &SampleConfig,
    boundary: &LinearModel,
    geom: &RayGeometry,
    scheme: SplitScheme,
) -> Result<SampleSet> {
    boundary.expect_stage(Stage::Boundary)?;
    let parts: Vec<SampleSet> = set
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let field = gradient_field(&a.image)?;
            Ok(SampleSet {
                positives: positive_centers(a, cfg.classify_jitter)
                    .into_iter()
                    .map(|c| shog_at(&field, c, boundary, geom, scheme))
                    .collect::<Result<_>>()?,
                negatives: negative_centers(a, cfg, i)
                    .into_iter()
                    .map(|c| shog_at(&field, c, boundary, geom, scheme))
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(merge(parts))
}

/// Models for all three stages trained on one annotated set.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub prescreen: LinearModel,
    pub boundary: LinearModel,
    pub classify: LinearModel,
}

pub fn train_all(
    set: &[AnnotatedImage],
    samples: &SampleConfig,
    train_cfg: &TrainConfig,
    geom: &RayGeometry,
    scheme: SplitScheme,
) -> Result<TrainedModels> {
    let prescreen = prescreen_samples(set, samples)?.train(Stage::Prescreen, train_cfg)?;
    let boundary = boundary_samples(set, geom)?.train(Stage::Boundary, train_cfg)?;
    let classify = classify_samples(set, samples, &boundary, geom, scheme)?
        .train(Stage::Classify, train_cfg)?;
    Ok(TrainedModels {
        prescreen,
        boundary,
        classify,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_phantom, PhantomSpec};

    fn phantom(seed: u64) -> AnnotatedImage {
        AnnotatedImage::from_phantom(
            &generate_phantom(&PhantomSpec {
                width: 500,
                height: 500,
                objects: 1,
                seed,
                ..PhantomSpec::default()
            })
            .unwrap(),
        )
    }

    #[test]
    fn nearest_position_bounds() {
        let g = RayGeometry::default();
        assert_eq!(nearest_position(&g, 17.0), Some(1));
        assert_eq!(nearest_position(&g, 50.0), Some(12));
        assert_eq!(nearest_position(&g, 80.0), Some(22));
        assert_eq!(nearest_position(&g, 90.0), Some(22));
        assert_eq!(nearest_position(&g, 96.0), None);
        assert_eq!(nearest_position(&g, 5.0), Some(1));
        assert_eq!(nearest_position(&g, 1.0), None);
    }

    #[test]
    fn boundary_radius_from_mask() {
        let a = phantom(2);
        let o = &a.objects[0];
        let (w, h) = (a.image.width(), a.image.height());
        let ph_obj = generate_phantom(&PhantomSpec {
            width: 500,
            height: 500,
            objects: 1,
            seed: 2,
            ..PhantomSpec::default()
        })
        .unwrap()
        .objects[0]
            .clone();
        for k in 0..12 {
            let angle = k as f64 * PI / 6.0;
            let got = o.boundary_radius(angle, w, h).unwrap();
            assert!((got - ph_obj.radius_at(angle)).abs() < 1.0, "{got}");
        }
    }

    #[test]
    fn sample_counts() {
        let set = vec![phantom(1), phantom(2)];
        let cfg = SampleConfig::default();
        let pre = prescreen_samples(&set, &cfg).unwrap();
        assert_eq!(pre.positives.len(), 18);
        assert_eq!(pre.negatives.len(), 80);
        assert!(pre.positives.iter().all(|v| v.len() == 512));
        let geom = RayGeometry::default();
        let bnd = boundary_samples(&set, &geom).unwrap();
        assert_eq!(bnd.positives.len() + bnd.negatives.len(), 2 * 36 * 22);
        assert!(bnd.positives.len() <= 72);
        assert!(bnd.positives.iter().all(|v| v.len() == 27));
    }

    #[test]
    fn negatives_avoid_objects() {
        let a = phantom(5);
        let cfg = SampleConfig::default();
        for c in negative_centers(&a, &cfg, 0) {
            for o in &a.objects {
                assert!((o.center[0] - c.0).hypot(o.center[1] - c.1) >= cfg.exclusion);
            }
            assert!(window_fits(&a.image, c));
        }
    }
}
