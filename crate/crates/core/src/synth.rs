//! Synthetic phantoms: textured discs with exact masks, vessel-like
//! distractors and Gaussian noise.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Minimum centre-to-centre distance between objects.
pub const MIN_SEPARATION: f64 = 220.0;
/// Minimum distance from an object centre to the image border.
pub const MIN_MARGIN: f64 = 110.0;

const BACKGROUND: f64 = 190.0;
const OBJECT_BASE: f64 = 150.0;
const CAPSULE_LEVEL: f64 = 228.0;
const CAPSULE_WIDTH: f64 = 4.0;
const NUCLEUS_DEPTH: f64 = 45.0;
const PLACEMENT_ATTEMPTS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub objects: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub capsule_probability: f64,
    pub distractors: usize,
    /// Per-object intensity offset is drawn from `[-offset_range, offset_range]`.
    pub offset_range: f64,
    pub noise_sigma: f64,
    /// Upper bound on the relative radial perturbation.
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            width: 800,
            height: 800,
            objects: 3,
            radius_min: 25.0,
            radius_max: 90.0,
            capsule_probability: 0.5,
            distractors: 2,
            offset_range: 20.0,
            noise_sigma: 6.0,
            perturbation: 0.1,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let limit = self.width.min(self.height) as f64 / 4.0;
        if !(1.0 <= self.radius_min
            && self.radius_min <= self.radius_max
            && self.radius_max <= limit)
        {
            return Err(Error::invalid(format!(
                "radius range [{}, {}] must lie within [1, {limit}]",
                self.radius_min, self.radius_max
            )));
        }
        if !(0.0..=1.0).contains(&self.capsule_probability) {
            return Err(Error::invalid("capsule probability must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.perturbation) {
            return Err(Error::invalid("perturbation must lie in [0, 1)"));
        }
        let nonneg = [self.offset_range, self.noise_sigma];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(
                "offset range and noise sigma must be non-negative",
            ));
        }
        if (self.width as f64) <= 2.0 * MIN_MARGIN || (self.height as f64) <= 2.0 * MIN_MARGIN {
            return Err(Error::invalid(format!(
                "image must exceed {} px per side",
                2.0 * MIN_MARGIN
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub k: u32,
    pub amplitude: f64,
    pub phase: f64,
}

/// A perturbed disc `r(phi) = radius * (1 + sum_k a_k cos(k phi + psi_k))`,
/// with `phi` measured from +x towards +y (image coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomObject {
    pub center: [f64; 2],
    pub radius: f64,
    pub harmonics: Vec<Harmonic>,
    pub capsule: bool,
    pub offset: f64,
}

impl PhantomObject {
    pub fn radius_at(&self, phi: f64) -> f64 {
        let s: f64 = self
            .harmonics
            .iter()
            .map(|h| h.amplitude * (h.k as f64 * phi + h.phase).cos())
            .sum();
        self.radius * (1.0 + s)
    }

    pub fn max_radius(&self) -> f64 {
        self.radius
            * (1.0
                + self
                    .harmonics
                    .iter()
                    .map(|h| h.amplitude.abs())
                    .sum::<f64>())
    }

    /// Whether the pixel centre `(x, y)` lies inside the object.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let rho = dx.hypot(dy);
        rho < self.radius_at(dy.atan2(dx))
    }

    fn signed_gap(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        dx.hypot(dy) - self.radius_at(dy.atan2(dx))
    }
}

/// Elongated tube: dark wall around a bright lumen along segment `a`-`b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vessel {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub half_width: f64,
}

impl Vessel {
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        segment_distance(self.a, self.b, [x, y])
    }

    pub fn midpoint(&self) -> [f64; 2] {
        [(self.a[0] + self.b[0]) / 2.0, (self.a[1] + self.b[1]) / 2.0]
    }
}

fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let (vx, vy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * vx + (p[1] - a[1]) * vy) / len2).clamp(0.0, 1.0)
    };
    (p[0] - a[0] - t * vx).hypot(p[1] - a[1] - t * vy)
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub image: GrayImage,
    /// Pixel value `k + 1` marks object `k`; 0 is background.
    pub labels: GrayImage,
    pub objects: Vec<PhantomObject>,
    pub vessels: Vec<Vessel>,
}

impl Phantom {
    pub fn centers(&self) -> Vec<[f64; 2]> {
        self.objects.iter().map(|o| o.center).collect()
    }

    /// Binary mask of object `k`, row-major.
    pub fn mask(&self, k: usize) -> Vec<bool> {
        let label = (k + 1) as u8;
        self.labels.data().iter().map(|&v| v == label).collect()
    }

    pub fn truth(&self, labels_path: Option<String>) -> Truth {
        Truth {
            centers: self.centers(),
            masks: labels_path.map(|p| vec![p]),
            radii: Some(self.objects.iter().map(|o| o.radius).collect()),
            distractors: self.vessels.clone(),
        }
    }
}

/// Ground truth. `masks` holds either one label image (value `k + 1` marks
/// centre `k`) or one binary mask per centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub centers: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub distractors: Vec<Vessel>,
}

impl Truth {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let t: Truth = serde_json::from_str(s)?;
        if t.centers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("truth centres must be finite"));
        }
        if let Some(m) = &t.masks {
            if m.len() != 1 && m.len() != t.centers.len() {
                return Err(Error::invalid(format!(
                    "truth lists {} masks for {} centres",
                    m.len(),
                    t.centers.len()
                )));
            }
        }
        if let Some(r) = &t.radii {
            if r.len() != t.centers.len() {
                return Err(Error::invalid("truth radii and centres differ in length"));
            }
        }
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("truth serializes")
    }

    /// Resolves mask paths relative to `base` and returns one binary mask
    /// per centre.
    pub fn load_masks(&self, base: &Path) -> Result<Option<Vec<GrayImage>>> {
        let Some(paths) = &self.masks else {
            return Ok(None);
        };
        let images = paths
            .iter()
            .map(|p| GrayImage::load(base.join(p)))
            .collect::<Result<Vec<_>>>()?;
        if images.len() == 1 && self.centers.len() != 1 {
            let labels = &images[0];
            return Ok(Some(
                (0..self.centers.len())
                    .map(|k| binary_from_label(labels, (k + 1) as u8))
                    .collect(),
            ));
        }
        if images.len() == 1 && self.centers.len() == 1 {
            // A single label image and a single binary mask coincide once
            // every non-zero value counts as foreground.
            return Ok(Some(vec![binary_nonzero(&images[0])]));
        }
        Ok(Some(images.iter().map(binary_nonzero).collect()))
    }
}

fn binary_from_label(labels: &GrayImage, label: u8) -> GrayImage {
    let data = labels
        .data()
        .iter()
        .map(|&v| if v == label { 255 } else { 0 })
        .collect();
    GrayImage::new(labels.width(), labels.height(), data).expect("same shape")
}

fn binary_nonzero(img: &GrayImage) -> GrayImage {
    let data = img
        .data()
        .iter()
        .map(|&v| if v != 0 { 255 } else { 0 })
        .collect();
    GrayImage::new(img.width(), img.height(), data).expect("same shape")
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let objects = place_objects(spec, &mut rng)?;
    let vessels = place_vessels(spec, &objects, &mut rng)?;
    let (w, h) = (spec.width, spec.height);

    let mut canvas = vec![BACKGROUND; w * h];
    // Sparse background texture.
    let bg_dots = w * h / 900;
    for _ in 0..bg_dots {
        let (x, y) = (
            rng.random_range(0.0..w as f64),
            rng.random_range(0.0..h as f64),
        );
        let r = rng.random_range(1.5..3.0);
        let depth = rng.random_range(10.0..25.0);
        paint_disc(&mut canvas, w, h, x, y, r, |v, _, _| v - depth);
    }

    for vessel in &vessels {
        let pad = vessel.half_width + 1.0;
        let (x0, x1) = (
            vessel.a[0].min(vessel.b[0]) - pad,
            vessel.a[0].max(vessel.b[0]) + pad,
        );
        let (y0, y1) = (
            vessel.a[1].min(vessel.b[1]) - pad,
            vessel.a[1].max(vessel.b[1]) + pad,
        );
        let lumen = vessel.half_width * 0.55;
        for_each_pixel(w, h, x0, y0, x1, y1, |x, y| {
            let d = vessel.distance(x as f64, y as f64);
            if d < lumen {
                canvas[y * w + x] = 222.0;
            } else if d < vessel.half_width {
                canvas[y * w + x] = 115.0;
            }
        });
    }

    let mut labels = vec![0u8; w * h];
    for (k, obj) in objects.iter().enumerate() {
        let reach = obj.max_radius() + CAPSULE_WIDTH + 1.0;
        let (cx, cy) = (obj.center[0], obj.center[1]);
        let level = OBJECT_BASE + obj.offset;
        for_each_pixel(
            w,
            h,
            cx - reach,
            cy - reach,
            cx + reach,
            cy + reach,
            |x, y| {
                let gap = obj.signed_gap(x as f64, y as f64);
                if gap < 0.0 {
                    canvas[y * w + x] = level;
                    labels[y * w + x] = (k + 1) as u8;
                } else if obj.capsule && gap < CAPSULE_WIDTH {
                    canvas[y * w + x] = CAPSULE_LEVEL;
                }
            },
        );
        // Dense nuclei, clipped to the mask.
        let area = std::f64::consts::PI * obj.radius * obj.radius;
        let count = (area / 45.0) as usize;
        for _ in 0..count {
            let rho = obj.radius * rng.random_range(0.0f64..1.0).sqrt();
            let phi = rng.random_range(0.0..TAU);
            let (x, y) = (cx + rho * phi.cos(), cy + rho * phi.sin());
            let r = rng.random_range(1.8..3.2);
            let depth = rng.random_range(0.6..1.0) * NUCLEUS_DEPTH;
            let label = (k + 1) as u8;
            paint_disc(&mut canvas, w, h, x, y, r, |v, px, py| {
                if labels[py * w + px] == label {
                    v - depth
                } else {
                    v
                }
            });
        }
    }

    let data = if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
        canvas
            .iter()
            .map(|&v| (v + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8)
            .collect()
    } else {
        canvas
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    };

    Ok(Phantom {
        image: GrayImage::new(w, h, data)?,
        labels: GrayImage::new(w, h, labels)?,
        objects,
        vessels,
    })
}

fn for_each_pixel(
    w: usize,
    h: usize,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    mut f: impl FnMut(usize, usize),
) {
    let xa = x0.floor().max(0.0) as usize;
    let ya = y0.floor().max(0.0) as usize;
    let xb = (x1.ceil().max(0.0) as usize).min(w.saturating_sub(1));
    let yb = (y1.ceil().max(0.0) as usize).min(h.saturating_sub(1));
    for y in ya..=yb {
        for x in xa..=xb {
            f(x, y);
        }
    }
}

fn paint_disc(
    canvas: &mut [f64],
    w: usize,
    h: usize,
    cx: f64,
    cy: f64,
    r: f64,
    mut f: impl FnMut(f64, usize, usize) -> f64,
) {
    let mut hits = Vec::new();
    for_each_pixel(w, h, cx - r, cy - r, cx + r, cy + r, |x, y| {
        if (x as f64 - cx).hypot(y as f64 - cy) < r {
            hits.push((x, y));
        }
    });
    for (x, y) in hits {
        canvas[y * w + x] = f(canvas[y * w + x], x, y);
    }
}

fn place_objects(spec: &PhantomSpec, rng: &mut ChaCha8Rng) -> Result<Vec<PhantomObject>> {
    let mut objects: Vec<PhantomObject> = Vec::with_capacity(spec.objects);
    let mut attempts = 0;
    while objects.len() < spec.objects {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS {
            return Err(Error::Placement {
                requested: spec.objects,
                placed: objects.len(),
            });
        }
        let cx = rng.random_range(MIN_MARGIN..spec.width as f64 - MIN_MARGIN);
        let cy = rng.random_range(MIN_MARGIN..spec.height as f64 - MIN_MARGIN);
        if objects
            .iter()
            .any(|o| (o.center[0] - cx).hypot(o.center[1] - cy) < MIN_SEPARATION)
        {
            continue;
        }
        let radius = if spec.radius_max > spec.radius_min {
            rng.random_range(spec.radius_min..=spec.radius_max)
        } else {
            spec.radius_min
        };
        let budget = if spec.perturbation > 0.0 {
            rng.random_range(0.0..=spec.perturbation)
        } else {
            0.0
        };
        let weights: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let total: f64 = weights.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        let harmonics = if budget > 0.0 {
            (2..=4)
                .zip(weights)
                .map(|(k, wk)| Harmonic {
                    k,
                    amplitude: budget * wk / total,
                    phase: rng.random_range(0.0..TAU),
                })
                .collect()
        } else {
            Vec::new()
        };
        let capsule = rng.random_bool(spec.capsule_probability);
        let offset = if spec.offset_range > 0.0 {
            rng.random_range(-spec.offset_range..=spec.offset_range)
        } else {
            0.0
        };
        objects.push(PhantomObject {
            center: [cx, cy],
            radius,
            harmonics,
            capsule,
            offset,
        });
    }
    Ok(objects)
}

fn place_vessels(
    spec: &PhantomSpec,
    objects: &[PhantomObject],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vessel>> {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let mut vessels = Vec::with_capacity(spec.distractors);
    let mut attempts = 0;
    while vessels.len() < spec.distractors {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS {
            return Err(Error::Placement {
                requested: spec.distractors,
                placed: vessels.len(),
            });
        }
        let len = rng.random_range(120.0..260.0);
        let half_width = rng.random_range(7.0..14.0);
        let angle = rng.random_range(0.0..TAU);
        let mx = rng.random_range(MIN_MARGIN..w - MIN_MARGIN);
        let my = rng.random_range(MIN_MARGIN..h - MIN_MARGIN);
        let (dx, dy) = (0.5 * len * angle.cos(), 0.5 * len * angle.sin());
        let v = Vessel {
            a: [mx - dx, my - dy],
            b: [mx + dx, my + dy],
            half_width,
        };
        let inside = |p: [f64; 2]| p[0] >= 0.0 && p[1] >= 0.0 && p[0] < w && p[1] < h;
        if !inside(v.a) || !inside(v.b) {
            continue;
        }
        // Clear of every object including its capsule.
        let clear = objects.iter().all(|o| {
            v.distance(o.center[0], o.center[1]) > o.max_radius() + CAPSULE_WIDTH + half_width + 8.0
        });
        if clear {
            vessels.push(v);
        }
    }
    Ok(vessels)
}

/// One phantom of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub seed: u64,
    pub image: String,
    pub truth: String,
}

/// Lists every phantom of a corpus; paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: PhantomSpec,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(s)?;
        m.spec.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Per-phantom seed inside a corpus.
pub fn corpus_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

pub fn generate_corpus(spec: &PhantomSpec, count: usize) -> Result<Vec<Phantom>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            generate_phantom(&PhantomSpec {
                seed: corpus_seed(spec.seed, i),
                ..spec.clone()
            })
        })
        .collect()
}

/// Writes `count` phantoms (image, label mask, truth) and `manifest.json`
/// into `dir`. Returns the manifest path.
pub fn write_corpus(spec: &PhantomSpec, count: usize, dir: &Path) -> Result<PathBuf> {
    spec.validate()?;
    let phantoms = generate_corpus(spec, count)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(count);
    for (i, ph) in phantoms.iter().enumerate() {
        let stem = format!("phantom_{i:04}");
        let image = format!("{stem}.pgm");
        let labels = format!("{stem}_labels.pgm");
        let truth = format!("{stem}.truth.json");
        ph.image.save(dir.join(&image))?;
        ph.labels.save(dir.join(&labels))?;
        let truth_path = dir.join(&truth);
        std::fs::write(&truth_path, ph.truth(Some(labels)).to_json_string())
            .map_err(|e| Error::io(&truth_path, e))?;
        entries.push(ManifestEntry {
            seed: corpus_seed(spec.seed, i),
            image,
            truth,
        });
    }
    let manifest = Manifest {
        spec: spec.clone(),
        entries,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, manifest.to_json_string()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Loads every (image, truth) pair listed by a manifest.
pub fn load_corpus(manifest_path: &Path) -> Result<Vec<(GrayImage, Truth)>> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    manifest
        .entries
        .par_iter()
        .map(|e| {
            Ok((
                GrayImage::load(base.join(&e.image))?,
                Truth::load(base.join(&e.truth))?,
            ))
        })
        .collect()
}
