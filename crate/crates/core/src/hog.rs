//! Gradient fields and the three histogram-of-oriented-gradient descriptors.
//!
//! * [`RhogIntegral`] / [`rhog`]: rectangular grid over a 200x200 window,
//!   8x8 blocks of 25x25 pixels, 8 orientation bins, 512 values.
//! * [`boundary_descriptor`]: a 30x15 window aligned with a ray, three 10x15
//!   blocks stacked along the ray, 9 bins measured relative to the ray,
//!   27 values.
//! * [`shog`]: three radial zones scaled to a contour times eight angular
//!   sectors, 9 bins, 216 values.
//!
//! Orientation is unsigned and hard-binned. Every block is L2-normalised
//! independently.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const ORIENTATION_BINS: usize = 9;

pub const RHOG_WINDOW: usize = 200;
pub const RHOG_CELL: usize = 25;
pub const RHOG_GRID: usize = RHOG_WINDOW / RHOG_CELL;
pub const RHOG_BINS: usize = 8;
pub const RHOG_LEN: usize = RHOG_GRID * RHOG_GRID * RHOG_BINS;

/// Extent of the boundary window along the ray.
pub const BOUNDARY_LENGTH: usize = 30;
/// Extent of the boundary window across the ray.
pub const BOUNDARY_WIDTH: usize = 15;
pub const BOUNDARY_BLOCKS: usize = 3;
pub const BOUNDARY_LEN: usize = BOUNDARY_BLOCKS * ORIENTATION_BINS;

/// Zone limits as fractions of the contour radius: inner, middle, outer.
pub const SHOG_ZONES: [f64; 3] = [0.6, 1.1, 1.4];
pub const SHOG_SECTORS: usize = 8;
pub const SHOG_BLOCKS: usize = SHOG_ZONES.len() * SHOG_SECTORS;
pub const SHOG_LEN: usize = SHOG_BLOCKS * ORIENTATION_BINS;

const NORM_EPS: f64 = 1e-6;

/// Unsigned orientation in degrees, folded into `[0, 180)`.
#[inline]
pub fn fold_orientation(gx: f64, gy: f64) -> f64 {
    let mut deg = gy.atan2(gx).to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if deg >= 180.0 {
        deg -= 180.0;
    }
    deg
}

/// 20-degree bin of a folded orientation.
#[inline]
pub fn orientation_bin(deg: f64) -> usize {
    ((deg / 20.0) as usize).min(ORIENTATION_BINS - 1)
}

#[inline]
fn rhog_bin(deg: f64) -> usize {
    ((deg / (180.0 / RHOG_BINS as f64)) as usize).min(RHOG_BINS - 1)
}

/// Per-pixel central-difference gradients with replicated borders.
#[derive(Debug, Clone)]
pub struct GradientField {
    width: usize,
    height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// Folded orientation in degrees.
    pub orientation: Vec<f64>,
    /// Nine-bin index of `orientation`.
    pub orientation_bin: Vec<u8>,
}

/// Gradient field of `img`; both sides must be at least 3 pixels.
pub fn gradient_field(img: &GrayImage) -> Result<GradientField> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::invalid(format!(
            "gradient needs at least a 3x3 image, got {w}x{h}"
        )));
    }
    let len = w * h;
    let mut field = GradientField {
        width: w,
        height: h,
        gx: Vec::with_capacity(len),
        gy: Vec::with_capacity(len),
        magnitude: Vec::with_capacity(len),
        orientation: Vec::with_capacity(len),
        orientation_bin: Vec::with_capacity(len),
    };
    let px = |x: usize, y: usize| img.get(x, y) as f64;
    for y in 0..h {
        let (up, down) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (left, right) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let gx = (px(right, y) - px(left, y)) / 2.0;
            let gy = (px(x, down) - px(x, up)) / 2.0;
            let deg = fold_orientation(gx, gy);
            field.gx.push(gx);
            field.gy.push(gy);
            field.magnitude.push(gx.hypot(gy));
            field.orientation.push(deg);
            field.orientation_bin.push(orientation_bin(deg) as u8);
        }
    }
    Ok(field)
}

impl GradientField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Bilinear gradient at a sub-pixel position inside the image.
    #[inline]
    fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        let x0 = (x.floor() as usize).min(self.width - 2);
        let y0 = (y.floor() as usize).min(self.height - 2);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let i00 = self.idx(x0, y0);
        let i10 = i00 + 1;
        let i01 = i00 + self.width;
        let i11 = i01 + 1;
        let lerp = |v: &[f64]| {
            let top = v[i00] + (v[i10] - v[i00]) * fx;
            let bottom = v[i01] + (v[i11] - v[i01]) * fx;
            top + (bottom - top) * fy
        };
        (lerp(&self.gx), lerp(&self.gy))
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DescriptorKind {
    Rhog,
    Boundary,
    Shog,
}

impl DescriptorKind {
    pub fn dim(&self) -> usize {
        match self {
            DescriptorKind::Rhog => RHOG_LEN,
            DescriptorKind::Boundary => BOUNDARY_LEN,
            DescriptorKind::Shog => SHOG_LEN,
        }
    }

    /// Values per independently normalised block.
    pub fn block_len(&self) -> usize {
        match self {
            DescriptorKind::Rhog => RHOG_BINS,
            DescriptorKind::Boundary | DescriptorKind::Shog => ORIENTATION_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    kind: DescriptorKind,
    values: Vec<f64>,
}

impl Descriptor {
    pub fn new(kind: DescriptorKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != kind.dim() {
            return Err(Error::DimensionMismatch {
                expected: kind.dim(),
                got: values.len(),
            });
        }
        Ok(Descriptor { kind, values })
    }

    pub fn kind(&self) -> DescriptorKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn blocks(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.kind.block_len())
    }

    /// Flat JSON array.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.values).expect("finite values serialize")
    }
}

fn normalize_blocks(values: &mut [f64], block: usize) {
    for chunk in values.chunks_exact_mut(block) {
        let norm = (chunk.iter().map(|v| v * v).sum::<f64>() + NORM_EPS * NORM_EPS).sqrt();
        for v in chunk {
            *v /= norm;
        }
    }
}

fn check_rhog_window(field: &GradientField, x0: usize, y0: usize) -> Result<()> {
    if x0 + RHOG_WINDOW > field.width || y0 + RHOG_WINDOW > field.height {
        return Err(Error::OutOfBounds {
            x: x0 as f64,
            y: y0 as f64,
            w: RHOG_WINDOW,
            h: RHOG_WINDOW,
            img_w: field.width,
            img_h: field.height,
        });
    }
    Ok(())
}

/// Rectangular HOG of the 200x200 window whose top-left corner is
/// `(x0, y0)`, computed by direct histogramming.
pub fn rhog(field: &GradientField, x0: usize, y0: usize) -> Result<Descriptor> {
    check_rhog_window(field, x0, y0)?;
    let mut values = vec![0.0; RHOG_LEN];
    for dy in 0..RHOG_WINDOW {
        for dx in 0..RHOG_WINDOW {
            let i = field.idx(x0 + dx, y0 + dy);
            let block = (dy / RHOG_CELL) * RHOG_GRID + dx / RHOG_CELL;
            values[block * RHOG_BINS + rhog_bin(field.orientation[i])] += field.magnitude[i];
        }
    }
    normalize_blocks(&mut values, RHOG_BINS);
    Descriptor::new(DescriptorKind::Rhog, values)
}

/// Per-bin summed-area tables for constant-time rectangular HOG windows.
#[derive(Debug, Clone)]
pub struct RhogIntegral {
    width: usize,
    height: usize,
    /// `(height + 1) x (width + 1)` cells, `RHOG_BINS` values each.
    table: Vec<[f64; RHOG_BINS]>,
}

impl RhogIntegral {
    pub fn new(field: &GradientField) -> Self {
        let (w, h) = (field.width, field.height);
        let stride = w + 1;
        let mut table = vec![[0.0; RHOG_BINS]; stride * (h + 1)];
        for y in 0..h {
            let mut row = [0.0; RHOG_BINS];
            for x in 0..w {
                let i = field.idx(x, y);
                row[rhog_bin(field.orientation[i])] += field.magnitude[i];
                let above = table[y * stride + x + 1];
                let cell = &mut table[(y + 1) * stride + x + 1];
                for b in 0..RHOG_BINS {
                    cell[b] = above[b] + row[b];
                }
            }
        }
        RhogIntegral {
            width: w,
            height: h,
            table,
        }
    }

    fn rect(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> [f64; RHOG_BINS] {
        let s = self.width + 1;
        let (a, b, c, d) = (
            self.table[y0 * s + x0],
            self.table[y0 * s + x1],
            self.table[y1 * s + x0],
            self.table[y1 * s + x1],
        );
        std::array::from_fn(|k| d[k] - b[k] - c[k] + a[k])
    }

    pub fn descriptor(&self, x0: usize, y0: usize) -> Result<Descriptor> {
        if x0 + RHOG_WINDOW > self.width || y0 + RHOG_WINDOW > self.height {
            return Err(Error::OutOfBounds {
                x: x0 as f64,
                y: y0 as f64,
                w: RHOG_WINDOW,
                h: RHOG_WINDOW,
                img_w: self.width,
                img_h: self.height,
            });
        }
        let mut values = Vec::with_capacity(RHOG_LEN);
        for by in 0..RHOG_GRID {
            for bx in 0..RHOG_GRID {
                let xa = x0 + bx * RHOG_CELL;
                let ya = y0 + by * RHOG_CELL;
                values.extend(self.rect(xa, ya, xa + RHOG_CELL, ya + RHOG_CELL));
            }
        }
        normalize_blocks(&mut values, RHOG_BINS);
        Descriptor::new(DescriptorKind::Rhog, values)
    }
}

/// Unit vector of a ray at `angle` radians (image coordinates, y down).
#[inline]
pub fn ray_direction(angle: f64) -> (f64, f64) {
    (angle.cos(), angle.sin())
}

/// Boundary descriptor of the 30x15 window centred `radius` pixels from
/// `center` along the ray at `angle`, long side on the ray.
///
/// The window is sampled on a unit grid in ray coordinates with bilinear
/// interpolation of the gradient. Gradients are projected onto the ray
/// frame before binning, so rotating image and ray together leaves the
/// descriptor unchanged. Block 0 faces the centre, block 2 faces outward.
pub fn boundary_descriptor(
    field: &GradientField,
    center: (f64, f64),
    angle: f64,
    radius: f64,
) -> Result<Descriptor> {
    Ok(boundary_descriptors(field, center, angle, &[radius])?
        .pop()
        .expect("one radius in, one descriptor out"))
}

/// Boundary descriptors for several radii on one ray.
///
/// When every radius differs from the first by a whole number of pixels
/// the windows share sample rows, and each row is sampled once.
pub fn boundary_descriptors(
    field: &GradientField,
    center: (f64, f64),
    angle: f64,
    radii: &[f64],
) -> Result<Vec<Descriptor>> {
    let Some(&first) = radii.first() else {
        return Ok(Vec::new());
    };
    let (dx, dy) = ray_direction(angle);
    let (tx, ty) = (-dy, dx);
    let half_len = BOUNDARY_LENGTH as f64 / 2.0 - 0.5;
    let half_wid = (BOUNDARY_WIDTH / 2) as f64;
    for &r in radii {
        check_boundary_window(field, center, (dx, dy), r, half_len, half_wid)?;
    }
    let aligned = radii.iter().all(|r| (r - first).fract() == 0.0);
    if !aligned {
        return radii
            .iter()
            .map(|&r| boundary_descriptor(field, center, angle, r))
            .collect();
    }

    // Row j lies `first - half_len + j` from the centre.
    let offsets: Vec<i64> = radii.iter().map(|r| (r - first) as i64).collect();
    let lo = *offsets.iter().min().expect("non-empty");
    let hi = *offsets.iter().max().expect("non-empty") + BOUNDARY_LENGTH as i64;
    let rows: Vec<[(u8, f64); BOUNDARY_WIDTH]> = (lo..hi)
        .map(|j| {
            let along_ray = first - half_len + j as f64;
            let (rx, ry) = (center.0 + along_ray * dx, center.1 + along_ray * dy);
            std::array::from_fn(|k| {
                let v = k as f64 - half_wid;
                let (gx, gy) = field.sample(rx + v * tx, ry + v * ty);
                let along = gx * dx + gy * dy;
                let across = gx * tx + gy * ty;
                let mag = along.hypot(across);
                let bin = if mag > 0.0 {
                    orientation_bin(fold_orientation(along, across)) as u8
                } else {
                    0
                };
                (bin, mag)
            })
        })
        .collect();

    let rows_per_block = BOUNDARY_LENGTH / BOUNDARY_BLOCKS;
    offsets
        .iter()
        .map(|&off| {
            let mut values = vec![0.0; BOUNDARY_LEN];
            let base = (off - lo) as usize;
            for k in 0..BOUNDARY_LENGTH {
                let block = k / rows_per_block;
                for &(bin, mag) in &rows[base + k] {
                    values[block * ORIENTATION_BINS + bin as usize] += mag;
                }
            }
            normalize_blocks(&mut values, ORIENTATION_BINS);
            Descriptor::new(DescriptorKind::Boundary, values)
        })
        .collect()
}

fn check_boundary_window(
    field: &GradientField,
    center: (f64, f64),
    (dx, dy): (f64, f64),
    radius: f64,
    half_len: f64,
    half_wid: f64,
) -> Result<()> {
    let (tx, ty) = (-dy, dx);
    let sx = center.0 + radius * dx;
    let sy = center.1 + radius * dy;
    for (u, v) in [
        (-half_len, -half_wid),
        (-half_len, half_wid),
        (half_len, -half_wid),
        (half_len, half_wid),
    ] {
        let (x, y) = (sx + u * dx + v * tx, sy + u * dy + v * ty);
        if !field.contains(x, y) {
            return Err(Error::OutOfBounds {
                x: sx,
                y: sy,
                w: BOUNDARY_LENGTH,
                h: BOUNDARY_WIDTH,
                img_w: field.width,
                img_h: field.height,
            });
        }
    }
    Ok(())
}

fn check_polygon(radii: &[f64]) -> Result<()> {
    if radii.len() < 3 {
        return Err(Error::invalid(format!(
            "contour needs at least 3 radii, got {}",
            radii.len()
        )));
    }
    if let Some(r) = radii.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Error::invalid(format!("degenerate contour radius {r}")));
    }
    Ok(())
}

/// Contour radius in direction `phi` (radians in `[0, 2pi)`), linearly
/// interpolated between the two neighbouring rays. Ray `i` points at
/// `2 pi i / m`.
#[inline]
pub fn contour_radius(radii: &[f64], phi: f64) -> f64 {
    let m = radii.len();
    let step = 2.0 * PI / m as f64;
    let pos = phi / step;
    let k = (pos.floor() as usize).min(m - 1);
    let f = pos - k as f64;
    radii[k] * (1.0 - f) + radii[(k + 1) % m] * f
}

/// Block of the pixel at `(x, y)` relative to a contour, if it lies inside
/// the outer zone. Blocks are numbered zone-major, sector-minor.
#[inline]
pub fn shog_block(center: (f64, f64), radii: &[f64], x: f64, y: f64) -> Option<usize> {
    let (dx, dy) = (x - center.0, y - center.1);
    let rho = dx.hypot(dy);
    let mut phi = dy.atan2(dx);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    if phi >= 2.0 * PI {
        phi -= 2.0 * PI;
    }
    let r = contour_radius(radii, phi);
    let zone = SHOG_ZONES.iter().position(|&f| rho < f * r)?;
    let sector = ((phi / (2.0 * PI / SHOG_SECTORS as f64)) as usize).min(SHOG_SECTORS - 1);
    Some(zone * SHOG_SECTORS + sector)
}

/// Raw magnitude-weighted histograms of the 24 blocks, before
/// normalisation. Pixels outside the image are skipped.
pub fn shog_histogram(
    field: &GradientField,
    center: (f64, f64),
    radii: &[f64],
) -> Result<Vec<[f64; ORIENTATION_BINS]>> {
    check_polygon(radii)?;
    let reach = SHOG_ZONES[2] * radii.iter().cloned().fold(0.0, f64::max);
    let clip = |v: f64, hi: usize| v.clamp(0.0, (hi - 1) as f64) as usize;
    let (x0, x1) = (
        clip((center.0 - reach).floor(), field.width),
        clip((center.0 + reach).ceil(), field.width),
    );
    let (y0, y1) = (
        clip((center.1 - reach).floor(), field.height),
        clip((center.1 + reach).ceil(), field.height),
    );

    let mut hist = vec![[0.0; ORIENTATION_BINS]; SHOG_BLOCKS];
    for y in y0..=y1 {
        for x in x0..=x1 {
            if let Some(b) = shog_block(center, radii, x as f64, y as f64) {
                let i = field.idx(x, y);
                hist[b][field.orientation_bin[i] as usize] += field.magnitude[i];
            }
        }
    }
    Ok(hist)
}

/// Segmental HOG of the candidate at `center` with contour `radii`.
pub fn shog(field: &GradientField, center: (f64, f64), radii: &[f64]) -> Result<Descriptor> {
    let mut values: Vec<f64> = shog_histogram(field, center, radii)?
        .into_iter()
        .flatten()
        .collect();
    normalize_blocks(&mut values, ORIENTATION_BINS);
    Descriptor::new(DescriptorKind::Shog, values)
}
