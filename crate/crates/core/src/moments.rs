//! Rasters and central shape-color moments.
//!
//! Pixel `(i, j)` (column `i`, row `j`) covers the unit square whose center
//! is `(i + 0.5, j + 0.5)`. Moments are Riemann sums with unit pixel area,
//! taken over the raster's domain: the full frame, or the pixels selected by
//! an optional mask.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An RGB image with channels in `[0, 1]` and an optional domain mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
    mask: Option<Vec<bool>>,
}

impl Raster {
    /// Builds a raster from row-major pixels. Channel values are clamped
    /// into `[0, 1]`; NaN becomes 0.
    pub fn new(width: usize, height: usize, mut pixels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("raster dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::contract(format!(
                "expected {} pixels for {}x{}, got {}",
                width * height,
                width,
                height,
                pixels.len()
            )));
        }
        for px in &mut pixels {
            for c in px.iter_mut() {
                *c = if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) };
            }
        }
        Ok(Raster {
            width,
            height,
            pixels,
            mask: None,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Raster::new(width, height, pixels)
    }

    /// A single-color raster.
    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Result<Self> {
        Raster::new(width, height, vec![color; width * height])
    }

    /// A raster of independent uniform channel values drawn from `seed`.
    pub fn random(width: usize, height: usize, seed: u64) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pixels = (0..width * height).map(|_| [(); 3].map(|_| rng.gen::<f64>())).collect();
        Raster::new(width, height, pixels)
    }

    /// Attaches a domain mask. An all-true mask is stored as "no mask".
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.pixels.len() {
            return Err(Error::contract("mask length differs from pixel count"));
        }
        self.mask = if mask.iter().all(|&m| m) { None } else { Some(mask) };
        Ok(self)
    }

    /// Restricts the domain to pixels that are not exactly black, in
    /// addition to any existing mask.
    pub fn mask_black(mut self) -> Self {
        let mask: Vec<bool> = self
            .pixels
            .iter()
            .enumerate()
            .map(|(i, px)| self.in_domain_index(i) && px.iter().any(|&c| c != 0.0))
            .collect();
        self.mask = if mask.iter().all(|&m| m) { None } else { Some(mask) };
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn in_domain(&self, x: usize, y: usize) -> bool {
        self.in_domain_index(y * self.width + x)
    }

    fn in_domain_index(&self, idx: usize) -> bool {
        self.mask.as_ref().map_or(true, |m| m[idx])
    }

    /// Number of pixels in the domain.
    pub fn domain_size(&self) -> usize {
        self.mask
            .as_ref()
            .map_or(self.pixels.len(), |m| m.iter().filter(|&&b| b).count())
    }

    /// Maps the pixel grid to 8-bit RGB, rounding to nearest.
    pub fn to_rgb8(&self) -> image::RgbImage {
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for (i, px) in img.pixels_mut().enumerate() {
            let c = self.pixels[i];
            *px = image::Rgb([to_u8(c[0]), to_u8(c[1]), to_u8(c[2])]);
        }
        img
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(source) => Error::Io {
                    path: path.to_path_buf(),
                    source,
                },
                other => Error::Format {
                    path: path.to_path_buf(),
                    message: other.to_string(),
                },
            })
    }
}

fn to_u8(c: f64) -> u8 {
    (c * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Loads a PNG or binary PPM file. 8-bit samples map to `v / 255`, 16-bit
/// samples to `v / 65535`. Alpha is discarded.
pub fn load_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let fmt_err = |e: image::ImageError| match e {
        image::ImageError::IoError(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    };
    let reader = image::ImageReader::open(path)
        .map_err(io_err)?
        .with_guessed_format()
        .map_err(io_err)?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Pnm) => {}
        Some(other) => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("{other:?} is not supported (PNG or binary PPM only)"),
            })
        }
        None => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: "unrecognized image format".to_string(),
            })
        }
    }
    let img = reader.decode().map_err(fmt_err)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<[f64; 3]> = match img {
        image::DynamicImage::ImageRgb16(_)
        | image::DynamicImage::ImageRgba16(_)
        | image::DynamicImage::ImageLuma16(_)
        | image::DynamicImage::ImageLumaA16(_) => img
            .to_rgb16()
            .pixels()
            .map(|p| p.0.map(|v| v as f64 / 65535.0))
            .collect(),
        _ => img.to_rgb8().pixels().map(|p| p.0.map(|v| v as f64 / 255.0)).collect(),
    };
    Raster::new(w, h, pixels)
}

/// Exponent tuple `(p, q, a, b, g)` of a shape-color moment: `x^p y^q` for
/// the shape part and `R^a G^b B^g` for the color part. Ordered
/// lexicographically on the tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MomentKey {
    pub p: u8,
    pub q: u8,
    pub a: u8,
    pub b: u8,
    pub g: u8,
}

impl MomentKey {
    pub const AREA: MomentKey = MomentKey::new(0, 0, 0, 0, 0);

    pub const fn new(p: u8, q: u8, a: u8, b: u8, g: u8) -> Self {
        MomentKey { p, q, a, b, g }
    }

    pub fn from_array(e: [u8; 5]) -> Self {
        MomentKey::new(e[0], e[1], e[2], e[3], e[4])
    }

    pub fn to_array(self) -> [u8; 5] {
        [self.p, self.q, self.a, self.b, self.g]
    }

    pub fn shape_order(self) -> u32 {
        self.p as u32 + self.q as u32
    }

    pub fn color_order(self) -> u32 {
        self.a as u32 + self.b as u32 + self.g as u32
    }

    pub fn order(self) -> u32 {
        self.shape_order() + self.color_order()
    }

    /// Central moments of total order one vanish by construction.
    pub fn is_first_order(self) -> bool {
        self.order() == 1
    }

    /// Compact label, e.g. `scU20110`.
    pub fn label(self) -> String {
        format!("scU{}{}{}{}{}", self.p, self.q, self.a, self.b, self.g)
    }
}

impl fmt::Display for MomentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{},{}", self.p, self.q, self.a, self.b, self.g)
    }
}

impl FromStr for MomentKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 5 {
            return Err(Error::Parse {
                pos: 0,
                message: format!("moment key `{s}` needs five comma-separated exponents"),
            });
        }
        let mut e = [0u8; 5];
        for (slot, part) in e.iter_mut().zip(&parts) {
            *slot = part.parse().map_err(|_| Error::Parse {
                pos: 0,
                message: format!("bad exponent `{part}` in moment key `{s}`"),
            })?;
        }
        Ok(MomentKey::from_array(e))
    }
}

impl Serialize for MomentKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for MomentKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Upper bounds on shape order `p + q` and color order `a + b + g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Orders {
    pub shape: u8,
    pub color: u8,
}

impl Default for Orders {
    /// `(4, 2)`: the bounds needed by the 24-entry catalog.
    fn default() -> Self {
        Orders { shape: 4, color: 2 }
    }
}

impl Orders {
    pub fn new(shape: u8, color: u8) -> Self {
        Orders { shape, color }
    }

    pub fn contains(&self, key: MomentKey) -> bool {
        key.shape_order() <= self.shape as u32 && key.color_order() <= self.color as u32
    }

    /// All keys within the bounds, in ascending key order.
    pub fn keys(&self) -> Vec<MomentKey> {
        let mut keys = Vec::new();
        for p in 0..=self.shape {
            for q in 0..=(self.shape - p) {
                for a in 0..=self.color {
                    for b in 0..=(self.color - a) {
                        for g in 0..=(self.color - a - b) {
                            keys.push(MomentKey::new(p, q, a, b, g));
                        }
                    }
                }
            }
        }
        keys.sort();
        keys
    }
}

/// Central shape-color moments of one raster.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    pub orders: Orders,
    pub entries: BTreeMap<MomentKey, f64>,
    pub centroid: [f64; 2],
    pub color_means: [f64; 3],
    pub area: f64,
}

impl MomentTable {
    pub fn get(&self, key: MomentKey) -> Result<f64> {
        self.entries
            .get(&key)
            .copied()
            .ok_or_else(|| Error::contract(format!("moment table lacks key {key}")))
    }

    /// Checks that every key within `orders` is present.
    pub fn ensure_complete(&self) -> Result<()> {
        for key in self.orders.keys() {
            if !self.entries.contains_key(&key) {
                return Err(Error::contract(format!("moment table lacks key {key}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<serde_json::Value> = self
            .entries
            .iter()
            .map(|(k, v)| serde_json::json!({"key": k.to_string(), "value": *v}))
            .collect();
        serde_json::json!({
            "orders": [self.orders.shape, self.orders.color],
            "centroid": self.centroid,
            "color_means": self.color_means,
            "area": self.area,
            "entries": entries,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Entry {
            key: MomentKey,
            value: f64,
        }
        #[derive(Deserialize)]
        struct Raw {
            orders: [u8; 2],
            centroid: [f64; 2],
            color_means: [f64; 3],
            area: f64,
            entries: Vec<Entry>,
        }
        let raw: Raw = serde_json::from_value(value.clone())?;
        Ok(MomentTable {
            orders: Orders::new(raw.orders[0], raw.orders[1]),
            entries: raw.entries.into_iter().map(|e| (e.key, e.value)).collect(),
            centroid: raw.centroid,
            color_means: raw.color_means,
            area: raw.area,
        })
    }
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Pairwise reduction of equally sized partial-sum vectors. The tree shape
/// depends only on the number of parts, so the result is deterministic.
fn pairwise_reduce(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// Central shape-color moments for every key with `p + q <= orders.shape`
/// and `a + b + g <= orders.color`, summed over the raster's domain.
pub fn central_moments(r: &Raster, orders: Orders) -> Result<MomentTable> {
    let count = r.domain_size();
    if count == 0 {
        return Err(Error::domain("raster domain is empty"));
    }

    // First pass: area, centroid and channel means.
    let firsts: Vec<Vec<f64>> = (0..r.height)
        .into_par_iter()
        .map(|y| {
            let mut acc = [CompensatedSum::default(); 5];
            for x in 0..r.width {
                if !r.in_domain(x, y) {
                    continue;
                }
                let px = r.pixel(x, y);
                acc[0].add(x as f64 + 0.5);
                acc[1].add(y as f64 + 0.5);
                for c in 0..3 {
                    acc[2 + c].add(px[c]);
                }
            }
            acc.iter().map(CompensatedSum::value).collect()
        })
        .collect();
    let first = pairwise_reduce(firsts);
    let area = count as f64;
    let centroid = [first[0] / area, first[1] / area];
    let color_means = [first[2] / area, first[3] / area, first[4] / area];

    let keys = orders.keys();
    let s = orders.shape as usize;
    let c = orders.color as usize;
    let rows: Vec<Vec<f64>> = (0..r.height)
        .into_par_iter()
        .map(|y| {
            let mut acc = vec![CompensatedSum::default(); keys.len()];
            let mut pows = [
                vec![1.0; s + 1],
                vec![1.0; s + 1],
                vec![1.0; c + 1],
                vec![1.0; c + 1],
                vec![1.0; c + 1],
            ];
            let dy = y as f64 + 0.5 - centroid[1];
            for x in 0..r.width {
                if !r.in_domain(x, y) {
                    continue;
                }
                let px = r.pixel(x, y);
                let base = [
                    x as f64 + 0.5 - centroid[0],
                    dy,
                    px[0] - color_means[0],
                    px[1] - color_means[1],
                    px[2] - color_means[2],
                ];
                for (pw, &b) in pows.iter_mut().zip(&base) {
                    for k in 1..pw.len() {
                        pw[k] = pw[k - 1] * b;
                    }
                }
                for (slot, key) in acc.iter_mut().zip(&keys) {
                    slot.add(
                        pows[0][key.p as usize]
                            * pows[1][key.q as usize]
                            * pows[2][key.a as usize]
                            * pows[3][key.b as usize]
                            * pows[4][key.g as usize],
                    );
                }
            }
            acc.iter().map(CompensatedSum::value).collect()
        })
        .collect();
    let sums = pairwise_reduce(rows);

    Ok(MomentTable {
        orders,
        entries: keys.into_iter().zip(sums).collect(),
        centroid,
        color_means,
        area,
    })
}

/// Central moments of a finite set of unit-weight samples `[x, y, R, G, B]`.
/// The area entry is the sample count.
pub fn point_moments(samples: &[[f64; 5]], orders: Orders) -> Result<MomentTable> {
    if samples.is_empty() {
        return Err(Error::domain("no samples"));
    }
    let n = samples.len() as f64;
    let mut mean = [0.0; 5];
    for (m, d) in mean.iter_mut().enumerate() {
        let mut acc = CompensatedSum::default();
        samples.iter().for_each(|s| acc.add(s[m]));
        *d = acc.value() / n;
    }
    let keys = orders.keys();
    let mut acc = vec![CompensatedSum::default(); keys.len()];
    for s in samples {
        let d: Vec<f64> = s.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for (slot, key) in acc.iter_mut().zip(&keys) {
            let e = key.to_array();
            slot.add((0..5).map(|i| d[i].powi(e[i] as i32)).product());
        }
    }
    Ok(MomentTable {
        orders,
        entries: keys.into_iter().zip(acc.iter().map(CompensatedSum::value)).collect(),
        centroid: [mean[0], mean[1]],
        color_means: [mean[2], mean[3], mean[4]],
        area: n,
    })
}
