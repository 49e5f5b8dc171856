//! Shape and color affine deformations, in the pixel domain (warping and
//! recoloring rasters) and in the moment domain (exact tensor maps of
//! central moment tables).

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{MomentKey, MomentTable, Raster};

/// `(x, y) ↦ m · (x, y) + t`, with `m` row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeAffine {
    pub m: [f64; 4],
    pub t: [f64; 2],
}

/// `(R, G, B) ↦ m · (R, G, B) + o`, with `m` row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorAffine {
    pub m: [f64; 9],
    pub o: [f64; 3],
}

/// A shape map and a color map applied together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformPair {
    pub shape: ShapeAffine,
    pub color: ColorAffine,
}

impl ShapeAffine {
    pub const IDENTITY: ShapeAffine = ShapeAffine {
        m: [1.0, 0.0, 0.0, 1.0],
        t: [0.0, 0.0],
    };

    pub fn linear(m: [f64; 4]) -> Self {
        ShapeAffine { m, t: [0.0; 2] }
    }

    /// Counter-clockwise rotation in the `(x, y)` frame.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        ShapeAffine::linear([c, -s, s, c])
    }

    pub fn scale(s: f64) -> Self {
        ShapeAffine::linear([s, 0.0, 0.0, s])
    }

    fn matrix(&self) -> Matrix2<f64> {
        Matrix2::from_row_slice(&self.m)
    }

    pub fn det(&self) -> f64 {
        self.m[0] * self.m[3] - self.m[1] * self.m[2]
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let v = self.matrix() * Vector2::from(p) + Vector2::from(self.t);
        [v.x, v.y]
    }

    pub fn inverse(&self) -> Result<ShapeAffine> {
        let inv = self
            .matrix()
            .try_inverse()
            .filter(|_| self.det() != 0.0)
            .ok_or_else(|| Error::domain("singular shape matrix"))?;
        let t = -(inv * Vector2::from(self.t));
        Ok(ShapeAffine {
            m: [inv[(0, 0)], inv[(0, 1)], inv[(1, 0)], inv[(1, 1)]],
            t: [t.x, t.y],
        })
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &ShapeAffine) -> ShapeAffine {
        let m = self.matrix() * first.matrix();
        let t = self.matrix() * Vector2::from(first.t) + Vector2::from(self.t);
        ShapeAffine {
            m: [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]],
            t: [t.x, t.y],
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == ShapeAffine::IDENTITY
    }
}

impl ColorAffine {
    pub const IDENTITY: ColorAffine = ColorAffine {
        m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        o: [0.0; 3],
    };

    /// The diagonal-offset model: per-channel gains and offsets.
    pub fn diagonal(gains: [f64; 3], offsets: [f64; 3]) -> Self {
        ColorAffine {
            m: [gains[0], 0.0, 0.0, 0.0, gains[1], 0.0, 0.0, 0.0, gains[2]],
            o: offsets,
        }
    }

    fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.m)
    }

    pub fn det(&self) -> f64 {
        self.matrix().determinant()
    }

    pub fn apply(&self, c: [f64; 3]) -> [f64; 3] {
        let v = self.matrix() * Vector3::from(c) + Vector3::from(self.o);
        [v.x, v.y, v.z]
    }

    /// `self ∘ first`.
    pub fn after(&self, first: &ColorAffine) -> ColorAffine {
        let m = self.matrix() * first.matrix();
        let o = self.matrix() * Vector3::from(first.o) + Vector3::from(self.o);
        let mut out = [0.0; 9];
        for (k, v) in out.iter_mut().enumerate() {
            *v = m[(k / 3, k % 3)];
        }
        ColorAffine {
            m: out,
            o: [o.x, o.y, o.z],
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == ColorAffine::IDENTITY
    }
}

impl TransformPair {
    pub const IDENTITY: TransformPair = TransformPair {
        shape: ShapeAffine::IDENTITY,
        color: ColorAffine::IDENTITY,
    };
}

/// Bilinear sample at continuous position `p`, using only domain pixels.
fn sample(r: &Raster, p: [f64; 2]) -> [f64; 3] {
    let (w, h) = (r.width() as isize, r.height() as isize);
    let u = p[0] - 0.5;
    let v = p[1] - 0.5;
    let (i0, j0) = (u.floor(), v.floor());
    let (fx, fy) = (u - i0, v - j0);
    let (i0, j0) = (i0 as isize, j0 as isize);
    let mut acc = [0.0; 3];
    let mut wsum = 0.0;
    for (dj, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (di, wx) in [(0, 1.0 - fx), (1, fx)] {
            let wgt = wx * wy;
            if wgt == 0.0 {
                continue;
            }
            let i = (i0 + di).clamp(0, w - 1) as usize;
            let j = (j0 + dj).clamp(0, h - 1) as usize;
            if !r.in_domain(i, j) {
                continue;
            }
            let px = r.pixel(i, j);
            for c in 0..3 {
                acc[c] += wgt * px[c];
            }
            wsum += wgt;
        }
    }
    if wsum > 0.0 {
        acc.map(|a| a / wsum)
    } else {
        let (i, j) = (p[0].floor() as usize, p[1].floor() as usize);
        r.pixel(i.min(r.width() - 1), j.min(r.height() - 1))
    }
}

/// Warps `r` by `s` onto a `width × height` canvas using inverse mapping
/// and bilinear interpolation. The output domain is the set of pixels whose
/// centers map back into the source domain; other pixels are black.
pub fn warp(r: &Raster, s: &ShapeAffine, width: usize, height: usize) -> Result<Raster> {
    let inv = s.inverse()?;
    if width == 0 || height == 0 {
        return Err(Error::domain("output dimensions must be positive"));
    }
    let rows: Vec<Vec<([f64; 3], bool)>> = (0..height)
        .into_par_iter()
        .map(|y| {
            (0..width)
                .map(|x| {
                    let p = inv.apply([x as f64 + 0.5, y as f64 + 0.5]);
                    let inside = p[0] >= 0.0
                        && p[1] >= 0.0
                        && p[0] < r.width() as f64
                        && p[1] < r.height() as f64
                        && r.in_domain(p[0] as usize, p[1] as usize);
                    if inside {
                        (sample(r, p), true)
                    } else {
                        ([0.0; 3], false)
                    }
                })
                .collect()
        })
        .collect();
    let (pixels, mask): (Vec<[f64; 3]>, Vec<bool>) = rows.into_iter().flatten().unzip();
    if !mask.iter().any(|&m| m) {
        return Err(Error::domain("warped domain is empty"));
    }
    Raster::new(width, height, pixels)?.with_mask(mask)
}

/// Warps onto the tight bounding box of the transformed source frame.
/// Returns the raster and the map actually applied (`s` plus the canvas
/// shift).
pub fn warp_fit(r: &Raster, s: &ShapeAffine) -> Result<(Raster, ShapeAffine)> {
    let (w, h) = (r.width() as f64, r.height() as f64);
    let corners = [[0.0, 0.0], [w, 0.0], [0.0, h], [w, h]].map(|c| s.apply(c));
    let min_x = corners.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min);
    let min_y = corners.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min);
    let max_x = corners.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max);
    let max_y = corners.iter().map(|c| c[1]).fold(f64::NEG_INFINITY, f64::max);
    let (ox, oy) = (min_x.floor(), min_y.floor());
    let shifted = ShapeAffine {
        m: s.m,
        t: [s.t[0] - ox, s.t[1] - oy],
    };
    let width = ((max_x - ox).ceil() as usize).max(1);
    let height = ((max_y - oy).ceil() as usize).max(1);
    Ok((warp(r, &shifted, width, height)?, shifted))
}

/// Applies `c` to every pixel and clamps into `[0, 1]`. The mask is kept.
pub fn recolor(r: &Raster, c: &ColorAffine) -> Result<Raster> {
    if c.det() == 0.0 {
        return Err(Error::domain("singular color matrix"));
    }
    let pixels: Vec<[f64; 3]> = r.pixels().par_iter().map(|&px| c.apply(px)).collect();
    let out = Raster::new(r.width(), r.height(), pixels)?;
    match r.mask() {
        Some(m) => out.with_mask(m.to_vec()),
        None => Ok(out),
    }
}

/// Applies the shape warp (tight canvas) and then the color map.
pub fn apply_pair(r: &Raster, t: &TransformPair) -> Result<Raster> {
    let warped = if t.shape.is_identity() {
        r.clone()
    } else {
        warp_fit(r, &t.shape)?.0
    };
    if t.color.is_identity() {
        Ok(warped)
    } else {
        recolor(&warped, &t.color)
    }
}

/// Expansion of `(Σ_k coeffs[k] · v_k)^n` as exponent vectors with
/// coefficients.
fn linear_power(coeffs: &[f64], n: u8) -> Vec<(Vec<u8>, f64)> {
    let mut terms: Vec<(Vec<u8>, f64)> = vec![(vec![0; coeffs.len()], 1.0)];
    for _ in 0..n {
        let mut next: Vec<(Vec<u8>, f64)> = Vec::new();
        for (e, c) in &terms {
            for (k, &a) in coeffs.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let mut e2 = e.clone();
                e2[k] += 1;
                match next.iter_mut().find(|(f, _)| *f == e2) {
                    Some(slot) => slot.1 += c * a,
                    None => next.push((e2, c * a)),
                }
            }
        }
        terms = next;
    }
    terms
}

fn product(a: &[(Vec<u8>, f64)], b: &[(Vec<u8>, f64)]) -> Vec<(Vec<u8>, f64)> {
    let mut out: Vec<(Vec<u8>, f64)> = Vec::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<u8> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            match out.iter_mut().find(|(f, _)| *f == e) {
                Some(slot) => slot.1 += ca * cb,
                None => out.push((e, ca * cb)),
            }
        }
    }
    out
}

/// Central moments of the image deformed by `s` and `c`, computed from
/// the moments of the original by multilinear expansion. Translations and
/// offsets drop out; every entry is scaled by `|det s.m|`.
pub fn transform_moments(m: &MomentTable, s: &ShapeAffine, c: &ColorAffine) -> Result<MomentTable> {
    m.ensure_complete()?;
    let jac = s.det().abs();
    let mut entries = std::collections::BTreeMap::new();
    for key in m.orders.keys() {
        let shape = product(&linear_power(&s.m[0..2], key.p), &linear_power(&s.m[2..4], key.q));
        let color = product(
            &product(&linear_power(&c.m[0..3], key.a), &linear_power(&c.m[3..6], key.b)),
            &linear_power(&c.m[6..9], key.g),
        );
        let mut acc = 0.0;
        for (es, cs) in &shape {
            for (ec, cc) in &color {
                let src = MomentKey::new(es[0], es[1], ec[0], ec[1], ec[2]);
                acc += cs * cc * m.get(src)?;
            }
        }
        entries.insert(key, jac * acc);
    }
    let centroid = s.apply(m.centroid);
    Ok(MomentTable {
        orders: m.orders,
        entries,
        centroid,
        color_means: c.apply(m.color_means),
        area: jac * m.area,
    })
}

/// Deformation families for sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    Rotation,
    Scale,
    Shear,
    GeneralShape,
    ColorDiagonal,
    ColorAffine,
    Composite,
}

impl TransformKind {
    pub const ALL: [TransformKind; 7] = [
        TransformKind::Rotation,
        TransformKind::Scale,
        TransformKind::Shear,
        TransformKind::GeneralShape,
        TransformKind::ColorDiagonal,
        TransformKind::ColorAffine,
        TransformKind::Composite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Rotation => "rotation",
            TransformKind::Scale => "scale",
            TransformKind::Shear => "shear",
            TransformKind::GeneralShape => "general-shape",
            TransformKind::ColorDiagonal => "color-diagonal",
            TransformKind::ColorAffine => "color-affine",
            TransformKind::Composite => "composite",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::contract(format!("unknown transform kind '{s}'")))
    }
}

fn general_shape(rng: &mut ChaCha8Rng) -> ShapeAffine {
    loop {
        let m: [f64; 4] = [
            1.0 + rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            1.0 + rng.gen_range(-0.5..0.5),
        ];
        let s = ShapeAffine::linear(m);
        if (0.3..=3.0).contains(&s.det()) {
            return s;
        }
    }
}

fn offsets(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [(); 3].map(|_| rng.gen_range(-0.1..0.1))
}

fn color_diagonal(rng: &mut ChaCha8Rng) -> ColorAffine {
    let gains = [(); 3].map(|_| rng.gen_range(0.6..1.4));
    ColorAffine::diagonal(gains, offsets(rng))
}

fn color_affine(rng: &mut ChaCha8Rng) -> ColorAffine {
    loop {
        let mut m = ColorAffine::IDENTITY.m;
        for v in &mut m {
            *v += rng.gen_range(-0.3..0.3);
        }
        let c = ColorAffine { m, o: offsets(rng) };
        if c.det() >= 0.2 {
            return c;
        }
    }
}

/// `count` seeded deformations of the given kind.
pub fn sample_transforms(kind: TransformKind, count: usize, seed: u64) -> Vec<TransformPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut t = TransformPair::IDENTITY;
            match kind {
                TransformKind::Rotation => {
                    t.shape = ShapeAffine::rotation(rng.gen_range(0.0..std::f64::consts::TAU));
                }
                TransformKind::Scale => t.shape = ShapeAffine::scale(rng.gen_range(0.5..=2.0)),
                TransformKind::Shear => {
                    t.shape = ShapeAffine::linear([1.0, rng.gen_range(-0.5..=0.5), 0.0, 1.0]);
                }
                TransformKind::GeneralShape => t.shape = general_shape(&mut rng),
                TransformKind::ColorDiagonal => t.color = color_diagonal(&mut rng),
                TransformKind::ColorAffine => t.color = color_affine(&mut rng),
                TransformKind::Composite => {
                    t.shape = general_shape(&mut rng);
                    t.color = color_diagonal(&mut rng);
                }
            }
            t
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{central_moments, Orders};

    fn test_raster(w: usize, h: usize) -> Raster {
        Raster::from_fn(w, h, |x, y| {
            let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
            [0.2 + 0.6 * u, 0.3 + 0.5 * v * v, 0.5 + 0.3 * (u - v)]
        })
        .unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn identity_warp_is_exact() {
        let r = test_raster(7, 5);
        let out = warp(&r, &ShapeAffine::IDENTITY, 7, 5).unwrap();
        assert_eq!(out, r);
    }

    #[test]
    fn quarter_turn_permutes_pixels() {
        let n = 6;
        let r = test_raster(n, n);
        let s = ShapeAffine {
            m: [0.0, -1.0, 1.0, 0.0],
            t: [n as f64, 0.0],
        };
        let out = warp(&r, &s, n, n).unwrap();
        assert!(out.mask().is_none());
        for y in 0..n {
            for x in 0..n {
                assert_eq!(out.pixel(n - 1 - y, x), r.pixel(x, y));
            }
        }
    }

    #[test]
    fn scale_round_trip() {
        let r = test_raster(40, 30);
        let (big, _) = warp_fit(&r, &ShapeAffine::scale(2.0)).unwrap();
        let (back, _) = warp_fit(&big, &ShapeAffine::scale(0.5)).unwrap();
        assert_eq!((back.width(), back.height()), (40, 30));
        let mut err = 0.0;
        let mut n = 0;
        for y in 0..30 {
            for x in 0..40 {
                if back.in_domain(x, y) {
                    let (a, b) = (back.pixel(x, y), r.pixel(x, y));
                    err += (0..3).map(|c| (a[c] - b[c]).abs()).sum::<f64>() / 3.0;
                    n += 1;
                }
            }
        }
        assert!(n > 1000);
        assert!(err / n as f64 <= 0.02);
    }

    #[test]
    fn singular_maps_are_rejected() {
        let r = test_raster(4, 4);
        assert!(matches!(
            warp(&r, &ShapeAffine::linear([1.0, 2.0, 2.0, 4.0]), 4, 4),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            recolor(&r, &ColorAffine::diagonal([1.0, 0.0, 1.0], [0.0; 3])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn recolor_cases() {
        let r = test_raster(5, 5);
        assert_eq!(recolor(&r, &ColorAffine::IDENTITY).unwrap(), r);
        let half = recolor(&r, &ColorAffine::diagonal([0.5; 3], [0.0; 3])).unwrap();
        for (a, b) in half.pixels().iter().zip(r.pixels()) {
            for c in 0..3 {
                assert_eq!(a[c], b[c] * 0.5);
            }
        }
        let white = recolor(&r, &ColorAffine::diagonal([1.0; 3], [1.0; 3])).unwrap();
        assert!(white.pixels().iter().all(|p| *p == [1.0; 3]));
    }

    #[test]
    fn moment_map_identity_and_scaling() {
        let m = central_moments(&test_raster(9, 8), Orders::default()).unwrap();
        let same = transform_moments(&m, &ShapeAffine::IDENTITY, &ColorAffine::IDENTITY).unwrap();
        assert_eq!(same.entries, m.entries);
        let doubled = transform_moments(&m, &ShapeAffine::scale(2.0), &ColorAffine::IDENTITY).unwrap();
        for (k, v) in &m.entries {
            let expect = 2f64.powi(k.shape_order() as i32 + 2) * v;
            assert!((doubled.entries[k] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn moment_map_matches_lattice_warps() {
        let r = test_raster(8, 8);
        let m = central_moments(&r, Orders::default()).unwrap();
        let cases = [
            ShapeAffine {
                m: [0.0, -1.0, 1.0, 0.0],
                t: [8.0, 0.0],
            },
            ShapeAffine {
                m: [1.0, 0.0, 0.0, 1.0],
                t: [3.0, 2.0],
            },
            ShapeAffine {
                m: [-1.0, 0.0, 0.0, -1.0],
                t: [8.0, 8.0],
            },
        ];
        for s in cases {
            let out = warp(&r, &s, 12, 12).unwrap();
            let direct = central_moments(&out, Orders::default()).unwrap();
            let mapped = transform_moments(&m, &s, &ColorAffine::IDENTITY).unwrap();
            for (k, v) in &mapped.entries {
                let d = direct.entries[k];
                assert!((d - v).abs() <= 1e-6 * v.abs().max(1e-6 * m.area), "{k}: {d} vs {v}");
            }
        }
    }

    #[test]
    fn moment_map_matches_point_transform() {
        use crate::moments::point_moments;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<[f64; 5]> = (0..30).map(|_| [(); 5].map(|_| rng.gen_range(0.0..1.0))).collect();
        let s = ShapeAffine {
            m: [1.2, 0.3, -0.4, 0.9],
            t: [5.0, -2.0],
        };
        let c = ColorAffine {
            m: [0.9, 0.1, 0.0, 0.2, 1.1, -0.1, 0.0, 0.3, 0.8],
            o: [0.1, 0.0, -0.2],
        };
        let moved: Vec<[f64; 5]> = pts
            .iter()
            .map(|p| {
                let xy = s.apply([p[0], p[1]]);
                let rgb = c.apply([p[2], p[3], p[4]]);
                [xy[0], xy[1], rgb[0], rgb[1], rgb[2]]
            })
            .collect();
        let a = point_moments(&pts, Orders::default()).unwrap();
        let b = point_moments(&moved, Orders::default()).unwrap();
        // A point set carries no area element, so undo the Jacobian factor.
        let mapped = transform_moments(&a, &s, &c).unwrap();
        let jac = s.det().abs();
        for (k, v) in &b.entries {
            if k.is_first_order() {
                continue;
            }
            assert!(rel(mapped.entries[k] / jac, *v) < 1e-9 || v.abs() < 1e-12, "{k}");
        }
    }

    #[test]
    fn jacobian_on_area() {
        let m = central_moments(&test_raster(5, 6), Orders::default()).unwrap();
        let s = ShapeAffine::linear([1.5, 0.2, -0.3, 0.7]);
        let out = transform_moments(&m, &s, &ColorAffine::IDENTITY).unwrap();
        assert_eq!(
            out.entries[&MomentKey::AREA],
            s.det().abs() * m.entries[&MomentKey::AREA]
        );
    }

    #[test]
    fn sampler_contracts() {
        for kind in TransformKind::ALL {
            let a = sample_transforms(kind, 5, 9);
            assert_eq!(a, sample_transforms(kind, 5, 9));
            for t in &a {
                match kind {
                    TransformKind::Rotation
                    | TransformKind::Scale
                    | TransformKind::Shear
                    | TransformKind::GeneralShape => {
                        assert!(t.color.is_identity());
                        assert!(!t.shape.is_identity());
                        assert!(t.shape.det() > 0.0);
                    }
                    TransformKind::ColorDiagonal | TransformKind::ColorAffine => {
                        assert!(t.shape.is_identity());
                        assert!(!t.color.is_identity());
                        assert!(t.color.det() > 0.0);
                    }
                    TransformKind::Composite => {
                        assert!(!t.shape.is_identity() && !t.color.is_identity());
                    }
                }
            }
            assert_eq!(kind.name().parse::<TransformKind>().unwrap(), kind);
        }
        assert!("twist".parse::<TransformKind>().is_err());
    }

    #[test]
    fn pair_json_shape() {
        let t = sample_transforms(TransformKind::Composite, 1, 3)[0];
        let v = serde_json::to_value(t).unwrap();
        assert_eq!(v["shape"]["m"].as_array().unwrap().len(), 4);
        assert_eq!(v["color"]["o"].as_array().unwrap().len(), 3);
        let back: TransformPair = serde_json::from_value(v).unwrap();
        assert_eq!(back, t);
    }
}
