//! Invariant assembly and evaluation.
//!
//! An invariant is the ratio
//!
//! ```text
//!            I(shape core · color core)
//! ---------------------------------------------------
//!  scU00000^(N + m1 - 3 m2 / 2) · I(V(1,2,3)^2)^(m2 / 2)
//! ```
//!
//! where `N` is the number of points shared by both cores, `m1` the number
//! of shape primitives and `m2` the number of color primitives. The
//! numerator picks up `|det Ms|^(m1 + N) |det Mc|^m2` under a dual affine
//! map; the area factor contributes `|det Ms|` per power and the color
//! normalization `|det Mc|^2 |det Ms|^3`, so the powers cancel.

mod catalog;
mod dependence;

use std::sync::OnceLock;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::algebra::{expand_core, CoreGraph, MomentPolynomial, TermRecord};
use crate::error::{Error, Result};
use crate::moments::{MomentKey, MomentTable};

pub use catalog::{candidate_invariants, scami24_catalog, CATALOG_CORES};
pub use dependence::{
    detect_zero, independence_analysis, jacobian_rank, jacobian_rank_at, linear_dependencies, random_sample_table,
    DependencyGroup, IndependenceSummary, JacobianRank, ZeroClass,
};

/// Colornorm values below this multiple of `area^3` are treated as zero.
pub const COLOR_DEGENERATE_RATIO: f64 = 1e-12;

/// The color normalization `I(V(1,2,3)^2)` over three points.
pub fn color_norm() -> &'static MomentPolynomial {
    static NORM: OnceLock<MomentPolynomial> = OnceLock::new();
    NORM.get_or_init(|| expand_core(&CoreGraph::color_power(2)))
}

/// A fully expanded invariant with its normalization exponents.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantDef {
    pub numerator: MomentPolynomial,
    pub num_points: usize,
    pub area_exponent: Rational64,
    pub colornorm_exponent: Rational64,
    pub shape_core: CoreGraph,
    pub color_core: CoreGraph,
}

/// Builds the invariant of a shape core and a color core that share point
/// labels.
pub fn build_invariant(shape_core: &CoreGraph, color_core: &CoreGraph) -> InvariantDef {
    let combined = shape_core.combine(color_core);
    let n = combined.num_points() as i64;
    let m1 = combined.shape_weight() as i64;
    let m2 = combined.color_weight() as i64;
    InvariantDef {
        numerator: expand_core(&combined),
        num_points: combined.num_points(),
        area_exponent: Rational64::new(2 * (n + m1) - 3 * m2, 2),
        colornorm_exponent: Rational64::new(m2, 2),
        shape_core: shape_core.clone(),
        color_core: color_core.clone(),
    }
}

fn exp_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

impl InvariantDef {
    /// Power of `|det Ms|` picked up by the numerator.
    pub fn shape_det_power(&self) -> Rational64 {
        Rational64::from_integer(
            (self.shape_core.shape_weight() + self.color_core.shape_weight() + self.num_points) as i64,
        )
    }

    /// Power of `|det Mc|` picked up by the numerator.
    pub fn color_det_power(&self) -> Rational64 {
        Rational64::from_integer((self.shape_core.color_weight() + self.color_core.color_weight()) as i64)
    }

    /// Combined core in text form.
    pub fn core_dsl(&self) -> String {
        self.shape_core.combine(&self.color_core).to_dsl()
    }

    /// Numerator, area and colornorm values.
    fn parts(&self, m: &MomentTable) -> Result<(f64, f64, f64)> {
        let num = self.numerator.evaluate(m)?;
        let area = m.get(MomentKey::AREA)?;
        if area <= 0.0 {
            return Err(Error::domain("moment table has non-positive area"));
        }
        let cn = if *self.colornorm_exponent.numer() == 0 {
            1.0
        } else {
            color_norm().evaluate(m)?
        };
        Ok((num, area, cn))
    }

    pub fn evaluate(&self, m: &MomentTable) -> Result<f64> {
        let (num, area, cn) = self.parts(m)?;
        if *self.colornorm_exponent.numer() != 0 && !(cn > COLOR_DEGENERATE_RATIO * area.powi(3)) {
            return Err(Error::ColorDegenerate { colornorm: cn });
        }
        let denom = area.powf(exp_f64(self.area_exponent)) * cn.powf(exp_f64(self.colornorm_exponent));
        Ok(num / denom)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "shape_core": self.shape_core.to_dsl(),
            "color_core": self.color_core.to_dsl(),
            "num_points": self.num_points,
            "area_exponent": self.area_exponent.to_string(),
            "colornorm_exponent": self.colornorm_exponent.to_string(),
            "numerator": self.numerator.to_records(),
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            shape_core: String,
            color_core: String,
            numerator: Vec<TermRecord>,
        }
        let raw: Raw = serde_json::from_value(value.clone())?;
        let parse_core = |s: &str| -> Result<CoreGraph> {
            if s.is_empty() {
                CoreGraph::from_parts(Vec::new(), Vec::new())
            } else {
                s.parse()
            }
        };
        let def = build_invariant(&parse_core(&raw.shape_core)?, &parse_core(&raw.color_core)?);
        let numerator = MomentPolynomial::from_records(&raw.numerator)?;
        if numerator != def.numerator {
            return Err(Error::contract("stored numerator does not match its cores"));
        }
        Ok(def)
    }
}

/// One evaluated descriptor: a value and a validity flag per invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl Descriptor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({"values": self.values, "valid": self.valid})
    }
}

/// Evaluates every invariant on `m`. Color-degenerate tables yield a
/// descriptor whose flags are all false; other errors are returned.
pub fn describe(defs: &[InvariantDef], m: &MomentTable) -> Result<Descriptor> {
    let mut values = Vec::with_capacity(defs.len());
    let mut valid = Vec::with_capacity(defs.len());
    for def in defs {
        match def.evaluate(m) {
            Ok(v) => {
                valid.push(v.is_finite());
                values.push(v);
            }
            Err(Error::ColorDegenerate { .. }) => {
                valid.push(false);
                values.push(f64::NAN);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Descriptor { values, valid })
}
