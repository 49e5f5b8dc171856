use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_rational::Rational64;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{color_norm, exp_f64, InvariantDef};
use crate::algebra::{format_rational, MomentPolynomial, Rational};
use crate::error::{Error, Result};
use crate::moments::{point_moments, MomentKey, MomentTable, Orders};

/// How an invariant's numerator vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroClass {
    Nonzero,
    /// Every term cancels symbolically.
    IdenticallyZero,
    /// Every surviving term contains a first-order central moment.
    FirstOrderZero,
}

impl ZeroClass {
    pub fn is_zero(self) -> bool {
        self != ZeroClass::Nonzero
    }
}

pub fn detect_zero(def: &InvariantDef) -> ZeroClass {
    if def.numerator.is_zero() {
        ZeroClass::IdenticallyZero
    } else if def.numerator.without_first_order().is_zero() {
        ZeroClass::FirstOrderZero
    } else {
        ZeroClass::Nonzero
    }
}

/// One basis vector of the exact relation space: `Σ coefficients[k] ·
/// numerator(members[k]) = 0` after first-order terms are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct DependencyGroup {
    pub members: Vec<usize>,
    pub coefficients: Vec<Rational>,
}

impl DependencyGroup {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "members": self.members,
            "coefficients": self.coefficients.iter().map(format_rational).collect::<Vec<_>>(),
        })
    }
}

/// Exact linear relations among the reduced numerators of `defs`.
///
/// Invariants are compared only when their area and colornorm exponents
/// agree, and invariants whose reduced numerator is zero are skipped. The
/// result is a basis of each group's nullspace in reduced echelon form, so
/// its length is the number of redundant invariants.
pub fn linear_dependencies(defs: &[InvariantDef]) -> Vec<DependencyGroup> {
    let mut groups: BTreeMap<(Rational64, Rational64), Vec<(usize, MomentPolynomial)>> = BTreeMap::new();
    for (i, def) in defs.iter().enumerate() {
        let reduced = def.numerator.without_first_order();
        if !reduced.is_zero() {
            groups
                .entry((def.area_exponent, def.colornorm_exponent))
                .or_default()
                .push((i, reduced));
        }
    }
    let mut out = Vec::new();
    for members in groups.values() {
        out.extend(nullspace(members));
    }
    out.sort_by(|a, b| a.members.cmp(&b.members));
    out
}

fn nullspace(cols: &[(usize, MomentPolynomial)]) -> Vec<DependencyGroup> {
    let mut row_of: BTreeMap<&Vec<MomentKey>, usize> = BTreeMap::new();
    for (_, p) in cols {
        for (keys, _) in p.terms() {
            let next = row_of.len();
            row_of.entry(keys).or_insert(next);
        }
    }
    let (rows, n) = (row_of.len(), cols.len());
    let mut a = vec![vec![Rational::zero(); n]; rows];
    for (j, (_, p)) in cols.iter().enumerate() {
        for (keys, c) in p.terms() {
            a[row_of[keys]][j] = c.clone();
        }
    }

    // Reduced row echelon form.
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..n {
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        let inv = Rational::one() / &a[r][c];
        for v in &mut a[r][c..] {
            *v *= &inv;
        }
        let pivot_row = a[r].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i != r && !row[c].is_zero() {
                let f = row[c].clone();
                for (x, y) in row[c..].iter_mut().zip(&pivot_row[c..]) {
                    *x -= &f * y;
                }
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }

    let mut out = Vec::new();
    for free in (0..n).filter(|c| !pivots.contains(c)) {
        let mut coeff = vec![Rational::zero(); n];
        coeff[free] = Rational::one();
        for (row, &pc) in pivots.iter().enumerate() {
            coeff[pc] = -a[row][free].clone();
        }
        let (members, coefficients) = coeff
            .into_iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(j, v)| (cols[j].0, v))
            .unzip();
        out.push(DependencyGroup { members, coefficients });
    }
    out
}

/// Numerical Jacobian rank over several random moment points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobianRank {
    /// Rank at each sample.
    pub ranks: Vec<usize>,
    /// Largest rank seen, the generic rank.
    pub rank: usize,
    pub num_functions: usize,
    pub num_variables: usize,
}

impl JacobianRank {
    pub fn is_stable(&self) -> bool {
        self.ranks.iter().all(|&r| r == self.rank)
    }
}

/// Relative singular-value cutoff for the numerical rank.
pub const RANK_TOLERANCE: f64 = 1e-8;

const MAX_RESAMPLES: usize = 8;

/// Central moments of a random cloud of 64 unit-weight samples, a generic
/// point in moment space with positive color norm.
pub fn random_sample_table(rng: &mut impl Rng, orders: Orders) -> MomentTable {
    let samples: Vec<[f64; 5]> = (0..64)
        .map(|_| {
            [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
            ]
        })
        .collect();
    point_moments(&samples, orders).expect("non-empty sample set")
}

struct Gradient {
    value: MomentPolynomial,
    partials: Vec<(usize, MomentPolynomial)>,
}

impl Gradient {
    fn new(p: MomentPolynomial, vars: &[MomentKey]) -> Self {
        let keys = p.keys();
        let partials = vars
            .iter()
            .enumerate()
            .filter(|(_, v)| keys.contains(v))
            .map(|(j, &v)| (j, p.derivative(v)))
            .collect();
        Gradient { value: p, partials }
    }
}

/// Singular-value rank of the Jacobian of `defs` with respect to every key
/// in `Orders::default()`, at the moment point `m`. First-order moments are
/// held at zero.
pub fn jacobian_rank_at(defs: &[InvariantDef], m: &MomentTable) -> Result<usize> {
    let vars = Orders::default().keys();
    let norm = Gradient::new(color_norm().clone(), &vars);
    let grads: Vec<Gradient> = defs
        .iter()
        .map(|d| Gradient::new(d.numerator.without_first_order(), &vars))
        .collect();
    jacobian_rank_with(defs, &grads, &norm, &vars, m)
}

fn jacobian_rank_with(
    defs: &[InvariantDef],
    grads: &[Gradient],
    norm: &Gradient,
    vars: &[MomentKey],
    m: &MomentTable,
) -> Result<usize> {
    let lookup = |k: MomentKey| if k.is_first_order() { Ok(0.0) } else { m.get(k) };
    let area = m.get(MomentKey::AREA)?;
    let cn = norm.value.evaluate_with(lookup)?;
    if !(area > 0.0 && cn > 0.0) {
        return Err(Error::domain("sample point has a vanishing denominator"));
    }
    let mut cn_grad = vec![0.0; vars.len()];
    for (j, p) in &norm.partials {
        cn_grad[*j] = p.evaluate_with(lookup)?;
    }
    let area_col = vars.iter().position(|&k| k == MomentKey::AREA);

    let mut jac = DMatrix::<f64>::zeros(defs.len(), vars.len());
    for (i, (def, g)) in defs.iter().zip(grads).enumerate() {
        let (e, c) = (exp_f64(def.area_exponent), exp_f64(def.colornorm_exponent));
        let denom = area.powf(e) * cn.powf(c);
        let f = g.value.evaluate_with(lookup)? / denom;
        for (j, p) in &g.partials {
            jac[(i, *j)] = p.evaluate_with(lookup)? / denom;
        }
        if c != 0.0 {
            for (j, d) in cn_grad.iter().enumerate() {
                jac[(i, j)] -= f * c * d / cn;
            }
        }
        if let Some(j) = area_col {
            jac[(i, j)] -= f * e / area;
        }
        // Equilibrate rows; rank is unchanged.
        let scale = jac.row(i).amax();
        if scale > 0.0 {
            jac.row_mut(i).scale_mut(1.0 / scale);
        }
    }
    let sv = jac.singular_values();
    let top = sv.max();
    Ok(sv.iter().filter(|&&s| s > RANK_TOLERANCE * top).count())
}

/// Jacobian rank at `samples` random moment points drawn from `seed`.
pub fn jacobian_rank(defs: &[InvariantDef], samples: usize, seed: u64) -> Result<JacobianRank> {
    let vars = Orders::default().keys();
    let norm = Gradient::new(color_norm().clone(), &vars);
    let grads: Vec<Gradient> = defs
        .iter()
        .map(|d| Gradient::new(d.numerator.without_first_order(), &vars))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranks = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut attempt = 0;
        let rank = loop {
            let m = random_sample_table(&mut rng, Orders::default());
            match jacobian_rank_with(defs, &grads, &norm, &vars, &m) {
                Err(Error::Domain(_)) if attempt < MAX_RESAMPLES => attempt += 1,
                other => break other?,
            }
        };
        ranks.push(rank);
    }
    Ok(JacobianRank {
        rank: ranks.iter().copied().max().unwrap_or(0),
        ranks,
        num_functions: defs.len(),
        num_variables: vars.len(),
    })
}

/// Zero classes, exact relations and Jacobian rank of a candidate set.
#[derive(Debug, Clone)]
pub struct IndependenceSummary {
    pub zero_classes: Vec<ZeroClass>,
    pub dependencies: Vec<DependencyGroup>,
    /// Indices of nonzero candidates not eliminated by a relation.
    pub independent: Vec<usize>,
    pub jacobian: JacobianRank,
}

impl IndependenceSummary {
    pub fn count(&self, class: ZeroClass) -> usize {
        self.zero_classes.iter().filter(|&&c| c == class).count()
    }

    pub fn to_json(&self, defs: &[InvariantDef]) -> serde_json::Value {
        let candidates: Vec<serde_json::Value> = defs
            .iter()
            .zip(&self.zero_classes)
            .enumerate()
            .map(|(i, (d, z))| {
                serde_json::json!({
                    "index": i,
                    "core": d.core_dsl(),
                    "zero_class": z,
                    "independent": self.independent.contains(&i),
                })
            })
            .collect();
        serde_json::json!({
            "candidates": candidates,
            "identically_zero": self.count(ZeroClass::IdenticallyZero),
            "first_order_zero": self.count(ZeroClass::FirstOrderZero),
            "nonzero": self.count(ZeroClass::Nonzero),
            "dependencies": self.dependencies.iter().map(DependencyGroup::to_json).collect::<Vec<_>>(),
            "independent": self.independent,
            "jacobian_ranks": self.jacobian.ranks,
            "jacobian_rank": self.jacobian.rank,
        })
    }
}

/// Full analysis: zero detection, exact relations among the nonzero
/// candidates (the last member of each relation is dropped) and the
/// Jacobian rank of the survivors.
pub fn independence_analysis(defs: &[InvariantDef], samples: usize, seed: u64) -> Result<IndependenceSummary> {
    let zero_classes: Vec<ZeroClass> = defs.iter().map(detect_zero).collect();
    let dependencies = linear_dependencies(defs);
    let redundant: Vec<usize> = dependencies.iter().filter_map(|g| g.members.last().copied()).collect();
    let independent: Vec<usize> = (0..defs.len())
        .filter(|&i| !zero_classes[i].is_zero() && !redundant.contains(&i))
        .collect();
    let kept: Vec<InvariantDef> = independent.iter().map(|&i| defs[i].clone()).collect();
    let jacobian = jacobian_rank(&kept, samples, seed)?;
    Ok(IndependenceSummary {
        zero_classes,
        dependencies,
        independent,
        jacobian,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::CoreGraph;
    use crate::invariants::{build_invariant, scami24_catalog};

    fn def(edges: &[(usize, usize)], power: usize) -> InvariantDef {
        build_invariant(&CoreGraph::shape(edges).unwrap(), &CoreGraph::color_power(power))
    }

    #[test]
    fn zero_classes() {
        assert_eq!(detect_zero(&def(&[(1, 2)], 1)), ZeroClass::FirstOrderZero);
        assert_eq!(detect_zero(&def(&[(1, 2), (1, 2)], 2)), ZeroClass::Nonzero);
    }

    #[test]
    fn duplicate_gives_one_relation() {
        let a = def(&[(1, 2), (1, 2)], 2);
        let b = def(&[(1, 2), (1, 3)], 2);
        let deps = linear_dependencies(&[a.clone(), b, a]);
        assert_eq!(deps.len(), 1);
        assert_eq!(deps[0].members, vec![0, 2]);
        assert_eq!(deps[0].coefficients[0], -deps[0].coefficients[1].clone());
    }

    #[test]
    fn catalog_relations() {
        let deps = linear_dependencies(scami24_catalog());
        let members: Vec<Vec<usize>> = deps.iter().map(|g| g.members.clone()).collect();
        assert_eq!(members, vec![vec![9, 10], vec![17, 18, 23], vec![20, 22]]);
        // Numerical check at a random point.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_sample_table(&mut rng, Orders::default());
        let v: Vec<f64> = scami24_catalog().iter().map(|d| d.evaluate(&m).unwrap()).collect();
        assert!((v[9] + v[10]).abs() < 1e-9 * v[9].abs());
        assert!((v[17] + v[18] - v[23]).abs() < 1e-9 * v[23].abs());
        assert!((v[20] + 2.0 * v[22]).abs() < 1e-9 * v[20].abs());
    }

    #[test]
    fn duplicate_rows_lose_rank() {
        let a = def(&[(1, 2), (1, 2)], 2);
        let b = def(&[(1, 2), (1, 3)], 2);
        let r = jacobian_rank(&[a.clone(), b.clone()], 2, 7).unwrap();
        assert_eq!(r.rank, 2);
        let r = jacobian_rank(&[a.clone(), b, a.clone()], 2, 7).unwrap();
        assert_eq!(r.rank, 2);
        assert!(r.is_stable());
        assert_eq!(jacobian_rank(&[a.clone(), a], 3, 7).unwrap().rank, 1);
    }

    #[test]
    fn point_cloud_moments_match_the_table_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_sample_table(&mut rng, Orders::default());
        assert_eq!(m.entries.len(), 150);
        assert!(m.get(MomentKey::new(1, 0, 0, 0, 0)).unwrap().abs() < 1e-12);
        assert!(color_norm().evaluate(&m).unwrap() > 0.0);
    }
}
