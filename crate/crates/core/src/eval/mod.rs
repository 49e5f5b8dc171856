//! Evaluation protocol: mean relative error against a reference
//! descriptor, chi-square nearest-neighbour classification and
//! precision-recall retrieval curves.

mod dataset;

pub use dataset::{gen_dataset, synthetic_source, Domain, GenReport, LabeledDataset, LabeledItem};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::invariants::Descriptor;
use crate::numfmt::fmt_f64;

/// Added to `|r_k|` in relative errors.
pub const REL_EPS: f64 = 1e-12;
/// Added to the chi-square denominator.
pub const CHI_EPS: f64 = 1e-12;

/// Per-invariant mean relative error over a set of variants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MreReport {
    pub mre: Vec<f64>,
    /// Variant entries left out because they were flagged invalid.
    pub excluded: Vec<usize>,
    pub variants: usize,
}

impl MreReport {
    /// Median over the invariants with at least one valid variant.
    pub fn median(&self) -> f64 {
        median(self.mre.iter().copied().filter(|v| v.is_finite()).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,mre,excluded\n");
        for (k, (m, e)) in self.mre.iter().zip(&self.excluded).enumerate() {
            out.push_str(&format!("{},{},{}\n", k + 1, fmt_f64(*m), e));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "variants": self.variants,
            "median": self.median(),
            "mre": self.mre,
            "excluded": self.excluded,
        })
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mre(reference: &Descriptor, variants: &[Descriptor]) -> Result<MreReport> {
    if variants.is_empty() {
        return Err(Error::domain("no variants"));
    }
    if !reference.all_valid() {
        return Err(Error::contract("reference descriptor has invalid entries"));
    }
    let n = reference.len();
    if variants.iter().any(|v| v.len() != n) {
        return Err(Error::contract("descriptor lengths differ"));
    }
    let mut out = Vec::with_capacity(n);
    let mut excluded = Vec::with_capacity(n);
    for k in 0..n {
        let r = reference.values[k];
        let mut sum = 0.0;
        let mut used = 0usize;
        for v in variants {
            if v.valid[k] {
                sum += (v.values[k] - r).abs() / (r.abs() + REL_EPS);
                used += 1;
            }
        }
        out.push(if used > 0 { sum / used as f64 } else { f64::NAN });
        excluded.push(variants.len() - used);
    }
    Ok(MreReport {
        mre: out,
        excluded,
        variants: variants.len(),
    })
}

pub fn chi_square(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::contract("descriptor lengths differ"));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y) / (x.abs() + y.abs() + CHI_EPS))
        .sum())
}

/// Per-dimension scaling by the median absolute value of a training set,
/// optionally followed by signed log compression `sign(x) · ln(1 + |x|)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardizer {
    pub scale: Vec<f64>,
    pub signed_log: bool,
}

impl Standardizer {
    pub fn fit(train: &[&[f64]], signed_log: bool) -> Result<Self> {
        let Some(first) = train.first() else {
            return Err(Error::domain("empty training set"));
        };
        let dim = first.len();
        let mut scale = Vec::with_capacity(dim);
        for k in 0..dim {
            let col: Vec<f64> = train.iter().map(|d| d[k].abs()).filter(|v| v.is_finite()).collect();
            let m = median(col);
            scale.push(if m > 0.0 && m.is_finite() { m } else { 1.0 });
        }
        Ok(Standardizer { scale, signed_log })
    }

    pub fn apply(&self, d: &[f64]) -> Vec<f64> {
        d.iter()
            .zip(&self.scale)
            .map(|(x, s)| {
                let v = x / s;
                if self.signed_log {
                    v.signum() * v.abs().ln_1p()
                } else {
                    v
                }
            })
            .collect()
    }
}

/// Label of the chi-square-nearest training vector; ties go to the lowest
/// training index.
pub fn nearest_label(train: &[(Vec<f64>, usize)], query: &[f64]) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (v, label) in train {
        let d = chi_square(v, query)?;
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, *label));
        }
    }
    best.map(|(_, l)| l).ok_or_else(|| Error::domain("empty training set"))
}

/// Outcome of a nearest-neighbour run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    /// `(label, correct, total)` per test class, by label.
    pub per_class: Vec<(usize, usize, usize)>,
    pub predictions: Vec<usize>,
}

impl ClassificationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,correct,total,accuracy\n");
        for &(label, correct, total) in &self.per_class {
            out.push_str(&format!(
                "{},{},{},{}\n",
                label,
                correct,
                total,
                fmt_f64(correct as f64 / total as f64)
            ));
        }
        out
    }
}

/// Nearest-neighbour classification of `test` against `train` with
/// chi-square distance on standardized descriptors. The standardizer is
/// fit on `train`.
pub fn nn_classify(train: &LabeledDataset, test: &LabeledDataset, signed_log: bool) -> Result<ClassificationReport> {
    use rayon::prelude::*;
    let rows: Vec<&[f64]> = train.items.iter().map(|i| i.descriptor.values.as_slice()).collect();
    let std = Standardizer::fit(&rows, signed_log)?;
    let reference: Vec<(Vec<f64>, usize)> = train
        .items
        .iter()
        .map(|i| (std.apply(&i.descriptor.values), i.label))
        .collect();
    let predictions: Vec<usize> = test
        .items
        .par_iter()
        .map(|i| nearest_label(&reference, &std.apply(&i.descriptor.values)))
        .collect::<Result<_>>()?;
    let mut per_class = std::collections::BTreeMap::<usize, (usize, usize)>::new();
    let mut correct = 0;
    for (item, &p) in test.items.iter().zip(&predictions) {
        let e = per_class.entry(item.label).or_default();
        e.1 += 1;
        if p == item.label {
            e.0 += 1;
            correct += 1;
        }
    }
    Ok(ClassificationReport {
        accuracy: if test.items.is_empty() {
            0.0
        } else {
            correct as f64 / test.items.len() as f64
        },
        per_class: per_class.into_iter().map(|(l, (c, t))| (l, c, t)).collect(),
        predictions,
    })
}

/// A precision-recall sweep over a ranked database.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    /// `(recall, precision)` after each rank cutoff `1..=N`.
    pub points: Vec<(f64, f64)>,
    /// Set when the database holds no relevant item; `points` is empty.
    pub no_relevant: bool,
}

impl PrCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("recall,precision\n");
        for (r, p) in &self.points {
            out.push_str(&format!("{},{}\n", fmt_f64(*r), fmt_f64(*p)));
        }
        out
    }
}

/// Ranks `db` by chi-square distance to `query` (ties by index) and
/// reports precision = relevant retrieved / retrieved and recall =
/// relevant retrieved / relevant, at every cutoff.
pub fn precision_recall(query: &[f64], db: &[(Vec<f64>, usize)], query_label: usize) -> Result<PrCurve> {
    let relevant = db.iter().filter(|(_, l)| *l == query_label).count();
    if relevant == 0 {
        return Ok(PrCurve {
            points: Vec::new(),
            no_relevant: true,
        });
    }
    let mut ranked: Vec<(f64, usize, usize)> = db
        .iter()
        .enumerate()
        .map(|(i, (v, l))| Ok((chi_square(v, query)?, i, *l)))
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut hits = 0;
    let points = ranked
        .iter()
        .enumerate()
        .map(|(k, &(_, _, l))| {
            if l == query_label {
                hits += 1;
            }
            (hits as f64 / relevant as f64, hits as f64 / (k + 1) as f64)
        })
        .collect();
    Ok(PrCurve {
        points,
        no_relevant: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn desc(v: &[f64]) -> Descriptor {
        Descriptor {
            values: v.to_vec(),
            valid: vec![true; v.len()],
        }
    }

    #[test]
    fn mre_cases() {
        let r = desc(&[1.0, -2.0, 0.5]);
        let z = mre(&r, &[r.clone(), r.clone()]).unwrap();
        assert!(z.mre.iter().all(|&m| m == 0.0));
        let v = desc(&[1.1, -2.2, 0.55]);
        let m = mre(&r, &[v]).unwrap();
        assert!(m.mre.iter().all(|&x| (x - 0.1).abs() < 1e-9));
        assert!(mre(&r, &[]).is_err());

        let mut bad = desc(&[1.0, 1.0, 1.0]);
        bad.valid[1] = false;
        let m = mre(&r, &[bad, desc(&[1.0, -2.0, 0.5])]).unwrap();
        assert_eq!(m.excluded, vec![0, 1, 0]);
        assert_eq!(m.mre[1], 0.0);
    }

    #[test]
    fn chi_square_cases() {
        assert_eq!(chi_square(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let d = chi_square(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!((d - 2.0).abs() < 1e-9);
        assert!(chi_square(&[1.0], &[1.0, 2.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
            assert_eq!(chi_square(&a, &b).unwrap(), chi_square(&b, &a).unwrap());
        }
    }

    #[test]
    fn standardizer_uses_train_medians() {
        let a = [2.0, -10.0];
        let b = [-4.0, 30.0];
        let c = [6.0, 20.0];
        let s = Standardizer::fit(&[&a, &b, &c], false).unwrap();
        assert_eq!(s.scale, vec![4.0, 20.0]);
        assert_eq!(s.apply(&[8.0, -20.0]), vec![2.0, -1.0]);
        let s = Standardizer { signed_log: true, ..s };
        let v = s.apply(&[-8.0, 0.0]);
        assert!((v[0] + 3f64.ln()).abs() < 1e-15);
        assert_eq!(v[1], 0.0);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let train = vec![(vec![1.0, 1.0], 7), (vec![1.0, 1.0], 3)];
        assert_eq!(nearest_label(&train, &[1.0, 1.0]).unwrap(), 7);
    }

    #[test]
    fn pr_cases() {
        let db = vec![(vec![0.0], 1), (vec![0.1], 1), (vec![5.0], 2), (vec![9.0], 2)];
        let c = precision_recall(&[0.0], &db, 1).unwrap();
        assert_eq!(c.points.len(), 4);
        assert_eq!(c.points[0], (0.5, 1.0));
        assert_eq!(c.points[1], (1.0, 1.0));
        let none = precision_recall(&[0.0], &db, 9).unwrap();
        assert!(none.no_relevant && none.points.is_empty());
    }

    #[test]
    fn random_order_precision_at_full_recall() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n, r) = (40usize, 8usize);
        let trials = 4000;
        let mut first_full = 0.0;
        for _ in 0..trials {
            let mut labels: Vec<usize> = (0..n).map(|i| usize::from(i < r)).collect();
            labels.shuffle(&mut rng);
            // Equal distances: ranking follows the shuffled order.
            let db: Vec<(Vec<f64>, usize)> = labels.iter().map(|&l| (vec![1.0], l)).collect();
            let c = precision_recall(&[1.0], &db, 1).unwrap();
            assert_eq!(*c.points.last().unwrap(), (1.0, r as f64 / n as f64));
            first_full += c.points.iter().find(|p| p.0 == 1.0).unwrap().1;
        }
        // P(last relevant at rank m) = C(m-1, r-1) / C(n, r).
        let choose = |a: usize, b: usize| (0..b).fold(1.0, |acc, i| acc * (a - i) as f64 / (i + 1) as f64);
        let expect: f64 = (r..=n)
            .map(|m| choose(m - 1, r - 1) / choose(n, r) * r as f64 / m as f64)
            .sum();
        assert!((first_full / trials as f64 - expect).abs() < 0.01);
    }
}
