use std::collections::BTreeMap;

use super::CoreGraph;

/// Selection rule for shape-core enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationRule {
    pub min_points: usize,
    pub max_points: usize,
    /// Bound on every point's degree (the moment order that point carries).
    pub max_degree: Option<usize>,
    /// Bound on the number of primitives.
    pub max_weight: Option<usize>,
    pub require_connected: bool,
}

impl EnumerationRule {
    /// Connected multigraphs on 2..=`max_points` points with every point
    /// degree at most `max_degree`. With (4, 4) this yields 50 cores.
    pub fn connected(max_points: usize, max_degree: usize) -> Self {
        EnumerationRule {
            min_points: 2,
            max_points,
            max_degree: Some(max_degree),
            max_weight: None,
            require_connected: true,
        }
    }

    fn multiplicity_cap(&self) -> usize {
        match (self.max_degree, self.max_weight) {
            (Some(d), Some(w)) => d.min(w),
            (Some(d), None) => d,
            (None, Some(w)) => w,
            (None, None) => panic!("enumeration needs a degree or weight bound"),
        }
    }
}

/// Isomorphism-invariant encoding: the lexicographically smallest
/// serialization over all relabelings of the points. Equal outputs iff the
/// cores are isomorphic (edges and triples are relabeled together).
pub fn canonical_form(g: &CoreGraph) -> Vec<u8> {
    let n = g.num_points();
    let mut best: Option<Vec<u8>> = None;
    for perm in permutations(n) {
        let relabeled = g.relabel(&perm).expect("permutation of the point set");
        let mut bytes = Vec::with_capacity(3 + 2 * g.shape_weight() + 3 * g.color_weight());
        bytes.push(n as u8);
        bytes.push(relabeled.shape_weight() as u8);
        for &(i, j) in relabeled.shape_edges() {
            bytes.push(i as u8);
            bytes.push(j as u8);
        }
        bytes.push(relabeled.color_weight() as u8);
        for t in relabeled.color_triples() {
            bytes.extend(t.iter().map(|&i| i as u8));
        }
        if best.as_ref().map_or(true, |b| bytes < *b) {
            best = Some(bytes);
        }
    }
    best.unwrap_or_default()
}

/// All permutations of `1..=n` in lexicographic order.
pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (1..=n).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| cur[j] > cur[i]).expect("successor exists");
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
    out
}

/// Enumerates shape cores up to isomorphism under `rule`.
///
/// Labeled multigraphs are generated per point count over the pair order
/// `(1,2), (2,3), .., (k-1,k), (1,k)` followed by the remaining chords.
/// Each isomorphism class is represented by the labeling whose edge support
/// is lexicographically largest in that order (path, then cycle, then chord
/// edges), ties broken by the lexicographically smallest multiplicities.
/// Classes are listed by point count, then weight, then representative.
pub fn enumerate_cores(rule: &EnumerationRule) -> Vec<CoreGraph> {
    let cap = rule.multiplicity_cap();
    let mut out = Vec::new();
    for k in rule.min_points.max(2)..=rule.max_points {
        let pairs = pair_order(k);
        let mut classes: BTreeMap<Vec<u8>, (Vec<usize>, CoreGraph)> = BTreeMap::new();
        let mut mult = vec![0usize; pairs.len()];
        'sweep: loop {
            if let Some(g) = admissible(k, &pairs, &mult, rule) {
                let form = canonical_form(&g);
                let better = classes
                    .get(&form)
                    .map_or(true, |(best, _)| labeling_key(&mult) < labeling_key(best));
                if better {
                    classes.insert(form, (mult.clone(), g));
                }
            }
            for pos in (0..mult.len()).rev() {
                if mult[pos] < cap {
                    mult[pos] += 1;
                    for m in &mut mult[pos + 1..] {
                        *m = 0;
                    }
                    continue 'sweep;
                }
            }
            break;
        }
        let mut reps: Vec<(Vec<usize>, CoreGraph)> = classes.into_values().collect();
        reps.sort_by(|(ma, ga), (mb, gb)| {
            (ga.shape_weight(), labeling_key(ma)).cmp(&(gb.shape_weight(), labeling_key(mb)))
        });
        out.extend(reps.into_iter().map(|(_, g)| g));
    }
    out
}

/// Smaller is preferred: larger support first, then smaller multiplicities.
fn labeling_key(mult: &[usize]) -> (Vec<std::cmp::Reverse<bool>>, Vec<usize>) {
    (mult.iter().map(|&m| std::cmp::Reverse(m > 0)).collect(), mult.to_vec())
}

/// The 4-point enumeration of connected cores with point degree ≤ 4 used by
/// the 100-candidate independence analysis. `max_points`/`max_degree` give
/// the general connected rule.
pub fn enumerate_shape_cores(max_points: usize, max_degree: usize) -> Vec<CoreGraph> {
    enumerate_cores(&EnumerationRule::connected(max_points, max_degree))
}

/// Color cores on exactly `points` points built from triples with total
/// multiplicity 1..=`max_power`, every point covered, up to isomorphism.
/// With (3, 2) this is `V(1,2,3)` and `V(1,2,3)^2`.
pub fn enumerate_color_cores(points: usize, max_power: usize) -> Vec<CoreGraph> {
    let mut triples = Vec::new();
    for i in 1..=points {
        for j in i + 1..=points {
            for k in j + 1..=points {
                triples.push([i, j, k]);
            }
        }
    }
    let mut out = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut mult = vec![0usize; triples.len()];
    'outer: loop {
        let total: usize = mult.iter().sum();
        if total >= 1 && total <= max_power {
            let ts: Vec<[usize; 3]> = triples
                .iter()
                .zip(&mult)
                .flat_map(|(t, &m)| std::iter::repeat(*t).take(m))
                .collect();
            let g = CoreGraph::new(points, Vec::new(), ts).expect("valid triples");
            if g.color_multiplicities().iter().all(|&t| t > 0) && seen.insert(canonical_form(&g)) {
                out.push(g);
            }
        }
        for pos in (0..mult.len()).rev() {
            if mult[pos] < max_power {
                mult[pos] += 1;
                for m in &mut mult[pos + 1..] {
                    *m = 0;
                }
                continue 'outer;
            }
        }
        break;
    }
    out.sort_by_key(|g| g.color_weight());
    out
}

fn pair_order(k: usize) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (1..k).map(|i| (i, i + 1)).collect();
    if k >= 3 {
        pairs.push((1, k));
    }
    for i in 1..=k {
        for j in i + 2..=k {
            if !(i == 1 && j == k) {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

fn admissible(k: usize, pairs: &[(usize, usize)], mult: &[usize], rule: &EnumerationRule) -> Option<CoreGraph> {
    let weight: usize = mult.iter().sum();
    if weight == 0 || rule.max_weight.is_some_and(|w| weight > w) {
        return None;
    }
    let mut degree = vec![0usize; k];
    for (&(i, j), &m) in pairs.iter().zip(mult) {
        degree[i - 1] += m;
        degree[j - 1] += m;
    }
    if degree.iter().any(|&d| d == 0) {
        return None;
    }
    if rule.max_degree.is_some_and(|cap| degree.iter().any(|&d| d > cap)) {
        return None;
    }
    let edges: Vec<(usize, usize)> = pairs
        .iter()
        .zip(mult)
        .flat_map(|(&p, &m)| std::iter::repeat(p).take(m))
        .collect();
    let g = CoreGraph::new(k, edges, Vec::new()).expect("valid pairs");
    if rule.require_connected && !g.is_shape_connected() {
        return None;
    }
    Some(g)
}
