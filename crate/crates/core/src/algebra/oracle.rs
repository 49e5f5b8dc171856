use rayon::prelude::*;

use super::CoreGraph;
use crate::moments::{CompensatedSum, Raster};

/// Direct sum of the core's primitive product over every ordered tuple of
/// samples, one sample per core point. Exponential in the point count;
/// meant as a reference for small inputs.
pub fn tuple_sum(core: &CoreGraph, samples: &[[f64; 5]]) -> f64 {
    let n = samples.len();
    let k = core.num_points();
    if k == 0 {
        return 1.0;
    }
    let area: Vec<f64> = (0..n * n)
        .map(|ij| {
            let (a, b) = (&samples[ij / n], &samples[ij % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .collect();
    let volume = |a: &[f64; 5], b: &[f64; 5], c: &[f64; 5]| {
        a[2] * (b[3] * c[4] - b[4] * c[3]) - a[3] * (b[2] * c[4] - b[4] * c[2]) + a[4] * (b[2] * c[3] - b[3] * c[2])
    };
    let edges: Vec<(usize, usize)> = core.shape_edges().iter().map(|&(i, j)| (i - 1, j - 1)).collect();
    let triples: Vec<[usize; 3]> = core.color_triples().iter().map(|t| t.map(|i| i - 1)).collect();

    let partials: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|first| {
            let mut acc = CompensatedSum::default();
            let mut idx = vec![0usize; k];
            idx[0] = first;
            loop {
                let mut v = 1.0;
                for &(i, j) in &edges {
                    v *= area[idx[i] * n + idx[j]];
                }
                for t in &triples {
                    v *= volume(&samples[idx[t[0]]], &samples[idx[t[1]]], &samples[idx[t[2]]]);
                }
                acc.add(v);
                // odometer over idx[1..]
                let mut pos = k - 1;
                loop {
                    if pos == 0 {
                        return acc.value();
                    }
                    idx[pos] += 1;
                    if idx[pos] < n {
                        break;
                    }
                    idx[pos] = 0;
                    pos -= 1;
                }
            }
        })
        .collect();
    let mut total = CompensatedSum::default();
    partials.into_iter().for_each(|p| total.add(p));
    total.value()
}

/// Domain pixels of `r` as centered `[x, y, R, G, B]` samples.
pub fn centered_samples(r: &Raster) -> Vec<[f64; 5]> {
    let mut out = Vec::with_capacity(r.domain_size());
    for y in 0..r.height() {
        for x in 0..r.width() {
            if r.in_domain(x, y) {
                let c = r.pixel(x, y);
                out.push([x as f64 + 0.5, y as f64 + 0.5, c[0], c[1], c[2]]);
            }
        }
    }
    let n = out.len().max(1) as f64;
    let mut mean = [0.0; 5];
    for (d, m) in mean.iter_mut().enumerate() {
        let mut acc = CompensatedSum::default();
        out.iter().for_each(|s| acc.add(s[d]));
        *m = acc.value() / n;
    }
    for s in &mut out {
        for d in 0..5 {
            s[d] -= mean[d];
        }
    }
    out
}
