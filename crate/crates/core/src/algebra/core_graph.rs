use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// An invariant core as a (hyper)multigraph over points `1..=num_points`.
///
/// Each shape edge `{i, j}` stands for the primitive `x_i y_j - x_j y_i`
/// and each color triple `{i, j, k}` for the RGB determinant `V(i, j, k)`.
/// Edges are stored with `i < j` and triples ascending, which fixes the
/// sign of every primitive; both lists are kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoreGraph {
    num_points: usize,
    shape_edges: Vec<(usize, usize)>,
    color_triples: Vec<[usize; 3]>,
}

impl CoreGraph {
    pub fn new(num_points: usize, shape_edges: Vec<(usize, usize)>, color_triples: Vec<[usize; 3]>) -> Result<Self> {
        let check = |i: usize| {
            if i == 0 || i > num_points {
                Err(Error::domain(format!("point index {i} outside 1..={num_points}")))
            } else {
                Ok(())
            }
        };
        let mut edges = Vec::with_capacity(shape_edges.len());
        for (i, j) in shape_edges {
            check(i)?;
            check(j)?;
            if i == j {
                return Err(Error::domain(format!("shape edge ({i},{i}) repeats a point")));
            }
            edges.push((i.min(j), i.max(j)));
        }
        let mut triples = Vec::with_capacity(color_triples.len());
        for mut t in color_triples {
            for &i in &t {
                check(i)?;
            }
            t.sort_unstable();
            if t[0] == t[1] || t[1] == t[2] {
                return Err(Error::domain(format!("color triple {t:?} repeats a point")));
            }
            triples.push(t);
        }
        edges.sort_unstable();
        triples.sort_unstable();
        Ok(CoreGraph {
            num_points,
            shape_edges: edges,
            color_triples: triples,
        })
    }

    /// Builds a core whose point count is the largest referenced index.
    pub fn from_parts(shape_edges: Vec<(usize, usize)>, color_triples: Vec<[usize; 3]>) -> Result<Self> {
        let n = shape_edges
            .iter()
            .flat_map(|&(i, j)| [i, j])
            .chain(color_triples.iter().flatten().copied())
            .max()
            .unwrap_or(0);
        CoreGraph::new(n, shape_edges, color_triples)
    }

    /// Core with only shape edges.
    pub fn shape(edges: &[(usize, usize)]) -> Result<Self> {
        CoreGraph::from_parts(edges.to_vec(), Vec::new())
    }

    /// Color core `V(1,2,3)^power`.
    pub fn color_power(power: usize) -> Self {
        CoreGraph::from_parts(Vec::new(), vec![[1, 2, 3]; power]).expect("valid triple")
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn shape_edges(&self) -> &[(usize, usize)] {
        &self.shape_edges
    }

    pub fn color_triples(&self) -> &[[usize; 3]] {
        &self.color_triples
    }

    /// Number of shape primitives (m₁, also called W).
    pub fn shape_weight(&self) -> usize {
        self.shape_edges.len()
    }

    /// Number of color primitives (m₂, also called M).
    pub fn color_weight(&self) -> usize {
        self.color_triples.len()
    }

    /// Per-point shape degree, index 0 ↔ point 1.
    pub fn shape_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.num_points];
        for &(i, j) in &self.shape_edges {
            d[i - 1] += 1;
            d[j - 1] += 1;
        }
        d
    }

    /// Per-point color multiplicity, index 0 ↔ point 1.
    pub fn color_multiplicities(&self) -> Vec<usize> {
        let mut t = vec![0; self.num_points];
        for tr in &self.color_triples {
            for &i in tr {
                t[i - 1] += 1;
            }
        }
        t
    }

    /// Number of points touched by at least one shape edge (N₁).
    pub fn shape_points(&self) -> usize {
        self.shape_degrees().iter().filter(|&&d| d > 0).count()
    }

    /// Number of points touched by at least one color triple (N₂).
    pub fn color_points(&self) -> usize {
        self.color_multiplicities().iter().filter(|&&t| t > 0).count()
    }

    /// Union of two cores over a shared point set.
    pub fn combine(&self, other: &CoreGraph) -> CoreGraph {
        let mut edges = self.shape_edges.clone();
        edges.extend_from_slice(&other.shape_edges);
        let mut triples = self.color_triples.clone();
        triples.extend_from_slice(&other.color_triples);
        CoreGraph::new(self.num_points.max(other.num_points), edges, triples).expect("indices already validated")
    }

    /// The core with its points renamed by `perm` (`perm[i-1]` is the new
    /// name of point `i`).
    pub fn relabel(&self, perm: &[usize]) -> Result<CoreGraph> {
        if perm.len() != self.num_points {
            return Err(Error::contract("permutation length differs from point count"));
        }
        let edges = self
            .shape_edges
            .iter()
            .map(|&(i, j)| (perm[i - 1], perm[j - 1]))
            .collect();
        let triples = self
            .color_triples
            .iter()
            .map(|t| [perm[t[0] - 1], perm[t[1] - 1], perm[t[2] - 1]])
            .collect();
        CoreGraph::new(self.num_points, edges, triples)
    }

    pub fn is_shape_connected(&self) -> bool {
        let active: Vec<usize> = (1..=self.num_points)
            .filter(|&i| self.shape_degrees()[i - 1] > 0)
            .collect();
        let Some(&start) = active.first() else {
            return true;
        };
        let mut seen = vec![false; self.num_points + 1];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for &(i, j) in &self.shape_edges {
                let w = if i == v {
                    j
                } else if j == v {
                    i
                } else {
                    continue;
                };
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        active.iter().all(|&i| seen[i])
    }

    /// Text form: `shape: (1,2)^2 (1,3); color: V(1,2,3)^2`.
    pub fn to_dsl(&self) -> String {
        self.to_string()
    }
}

fn grouped<T: PartialEq + Copy>(items: &[T]) -> Vec<(T, usize)> {
    let mut out: Vec<(T, usize)> = Vec::new();
    for &it in items {
        match out.last_mut() {
            Some((last, n)) if *last == it => *n += 1,
            _ => out.push((it, 1)),
        }
    }
    out
}

impl fmt::Display for CoreGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut sections = Vec::new();
        if !self.shape_edges.is_empty() {
            let parts: Vec<String> = grouped(&self.shape_edges)
                .into_iter()
                .map(|((i, j), n)| {
                    if n == 1 {
                        format!("({i},{j})")
                    } else {
                        format!("({i},{j})^{n}")
                    }
                })
                .collect();
            sections.push(format!("shape: {}", parts.join(" ")));
        }
        if !self.color_triples.is_empty() {
            let parts: Vec<String> = grouped(&self.color_triples)
                .into_iter()
                .map(|([i, j, k], n)| {
                    if n == 1 {
                        format!("V({i},{j},{k})")
                    } else {
                        format!("V({i},{j},{k})^{n}")
                    }
                })
                .collect();
            sections.push(format!("color: {}", parts.join(" ")));
        }
        write!(f, "{}", sections.join("; "))
    }
}

impl FromStr for CoreGraph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Parser {
            src: s.as_bytes(),
            pos: 0,
        }
        .parse()
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            pos: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{}`", c as char))
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected a number");
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        match text.parse::<usize>() {
            Ok(0) | Err(_) => {
                self.pos = start;
                self.err("point indices and powers must be positive integers")
            }
            Ok(n) => Ok(n),
        }
    }

    fn power(&mut self) -> Result<usize> {
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.number()
        } else {
            Ok(1)
        }
    }

    fn word(&mut self) -> Result<&str> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected `shape:` or `color:`");
        }
        Ok(std::str::from_utf8(&self.src[start..self.pos]).expect("ascii letters"))
    }

    fn parse(mut self) -> Result<CoreGraph> {
        let mut edges = Vec::new();
        let mut triples = Vec::new();
        let mut seen_section = false;
        loop {
            if self.peek().is_none() {
                break;
            }
            let word_pos = {
                self.skip_ws();
                self.pos
            };
            let word = self.word()?.to_string();
            self.expect(b':')?;
            match word.as_str() {
                "shape" => loop {
                    match self.peek() {
                        Some(b'(') => {
                            let at = self.pos;
                            self.pos += 1;
                            let i = self.number()?;
                            self.expect(b',')?;
                            let j = self.number()?;
                            self.expect(b')')?;
                            let n = self.power()?;
                            if i == j {
                                self.pos = at;
                                return self.err("a shape primitive needs two distinct points");
                            }
                            edges.extend(std::iter::repeat((i, j)).take(n));
                        }
                        Some(b';') | None => break,
                        Some(_) => return self.err("expected `(i,j)` shape primitive"),
                    }
                },
                "color" => loop {
                    match self.peek() {
                        Some(b'V') => {
                            let at = self.pos;
                            self.pos += 1;
                            self.expect(b'(')?;
                            let i = self.number()?;
                            self.expect(b',')?;
                            let j = self.number()?;
                            self.expect(b',')?;
                            let k = self.number()?;
                            self.expect(b')')?;
                            let n = self.power()?;
                            if i == j || j == k || i == k {
                                self.pos = at;
                                return self.err("a color primitive needs three distinct points");
                            }
                            triples.extend(std::iter::repeat([i, j, k]).take(n));
                        }
                        Some(b';') | None => break,
                        Some(_) => return self.err("expected `V(i,j,k)` color primitive"),
                    }
                },
                _ => {
                    self.pos = word_pos;
                    return self.err(format!("unknown section `{word}`"));
                }
            }
            seen_section = true;
            if self.peek() == Some(b';') {
                self.pos += 1;
            }
        }
        if !seen_section {
            return self.err("empty core");
        }
        CoreGraph::from_parts(edges, triples)
    }
}
