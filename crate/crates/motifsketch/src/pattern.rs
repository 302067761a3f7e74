//! Pattern graphs and their half-edge layout.
//!
//! A pattern is a small connected graph whose copies we count in the stream.
//! Edge `i` (0-based) owns half-edge `2i` at its tail and `2i + 1` at its
//! head. For a pattern vertex `b`, `gamma(b)` lists the half-edges incident
//! to `b`; the smallest one is the vertex's distinguished half-edge, whose
//! hash value is defined as the inverse of the product of the others so that
//! the product over each `gamma(b)` is the identity.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::sync::Arc;

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest vertex count the exhaustive automorphism search accepts.
pub const MAX_VERTICES: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatternError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("pattern needs at least 2 and at most {MAX_VERTICES} vertices, got {0}")]
    BadVertexCount(usize),
    #[error("pattern needs at least one edge")]
    NoEdges,
    #[error("edge endpoint {0} is out of range 1..={1}")]
    VertexOutOfRange(usize, usize),
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge between vertices {0} and {1}")]
    DuplicateEdge(usize, usize),
    #[error("pattern is not connected")]
    Disconnected,
    #[error("vertex {0} has degree 1; leafless patterns are required unless leaves are explicitly allowed")]
    LeafVertex(usize),
}

/// A validated pattern graph with its half-edge bookkeeping.
///
/// Vertices are `0..t` internally; error messages and the text format label
/// them `1..=t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    t: usize,
    edges: Vec<(usize, usize)>,
    gamma: Vec<Vec<usize>>,
    distinguished: Vec<usize>,
    automorphisms: u64,
}

impl Pattern {
    /// Builds a pattern from directed edge pairs over vertices `0..t`.
    ///
    /// Orientations only fix the half-edge numbering; counting itself treats
    /// the pattern as undirected. `allow_leaves` admits degree-1 vertices,
    /// whose single (distinguished) half-edge then hashes to the identity.
    pub fn from_edges(
        t: usize,
        edges: &[(usize, usize)],
        allow_leaves: bool,
    ) -> Result<Pattern, PatternError> {
        if !(2..=MAX_VERTICES).contains(&t) {
            return Err(PatternError::BadVertexCount(t));
        }
        if edges.is_empty() {
            return Err(PatternError::NoEdges);
        }
        let mut seen = HashSet::new();
        for &(a, b) in edges {
            if a >= t {
                return Err(PatternError::VertexOutOfRange(a + 1, t));
            }
            if b >= t {
                return Err(PatternError::VertexOutOfRange(b + 1, t));
            }
            if a == b {
                return Err(PatternError::SelfLoop(a + 1));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(PatternError::DuplicateEdge(a.min(b) + 1, a.max(b) + 1));
            }
        }

        let mut gamma = vec![Vec::new(); t];
        for (i, &(a, b)) in edges.iter().enumerate() {
            gamma[a].push(2 * i);
            gamma[b].push(2 * i + 1);
        }
        for (b, incident) in gamma.iter().enumerate() {
            if incident.len() < 2 {
                // Degree 0 also trips the connectivity check below, but a
                // leaf only trips this one.
                if !(allow_leaves && incident.len() == 1) {
                    return Err(PatternError::LeafVertex(b + 1));
                }
            }
        }

        // Connectivity over the undirected edge set.
        let mut reached = vec![false; t];
        let mut stack = vec![0usize];
        reached[0] = true;
        while let Some(v) = stack.pop() {
            for &(a, b) in edges {
                let other = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                if !reached[other] {
                    reached[other] = true;
                    stack.push(other);
                }
            }
        }
        if reached.iter().any(|r| !r) {
            return Err(PatternError::Disconnected);
        }

        let distinguished = gamma.iter().map(|inc| inc[0]).collect();
        let automorphisms = count_automorphisms(t, edges);
        Ok(Pattern {
            t,
            edges: edges.to_vec(),
            gamma,
            distinguished,
            automorphisms,
        })
    }

    /// Parses the text form: first line `t k`, then `k` lines `a b` with
    /// 1-based endpoints. `#` starts a comment, blank lines are skipped.
    pub fn parse(text: &str, allow_leaves: bool) -> Result<Pattern, PatternError> {
        let mut header: Option<(usize, usize)> = None;
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut header_line = 0usize;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(PatternError::Parse {
                    line,
                    msg: format!("expected two integers, got '{content}'"),
                });
            }
            let a: usize = fields[0].parse().map_err(|_| PatternError::Parse {
                line,
                msg: format!("'{}' is not a positive integer", fields[0]),
            })?;
            let b: usize = fields[1].parse().map_err(|_| PatternError::Parse {
                line,
                msg: format!("'{}' is not a positive integer", fields[1]),
            })?;
            match header {
                None => {
                    header = Some((a, b));
                    header_line = line;
                }
                Some((t, k)) => {
                    if edges.len() == k {
                        return Err(PatternError::Parse {
                            line,
                            msg: format!("more than the declared {k} edges"),
                        });
                    }
                    if a == 0 || a > t {
                        return Err(PatternError::VertexOutOfRange(a, t));
                    }
                    if b == 0 || b > t {
                        return Err(PatternError::VertexOutOfRange(b, t));
                    }
                    edges.push((a - 1, b - 1));
                }
            }
        }
        let (t, k) = header.ok_or(PatternError::Parse {
            line: 1,
            msg: "empty pattern".to_string(),
        })?;
        if edges.len() != k {
            return Err(PatternError::Parse {
                line: header_line,
                msg: format!("declared {k} edges but found {}", edges.len()),
            });
        }
        Pattern::from_edges(t, &edges, allow_leaves)
    }

    /// Named patterns available on the command line.
    pub fn builtin(name: &str) -> Option<Arc<Pattern>> {
        let edges: &[(usize, usize)] = match name {
            "triangle" => &[(0, 1), (1, 2), (2, 0)],
            "cycle4" => &[(0, 1), (1, 2), (2, 3), (3, 0)],
            "cycle5" => &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)],
            "k4" => &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
            _ => return None,
        };
        let t = edges.iter().map(|&(a, b)| a.max(b)).max().unwrap() + 1;
        Some(Arc::new(Pattern::from_edges(t, edges, false).unwrap()))
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["triangle", "cycle4", "cycle5", "k4"]
    }

    /// Text form that [`Pattern::parse`] accepts back.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {}", self.t, self.edges.len()).unwrap();
        for &(a, b) in &self.edges {
            writeln!(out, "{} {}", a + 1, b + 1).unwrap();
        }
        out
    }

    pub fn vertex_count(&self) -> usize {
        self.t
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn half_edge_count(&self) -> usize {
        2 * self.edges.len()
    }

    /// Directed endpoint pair of edge `i`.
    pub fn edge(&self, i: usize) -> (usize, usize) {
        self.edges[i]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Vertex a half-edge is incident to: tail for even, head for odd.
    pub fn vertex_of(&self, half_edge: usize) -> usize {
        let (a, b) = self.edges[half_edge / 2];
        if half_edge % 2 == 0 {
            a
        } else {
            b
        }
    }

    /// Half-edges incident to vertex `b`, ascending.
    pub fn gamma(&self, b: usize) -> &[usize] {
        &self.gamma[b]
    }

    /// The smallest half-edge index at vertex `b`.
    pub fn distinguished(&self, b: usize) -> usize {
        self.distinguished[b]
    }

    pub fn is_distinguished(&self, half_edge: usize) -> bool {
        self.distinguished[self.vertex_of(half_edge)] == half_edge
    }

    pub fn degree(&self, b: usize) -> usize {
        self.gamma[b].len()
    }

    pub fn min_degree(&self) -> usize {
        self.gamma.iter().map(Vec::len).min().unwrap()
    }

    /// Number of adjacency-preserving vertex permutations.
    pub fn automorphisms(&self) -> u64 {
        self.automorphisms
    }

    /// True for the specific edge layout (1,2),(2,3),(3,4),(4,1) that the
    /// specialized 4-cycle finalizer understands.
    pub fn is_canonical_cycle4(&self) -> bool {
        self.t == 4 && self.edges == [(0, 1), (1, 2), (2, 3), (3, 0)]
    }
}

fn count_automorphisms(t: usize, edges: &[(usize, usize)]) -> u64 {
    let set: HashSet<(usize, usize)> = edges
        .iter()
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    (0..t)
        .permutations(t)
        .filter(|perm| {
            set.iter()
                .all(|&(a, b)| set.contains(&(perm[a].min(perm[b]), perm[a].max(perm[b]))))
        })
        .count() as u64
}

/// 4-cycle with one chord, the 5-edge worked example used across the crate's
/// unit tests.
#[cfg(test)]
pub(crate) fn diamond() -> Pattern {
    Pattern::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (2, 0)], false).unwrap()
}
