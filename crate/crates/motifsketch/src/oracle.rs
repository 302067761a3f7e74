//! Exact counting on a materialized graph.
//!
//! This is the ground truth the sketch is checked against: replay the stream
//! into an adjacency structure, then count pattern copies by backtracking
//! over injective embeddings. Deliberately simple and memory-hungry; it
//! refuses graphs past [`MAX_ORACLE_VERTICES`] vertices.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::pattern::Pattern;
use crate::streamio::{EdgeEvent, Op};

pub const MAX_ORACLE_VERTICES: usize = 10_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("graph has {0} vertices, above the exact-counting limit {MAX_ORACLE_VERTICES}")]
    TooLarge(usize),
    #[error("insert of already-present edge {{{0}, {1}}}")]
    DuplicateInsert(u64, u64),
    #[error("delete of absent edge {{{0}, {1}}}")]
    DeleteAbsent(u64, u64),
    #[error("self-loop at vertex {0}")]
    SelfLoop(u64),
    #[error("count does not fit in u64")]
    Overflow,
    #[error("expected {expected} pairwise-distinct colors in the tuple")]
    BadTuple { expected: usize },
}

/// An undirected simple graph held fully in memory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MaterializedGraph {
    adj: BTreeMap<u64, BTreeSet<u64>>,
    edges: u64,
}

impl MaterializedGraph {
    pub fn new() -> MaterializedGraph {
        MaterializedGraph::default()
    }

    /// Applies a full event sequence, rejecting inconsistent ops.
    pub fn replay<I: IntoIterator<Item = EdgeEvent>>(
        events: I,
    ) -> Result<MaterializedGraph, OracleError> {
        let mut g = MaterializedGraph::new();
        for ev in events {
            g.apply(&ev)?;
        }
        Ok(g)
    }

    pub fn apply(&mut self, ev: &EdgeEvent) -> Result<(), OracleError> {
        match ev.op {
            Op::Insert => self.insert_edge(ev.u, ev.v),
            Op::Delete => self.delete_edge(ev.u, ev.v),
        }
    }

    pub fn insert_edge(&mut self, u: u64, v: u64) -> Result<(), OracleError> {
        if u == v {
            return Err(OracleError::SelfLoop(u));
        }
        if self.has_edge(u, v) {
            return Err(OracleError::DuplicateInsert(u.min(v), u.max(v)));
        }
        self.adj.entry(u).or_default().insert(v);
        self.adj.entry(v).or_default().insert(u);
        self.edges += 1;
        Ok(())
    }

    pub fn delete_edge(&mut self, u: u64, v: u64) -> Result<(), OracleError> {
        if u == v {
            return Err(OracleError::SelfLoop(u));
        }
        if !self.has_edge(u, v) {
            return Err(OracleError::DeleteAbsent(u.min(v), u.max(v)));
        }
        for (a, b) in [(u, v), (v, u)] {
            let set = self.adj.get_mut(&a).unwrap();
            set.remove(&b);
            if set.is_empty() {
                self.adj.remove(&a);
            }
        }
        self.edges -= 1;
        Ok(())
    }

    pub fn has_edge(&self, u: u64, v: u64) -> bool {
        self.adj.get(&u).is_some_and(|s| s.contains(&v))
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> u64 {
        self.edges
    }

    pub fn vertices(&self) -> impl Iterator<Item = u64> + '_ {
        self.adj.keys().copied()
    }

    pub fn neighbors(&self, v: u64) -> impl Iterator<Item = u64> + '_ {
        self.adj.get(&v).into_iter().flatten().copied()
    }

    /// Number of copies of the pattern: injective homomorphisms divided by
    /// the pattern's automorphism count. Edge orientations in the pattern
    /// are irrelevant here.
    pub fn count_pattern(&self, pattern: &Pattern) -> Result<u64, OracleError> {
        let homs = self.count_embeddings(pattern, None)?;
        debug_assert_eq!(homs % pattern.automorphisms(), 0);
        Ok(homs / pattern.automorphisms())
    }

    /// Number of injective homomorphisms whose image realizes the given
    /// color tuple: pattern vertex `b` must land on a host vertex of color
    /// `tuple[b]`. Automorphic images count separately.
    pub fn count_color_compatible(
        &self,
        pattern: &Pattern,
        color: impl Fn(u64) -> u32,
        tuple: &[u32],
    ) -> Result<u64, OracleError> {
        let t = pattern.vertex_count();
        let distinct = tuple
            .iter()
            .all(|c| tuple.iter().filter(|&&x| x == *c).count() == 1);
        if tuple.len() != t || !distinct {
            return Err(OracleError::BadTuple { expected: t });
        }
        self.count_embeddings(pattern, Some((&color, tuple)))
    }

    fn count_embeddings(
        &self,
        pattern: &Pattern,
        colors: Option<(&dyn Fn(u64) -> u32, &[u32])>,
    ) -> Result<u64, OracleError> {
        let n = self.vertex_count();
        if n > MAX_ORACLE_VERTICES {
            return Err(OracleError::TooLarge(n));
        }
        let t = pattern.vertex_count();
        if n < t {
            return Ok(0);
        }

        let hosts: Vec<u64> = self.vertices().collect();
        let index: BTreeMap<u64, usize> = hosts
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i))
            .collect();
        let neighbors: Vec<Vec<usize>> = hosts
            .iter()
            .map(|&v| self.neighbors(v).map(|w| index[&w]).collect())
            .collect();
        let host_color: Option<Vec<u32>> = colors
            .as_ref()
            .map(|(f, _)| hosts.iter().map(|&v| f(v)).collect());

        // Place high-degree pattern vertices first and keep the frontier
        // connected so candidates stay confined to neighbor lists.
        let order = placement_order(pattern);
        let mut assigned: Vec<Option<usize>> = vec![None; t];
        let mut used = vec![false; n];
        let mut count = 0u64;

        struct Ctx<'a> {
            pattern: &'a Pattern,
            neighbors: &'a [Vec<usize>],
            host_color: Option<&'a [u32]>,
            tuple: Option<&'a [u32]>,
            order: &'a [usize],
        }

        fn extend(
            ctx: &Ctx,
            depth: usize,
            assigned: &mut Vec<Option<usize>>,
            used: &mut Vec<bool>,
            count: &mut u64,
        ) -> Result<(), OracleError> {
            if depth == ctx.order.len() {
                *count = count.checked_add(1).ok_or(OracleError::Overflow)?;
                return Ok(());
            }
            let b = ctx.order[depth];
            let placed_neighbors: Vec<usize> = pattern_neighbors(ctx.pattern, b)
                .filter_map(|nb| assigned[nb])
                .collect();

            let try_host = |host: usize,
                            assigned: &mut Vec<Option<usize>>,
                            used: &mut Vec<bool>,
                            count: &mut u64|
             -> Result<(), OracleError> {
                if used[host] {
                    return Ok(());
                }
                if ctx.neighbors[host].len() < ctx.pattern.degree(b) {
                    return Ok(());
                }
                if let (Some(hc), Some(tuple)) = (ctx.host_color, ctx.tuple) {
                    if hc[host] != tuple[b] {
                        return Ok(());
                    }
                }
                if !placed_neighbors
                    .iter()
                    .all(|&p| ctx.neighbors[host].contains(&p))
                {
                    return Ok(());
                }
                assigned[b] = Some(host);
                used[host] = true;
                extend(ctx, depth + 1, assigned, used, count)?;
                assigned[b] = None;
                used[host] = false;
                Ok(())
            };

            if let Some(&anchor) = placed_neighbors.first() {
                // Walk the smallest adjacent list instead of all hosts.
                let probe = placed_neighbors
                    .iter()
                    .copied()
                    .min_by_key(|&p| ctx.neighbors[p].len())
                    .unwrap_or(anchor);
                let candidates = ctx.neighbors[probe].clone();
                for host in candidates {
                    try_host(host, assigned, used, count)?;
                }
            } else {
                for host in 0..ctx.neighbors.len() {
                    try_host(host, assigned, used, count)?;
                }
            }
            Ok(())
        }

        let ctx = Ctx {
            pattern,
            neighbors: &neighbors,
            host_color: host_color.as_deref(),
            tuple: colors.map(|(_, tuple)| tuple),
            order: &order,
        };
        extend(&ctx, 0, &mut assigned, &mut used, &mut count)?;
        Ok(count)
    }
}

fn pattern_neighbors(pattern: &Pattern, b: usize) -> impl Iterator<Item = usize> + '_ {
    pattern.edges().iter().filter_map(move |&(x, y)| {
        if x == b {
            Some(y)
        } else if y == b {
            Some(x)
        } else {
            None
        }
    })
}

fn placement_order(pattern: &Pattern) -> Vec<usize> {
    let t = pattern.vertex_count();
    let mut order = Vec::with_capacity(t);
    let mut placed = vec![false; t];
    for step in 0..t {
        let pick = (0..t)
            .filter(|&b| !placed[b])
            .max_by_key(|&b| {
                let back = pattern_neighbors(pattern, b)
                    .filter(|&nb| placed[nb])
                    .count();
                // First pick: raw degree. Later: connectivity, then degree.
                if step == 0 {
                    (pattern.degree(b), 0, t - b)
                } else {
                    (back, pattern.degree(b), t - b)
                }
            })
            .unwrap();
        placed[pick] = true;
        order.push(pick);
    }
    order
}
