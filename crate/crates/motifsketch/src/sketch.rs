//! The streaming sketch itself.
//!
//! A sketch instance keeps one cell per (pattern edge i, ordered color pair
//! (c1, c2)). Every undirected stream edge {u, v} is processed as both
//! directed edges; direction w -> x contributes the group product
//! `X(2i, w) * X(2i+1, x)` to cell (i, color(w), color(x)).
//!
//! Two storage modes hold the same information. [`Algorithm::Direct`] adds
//! the embedded complex diagonal of each product into the cell as it
//! arrives. [`Algorithm::Counting`] only bumps a signed integer per matrix
//! power, so an update touches exactly `2k` integers however large the
//! matrix dimension is, and the complex table is assembled once at the end.
//! Deletions subtract what the matching insert added, so both modes are
//! fully linear: states over stream shards merge by cellwise addition.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{trace, AlgebraError, Embedder, GroupSpec};
use crate::hashing::{HalfEdgeHashes, HashingError};
use crate::pattern::{Pattern, PatternError};
use crate::streamio::{EdgeEvent, Op};

#[derive(Debug, Error)]
pub enum SketchError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Hashing(#[from] HashingError),
    #[error("algorithm 2 (counting) needs a matrix group, got {0}")]
    CountingNeedsMatrix(GroupSpec),
    #[error("hash bundle does not match the sketch configuration")]
    HashesMismatch,
    #[error("self-loop event at vertex {0}")]
    SelfLoop(u64),
    #[error("cannot merge sketches with different configurations")]
    MergeMismatch,
    #[error("tuple must list {expected} distinct colors, each below {colors}")]
    BadTuple { expected: usize, colors: u32 },
    #[error("the specialized finalizer needs the canonical 4-cycle edge layout")]
    NotCycle4,
    #[error("state carries test overrides and cannot be dumped")]
    OverriddenState,
    #[error("state dump version {0} is unsupported (expected {DUMP_VERSION})")]
    UnsupportedVersion(u32),
    #[error("corrupt state dump: {0}")]
    CorruptDump(String),
    #[error(transparent)]
    DumpPattern(#[from] PatternError),
    #[error(transparent)]
    DumpJson(#[from] serde_json::Error),
}

/// Update strategy; the table contents agree up to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// Add embedded complex diagonals on every update.
    Direct,
    /// Keep signed integer counters per matrix power (matrix groups only).
    Counting,
}

/// Everything that determines a sketch's behavior. Two states merge only if
/// all of this matches, seed included.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchConfig {
    pub pattern: Arc<Pattern>,
    pub group: GroupSpec,
    pub colors: u32,
    pub algorithm: Algorithm,
    pub seed: u64,
}

impl SketchConfig {
    pub fn new(
        pattern: Arc<Pattern>,
        group: GroupSpec,
        colors: u32,
        algorithm: Algorithm,
        seed: u64,
    ) -> Result<SketchConfig, SketchError> {
        group.validate()?;
        if (colors as usize) < pattern.vertex_count() {
            return Err(HashingError::TooFewColors {
                need: pattern.vertex_count(),
                got: colors,
            }
            .into());
        }
        if algorithm == Algorithm::Counting && !matches!(group, GroupSpec::SignedPowers { .. }) {
            return Err(SketchError::CountingNeedsMatrix(group));
        }
        Ok(SketchConfig {
            pattern,
            group,
            colors,
            algorithm,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Store {
    /// `k * C * C` cells of `dim` complex entries each.
    Direct(Vec<Complex64>),
    /// `k * C * C` cells of `d` signed counts each.
    Counting(Vec<i64>),
}

/// The complex cell table, either accumulated directly or assembled from
/// counters. Cell (i, c1, c2) holds the diagonal of the sum over directed
/// stream edges with that color signature of the edge-i group product.
pub struct Materialized {
    data: Vec<Complex64>,
    colors: usize,
    dim: usize,
}

impl Materialized {
    #[inline]
    pub fn z(&self, edge: usize, c1: usize, c2: usize) -> &[Complex64] {
        let cell = (edge * self.colors + c1) * self.colors + c2;
        &self.data[cell * self.dim..(cell + 1) * self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Finalization output: the count estimate and the same-scaled imaginary
/// component, which has zero mean and serves as a numerical diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchEstimate {
    pub estimate: f64,
    pub imaginary: f64,
}

/// One sketch instance over a stream.
#[derive(Debug, Clone)]
pub struct SketchState {
    config: SketchConfig,
    hashes: HalfEdgeHashes,
    embedder: Embedder,
    store: Store,
    scratch_u: Vec<crate::algebra::GroupElement>,
    scratch_v: Vec<crate::algebra::GroupElement>,
    events: u64,
    cells_touched: u64,
}

const DUMP_VERSION: u32 = 1;

impl SketchState {
    pub fn new(config: SketchConfig) -> Result<SketchState, SketchError> {
        let hashes = HalfEdgeHashes::new(
            config.pattern.clone(),
            config.group,
            config.colors,
            config.seed,
        )?;
        Self::with_hashes(config, hashes)
    }

    /// Builds a state around a pre-built (possibly overridden) hash bundle.
    pub fn with_hashes(
        config: SketchConfig,
        hashes: HalfEdgeHashes,
    ) -> Result<SketchState, SketchError> {
        if hashes.pattern().as_ref() != config.pattern.as_ref()
            || hashes.group() != config.group
            || hashes.colors() != config.colors
        {
            return Err(SketchError::HashesMismatch);
        }
        let k = config.pattern.edge_count();
        let c = config.colors as usize;
        let store = match config.algorithm {
            Algorithm::Direct => Store::Direct(vec![Complex64::ZERO; k * c * c * config.group.dim()]),
            Algorithm::Counting => {
                Store::Counting(vec![0i64; k * c * c * config.group.exponent_modulus() as usize])
            }
        };
        let half_edges = config.pattern.half_edge_count();
        Ok(SketchState {
            embedder: Embedder::new(config.group),
            hashes,
            store,
            scratch_u: vec![crate::algebra::GroupElement::IDENTITY; half_edges],
            scratch_v: vec![crate::algebra::GroupElement::IDENTITY; half_edges],
            events: 0,
            cells_touched: 0,
            config,
        })
    }

    pub fn config(&self) -> &SketchConfig {
        &self.config
    }

    pub fn hashes(&self) -> &HalfEdgeHashes {
        &self.hashes
    }

    pub fn events_processed(&self) -> u64 {
        self.events
    }

    /// Scalar cells written so far: `2k` counters per event when counting,
    /// `2k * dim` complex entries per event in direct mode.
    pub fn cells_touched(&self) -> u64 {
        self.cells_touched
    }

    /// Folds one stream event into the table, both directions at once.
    pub fn update(&mut self, ev: &EdgeEvent) -> Result<(), SketchError> {
        if ev.u == ev.v {
            return Err(SketchError::SelfLoop(ev.u));
        }
        let sign = match ev.op {
            Op::Insert => 1i64,
            Op::Delete => -1i64,
        };
        let mut scratch_u = std::mem::take(&mut self.scratch_u);
        let mut scratch_v = std::mem::take(&mut self.scratch_v);
        self.hashes.x_all(ev.u, &mut scratch_u);
        self.hashes.x_all(ev.v, &mut scratch_v);
        let cu = self.hashes.color(ev.u) as usize;
        let cv = self.hashes.color(ev.v) as usize;

        let group = self.config.group;
        for i in 0..self.config.pattern.edge_count() {
            let forward = group.multiply(scratch_u[2 * i], scratch_v[2 * i + 1]);
            self.bump(i, cu, cv, forward, sign);
            let backward = group.multiply(scratch_v[2 * i], scratch_u[2 * i + 1]);
            self.bump(i, cv, cu, backward, sign);
        }
        self.scratch_u = scratch_u;
        self.scratch_v = scratch_v;
        self.events += 1;
        Ok(())
    }

    #[inline]
    fn bump(&mut self, edge: usize, c1: usize, c2: usize, g: crate::algebra::GroupElement, sign: i64) {
        let c = self.config.colors as usize;
        let cell = (edge * c + c1) * c + c2;
        match &mut self.store {
            Store::Counting(counts) => {
                let d = self.config.group.exponent_modulus() as usize;
                let idx = cell * d + g.exponent as usize;
                let delta = if g.negated { -sign } else { sign };
                counts[idx] = counts[idx]
                    .checked_add(delta)
                    .expect("sketch counter overflowed i64");
                self.cells_touched += 1;
            }
            Store::Direct(sums) => {
                let dim = self.embedder.dim();
                self.embedder
                    .embed_add(g, sign as f64, &mut sums[cell * dim..(cell + 1) * dim]);
                self.cells_touched += dim as u64;
            }
        }
    }

    /// Assembles the complex cell table. Counters expand by direct power
    /// summation: entry l of a cell is `sum_j count[j] * w^(j*l)`.
    pub fn materialize(&self) -> Materialized {
        let dim = self.config.group.dim();
        let data = match &self.store {
            Store::Direct(sums) => sums.clone(),
            Store::Counting(counts) => {
                let d = self.config.group.exponent_modulus() as usize;
                let cells = counts.len() / d;
                let mut data = vec![Complex64::ZERO; cells * dim];
                for cell in 0..cells {
                    let src = &counts[cell * d..(cell + 1) * d];
                    let dst = &mut data[cell * dim..(cell + 1) * dim];
                    for (j, &count) in src.iter().enumerate() {
                        if count == 0 {
                            continue;
                        }
                        let weight = count as f64;
                        for (l, slot) in dst.iter_mut().enumerate() {
                            *slot += weight * self.embedder.omega_pow(j as u32, l);
                        }
                    }
                }
                data
            }
        };
        Materialized {
            data,
            colors: self.config.colors as usize,
            dim,
        }
    }

    fn estimate_scale(&self) -> f64 {
        let t = self.config.pattern.vertex_count();
        let c = self.config.colors as f64;
        let mut falling = 1.0;
        for j in 0..t {
            falling *= c - j as f64;
        }
        c.powi(t as i32)
            / (falling
                * self.config.group.dim() as f64
                * self.config.pattern.automorphisms() as f64)
    }

    /// Estimate over all ordered tuples of distinct colors. Cost grows as
    /// `C^t`; the canonical 4-cycle has a cheaper specialized path.
    pub fn finalize(&self) -> SketchEstimate {
        let m = self.materialize();
        let t = self.config.pattern.vertex_count();
        let c = self.config.colors as usize;
        let dim = m.dim();
        let mut sum = KahanVec::new(dim);
        let mut tuple = vec![0usize; t];
        let mut used = vec![false; c];
        let mut product = vec![Complex64::ZERO; dim];
        self.tuple_sum_rec(&m, 0, &mut tuple, &mut used, &mut product, &mut sum);
        self.scaled(trace(&sum.sum))
    }

    fn tuple_sum_rec(
        &self,
        m: &Materialized,
        depth: usize,
        tuple: &mut Vec<usize>,
        used: &mut Vec<bool>,
        product: &mut Vec<Complex64>,
        out: &mut KahanVec,
    ) {
        let t = self.config.pattern.vertex_count();
        if depth == t {
            product.fill(Complex64::new(1.0, 0.0));
            for (i, &(a, b)) in self.config.pattern.edges().iter().enumerate() {
                let z = m.z(i, tuple[a], tuple[b]);
                for (slot, &factor) in product.iter_mut().zip(z) {
                    *slot *= factor;
                }
            }
            for (l, &term) in product.iter().enumerate() {
                out.add(l, term);
            }
            return;
        }
        for color in 0..self.config.colors as usize {
            if used[color] {
                continue;
            }
            used[color] = true;
            tuple[depth] = color;
            self.tuple_sum_rec(m, depth + 1, tuple, used, product, out);
            used[color] = false;
        }
    }

    /// Estimate for the canonical 4-cycle in `O(C^3 * dim)` instead of
    /// `O(C^4)`: for each opposite color pair, multiply the two path sums
    /// and subtract the diagonal where both middle colors coincide.
    pub fn finalize_cycle4_fast(&self) -> Result<SketchEstimate, SketchError> {
        if !self.config.pattern.is_canonical_cycle4() {
            return Err(SketchError::NotCycle4);
        }
        let m = self.materialize();
        let c = self.config.colors as usize;
        let dim = m.dim();
        let mut sum = KahanVec::new(dim);
        let mut front = vec![Complex64::ZERO; dim];
        let mut back = vec![Complex64::ZERO; dim];
        let mut diagonal = vec![Complex64::ZERO; dim];
        for c0 in 0..c {
            for c2 in 0..c {
                if c0 == c2 {
                    continue;
                }
                front.fill(Complex64::ZERO);
                back.fill(Complex64::ZERO);
                diagonal.fill(Complex64::ZERO);
                for mid in 0..c {
                    if mid == c0 || mid == c2 {
                        continue;
                    }
                    let z0 = m.z(0, c0, mid);
                    let z1 = m.z(1, mid, c2);
                    let z2 = m.z(2, c2, mid);
                    let z3 = m.z(3, mid, c0);
                    for l in 0..dim {
                        let f = z0[l] * z1[l];
                        let b = z2[l] * z3[l];
                        front[l] += f;
                        back[l] += b;
                        diagonal[l] += f * b;
                    }
                }
                for l in 0..dim {
                    sum.add(l, front[l] * back[l] - diagonal[l]);
                }
            }
        }
        Ok(self.scaled(trace(&sum.sum)))
    }

    /// Trace of the cell product for one fixed color tuple, unscaled.
    /// Averaged over seeds (and divided by the matrix dimension) this
    /// estimates the number of color-compatible embeddings.
    pub fn tuple_product_trace(&self, tuple: &[u32]) -> Result<Complex64, SketchError> {
        let t = self.config.pattern.vertex_count();
        let distinct = tuple
            .iter()
            .all(|c| tuple.iter().filter(|&&x| x == *c).count() == 1);
        if tuple.len() != t || !distinct || tuple.iter().any(|&c| c >= self.config.colors) {
            return Err(SketchError::BadTuple {
                expected: t,
                colors: self.config.colors,
            });
        }
        let m = self.materialize();
        let mut product = vec![Complex64::new(1.0, 0.0); m.dim()];
        for (i, &(a, b)) in self.config.pattern.edges().iter().enumerate() {
            let z = m.z(i, tuple[a] as usize, tuple[b] as usize);
            for (slot, &factor) in product.iter_mut().zip(z) {
                *slot *= factor;
            }
        }
        Ok(trace(&product))
    }

    fn scaled(&self, s: Complex64) -> SketchEstimate {
        let scale = self.estimate_scale();
        SketchEstimate {
            estimate: s.re * scale,
            imaginary: s.im * scale,
        }
    }

    /// Adds another shard's cells into this state. Requires identical
    /// configuration (seed included); counting mode merges are exact.
    pub fn merge(&mut self, other: &SketchState) -> Result<(), SketchError> {
        if self.config != other.config
            || self.hashes.has_overrides()
            || other.hashes.has_overrides()
        {
            return Err(SketchError::MergeMismatch);
        }
        match (&mut self.store, &other.store) {
            (Store::Counting(mine), Store::Counting(theirs)) => {
                for (slot, &x) in mine.iter_mut().zip(theirs) {
                    *slot = slot.checked_add(x).expect("sketch counter overflowed i64");
                }
            }
            (Store::Direct(mine), Store::Direct(theirs)) => {
                for (slot, &x) in mine.iter_mut().zip(theirs) {
                    *slot += x;
                }
            }
            _ => return Err(SketchError::MergeMismatch),
        }
        self.events += other.events;
        self.cells_touched += other.cells_touched;
        Ok(())
    }

    /// Serializes config and cells as versioned JSON. Integer counters
    /// round-trip exactly; direct-mode sums round-trip exactly through
    /// shortest-representation float printing.
    pub fn to_dump_json(&self) -> Result<String, SketchError> {
        if self.hashes.has_overrides() {
            return Err(SketchError::OverriddenState);
        }
        let state = match &self.store {
            Store::Counting(counts) => DumpState::Counters(counts.clone()),
            Store::Direct(sums) => DumpState::Sums {
                re: sums.iter().map(|z| z.re).collect(),
                im: sums.iter().map(|z| z.im).collect(),
            },
        };
        let dump = Dump {
            version: DUMP_VERSION,
            pattern: self.config.pattern.to_text(),
            group: self.config.group,
            colors: self.config.colors,
            algorithm: self.config.algorithm,
            seed: self.config.seed,
            events: self.events,
            cells_touched: self.cells_touched,
            state,
        };
        Ok(serde_json::to_string(&dump)?)
    }

    pub fn from_dump_json(text: &str) -> Result<SketchState, SketchError> {
        let dump: Dump = serde_json::from_str(text)?;
        if dump.version != DUMP_VERSION {
            return Err(SketchError::UnsupportedVersion(dump.version));
        }
        let pattern = Pattern::parse(&dump.pattern, true)?;
        let config = SketchConfig::new(
            Arc::new(pattern),
            dump.group,
            dump.colors,
            dump.algorithm,
            dump.seed,
        )?;
        let mut state = SketchState::new(config)?;
        let expected = match &state.store {
            Store::Counting(counts) => counts.len(),
            Store::Direct(sums) => sums.len(),
        };
        state.store = match dump.state {
            DumpState::Counters(counts) => {
                if state.config.algorithm != Algorithm::Counting || counts.len() != expected {
                    return Err(SketchError::CorruptDump(format!(
                        "expected {expected} counters for this configuration"
                    )));
                }
                Store::Counting(counts)
            }
            DumpState::Sums { re, im } => {
                if state.config.algorithm != Algorithm::Direct
                    || re.len() != expected
                    || im.len() != expected
                {
                    return Err(SketchError::CorruptDump(format!(
                        "expected {expected} complex sums for this configuration"
                    )));
                }
                Store::Direct(
                    re.into_iter()
                        .zip(im)
                        .map(|(re, im)| Complex64::new(re, im))
                        .collect(),
                )
            }
        };
        state.events = dump.events;
        state.cells_touched = dump.cells_touched;
        Ok(state)
    }
}

#[derive(Serialize, Deserialize)]
struct Dump {
    version: u32,
    pattern: String,
    group: GroupSpec,
    colors: u32,
    algorithm: Algorithm,
    seed: u64,
    events: u64,
    cells_touched: u64,
    state: DumpState,
}

#[derive(Serialize, Deserialize)]
enum DumpState {
    Counters(Vec<i64>),
    Sums { re: Vec<f64>, im: Vec<f64> },
}

/// Compensated accumulator, one compensation term per diagonal entry.
struct KahanVec {
    sum: Vec<Complex64>,
    comp: Vec<Complex64>,
}

impl KahanVec {
    fn new(dim: usize) -> KahanVec {
        KahanVec {
            sum: vec![Complex64::ZERO; dim],
            comp: vec![Complex64::ZERO; dim],
        }
    }

    #[inline]
    fn add(&mut self, l: usize, term: Complex64) {
        let y = term - self.comp[l];
        let t = self.sum[l] + y;
        self.comp[l] = (t - self.sum[l]) - y;
        self.sum[l] = t;
    }
}
