//! Seeded hash families for colors and half-edge group values.
//!
//! Every hash is a random polynomial over the Mersenne prime field
//! `p = 2^61 - 1`, evaluated by Horner's rule and reduced onto its output
//! range. A pattern with k edges uses polynomials with 4k coefficients,
//! giving 4k-wise independence, which is what the variance analysis of the
//! sketch needs. Coefficients are derived from a single master seed through
//! a fixed avalanche mix, so a sketch is reproducible from (config, seed)
//! alone.
//!
//! Vertex ids enter the field reduced mod p; ids that differ by a multiple
//! of `2^61 - 1` therefore hash identically. Output reduction mod `range`
//! carries bias below `range / p < 2^-50`, far under every tolerance used
//! here.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::algebra::{GroupElement, GroupSpec};
use crate::pattern::Pattern;

/// The Mersenne prime `2^61 - 1` underlying all hash polynomials.
pub const FIELD_PRIME: u64 = (1 << 61) - 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HashingError {
    #[error("need at least {need} colors for a {need}-vertex pattern, got {got}")]
    TooFewColors { need: usize, got: u32 },
    #[error("half-edge {0} is distinguished; its value is a product, not a hash")]
    DistinguishedOverride(usize),
    #[error("fixed element has exponent {exponent} but the group modulus is {modulus}")]
    ElementOutOfGroup { exponent: u32, modulus: u32 },
}

/// The 64-bit finalizer from splitmix64.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable seed for a numbered sub-stream of a master seed.
///
/// The index is spread by the golden-ratio constant, offset so that index 0
/// does not collapse to the master seed, then avalanche-mixed. Hashers of
/// one sketch and instances of one ensemble both use this with disjoint
/// index spaces.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x243f_6a88_85a3_08d3))
}

struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        mix64(self.state)
    }
}

#[inline]
fn reduce(x: u128) -> u64 {
    let p = FIELD_PRIME as u128;
    let folded = (x & p) + (x >> 61);
    let folded = (folded & p) + (folded >> 61);
    let r = folded as u64;
    if r >= FIELD_PRIME {
        r - FIELD_PRIME
    } else {
        r
    }
}

/// A random polynomial over `F_p` reduced onto `0..range`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyHasher {
    coeffs: Vec<u64>,
    range: u64,
}

impl PolyHasher {
    /// Draws `coefficient_count` field coefficients from the seed. A hash
    /// with c coefficients is c-wise independent over field points.
    pub fn from_seed(seed: u64, coefficient_count: usize, range: u64) -> PolyHasher {
        assert!(range > 0 && coefficient_count > 0);
        let mut rng = SplitMix64 { state: seed };
        let coeffs = (0..coefficient_count)
            // Bias from the mod is below 2^-57.
            .map(|_| rng.next() % FIELD_PRIME)
            .collect();
        PolyHasher { coeffs, range }
    }

    pub fn range(&self) -> u64 {
        self.range
    }

    #[inline]
    pub fn eval(&self, x: u64) -> u64 {
        let x = x % FIELD_PRIME;
        let mut acc = 0u64;
        for &c in self.coeffs.iter().rev() {
            acc = reduce(acc as u128 * x as u128 + c as u128);
        }
        acc % self.range
    }
}

/// Where a half-edge's group value comes from.
#[derive(Debug, Clone)]
enum XSource {
    Hash(PolyHasher),
    /// Distinguished: inverse of the product of the sibling values.
    Product,
    /// Test hook: a constant element regardless of vertex.
    Fixed(GroupElement),
}

/// Vertex coloring source.
#[derive(Debug, Clone)]
pub enum ColorSource {
    Hash(PolyHasher),
    /// Test hook: every vertex gets the same color.
    Constant(u32),
    /// Test hook: explicit assignment with a fallback for unknown vertices.
    Table {
        map: HashMap<u64, u32>,
        fallback: u32,
    },
}

/// The full hash bundle of one sketch instance: a color hash plus one group
/// value per half-edge, with distinguished half-edges computed as products.
#[derive(Debug, Clone)]
pub struct HalfEdgeHashes {
    pattern: Arc<Pattern>,
    group: GroupSpec,
    colors: u32,
    sources: Vec<XSource>,
    color_source: ColorSource,
    overridden: bool,
}

impl HalfEdgeHashes {
    /// Builds the bundle for a pattern from one seed.
    ///
    /// Derivation indices: the color hash uses index 0 and the hash of
    /// half-edge `j` uses index `1 + j`, so all polynomials are disjoint
    /// sub-streams of the seed. Each polynomial carries `4k` coefficients.
    pub fn new(
        pattern: Arc<Pattern>,
        group: GroupSpec,
        colors: u32,
        seed: u64,
    ) -> Result<HalfEdgeHashes, HashingError> {
        if (colors as usize) < pattern.vertex_count() {
            return Err(HashingError::TooFewColors {
                need: pattern.vertex_count(),
                got: colors,
            });
        }
        let coefficient_count = 4 * pattern.edge_count();
        let color_source = ColorSource::Hash(PolyHasher::from_seed(
            derive_seed(seed, 0),
            coefficient_count,
            colors as u64,
        ));
        let sources = (0..pattern.half_edge_count())
            .map(|j| {
                if pattern.is_distinguished(j) {
                    XSource::Product
                } else {
                    XSource::Hash(PolyHasher::from_seed(
                        derive_seed(seed, 1 + j as u64),
                        coefficient_count,
                        group.order() as u64,
                    ))
                }
            })
            .collect();
        Ok(HalfEdgeHashes {
            pattern,
            group,
            colors,
            sources,
            color_source,
            overridden: false,
        })
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn group(&self) -> GroupSpec {
        self.group
    }

    pub fn colors(&self) -> u32 {
        self.colors
    }

    /// Number of half-edges backed by their own polynomial (2k - t for a
    /// leafless pattern).
    pub fn hasher_count(&self) -> usize {
        self.sources
            .iter()
            .filter(|s| matches!(s, XSource::Hash(_)))
            .count()
    }

    /// True once a test hook replaced any hash; such a bundle is no longer
    /// reproducible from its seed.
    pub fn has_overrides(&self) -> bool {
        self.overridden
    }

    /// Replaces the coloring (test hook).
    pub fn override_colors(&mut self, source: ColorSource) {
        self.color_source = source;
        self.overridden = true;
    }

    /// Pins a non-distinguished half-edge to a constant element (test hook).
    pub fn override_x(&mut self, half_edge: usize, g: GroupElement) -> Result<(), HashingError> {
        if self.pattern.is_distinguished(half_edge) {
            return Err(HashingError::DistinguishedOverride(half_edge));
        }
        if g.exponent >= self.group.exponent_modulus() {
            return Err(HashingError::ElementOutOfGroup {
                exponent: g.exponent,
                modulus: self.group.exponent_modulus(),
            });
        }
        self.sources[half_edge] = XSource::Fixed(g);
        self.overridden = true;
        Ok(())
    }

    /// Color of a stream vertex, in `0..colors`.
    #[inline]
    pub fn color(&self, v: u64) -> u32 {
        match &self.color_source {
            ColorSource::Hash(h) => h.eval(v) as u32,
            ColorSource::Constant(c) => *c,
            ColorSource::Table { map, fallback } => map.get(&v).copied().unwrap_or(*fallback),
        }
    }

    /// Group value of one half-edge at one stream vertex.
    pub fn x(&self, half_edge: usize, v: u64) -> GroupElement {
        match &self.sources[half_edge] {
            XSource::Hash(h) => self.group.element(h.eval(v) as u32),
            XSource::Fixed(g) => *g,
            XSource::Product => {
                let b = self.pattern.vertex_of(half_edge);
                let mut acc = self.group.identity();
                for &sibling in self.pattern.gamma(b) {
                    if sibling == half_edge {
                        continue;
                    }
                    acc = self
                        .group
                        .multiply(acc, self.group.inverse(self.x(sibling, v)));
                }
                acc
            }
        }
    }

    /// Fills `out[j]` with the value of half-edge `j` at `v` for all `j`.
    ///
    /// Equivalent to calling [`HalfEdgeHashes::x`] per half-edge but shares
    /// the non-distinguished evaluations that the products consume.
    pub fn x_all(&self, v: u64, out: &mut [GroupElement]) {
        debug_assert_eq!(out.len(), self.pattern.half_edge_count());
        for (j, source) in self.sources.iter().enumerate() {
            out[j] = match source {
                XSource::Hash(h) => self.group.element(h.eval(v) as u32),
                XSource::Fixed(g) => *g,
                XSource::Product => GroupElement::IDENTITY,
            };
        }
        for b in 0..self.pattern.vertex_count() {
            let distinguished = self.pattern.distinguished(b);
            let mut acc = self.group.identity();
            for &sibling in self.pattern.gamma(b) {
                if sibling != distinguished {
                    acc = self.group.multiply(acc, self.group.inverse(out[sibling]));
                }
            }
            out[distinguished] = acc;
        }
    }
}
