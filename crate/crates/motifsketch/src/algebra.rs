//! Group arithmetic for sketch cells.
//!
//! Sketch entries live in one of two finite groups: the scalar r-th roots of
//! unity, or the signed powers of the diagonal matrix `M = diag(1, w, ...,
//! w^{d-1})` with `w = e^{2*pi*i/d}`. Both groups average to zero over all
//! their elements, which is what makes cross terms in the sketch vanish in
//! expectation. Elements are kept in a compact (sign, exponent) form; the
//! complex entries of the diagonal only materialize through an [`Embedder`].

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("group parameter must be at least 2, got {0}")]
    OrderTooSmall(u32),
    #[error("unrecognized group '{0}', expected roots:<r> or matrix:<d>")]
    UnrecognizedSpec(String),
}

/// Which group the sketch draws its random values from. Serializes as its
/// textual form, `roots:<r>` or `matrix:<d>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupSpec {
    /// Scalar roots of unity `e^{2*pi*i*exp/r}`, `r >= 2`.
    RootsOfUnity { r: u32 },
    /// `+M^j` and `-M^j` for `M = diag(1, w, ..., w^{d-1})`, `d >= 2`.
    SignedPowers { d: u32 },
}

/// A group element in compact form.
///
/// For [`GroupSpec::RootsOfUnity`] the element is `w_r^exponent` and
/// `negated` stays `false`. For [`GroupSpec::SignedPowers`] the element is
/// `(-1)^negated * M^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GroupElement {
    pub negated: bool,
    pub exponent: u32,
}

impl GroupElement {
    pub const IDENTITY: GroupElement = GroupElement {
        negated: false,
        exponent: 0,
    };
}

impl GroupSpec {
    /// Number of elements: `r` for roots of unity, `2d` for signed powers.
    pub fn order(&self) -> u32 {
        match *self {
            GroupSpec::RootsOfUnity { r } => r,
            GroupSpec::SignedPowers { d } => 2 * d,
        }
    }

    /// Dimension of the embedded diagonal (1 for scalars, `d` for matrices).
    pub fn dim(&self) -> usize {
        match *self {
            GroupSpec::RootsOfUnity { .. } => 1,
            GroupSpec::SignedPowers { d } => d as usize,
        }
    }

    /// Modulus the exponent lives under (`r` or `d`).
    pub fn exponent_modulus(&self) -> u32 {
        match *self {
            GroupSpec::RootsOfUnity { r } => r,
            GroupSpec::SignedPowers { d } => d,
        }
    }

    pub fn validate(&self) -> Result<(), AlgebraError> {
        let n = match *self {
            GroupSpec::RootsOfUnity { r } => r,
            GroupSpec::SignedPowers { d } => d,
        };
        if n < 2 {
            return Err(AlgebraError::OrderTooSmall(n));
        }
        Ok(())
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement::IDENTITY
    }

    pub fn multiply(&self, a: GroupElement, b: GroupElement) -> GroupElement {
        let m = self.exponent_modulus();
        debug_assert!(a.exponent < m && b.exponent < m);
        let exponent = (a.exponent + b.exponent) % m;
        match *self {
            GroupSpec::RootsOfUnity { .. } => {
                debug_assert!(!a.negated && !b.negated);
                GroupElement {
                    negated: false,
                    exponent,
                }
            }
            GroupSpec::SignedPowers { .. } => GroupElement {
                negated: a.negated ^ b.negated,
                exponent,
            },
        }
    }

    pub fn inverse(&self, a: GroupElement) -> GroupElement {
        let m = self.exponent_modulus();
        debug_assert!(a.exponent < m);
        GroupElement {
            negated: a.negated,
            exponent: if a.exponent == 0 { 0 } else { m - a.exponent },
        }
    }

    /// Element with the given index in `0..order()`.
    ///
    /// Roots of unity are indexed by exponent. Signed powers put the `+M^j`
    /// half first: index `j` is `+M^j`, index `d + j` is `-M^j`. Hash values
    /// reduced mod `order()` map onto elements through this function.
    pub fn element(&self, index: u32) -> GroupElement {
        debug_assert!(index < self.order());
        match *self {
            GroupSpec::RootsOfUnity { .. } => GroupElement {
                negated: false,
                exponent: index,
            },
            GroupSpec::SignedPowers { d } => GroupElement {
                negated: index >= d,
                exponent: index % d,
            },
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = GroupElement> + '_ {
        (0..self.order()).map(|i| self.element(i))
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            GroupSpec::RootsOfUnity { r } => write!(f, "roots:{r}"),
            GroupSpec::SignedPowers { d } => write!(f, "matrix:{d}"),
        }
    }
}

impl Serialize for GroupSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GroupSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for GroupSpec {
    type Err = AlgebraError;

    fn from_str(s: &str) -> Result<Self, AlgebraError> {
        let spec = match s.split_once(':') {
            Some(("roots", n)) => GroupSpec::RootsOfUnity {
                r: n.parse()
                    .map_err(|_| AlgebraError::UnrecognizedSpec(s.to_string()))?,
            },
            Some(("matrix", n)) => GroupSpec::SignedPowers {
                d: n.parse()
                    .map_err(|_| AlgebraError::UnrecognizedSpec(s.to_string()))?,
            },
            _ => return Err(AlgebraError::UnrecognizedSpec(s.to_string())),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Precomputed complex roots of unity for one [`GroupSpec`].
///
/// `omega_pow(e, l)` returns `w^{e*l}` where `w = e^{2*pi*i/n}` and `n` is
/// the exponent modulus. Powers that land on the real or imaginary axis are
/// stored exactly, so for example `roots:4` works with exact `1, i, -1, -i`.
#[derive(Debug, Clone)]
pub struct Embedder {
    spec: GroupSpec,
    omega: Vec<Complex64>,
}

impl Embedder {
    pub fn new(spec: GroupSpec) -> Embedder {
        let n = spec.exponent_modulus() as usize;
        let omega = (0..n)
            .map(|j| {
                if 4 * j % n == 0 {
                    // Quarter turns come out exact instead of via sin/cos.
                    match 4 * j / n {
                        0 => Complex64::new(1.0, 0.0),
                        1 => Complex64::new(0.0, 1.0),
                        2 => Complex64::new(-1.0, 0.0),
                        _ => Complex64::new(0.0, -1.0),
                    }
                } else {
                    let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                    Complex64::new(theta.cos(), theta.sin())
                }
            })
            .collect();
        Embedder { spec, omega }
    }

    pub fn spec(&self) -> GroupSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// `w^{exponent * l}` with the product reduced mod `n` before lookup.
    #[inline]
    pub fn omega_pow(&self, exponent: u32, l: usize) -> Complex64 {
        let n = self.omega.len();
        self.omega[(exponent as usize * l) % n]
    }

    /// Diagonal entries of the element as complex numbers.
    pub fn embed(&self, g: GroupElement) -> Vec<Complex64> {
        let mut out = vec![Complex64::ZERO; self.dim()];
        self.embed_add(g, 1.0, &mut out);
        out
    }

    /// Adds `weight` times the embedded element into `out` entrywise.
    #[inline]
    pub fn embed_add(&self, g: GroupElement, weight: f64, out: &mut [Complex64]) {
        debug_assert_eq!(out.len(), self.dim());
        let w = if g.negated { -weight } else { weight };
        match self.spec {
            GroupSpec::RootsOfUnity { .. } => {
                out[0] += w * self.omega_pow(g.exponent, 1);
            }
            GroupSpec::SignedPowers { .. } => {
                for (l, slot) in out.iter_mut().enumerate() {
                    *slot += w * self.omega_pow(g.exponent, l);
                }
            }
        }
    }
}

/// Sum of diagonal entries.
pub fn trace(entries: &[Complex64]) -> Complex64 {
    entries.iter().sum()
}
