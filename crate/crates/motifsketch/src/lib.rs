//! Streaming estimation of small-subgraph counts.
//!
//! An edge stream (inserts and deletes) is folded into a fixed-size table of
//! group-valued sums, one cell per (pattern edge, ordered color pair). Vertex
//! colors and group values come from seeded 4k-wise independent hash
//! families, arranged per pattern vertex so that the product of values over
//! its incident half-edges is the identity. Finalizing the table over
//! color tuples yields an unbiased estimate of the number of pattern copies;
//! averaging independent sketch instances tightens it.

pub mod algebra;
pub mod estimator;
pub mod hashing;
pub mod oracle;
pub mod pattern;
pub mod sketch;
pub mod streamio;
