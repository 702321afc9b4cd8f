//! Exact ψ-class intersection numbers on moduli of weighted pointed stable
//! curves, the associated Virasoro operators, and KdV verification.

pub mod combinatorics;
pub mod correlators;
pub mod hfunction;
pub mod kdv;
pub mod report;
pub mod series;
pub mod virasoro;
pub mod weights;
