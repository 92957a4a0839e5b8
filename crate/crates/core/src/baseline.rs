//! The fixed 10-agent baseline graph with 28 edges used for edge-dropping
//! comparisons.

use crate::dagmath::{is_acyclic, nilpotent_index, AdjacencyMatrix};
use crate::error::{Error, Result};

pub const FIXED_BASELINE_EDGES: usize = 28;
/// Depth bound the baseline is published with. The matrix satisfies
/// `A^5 = O`; its nilpotent index is 4 (longest path of 3 edges).
pub const FIXED_BASELINE_DEPTH: usize = 5;

const ROWS: [[u8; 10]; 10] = [
    [0, 1, 0, 1, 0, 1, 1, 0, 1, 0],
    [0, 0, 0, 1, 0, 1, 1, 0, 1, 0],
    [0, 1, 0, 1, 0, 1, 1, 0, 1, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 1, 0, 1, 0, 0, 0, 0, 1, 0],
    [0, 0, 0, 1, 0, 0, 0, 0, 1, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 1, 0, 1, 0, 1, 1, 0, 1, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 1, 0, 1, 0, 1, 0, 0, 1, 0],
];

/// The baseline matrix exactly as published, without checks.
pub fn fixed_baseline_raw() -> AdjacencyMatrix {
    AdjacencyMatrix::from_rows(&ROWS).expect("static baseline matrix is well formed")
}

/// Loads the baseline and checks its integrity: 28 edges, acyclic, and
/// within the published depth bound.
pub fn fixed_baseline() -> Result<AdjacencyMatrix> {
    let a = fixed_baseline_raw();
    check_baseline(&a)?;
    Ok(a)
}

pub fn check_baseline(a: &AdjacencyMatrix) -> Result<()> {
    if a.edge_count() != FIXED_BASELINE_EDGES {
        return Err(Error::Format(format!(
            "baseline graph has {} edges, expected {FIXED_BASELINE_EDGES}",
            a.edge_count()
        )));
    }
    if !is_acyclic(a) {
        return Err(Error::Format("baseline graph is cyclic".into()));
    }
    match nilpotent_index(a) {
        Some(k) if k <= FIXED_BASELINE_DEPTH => Ok(()),
        other => Err(Error::Format(format!(
            "baseline graph nilpotent index {other:?} exceeds depth bound {FIXED_BASELINE_DEPTH}"
        ))),
    }
}
