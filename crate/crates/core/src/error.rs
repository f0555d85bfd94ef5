use thiserror::Error;

/// Errors produced by the library.
///
/// Variants map onto the failure modes named by each operation; callers that
/// need to distinguish "the input was bad" from "the mathematics says no"
/// should match on the variant rather than the message.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("eigensolver diverged after {iterations} iterations")]
    EigenDiverged { iterations: usize },

    #[error("eigensolver residual {residual:.3e} exceeds tolerance")]
    EigenResidual { residual: f64 },

    #[error("degree out of range: {0}")]
    DegreeOutOfRange(String),

    #[error("basis is rank deficient (rank {rank} < {expected})")]
    RankDeficient { rank: usize, expected: usize },

    #[error("point lies in the kernel of the quasi-projective map (image norm {norm:.3e})")]
    InKernel { norm: f64 },

    #[error("multivector is not decomposable (Plücker residual {residual:.3e})")]
    NotDecomposable { residual: f64 },

    #[error("degree mismatch: {ell} + {codegree} != {d}")]
    DegreeMismatch { ell: usize, codegree: usize, d: usize },

    #[error("cylinder has zero measure")]
    ZeroMeasure,

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("symbol {symbol} outside alphabet of size {size}")]
    SymbolOutOfRange { symbol: u32, size: usize },

    #[error("potential cannot be evaluated at depth {depth}")]
    PotentialDepth { depth: usize },

    #[error("cocycle depth incompatible with inducing: {0}")]
    DepthIncompatible(String),

    #[error("cocycle is not finitely checkable: {0}")]
    NotFinitelyCheckable(String),

    #[error("holonomy diverged after {} iterations (last increment {:.3e})", increments.len(), increments.last().copied().unwrap_or(f64::NAN))]
    HolonomyDiverged { increments: Vec<f64> },

    #[error("points are not on a common local {0} set")]
    NotOnLocalSet(&'static str),

    #[error("Rauzy induction undefined: tie between lengths of symbols {winner} and {loser}")]
    RauzyTie { winner: usize, loser: usize },

    #[error("Zorich acceleration exceeded the cap of {cap} Rauzy steps")]
    ZorichCap { cap: u64, partial_steps: u64 },

    #[error("permutation pair is reducible")]
    Reducible,

    #[error("invalid permutation pair: {0}")]
    InvalidPermutation(String),

    #[error("invalid simplex point: {0}")]
    InvalidSimplexPoint(String),

    #[error("numerical overflow despite renormalization at step {step}")]
    Overflow { step: usize },

    #[error("degenerate frame at step {step}")]
    DegenerateFrame { step: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("eigenvalues do not have pairwise distinct moduli")]
    NotPinching,

    #[error("section contains a sum of eigenspaces (subset {subset:?})")]
    ContainsEigenspace { subset: Vec<usize> },

    #[error("exact arithmetic requested for a non-rational input")]
    NotExact,

    #[error("invalid cocycle spec: {0}")]
    InvalidSpec(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
