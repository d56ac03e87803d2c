//! Exact-arithmetic computations with `BP`-comodules and their Landweber
//! exact base changes.
//!
//! Everything is computed degreewise inside a truncation window: the ambient
//! ring is `Z_(p)[v_1..v_N]` with `|v_i| = 2(p^i - 1)`, the co-operation ring
//! is `A[t_1..t_N]`, and all homological answers (primitives, torsion,
//! localizations, Ext in low cohomological degree) are obtained from Smith
//! normal form over `Z_(p)` applied to finitely many graded slices.  Results
//! are exact in the window they are stamped with; nothing is asserted beyond
//! it.

pub mod algebra;
pub mod comod;
pub mod context;
pub mod fgl;
pub mod hopf;
pub mod json;
pub mod landweber;
pub mod localize;
pub mod poly;
pub mod report;
pub mod ring;
pub mod scalar;
pub mod slice;
pub mod smith;

pub use algebra::{Algebra, Height};
pub use context::TruncationContext;
pub use fgl::StructureMaps;
pub use poly::Poly;
pub use scalar::Scalar;

use thiserror::Error;

/// Errors surfaced by the engine.  Mathematical *verdicts* (an axiom failing,
/// an ideal not being invariant) are not errors; they are reported in the
/// relevant report type.  Errors mean the request itself was ill-posed or
/// the truncation cannot support it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid algebra presentation: {0}")]
    InvalidAlgebra(String),
    #[error("invalid truncation context: {0}")]
    InvalidContext(String),
    #[error("degree {degree} outside the sound window [{lo}, {hi}]")]
    WindowExceeded { degree: i64, lo: i64, hi: i64 },
    #[error("negative exponent on non-invertible generator {0}")]
    NegativeExponent(String),
    #[error("substitution image for {gen} is not homogeneous of degree {expected}")]
    NonHomogeneousImage { gen: String, expected: i64 },
    #[error("no substitution image provided for generator {0}")]
    MissingImage(String),
    #[error("integrality failure in {what}: coefficient {coeff} of {monomial} is not p-local")]
    Integrality {
        what: String,
        coeff: String,
        monomial: String,
    },
    #[error("antipode solve failed for t_{0}: {1}")]
    AntipodeSolve(usize, String),
    #[error("height mismatch: {0} has height {1}, {2} has height {3}")]
    HeightMismatch(String, String, String, String),
    #[error("no catalog map from {0} to {1}")]
    NoCatalogMap(String, String),
    #[error("unsupported catalog pair: {0}")]
    UnsupportedPair(String),
    #[error("the zero comodule generates no torsion theory")]
    ZeroComodule,
    #[error("comodule is not valid: {0}")]
    InvalidComodule(String),
    #[error("window too small: {0} (achieved sub-window [{1}, {2}])")]
    WindowInsufficient(String, i64, i64),
    #[error("filtration did not terminate within {0} stages")]
    StageBound(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("base algebroid must be connective (no inverted generators) for the cobar complex")]
    PeriodicBase,
}

pub type Result<T> = std::result::Result<T, Error>;
