pub mod cocycle;
pub mod error;
pub mod exact;
pub mod exterior;
pub mod grassmann_dynamics;
pub mod holonomy;
pub mod hyperplane_combinatorics;
pub mod lyapunov;
pub mod numeric;
pub mod rauzy_zorich;
pub mod shift_space;
pub mod simplicity;

pub use cocycle::{CocycleSpec, MatrixFamily, SymbolicPoint};
pub use error::{Error, Result};
pub use exact::{QMatrix, Rational};
pub use exterior::{GrassmannPoint, HyperplaneSection, IndexSubset, MultiVector, QuasiProjectiveMap};
pub use numeric::{CMatrix, EigenData, RandomSource, SingularData, C64};
pub use shift_space::{InducedSystem, MarkovMeasure, Word};
