//! Fixtures shared by the benchmarks.

use cocycle_spectra::cocycle::MatrixFamily;
use cocycle_spectra::exact::q;
use cocycle_spectra::{CocycleSpec, MarkovMeasure, QMatrix};

/// diag(4, 2, 1) against the 3×3 Pascal matrix, periodic point 0^∞ and
/// homoclinic insert 1.
pub fn twisting_spec() -> CocycleSpec {
    let a0 = QMatrix::diagonal(&[q(4), q(2), q(1)]);
    let a1 = QMatrix::from_i64(3, 3, &[1, 1, 1, 1, 2, 3, 1, 3, 6]);
    CocycleSpec::new(MatrixFamily::Exact(vec![a0, a1]), MarkovMeasure::uniform(2))
        .expect("valid spec")
        .with_periodic(vec![0])
        .expect("periodic word")
        .with_homoclinic(vec![1], None)
        .expect("homoclinic insert")
}
