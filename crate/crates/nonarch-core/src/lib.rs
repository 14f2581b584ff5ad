//! Exact computational kernels for non-archimedean geometry: p-adic scalar
//! arithmetic, Smith/Hermite forms over Z_p, splittable norms with the
//! Goldman-Iwahori metric, boundedness certificates for matrix groups, and
//! finitely supported measures with exact Prokhorov/Wasserstein distances.
//!
//! Everything is computed in exact rational arithmetic; absolute values are
//! carried as base-p exponents and never rounded through floats.

pub mod error;
pub mod padic;
pub mod linalg;
pub mod normspace;
pub mod boundedness;
pub mod measures;
pub mod scenarios;

pub use error::{Error, Result};
pub use padic::{ExtRat, FieldSpec, Scalar, Valuation};
pub use linalg::{echelon_span, snf_zp, Lattice, Matrix, SnfResult, Subspace};
pub use normspace::{kernel_lipschitz_probe, HomothetyClass, Seminorm, SplitNorm};
pub use boundedness::{certify, lattice_closure, newton_witness, BoundednessCert, MatGroup, Verdict, Word};
pub use measures::{
    apply_group, decompose_atoms, disintegrate, prokhorov, prokhorov_oracle, stab_search,
    tightness_check, wasserstein, Fibration, FiniteMeasure, MetricSpace, Point,
};
pub use scenarios::{list_scenarios, run_scenario, word_string, ScenarioReport};
