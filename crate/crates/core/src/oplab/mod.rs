//! Dense small-grid realization of the operators behind the detection rule:
//! the generator `H`, the one-step propagator `W_dt`, the boundary
//! concentration `B`, the detection POVM, and the dilation `J` into
//! boundary-valued functions of time.
//!
//! Everything here is built from the same [`Propagator`](crate::propagator::Propagator)
//! used for production runs, so the identities verified are identities of the
//! scheme actually in use.

mod dense;
mod dilation;

pub use dense::{
    build_dense, povm_completeness, semigroup_contraction_check, spectrum_check, ContractionReport,
    DenseOperators, PovmReport, SpectrumReport, MAX_DENSE_DIM,
};
pub use dilation::{
    build_dilation_field, dilation_stats, intertwine_check, DilationField, DilationStats,
    MAX_TAIL_FRACTION,
};
