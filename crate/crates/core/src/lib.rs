//! Pulse-frequency-modulation equivalents of continuous-time sigma-delta
//! modulators.
//!
//! The crate simulates CIFB sigma-delta loops and their PFM equivalents in
//! closed form between events, checks that both produce the same output
//! sequence, and models the resulting quantization noise as PFM side bands,
//! aliased spurs and coding-limit overload.

pub mod bessel;
pub mod ctsd;
pub mod equivalence;
pub mod error;
pub mod export;
pub mod pfm;
pub mod signal;
pub mod spectral;
pub mod spur;
pub mod tf;
pub mod types;

pub use ctsd::{quantize, run_ctsd, CtsdTrace};
pub use equivalence::{
    build_pfm_equivalent, compare_outputs, run_induction_oracle, InductionTrace, MatchReport,
    Mode, PfmEquivalentSpec,
};
pub use error::{Error, Result, Violation};
pub use pfm::{run_pfm_core, run_pfm_equivalent, shape_and_sample, DeltaTrain, EventTrace};
pub use signal::{find_crossing, PiecewiseSignal};
pub use spectral::{
    carson_bandwidth, decompose_noise, periodogram, sideband_series, sinc_compensated_amplitude,
    NoiseDecomposition, SidebandModel, SidebandTerm, Spectrum, Window,
};
pub use spur::{
    alias_transfer_function, detect_coding_limit, nint, predict_spurs, sweep_dynamic_range,
    Mechanism, OverloadReport, Spur, SpurPrediction, SweepPoint,
};
pub use tf::{RationalTF, Variable};
pub use types::{
    compute_kd, rest_frequency, validate_loop_spec, Envelope, LoopSpec, QuantizerSpec,
    SignalExpr, Tone,
};
