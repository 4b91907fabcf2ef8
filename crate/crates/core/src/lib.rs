//! Memory properties of driven discrete-time state-space systems.
//!
//! A system `x_t = f(x_{t-1}, u_t)` is probed numerically for the echo state
//! property, fading memory, and state/input forgetting (forward and pullback,
//! at pointwise, state-uniform and uniform levels). Verdicts are statistical:
//! refutations carry replayable witnesses, supports are sampled evidence.
//! The implication diagram between these properties is checked against the
//! verdicts of each run.
//!
//! All numerical code is generic over [`Scalar`] (`f32`/`f64`); the `*F64`
//! aliases below are what the CLI uses.

pub mod diagram;
pub mod error;
pub mod flows;
pub mod metric;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod sequence;
pub mod systems;
pub mod testers;

pub use diagram::{check_diagram, ConditionFlags, DiagramCheck, ImplicationDiagram, Violation};
pub use error::{Error, Result};
pub use flows::{
    estimate_echo_state, extended_step, forward_flow, pullback_flow, pullback_image_diameter,
    sample_reachable, EchoConfig, EchoStateEstimate, TrajectoryPair,
};
pub use metric::Metric;
pub use report::{analyze, emit_report, AnalysisReport, Selection};
pub use scalar::Scalar;
pub use sequence::{
    concat_gamma, product_distance, shift_window, truncate_past, InputPoint, InputWindow,
    StatePoint, WindowLiteral,
};
pub use systems::{catalog_get, load_system, InputProcess, SystemSpec};
pub use testers::{
    crosscheck_lemma4, test_esp, test_fmp, test_forgetting, test_steady_state,
    test_uniform_attracting, LemmaItem, Level, Property, PropertyVerdict, TestConfig, Variant,
};

pub type InputPointF64 = InputPoint<f64>;
pub type StatePointF64 = StatePoint<f64>;
pub type InputWindowF64 = InputWindow<f64>;
pub type SystemSpecF64 = SystemSpec<f64>;
pub type InputProcessF64 = InputProcess<f64>;

pub type InputWindowF32 = InputWindow<f32>;
pub type SystemSpecF32 = SystemSpec<f32>;
pub type EchoStateEstimateF64 = EchoStateEstimate<f64>;
