//! Test-time optimization over relaxed output spaces: gradient-descent
//! inference, per-instance tailoring of inference networks, and warm-started
//! gradient descent.

pub mod gd;
pub mod tailor;

pub use gd::{
    gd_from_logits, gd_infer, gd_minimize, gd_oracle_tune, viterbi_gap, GdConfig, GdError, GdInit,
    GdOutcome, OracleChoice,
};
pub use tailor::{instance_tailor, warm_start_gd, RefineConfig, TailorOutcome};
