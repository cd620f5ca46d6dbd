//! Pauli-transfer-matrix simulation of character-benchmarking protocols.
//!
//! The crate covers the Pauli group and Clifford tableaux, dense Pauli
//! transfer matrices, the gate-noise and SPAM models, the character
//! benchmarking protocol for non-Clifford targets, Clifford character
//! benchmarking of the Pauli group, and interleaved fidelity intervals.

pub mod clifford;
pub mod crb;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod gates;
pub mod interleaved;
pub mod noise;
pub mod pauli;
pub mod ptcb;
pub mod ptm;
pub mod rng;
pub mod sweep;

pub use clifford::{find_clifford_mapping, CliffordGate, CliffordMapping, CliffordTableau};
pub use error::{Error, Result};
pub use noise::{NoiseSample, NoiseSpec, SpamSpec};
pub use pauli::{character_coefficient, Letter, PauliString, Phase};
pub use ptcb::{
    estimate_fidelity, estimate_pair, estimate_pair_inverse_variant, EstimatorSettings,
    FidelityEstimate, InnerSampling, PairEstimate, PairSelection, PairSource, PtcbModel,
    PtcbSettings, SurvivalRecord, Variant,
};
pub use ptm::{EffectPL, StateVectorPL, TransferMatrix};
pub use experiment::{load_config, parse_config, ExperimentConfig, Validate};
pub use sweep::{run_sweep, summarize, SeriesPoint, SweepKind, SweepPlan, SweepRow};
