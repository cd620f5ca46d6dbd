//! Experiment configuration files.
//!
//! Configurations are strict JSON: unknown keys are rejected and every
//! omitted field takes a documented default, so a loaded configuration
//! re-serializes to a complete, self-describing record of the run.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::crb::{CrbSettings, QSelection};
use crate::error::{Error, Result};
use crate::gates;
use crate::noise::{composite_noise, dephasing_channel, sample_member, EnsembleParams, NoiseSpec, SpamSpec};
use crate::ptcb::{
    EstimatorSettings, InnerSampling, PairSelection, PairSource, PtcbModel, PtcbSettings, SegmentTable, Variant,
};
use crate::ptm::{ptm_unitary, TransferMatrix};

/// Target gate of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GateConfig {
    Toffoli {},
    Identity { n: usize },
    /// Row-major `[re, im]` entries of a `2ⁿ × 2ⁿ` unitary.
    Unitary { n: usize, matrix: Vec<[f64; 2]> },
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig::Toffoli {}
    }
}

impl GateConfig {
    pub fn num_qubits(&self) -> usize {
        match self {
            GateConfig::Toffoli {} => 3,
            GateConfig::Identity { n } | GateConfig::Unitary { n, .. } => *n,
        }
    }

    pub fn ideal_ptm(&self) -> Result<TransferMatrix> {
        match self {
            GateConfig::Toffoli {} => ptm_unitary(&gates::toffoli(), 3),
            GateConfig::Identity { n } => TransferMatrix::identity(*n),
            GateConfig::Unitary { n, matrix } => {
                let d = 1usize << n;
                if matrix.len() != d * d {
                    return Err(Error::config(
                        "gate.matrix",
                        format!("expected {} entries, found {}", d * d, matrix.len()),
                    ));
                }
                let u = DMatrix::from_row_iterator(d, d, matrix.iter().map(|c| Complex64::new(c[0], c[1])));
                ptm_unitary(&u, *n).map_err(|e| Error::config("gate.matrix", e.to_string()))
            }
        }
    }
}

/// A noise channel, either parametric or read from a PTM dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseConfig {
    Identity {},
    Composite(NoiseSpec),
    /// Member `index` of the calibrated ensemble drawn under the run seed.
    EnsembleMember { index: usize },
    /// Independent dephasing of strength `p` on every qubit.
    Dephasing { p: f64 },
    PtmFile { path: PathBuf },
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig::Identity {}
    }
}

impl NoiseConfig {
    /// Channel on `n` qubits. `field` names the config key for error messages.
    pub fn build(&self, n: usize, ensemble: &EnsembleParams, seed: u64, field: &str) -> Result<TransferMatrix> {
        let tag = |e: Error| if e.is_config() { e } else { Error::config(field, e.to_string()) };
        match self {
            NoiseConfig::Identity {} => TransferMatrix::identity(n),
            NoiseConfig::Composite(spec) => composite_noise(spec, n).map_err(tag),
            NoiseConfig::EnsembleMember { index } => Ok(sample_member(*index, n, ensemble, seed).map_err(tag)?.channel),
            NoiseConfig::Dephasing { p } => dephasing_channel(*p, n).map_err(tag),
            NoiseConfig::PtmFile { path } => {
                let file = File::open(path).map_err(|e| Error::config(field, format!("{}: {e}", path.display())))?;
                let m = TransferMatrix::read_dump(BufReader::new(file)).map_err(tag)?;
                if m.num_qubits() != n {
                    return Err(Error::config(
                        field,
                        format!("PTM acts on {} qubits, the gate on {n}", m.num_qubits()),
                    ));
                }
                Ok(m)
            }
        }
    }
}

/// How each `g(m)` averages its Pauli tuples.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerMode {
    #[default]
    Sampled,
    Exhaustive,
    Expectation,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    #[default]
    Importance,
    Exhaustive,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceMode {
    #[default]
    Protocol,
    ExactPtm,
}

/// Pauli-group benchmarking settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrbConfig {
    pub depths: Vec<usize>,
    pub inner_mode: InnerMode,
    pub inner_samples: usize,
    pub shots: u64,
    /// Number of `Q` drawn with replacement; 0 measures every Pauli.
    pub q_samples: usize,
}

impl Default for CrbConfig {
    fn default() -> Self {
        CrbConfig {
            depths: vec![1, 2, 4, 8],
            inner_mode: InnerMode::Sampled,
            inner_samples: 100,
            shots: 0,
            q_samples: 0,
        }
    }
}

impl CrbConfig {
    pub fn settings(&self) -> CrbSettings {
        CrbSettings {
            depths: self.depths.clone(),
            inner: inner_sampling(self.inner_mode, self.inner_samples),
            shots: self.shots,
            record: false,
        }
    }

    pub fn selection(&self) -> QSelection {
        match self.q_samples {
            0 => QSelection::All,
            count => QSelection::Sampled { count },
        }
    }
}

fn inner_sampling(mode: InnerMode, count: usize) -> InnerSampling {
    match mode {
        InnerMode::Sampled => InnerSampling::Sampled { count },
        InnerMode::Exhaustive => InnerSampling::Exhaustive,
        InnerMode::Expectation => InnerSampling::Expectation,
    }
}

fn default_depths() -> Vec<usize> {
    vec![0, 1]
}
fn default_outer() -> usize {
    30
}
fn default_inner() -> usize {
    100
}

/// One protocol run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub gate: GateConfig,
    /// Gate noise `Λ`, with `Ũ = 𝒰Λ`.
    #[serde(default)]
    pub noise: NoiseConfig,
    /// Noise `ℰ` following every Pauli gate; absent means noiseless Paulis.
    #[serde(default)]
    pub pauli_noise: Option<NoiseConfig>,
    #[serde(default)]
    pub spam: SpamSpec,
    #[serde(default = "default_depths")]
    pub depths: Vec<usize>,
    /// Outer samples `M` (importance-sampling segments).
    #[serde(default = "default_outer")]
    pub outer_samples: usize,
    /// Inner samples `M′` (Pauli tuples per depth).
    #[serde(default = "default_inner")]
    pub inner_samples: usize,
    #[serde(default)]
    pub inner_mode: InnerMode,
    /// Repetitions per circuit; 0 uses exact probabilities.
    #[serde(default)]
    pub shots: u64,
    #[serde(default)]
    pub fit: bool,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default)]
    pub pair_selection: SelectionMode,
    #[serde(default)]
    pub pair_source: SourceMode,
    #[serde(default)]
    pub crb: CrbConfig,
    #[serde(default)]
    pub ensemble: EnsembleParams,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

/// A validated configuration turned into runnable objects.
#[derive(Clone, Debug)]
pub struct ResolvedExperiment {
    pub n: usize,
    pub model: PtcbModel,
    pub estimator: EstimatorSettings,
    pub crb: CrbSettings,
    pub q_selection: QSelection,
}

impl ExperimentConfig {
    pub fn protocol_settings(&self) -> PtcbSettings {
        PtcbSettings {
            depths: self.depths.clone(),
            inner: inner_sampling(self.inner_mode, self.inner_samples),
            shots: self.shots,
            fit: self.fit,
            record: false,
        }
    }

    pub fn estimator_settings(&self) -> EstimatorSettings {
        EstimatorSettings {
            selection: match self.pair_selection {
                SelectionMode::Importance => PairSelection::Importance {
                    count: self.outer_samples,
                },
                SelectionMode::Exhaustive => PairSelection::Exhaustive,
            },
            source: match self.pair_source {
                SourceMode::Protocol => PairSource::Protocol(self.protocol_settings()),
                SourceMode::ExactPtm => PairSource::ExactPtm,
            },
            variant: self.variant,
        }
    }

    /// Range and consistency checks, reported against field paths.
    pub fn validate(&self) -> Result<()> {
        let n = self.gate.num_qubits();
        if !(1..=crate::pauli::MAX_QUBITS).contains(&n) {
            return Err(Error::config("gate.n", format!("{n} is outside 1..=8")));
        }
        let ideal = self.gate.ideal_ptm()?;
        if self.depths.is_empty() {
            return Err(Error::config("depths", "must not be empty"));
        }
        if !(self.depths.contains(&0) && self.depths.contains(&1)) {
            return Err(Error::config("depths", "must include 0 and 1"));
        }
        if self.fit && self.depths.len() < 2 {
            return Err(Error::config("fit", "needs at least two depths"));
        }
        if self.inner_samples == 0 {
            return Err(Error::config("inner_samples", "must be at least 1"));
        }
        if self.inner_mode == InnerMode::Expectation && self.shots > 0 {
            return Err(Error::config("shots", "must be 0 with inner_mode = expectation"));
        }
        for (field, v) in [("spam.prep_flip", self.spam.prep_flip), ("spam.meas_flip", self.spam.meas_flip)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(field, format!("{v} is outside [0, 1]")));
            }
        }
        if self.pair_selection == SelectionMode::Importance {
            if self.outer_samples == 0 {
                return Err(Error::config("outer_samples", "must be at least 1"));
            }
            let segments = SegmentTable::new(&ideal)?.len();
            if self.outer_samples > segments {
                return Err(Error::config(
                    "outer_samples",
                    format!("{} exceeds the {segments} importance-sampling segments", self.outer_samples),
                ));
            }
        }
        if self.variant == Variant::Standard && !ideal.is_symmetric(1e-12) {
            return Err(Error::config(
                "variant",
                "the gate's PTM is not symmetric; use the inverse variant",
            ));
        }
        self.ensemble
            .validate()
            .map_err(|e| Error::config("ensemble", e.to_string()))?;
        let crb_settings = self.crb.settings();
        crb_settings.validate()?;
        Ok(())
    }

    pub fn resolve(&self) -> Result<ResolvedExperiment> {
        self.validate()?;
        let n = self.gate.num_qubits();
        let ideal = self.gate.ideal_ptm()?;
        let noise = self.noise.build(n, &self.ensemble, self.seed, "noise")?;
        let mut model = PtcbModel::new(ideal, &noise, self.spam)?;
        if let Some(e) = &self.pauli_noise {
            model = model.with_twirl_noise(e.build(n, &self.ensemble, self.seed, "pauli_noise")?)?;
        }
        Ok(ResolvedExperiment {
            n,
            model,
            estimator: self.estimator_settings(),
            crb: self.crb.settings(),
            q_selection: self.crb.selection(),
        })
    }
}

/// Parse and validate a JSON document.
pub fn parse_config<T: DeserializeOwned + Validate>(text: &str) -> Result<T> {
    let value: T = serde_json::from_str(text).map_err(|e| Error::Parse {
        what: "configuration",
        reason: e.to_string(),
    })?;
    value.check()?;
    Ok(value)
}

/// Read, parse and validate a JSON configuration file.
pub fn load_config<T: DeserializeOwned + Validate>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("<file>", format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Types that can check themselves after parsing.
pub trait Validate {
    fn check(&self) -> Result<()>;
}

impl Validate for ExperimentConfig {
    fn check(&self) -> Result<()> {
        self.validate()
    }
}
