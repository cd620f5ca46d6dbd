//! Character benchmarking of the Pauli group.
//!
//! Every Pauli gate is implemented as `ℰ𝒫` with one shared noise channel.
//! A depth-`m` sequence is `P₁P₀, P₂P₁†, …, Pₘ†`, i.e. `m + 1` noisy gates;
//! its character-weighted average decays as `ℰ_QQ^m`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::fit::{fit_decay, LineFit};
use crate::noise::{apply_spam, SpamSpec};
use crate::pauli::PauliString;
use crate::ptcb::{
    decode_tuple, sample_frequency, tuple_indices, Circuit, InnerSampling, Layer, PtcbModel,
    SurvivalRecord, Variant,
};
use crate::ptm::{stabilizer_state_and_effect, TransferMatrix};
use crate::rng::substream;

pub type CrbRecord = SurvivalRecord;

const SELECTION_STREAM: u64 = u64::MAX;
const Q_STREAM: u64 = 0xC4B;

/// Compiled layers for `P₀ … Pₘ`: each adjacent pair merged into one gate.
pub fn crb_layers(paulis: &[PauliString]) -> Result<Vec<Layer>> {
    let Some(first) = paulis.first() else {
        return Err(Error::Validation("a sequence needs at least one Pauli".into()));
    };
    let n = first.num_qubits();
    for p in paulis {
        check_dims(n, p.num_qubits())?;
    }
    let m = paulis.len() - 1;
    if m == 0 {
        return Ok(vec![Layer::Pauli(first.unsigned())]);
    }
    let mut layers = Vec::with_capacity(m + 1);
    layers.push(Layer::Pauli(paulis[1].mul_unchecked(first).unsigned()));
    for i in 1..m {
        layers.push(Layer::Pauli(paulis[i + 1].mul_unchecked(&paulis[i].adjoint()).unsigned()));
    }
    layers.push(Layer::Pauli(paulis[m].adjoint().unsigned()));
    Ok(layers)
}

fn pauli_only_model(noise: &TransferMatrix, spam: SpamSpec) -> Result<PtcbModel> {
    let id = TransferMatrix::identity(noise.num_qubits())?;
    PtcbModel::new(id.clone(), &id, spam)?.with_twirl_noise(noise.clone())
}

/// Exact survival probability of one sequence with measurement basis `q`.
pub fn crb_survival(
    noise: &TransferMatrix,
    q: &PauliString,
    paulis: &[PauliString],
    spam: &SpamSpec,
) -> Result<f64> {
    let model = pauli_only_model(noise, *spam)?;
    Circuit::new(&model, q, Variant::Standard)?.probability(&crb_layers(paulis)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrbSettings {
    pub depths: Vec<usize>,
    pub inner: InnerSampling,
    pub shots: u64,
    #[serde(default)]
    pub record: bool,
}

impl Default for CrbSettings {
    fn default() -> Self {
        CrbSettings {
            depths: vec![1, 2, 4, 8],
            inner: InnerSampling::Sampled { count: 100 },
            shots: 0,
            record: false,
        }
    }
}

impl CrbSettings {
    pub fn validate(&self) -> Result<()> {
        let mut d = self.depths.clone();
        d.sort_unstable();
        d.dedup();
        if d.len() < 2 {
            return Err(Error::config("crb.depths", "needs at least two distinct depths"));
        }
        if let InnerSampling::Sampled { count: 0 } = self.inner {
            return Err(Error::config("crb.inner.count", "must be at least 1"));
        }
        if self.inner == InnerSampling::Expectation && self.shots > 0 {
            return Err(Error::config("crb.shots", "the expectation mode has no circuits to repeat"));
        }
        Ok(())
    }
}

/// Character-weighted average `f(m)`.
pub fn f_of_m(
    noise: &TransferMatrix,
    q: &PauliString,
    m: usize,
    spam: &SpamSpec,
    settings: &CrbSettings,
    seed: u64,
    stream: &[u64],
) -> Result<(f64, Vec<CrbRecord>)> {
    let n = noise.num_qubits();
    check_dims(n, q.num_qubits())?;
    if settings.inner == InnerSampling::Expectation {
        let (rho, meas) = stabilizer_state_and_effect(q)?;
        let (rho, meas) = apply_spam(q, &rho, &meas, spam)?;
        let qi = q.index();
        let prefactor = noise.apply_left(meas.coeffs())[qi] * rho.coeffs()[qi];
        return Ok((prefactor * noise.get(qi, qi).powi(m as i32), Vec::new()));
    }
    let model = pauli_only_model(noise, *spam)?;
    let circuit = Circuit::new(&model, q, Variant::Standard)?;
    let path = |tail: u64| -> Vec<u64> {
        let mut p = stream.to_vec();
        p.extend([m as u64, tail]);
        p
    };
    let tuples = tuple_indices(n, m + 1, settings.inner, &mut substream(seed, &path(SELECTION_STREAM)))?;
    let mut sum = 0.0;
    let mut records = Vec::new();
    for (k, &t) in tuples.iter().enumerate() {
        let paulis = decode_tuple(n, t, m + 1);
        let exact = circuit.probability(&crb_layers(&paulis)?)?;
        let prob = sample_frequency(exact, settings.shots, &mut substream(seed, &path(k as u64)))?;
        let lambda: i8 = if paulis[0].commutes_unchecked(q) { 1 } else { -1 };
        sum += f64::from(lambda) * prob;
        if settings.record {
            records.push(SurvivalRecord {
                depth: m,
                paulis,
                lambda,
                probability: prob,
            });
        }
    }
    Ok((sum / tuples.len() as f64, records))
}

/// Fitted Pauli eigenvalue for one `Q`.
#[derive(Clone, Debug)]
pub struct EigenvalueEstimate {
    pub q: PauliString,
    pub eigenvalue: f64,
    pub decay: Vec<(usize, f64)>,
    /// `None` for `Q = I`, whose eigenvalue is 1 by trace preservation.
    pub fit: Option<LineFit>,
    pub records: Vec<CrbRecord>,
}

/// Estimate `ℰ_QQ` from the slope of `ln f(m)` against `m`.
pub fn estimate_pauli_eigenvalue(
    noise: &TransferMatrix,
    q: &PauliString,
    spam: &SpamSpec,
    settings: &CrbSettings,
    seed: u64,
    stream: &[u64],
) -> Result<EigenvalueEstimate> {
    settings.validate()?;
    spam.validate()?;
    if q.is_identity() {
        return Ok(EigenvalueEstimate {
            q: *q,
            eigenvalue: 1.0,
            decay: Vec::new(),
            fit: None,
            records: Vec::new(),
        });
    }
    let mut depths = settings.depths.clone();
    depths.sort_unstable();
    depths.dedup();
    let mut decay = Vec::with_capacity(depths.len());
    let mut records = Vec::new();
    for m in depths {
        let (f, r) = f_of_m(noise, q, m, spam, settings, seed, stream)?;
        decay.push((m, f));
        records.extend(r);
    }
    let (eigenvalue, fit) = fit_decay(&decay)
        .map_err(|e| Error::Protocol(format!("eigenvalue fit for {q} failed: {e}")))?;
    Ok(EigenvalueEstimate {
        q: *q,
        eigenvalue,
        decay,
        fit: Some(fit),
        records,
    })
}

/// Which Paulis enter the twirl-fidelity average.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum QSelection {
    All,
    /// `count` draws, uniform with replacement over all `4ⁿ` Paulis.
    Sampled { count: usize },
}

#[derive(Clone, Debug)]
pub struct TwirlFidelity {
    pub estimate: f64,
    pub eigenvalues: Vec<EigenvalueEstimate>,
}

/// `F(ℰ) = (1/d²) Σ_Q ℰ_QQ`, with every `ℰ_QQ` measured, or a sampled mean.
pub fn estimate_twirl_fidelity(
    noise: &TransferMatrix,
    spam: &SpamSpec,
    settings: &CrbSettings,
    selection: QSelection,
    seed: u64,
) -> Result<TwirlFidelity> {
    let n = noise.num_qubits();
    let dim = noise.dim();
    let qs: Vec<PauliString> = match selection {
        QSelection::All => PauliString::enumerate(n)?,
        QSelection::Sampled { count } => {
            if count == 0 {
                return Err(Error::config("crb.q_samples", "must be at least 1"));
            }
            let mut rng = substream(seed, &[Q_STREAM]);
            (0..count)
                .map(|_| PauliString::from_index_unchecked(n, rng.random_range(0..dim)))
                .collect()
        }
    };
    let eigenvalues = qs
        .par_iter()
        .enumerate()
        .map(|(k, q)| estimate_pauli_eigenvalue(noise, q, spam, settings, seed, &[k as u64]))
        .collect::<Result<Vec<_>>>()?;
    let estimate = eigenvalues.iter().map(|e| e.eigenvalue).sum::<f64>() / eigenvalues.len() as f64;
    Ok(TwirlFidelity {
        estimate,
        eigenvalues,
    })
}
