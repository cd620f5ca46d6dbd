//! Character benchmarking of a self-inverse target gate with Pauli twirls.
//!
//! For a pair `(P, Q)` a virtual Clifford `C` with `C P C† = ±Q` moves the
//! off-diagonal entry `Ũ_PQ` of the noisy gate onto the diagonal. Random Pauli
//! layers twirl `𝒞Ũ` and `Ũ𝒞†`, and the character-weighted average of the
//! survival probability decays as `(Ũ_PQ·Ũ_QP)^m`. Only Paulis and the target
//! gate are ever applied: every `C` is absorbed into a neighbouring Pauli.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::{find_clifford_mapping, CliffordTableau};
use crate::error::{check_dims, Error, Result};
use crate::fit::fit_decay;
use crate::noise::{apply_spam, SpamSpec};
use crate::pauli::PauliString;
use crate::ptm::{stabilizer_state_and_effect, TransferMatrix};
use crate::rng::substream;

/// Probabilities may leave `[0, 1]` by this much from rounding before the
/// circuit is treated as unphysical.
pub const PROBABILITY_SLACK: f64 = 1e-12;
/// `|g(0)|` below this means SPAM has destroyed the signal.
pub const MIN_REFERENCE_SIGNAL: f64 = 1e-6;
const MAX_ENUMERATED_TUPLES: u128 = 1 << 22;
const SELECTION_STREAM: u64 = u64::MAX;
const OUTER_STREAM: u64 = 0x07E5;

/// Ideal gate, its noisy implementation and the SPAM model.
#[derive(Clone, Debug)]
pub struct PtcbModel {
    /// `𝒰`.
    pub ideal: TransferMatrix,
    /// `Ũ = 𝒰Λ`.
    pub noisy: TransferMatrix,
    /// Gate-independent noise `ℰ` following every Pauli layer.
    pub twirl_noise: Option<TransferMatrix>,
    pub spam: SpamSpec,
}

impl PtcbModel {
    /// Model with `Ũ = 𝒰·noise` and noiseless Pauli layers.
    pub fn new(ideal: TransferMatrix, noise: &TransferMatrix, spam: SpamSpec) -> Result<Self> {
        let noisy = ideal.compose(noise)?;
        spam.validate()?;
        Ok(PtcbModel {
            ideal,
            noisy,
            twirl_noise: None,
            spam,
        })
    }

    pub fn with_twirl_noise(mut self, twirl_noise: TransferMatrix) -> Result<Self> {
        check_dims(self.num_qubits(), twirl_noise.num_qubits())?;
        self.twirl_noise = Some(twirl_noise);
        Ok(self)
    }

    pub fn num_qubits(&self) -> usize {
        self.ideal.num_qubits()
    }

    /// `Ũℰ`, the channel whose entries the protocol measures.
    pub fn effective(&self) -> TransferMatrix {
        match &self.twirl_noise {
            Some(e) => self.noisy.compose(e).expect("dimensions checked on construction"),
            None => self.noisy.clone(),
        }
    }

    /// `F(𝒰†Ũℰ) = (1/d²) Σ 𝒰_PQ (Ũℰ)_PQ`: `F(Λ)` without twirl noise and
    /// `F(Λℰ)` with it.
    pub fn exact_fidelity(&self) -> f64 {
        let eff = self.effective();
        let dim = eff.dim();
        let s: f64 = self
            .ideal
            .entries()
            .iter()
            .zip(eff.entries())
            .map(|(u, v)| u * v)
            .sum();
        s / dim as f64
    }
}

/// One physical operation of a compiled sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Layer {
    Pauli(PauliString),
    Target,
    /// Noisy `U†`, modelled as the transpose of the noisy `U`.
    TargetInverse,
}

/// Which entries of the noisy gate a sequence multiplies together.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `Ũ_PQ·Ũ_QP`; requires a symmetric ideal PTM.
    #[default]
    Standard,
    /// `Ũ_PQ²`, with the second gate of each period replaced by `U†`.
    Inverse,
}

/// Compile `P₀ … P₂ₘ` into layers, merging adjacent Paulis and absorbing the
/// virtual Clifford pair into the middle Pauli of each period.
///
/// The result is `[P₁P₀, Ũ, C†P₂P₁†C, Ũ, P₃P₂†, …, Ũ, P₂ₘ†]`, or `[P₀]` for
/// `m = 0`. All Pauli layers are phase free.
pub fn build_sequence(
    tableau: &CliffordTableau,
    paulis: &[PauliString],
    variant: Variant,
) -> Result<Vec<Layer>> {
    if paulis.len() % 2 == 0 {
        return Err(Error::Validation(format!(
            "a depth-m sequence needs 2m+1 Paulis, got {}",
            paulis.len()
        )));
    }
    let n = tableau.num_qubits();
    for p in paulis {
        check_dims(n, p.num_qubits())?;
    }
    let m = paulis.len() / 2;
    if m == 0 {
        return Ok(vec![Layer::Pauli(paulis[0].unsigned())]);
    }
    let inverse = tableau.inverse();
    let merge = |a: &PauliString, b: &PauliString| a.mul_unchecked(&b.adjoint()).unsigned();
    let mut layers = Vec::with_capacity(4 * m + 1);
    layers.push(Layer::Pauli(paulis[1].mul_unchecked(&paulis[0]).unsigned()));
    for i in 1..=m {
        layers.push(Layer::Target);
        let between = merge(&paulis[2 * i], &paulis[2 * i - 1]);
        let middle = inverse.conjugate_unchecked(&between);
        if middle.phase().sign().is_none() {
            return Err(Error::Consistency(format!(
                "conjugated layer {middle} is not a Hermitian Pauli"
            )));
        }
        layers.push(Layer::Pauli(middle.unsigned()));
        layers.push(match variant {
            Variant::Standard => Layer::Target,
            Variant::Inverse => Layer::TargetInverse,
        });
        let closing = if i < m {
            merge(&paulis[2 * i + 1], &paulis[2 * i])
        } else {
            paulis[2 * m].adjoint().unsigned()
        };
        layers.push(Layer::Pauli(closing));
    }
    Ok(layers)
}

/// Exact evaluation of compiled sequences for one measurement basis.
pub(crate) struct Circuit<'a> {
    model: &'a PtcbModel,
    noisy_inverse: Option<TransferMatrix>,
    bits: Vec<(u16, u16)>,
    state: Vec<f64>,
    effect: Vec<f64>,
}

impl<'a> Circuit<'a> {
    pub(crate) fn new(model: &'a PtcbModel, q: &PauliString, variant: Variant) -> Result<Self> {
        check_dims(model.num_qubits(), q.num_qubits())?;
        let (rho, meas) = stabilizer_state_and_effect(q)?;
        let (rho, meas) = apply_spam(q, &rho, &meas, &model.spam)?;
        let n = q.num_qubits();
        let bits = (0..model.ideal.dim())
            .map(|i| {
                let r = PauliString::from_index_unchecked(n, i);
                (r.x_bits(), r.z_bits())
            })
            .collect();
        Ok(Circuit {
            model,
            noisy_inverse: (variant == Variant::Inverse).then(|| model.noisy.transpose()),
            bits,
            state: rho.coeffs().to_vec(),
            effect: meas.coeffs().to_vec(),
        })
    }

    pub(crate) fn probability(&self, layers: &[Layer]) -> Result<f64> {
        let mut v = self.state.clone();
        for layer in layers {
            match layer {
                Layer::Pauli(p) => {
                    let (px, pz) = (p.x_bits(), p.z_bits());
                    for (c, &(rx, rz)) in v.iter_mut().zip(&self.bits) {
                        if ((px & rz) ^ (pz & rx)).count_ones() & 1 == 1 {
                            *c = -*c;
                        }
                    }
                    if let Some(e) = &self.model.twirl_noise {
                        v = e.apply(&v);
                    }
                }
                Layer::Target => v = self.model.noisy.apply(&v),
                Layer::TargetInverse => {
                    let inv = self
                        .noisy_inverse
                        .as_ref()
                        .ok_or_else(|| Error::Validation("inverse layer in a standard circuit".into()))?;
                    v = inv.apply(&v);
                }
            }
        }
        let prob: f64 = self.effect.iter().zip(&v).map(|(a, b)| a * b).sum();
        check_probability(prob)
    }
}

fn check_probability(prob: f64) -> Result<f64> {
    if (-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&prob) {
        Ok(prob.clamp(0.0, 1.0))
    } else {
        Err(Error::Numerical(format!(
            "survival probability {prob} is outside [0, 1]"
        )))
    }
}

/// Exact survival probability `⟨⟨M|layers|ρ⟩⟩` for measurement basis `q`,
/// with the state and effect prepared for `q` and passed through the SPAM model.
pub fn survival_probability(model: &PtcbModel, q: &PauliString, layers: &[Layer]) -> Result<f64> {
    let variant = if layers.contains(&Layer::TargetInverse) {
        Variant::Inverse
    } else {
        Variant::Standard
    };
    Circuit::new(model, q, variant)?.probability(layers)
}

/// Empirical frequency of `shots` Bernoulli trials at probability `prob`.
pub fn sample_frequency(prob: f64, shots: u64, rng: &mut ChaCha8Rng) -> Result<f64> {
    let prob = check_probability(prob)?;
    if shots == 0 {
        return Ok(prob);
    }
    let dist = Binomial::new(shots, prob).map_err(|e| Error::Sampling(e.to_string()))?;
    Ok(dist.sample(rng) as f64 / shots as f64)
}

/// How the Pauli tuples of one depth are averaged.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InnerSampling {
    /// Every tuple `(P₀, …, P₂ₘ)`.
    Exhaustive,
    /// `count` distinct tuples drawn uniformly; depth 0 is always exhaustive.
    Sampled { count: usize },
    /// The closed-form average over all tuples, evaluated through the
    /// twirled diagonal entries.
    Expectation,
}

/// Inner-loop settings of one protocol run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PtcbSettings {
    pub depths: Vec<usize>,
    pub inner: InnerSampling,
    /// Repetitions per circuit; 0 uses exact probabilities.
    pub shots: u64,
    /// Fit `ln g(m)` over all depths instead of taking `g(1)/g(0)`.
    pub fit: bool,
    /// Keep every survival record.
    #[serde(default)]
    pub record: bool,
}

impl Default for PtcbSettings {
    fn default() -> Self {
        PtcbSettings {
            depths: vec![0, 1],
            inner: InnerSampling::Sampled { count: 100 },
            shots: 0,
            fit: false,
            record: false,
        }
    }
}

impl PtcbSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.depths.contains(&0) && self.depths.contains(&1)) {
            return Err(Error::config("depths", "must include 0 and 1"));
        }
        if let InnerSampling::Sampled { count: 0 } = self.inner {
            return Err(Error::config("inner.count", "must be at least 1"));
        }
        if self.inner == InnerSampling::Expectation && self.shots > 0 {
            return Err(Error::config("shots", "the expectation mode has no circuits to repeat"));
        }
        Ok(())
    }
}

/// One evaluated circuit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalRecord {
    pub depth: usize,
    pub paulis: Vec<PauliString>,
    pub lambda: i8,
    pub probability: f64,
}

/// `g(m)` and the circuits behind it.
#[derive(Clone, Debug)]
pub struct DepthAverage {
    pub depth: usize,
    pub value: f64,
    pub records: Vec<SurvivalRecord>,
}

pub(crate) fn decode_tuple(n: usize, mut index: u128, len: usize) -> Vec<PauliString> {
    let mask = (1u128 << (2 * n)) - 1;
    (0..len)
        .map(|_| {
            let p = PauliString::from_index_unchecked(n, (index & mask) as usize);
            index >>= 2 * n;
            p
        })
        .collect()
}

/// Indices of the `len`-Pauli tuples to evaluate; a single Pauli is always enumerated.
pub(crate) fn tuple_indices(n: usize, len: usize, inner: InnerSampling, rng: &mut ChaCha8Rng) -> Result<Vec<u128>> {
    let bits = 2 * n * len;
    let total = if bits < 128 { Some(1u128 << bits) } else { None };
    let exhaustive = || -> Result<Vec<u128>> {
        match total {
            Some(t) if t <= MAX_ENUMERATED_TUPLES => Ok((0..t).collect()),
            _ => Err(Error::Validation(format!(
                "enumerating all {len}-Pauli tuples at n = {n} is infeasible"
            ))),
        }
    };
    match inner {
        InnerSampling::Exhaustive => exhaustive(),
        _ if len == 1 => exhaustive(),
        InnerSampling::Sampled { count } => {
            if let Some(t) = total {
                if count as u128 > t {
                    return Err(Error::Validation(format!(
                        "cannot draw {count} distinct tuples from {t}"
                    )));
                }
            }
            if bits <= 63 {
                Ok(index::sample(rng, 1usize << bits, count)
                    .into_iter()
                    .map(|i| i as u128)
                    .collect())
            } else {
                let mut seen = HashSet::with_capacity(count);
                let mut out = Vec::with_capacity(count);
                let mask = if bits >= 128 { u128::MAX } else { (1u128 << bits) - 1 };
                while out.len() < count {
                    let candidate = rng.random::<u128>() & mask;
                    if seen.insert(candidate) {
                        out.push(candidate);
                    }
                }
                Ok(out)
            }
        }
        InnerSampling::Expectation => unreachable!("handled by the caller"),
    }
}

/// Exact twirl-averaged decay factor of one period, read off the tableau:
/// `(Ũℰ𝒞†)_QQ · (𝒞Ũℰ)_QQ`.
fn period_factor(model: &PtcbModel, tableau: &CliffordTableau, q: &PauliString, variant: Variant) -> f64 {
    let eff = model.effective();
    let second = match variant {
        Variant::Standard => eff.clone(),
        Variant::Inverse => {
            let t = model.noisy.transpose();
            match &model.twirl_noise {
                Some(e) => t.compose(e).expect("dimensions checked on construction"),
                None => t,
            }
        }
    };
    // C R C† = s·Q with R = C†QC, so 𝒞 has the single entry s at (Q, R).
    let preimage = tableau.inverse().conjugate_unchecked(q);
    let s = f64::from(preimage.phase().sign().expect("Cliffords preserve Hermiticity"));
    let r = preimage.unsigned().index();
    let qi = q.index();
    (s * second.get(qi, r)) * (s * eff.get(r, qi))
}

/// Character-weighted average `g(m) = E λ_{P₀} g(m, {Pᵢ})`.
///
/// `stream` identifies the task for the random substreams: tuple selection
/// and shot noise of sequence `k` at depth `m` use `stream ++ [m, …]`.
#[allow(clippy::too_many_arguments)]
pub fn g_of_m(
    model: &PtcbModel,
    q: &PauliString,
    tableau: &CliffordTableau,
    m: usize,
    settings: &PtcbSettings,
    variant: Variant,
    seed: u64,
    stream: &[u64],
) -> Result<DepthAverage> {
    let n = model.num_qubits();
    check_dims(n, q.num_qubits())?;
    check_dims(n, tableau.num_qubits())?;
    if settings.inner == InnerSampling::Expectation {
        let (rho, meas) = stabilizer_state_and_effect(q)?;
        let (rho, meas) = apply_spam(q, &rho, &meas, &model.spam)?;
        let effect = match &model.twirl_noise {
            Some(e) => e.apply_left(meas.coeffs()),
            None => meas.coeffs().to_vec(),
        };
        let qi = q.index();
        let prefactor = effect[qi] * rho.coeffs()[qi];
        let factor = period_factor(model, tableau, q, variant);
        return Ok(DepthAverage {
            depth: m,
            value: prefactor * factor.powi(m as i32),
            records: Vec::new(),
        });
    }
    let circuit = Circuit::new(model, q, variant)?;
    let path = |tail: u64| -> Vec<u64> {
        let mut p = stream.to_vec();
        p.extend([m as u64, tail]);
        p
    };
    let mut selector = substream(seed, &path(SELECTION_STREAM));
    let tuples = tuple_indices(n, 2 * m + 1, settings.inner, &mut selector)?;
    let mut sum = 0.0;
    let mut records = Vec::new();
    for (k, &t) in tuples.iter().enumerate() {
        let paulis = decode_tuple(n, t, 2 * m + 1);
        let layers = build_sequence(tableau, &paulis, variant)?;
        let exact = circuit.probability(&layers)?;
        let prob = if settings.shots > 0 {
            sample_frequency(exact, settings.shots, &mut substream(seed, &path(k as u64)))?
        } else {
            exact
        };
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
    Ok(DepthAverage {
        depth: m,
        value: sum / tuples.len() as f64,
        records,
    })
}

/// Protocol output for one `(P, Q)` pair.
#[derive(Clone, Debug)]
pub struct PairEstimate {
    pub p: PauliString,
    pub q: PauliString,
    pub clifford_sign: i8,
    pub g0: f64,
    pub g1: f64,
    /// `g(m)` for every configured depth.
    pub decay: Vec<(usize, f64)>,
    /// Estimate of `Ũ_PQ·Ũ_QP` (or `Ũ_PQ²` for the inverse variant).
    pub product: f64,
    pub ideal_entry: f64,
    pub records: Vec<SurvivalRecord>,
}

/// Estimate `Ũ_PQ·Ũ_QP` for non-identity `p`, `q`.
pub fn estimate_pair(
    model: &PtcbModel,
    p: &PauliString,
    q: &PauliString,
    settings: &PtcbSettings,
    seed: u64,
    stream: &[u64],
) -> Result<PairEstimate> {
    estimate_pair_with(model, p, q, settings, Variant::Standard, seed, stream)
}

/// Estimate `Ũ_PQ²`, replacing the second target gate of each period with
/// its inverse (the transpose of the noisy PTM).
pub fn estimate_pair_inverse_variant(
    model: &PtcbModel,
    p: &PauliString,
    q: &PauliString,
    settings: &PtcbSettings,
    seed: u64,
    stream: &[u64],
) -> Result<PairEstimate> {
    estimate_pair_with(model, p, q, settings, Variant::Inverse, seed, stream)
}

/// Shared body of [`estimate_pair`] and [`estimate_pair_inverse_variant`].
pub fn estimate_pair_with(
    model: &PtcbModel,
    p: &PauliString,
    q: &PauliString,
    settings: &PtcbSettings,
    variant: Variant,
    seed: u64,
    stream: &[u64],
) -> Result<PairEstimate> {
    settings.validate()?;
    let mapping = find_clifford_mapping(p, q)?;
    let mut depths = settings.depths.clone();
    depths.sort_unstable();
    depths.dedup();
    let mut decay = Vec::with_capacity(depths.len());
    let mut records = Vec::new();
    for &m in &depths {
        let avg = g_of_m(model, q, &mapping.tableau, m, settings, variant, seed, stream)?;
        decay.push((m, avg.value));
        records.extend(avg.records);
    }
    let at = |m: usize| decay.iter().find(|d| d.0 == m).map(|d| d.1).expect("validated depths");
    let (g0, g1) = (at(0), at(1));
    if g0.abs() < MIN_REFERENCE_SIGNAL {
        return Err(Error::Protocol(format!(
            "reference signal g(0) = {g0:e} for ({p}, {q}) is too small"
        )));
    }
    let product = if settings.fit {
        fit_decay(&decay)?.0
    } else {
        g1 / g0
    };
    Ok(PairEstimate {
        p: *p,
        q: *q,
        clifford_sign: mapping.sign,
        g0,
        g1,
        decay,
        product,
        ideal_entry: model.ideal.entry(p, q),
        records,
    })
}

/// Partition of the outer-sampling distribution `𝒰_PQ²/Σ𝒰²` into equal segments.
#[derive(Clone, Debug)]
pub struct SegmentTable {
    entries: Vec<(PauliString, PauliString, f64)>,
    segments: Vec<u32>,
    total_weight: f64,
    dim: usize,
    exact: bool,
}

const ZERO_ENTRY: f64 = 1e-12;
const MAX_SEGMENTS: f64 = (1u32 << 20) as f64;

impl SegmentTable {
    /// Segments for the non-zero entries of `ideal`, in canonical `(P, Q)` order.
    ///
    /// When every weight is an integer multiple of the smallest one, each
    /// entry gets exactly that many segments (4 and 1 for the Toffoli).
    /// Otherwise `4 × entries` segments are laid over the cumulative weights
    /// and each takes the entry under its midpoint.
    pub fn new(ideal: &TransferMatrix) -> Result<Self> {
        let n = ideal.num_qubits();
        let dim = ideal.dim();
        let mut entries = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                let u = ideal.get(i, j);
                if u.abs() > ZERO_ENTRY {
                    entries.push((
                        PauliString::from_index_unchecked(n, i),
                        PauliString::from_index_unchecked(n, j),
                        u,
                    ));
                }
            }
        }
        if entries.is_empty() {
            return Err(Error::Validation("ideal PTM has no non-zero entries".into()));
        }
        let weights: Vec<f64> = entries.iter().map(|e| e.2 * e.2).collect();
        let total_weight: f64 = weights.iter().sum();
        let w_min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
        let ratios: Vec<f64> = weights.iter().map(|w| w / w_min).collect();
        let exact = ratios.iter().sum::<f64>() <= MAX_SEGMENTS
            && ratios.iter().all(|r| (r - r.round()).abs() < 1e-9 * r.max(1.0));
        let segments = if exact {
            ratios
                .iter()
                .enumerate()
                .flat_map(|(i, r)| std::iter::repeat_n(i as u32, r.round() as usize))
                .collect()
        } else {
            let count = 4 * entries.len();
            let mut out = Vec::with_capacity(count);
            let mut entry = 0;
            let mut upper = weights[0];
            for s in 0..count {
                let mid = (s as f64 + 0.5) / count as f64 * total_weight;
                while mid > upper && entry + 1 < entries.len() {
                    entry += 1;
                    upper += weights[entry];
                }
                out.push(entry as u32);
            }
            out
        };
        Ok(SegmentTable {
            entries,
            segments,
            total_weight,
            dim,
            exact,
        })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Whether segment counts are exactly proportional to the weights.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    /// `(P, Q, 𝒰_PQ)` behind `segment`.
    pub fn pair(&self, segment: usize) -> (PauliString, PauliString, f64) {
        self.entries[self.segments[segment] as usize]
    }

    /// Segments assigned to each non-zero entry, in canonical order.
    pub fn entries(&self) -> impl Iterator<Item = ((PauliString, PauliString, f64), usize)> + '_ {
        let mut counts = vec![0usize; self.entries.len()];
        for &s in &self.segments {
            counts[s as usize] += 1;
        }
        self.entries.iter().copied().zip(counts)
    }

    /// `Σ𝒰_PQ²/d²`, which is 1 for a unitary.
    pub fn normalization(&self) -> f64 {
        self.total_weight / self.dim as f64
    }
}

/// An outer sample.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SampledPair {
    pub segment: usize,
    pub p: PauliString,
    pub q: PauliString,
    pub ideal_entry: f64,
}

/// Draw `count` distinct segments uniformly; returned in segment order.
pub fn importance_sample_pairs(table: &SegmentTable, count: usize, seed: u64) -> Result<Vec<SampledPair>> {
    if count > table.len() {
        return Err(Error::Validation(format!(
            "cannot draw {count} distinct segments from {}",
            table.len()
        )));
    }
    let mut rng = substream(seed, &[OUTER_STREAM]);
    let mut picked = index::sample(&mut rng, table.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|segment| {
            let (p, q, ideal_entry) = table.pair(segment);
            SampledPair {
                segment,
                p,
                q,
                ideal_entry,
            }
        })
        .collect())
}

/// Which `(P, Q)` pairs enter the fidelity estimate.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PairSelection {
    /// Every non-zero entry, weighted by `|𝒰_PQ|`.
    Exhaustive,
    /// `count` distinct importance-sampling segments.
    Importance { count: usize },
}

/// Where the per-pair products come from.
#[derive(Clone, Debug, PartialEq)]
pub enum PairSource {
    /// Read directly from the noisy PTM.
    ExactPtm,
    /// Measured by the protocol.
    Protocol(PtcbSettings),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorSettings {
    pub selection: PairSelection,
    pub source: PairSource,
    pub variant: Variant,
}

/// One pair's contribution to the fidelity estimate.
#[derive(Clone, Debug)]
pub struct PairTerm {
    pub segment: Option<usize>,
    pub p: PauliString,
    pub q: PauliString,
    pub ideal_entry: f64,
    pub product: f64,
    /// The product was negative and its square root was taken as 0.
    pub clamped: bool,
    pub protocol: Option<PairEstimate>,
}

#[derive(Clone, Debug)]
pub struct FidelityEstimate {
    /// `F̂`.
    pub estimate: f64,
    /// The fidelity `F̂` approximates, from the PTMs.
    pub exact: f64,
    pub terms: Vec<PairTerm>,
    pub clamped: usize,
    /// Pairs dropped because the protocol failed on them.
    pub failures: Vec<(PauliString, PauliString, String)>,
}

/// `√max(0, product)`, counting clamps.
fn root(product: f64, p: &PauliString, q: &PauliString) -> (f64, bool) {
    if product < 0.0 {
        log::debug!("negative product {product:e} for ({p}, {q}) clamped to 0");
        (0.0, true)
    } else {
        (product.sqrt(), false)
    }
}

/// Estimate `F(Λ)` from `√(Ũ_PQ·Ũ_QP)` over the selected pairs.
///
/// With exhaustive selection this is `(1/d²) Σ |𝒰_PQ| √(Ũ_PQ·Ũ_QP)`; with
/// importance selection it is the segment mean of `√(Ũ_PQ·Ũ_QP)/|𝒰_PQ|`.
/// The identity pair contributes the constant 1 and is never measured.
pub fn estimate_fidelity(model: &PtcbModel, settings: &EstimatorSettings, seed: u64) -> Result<FidelityEstimate> {
    if settings.variant == Variant::Standard && !model.ideal.is_symmetric(ZERO_ENTRY) {
        return Err(Error::config(
            "estimator.variant",
            "the ideal PTM is not symmetric; only the inverse variant applies",
        ));
    }
    if let PairSource::Protocol(p) = &settings.source {
        p.validate()?;
    }
    let table = SegmentTable::new(&model.ideal)?;
    let selected: Vec<SampledPair> = match settings.selection {
        PairSelection::Exhaustive => table
            .entries()
            .map(|((p, q, u), _)| SampledPair {
                segment: usize::MAX,
                p,
                q,
                ideal_entry: u,
            })
            .collect(),
        PairSelection::Importance { count } => {
            if count == 0 {
                return Err(Error::config("estimator.count", "must be at least 1"));
            }
            importance_sample_pairs(&table, count, seed)?
        }
    };
    let effective = model.effective();
    let outcomes: Vec<Result<(f64, Option<PairEstimate>)>> = selected
        .par_iter()
        .enumerate()
        .map(|(k, pair)| {
            let (p, q) = (pair.p, pair.q);
            match (p.is_identity(), q.is_identity()) {
                (true, true) => return Ok((1.0, None)),
                (false, false) => {}
                _ => {
                    return Err(Error::Consistency(format!(
                        "ideal PTM has a non-zero entry at ({p}, {q})"
                    )))
                }
            }
            match &settings.source {
                PairSource::ExactPtm => {
                    let pq = effective.entry(&p, &q);
                    let product = match settings.variant {
                        Variant::Standard => pq * effective.entry(&q, &p),
                        Variant::Inverse => pq * pq,
                    };
                    Ok((product, None))
                }
                PairSource::Protocol(ps) => {
                    let stream = [k as u64];
                    let est = estimate_pair_with(model, &p, &q, ps, settings.variant, seed, &stream)?;
                    Ok((est.product, Some(est)))
                }
            }
        })
        .collect();

    let mut terms = Vec::with_capacity(selected.len());
    let mut failures = Vec::new();
    let mut clamped = 0;
    let mut total = 0.0;
    // Consecutive segments of one entry with the same product are added as a
    // single multiple, so covering every segment reproduces the exhaustive sum.
    let mut run: Option<(PauliString, PauliString, u64, f64, usize)> = None;
    let flush = |run: &mut Option<(PauliString, PauliString, u64, f64, usize)>, total: &mut f64| {
        if let Some((_, _, _, term, count)) = run.take() {
            *total += count as f64 * term;
        }
    };
    for (pair, outcome) in selected.iter().zip(outcomes) {
        let (product, protocol) = match outcome {
            Ok(v) => v,
            Err(e @ (Error::Protocol(_) | Error::Numerical(_))) => {
                log::warn!("pair ({}, {}) dropped: {e}", pair.p, pair.q);
                failures.push((pair.p, pair.q, e.to_string()));
                continue;
            }
            Err(e) => return Err(e),
        };
        let (r, was_clamped) = root(product, &pair.p, &pair.q);
        clamped += usize::from(was_clamped);
        let u = pair.ideal_entry.abs();
        match settings.selection {
            PairSelection::Exhaustive => total += u * r,
            PairSelection::Importance { .. } => match &mut run {
                Some((p, q, bits, _, count)) if (*p, *q, *bits) == (pair.p, pair.q, product.to_bits()) => *count += 1,
                _ => {
                    flush(&mut run, &mut total);
                    run = Some((pair.p, pair.q, product.to_bits(), r / u, 1));
                }
            },
        }
        terms.push(PairTerm {
            segment: (pair.segment != usize::MAX).then_some(pair.segment),
            p: pair.p,
            q: pair.q,
            ideal_entry: pair.ideal_entry,
            product,
            clamped: was_clamped,
            protocol,
        });
    }
    flush(&mut run, &mut total);
    if terms.is_empty() {
        return Err(Error::Protocol("every selected pair failed".into()));
    }
    let estimate = match settings.selection {
        PairSelection::Exhaustive => total / model.ideal.dim() as f64,
        PairSelection::Importance { .. } => table.normalization() * total / terms.len() as f64,
    };
    Ok(FidelityEstimate {
        estimate,
        exact: model.exact_fidelity(),
        terms,
        clamped,
        failures,
    })
}
