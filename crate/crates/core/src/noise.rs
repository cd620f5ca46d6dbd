//! Noise channels for the target gate and the SPAM error model.
//!
//! The composite gate noise is `Λ = Λ_dephase ∘ Λ_unitary ∘ Λ_damp`: local
//! amplitude damping on every qubit, then a controlled `e^{iδX}` on one
//! ordered qubit pair, then local dephasing on every qubit.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates;
use crate::pauli::PauliString;
use crate::ptm::{
    process_fidelity, ptm_from_kraus, ptm_unitary, EffectPL, StateVectorPL, TransferMatrix,
};
use crate::rng::substream;

/// Parameters of one composite noise channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Dephasing strength.
    pub p: f64,
    /// Amplitude-damping strength.
    pub q: f64,
    /// Rotation angle of the controlled `e^{iδX}`, radians.
    pub delta: f64,
    pub control: usize,
    pub target: usize,
    /// Seed the parameters were drawn under; informational.
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        NoiseSpec {
            p: 0.0,
            q: 0.0,
            delta: 0.0,
            control: 0,
            target: 1,
            seed: 0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_probability("p", self.p)?;
        check_probability("q", self.q)?;
        if !self.delta.is_finite() {
            return Err(Error::Validation("delta must be finite".into()));
        }
        check_pair(self.control, self.target, n)
    }
}

/// State-preparation and measurement flip probabilities.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpamSpec {
    pub prep_flip: f64,
    pub meas_flip: f64,
}

impl SpamSpec {
    pub fn symmetric(rate: f64) -> Self {
        SpamSpec {
            prep_flip: rate,
            meas_flip: rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("prep_flip", self.prep_flip)?;
        check_probability("meas_flip", self.meas_flip)
    }
}

fn check_probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} = {v} is outside [0, 1]")))
    }
}

fn check_pair(control: usize, target: usize, n: usize) -> Result<()> {
    if control >= n || target >= n {
        return Err(Error::Validation(format!(
            "control {control} / target {target} out of range for n = {n}"
        )));
    }
    if control == target {
        return Err(Error::Validation("control and target must differ".into()));
    }
    Ok(())
}

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

fn diag2(a: f64, b: f64) -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[real(a), real(0.0), real(0.0), real(b)])
}

/// `Λ_dephase^{⊗n}` from the Kraus pair `√(1−p)·I`, `√p·Z`.
pub fn dephasing_channel(p: f64, n: usize) -> Result<TransferMatrix> {
    check_probability("p", p)?;
    let k0 = diag2((1.0 - p).sqrt(), (1.0 - p).sqrt());
    let k1 = diag2(p.sqrt(), -p.sqrt());
    ptm_from_kraus(&[k0, k1], 1)?.tensor_power(n)
}

/// `Λ_damp^{⊗n}` from the Kraus pair `diag(1, √(1−q))`, `√q·|0⟩⟨1|`.
pub fn damping_channel(q: f64, n: usize) -> Result<TransferMatrix> {
    check_probability("q", q)?;
    let k2 = diag2(1.0, (1.0 - q).sqrt());
    let mut k3 = DMatrix::zeros(2, 2);
    k3[(0, 1)] = real(q.sqrt());
    ptm_from_kraus(&[k2, k3], 1)?.tensor_power(n)
}

/// Controlled `e^{iδX}` on `(control, target)`, identity on the other qubits.
pub fn unitary_noise(delta: f64, control: usize, target: usize, n: usize) -> Result<TransferMatrix> {
    if !delta.is_finite() {
        return Err(Error::Validation("delta must be finite".into()));
    }
    check_pair(control, target, n)?;
    ptm_unitary(&gates::controlled_x_rotation(delta), 2)?.embed(&[control, target], n)
}

/// `Λ_dephase · Λ_unitary · Λ_damp` (damping acts first).
pub fn composite_noise(spec: &NoiseSpec, n: usize) -> Result<TransferMatrix> {
    spec.validate(n)?;
    let damp = damping_channel(spec.q, n)?;
    let unitary = unitary_noise(spec.delta, spec.control, spec.target, n)?;
    let dephase = dephasing_channel(spec.p, n)?;
    dephase.compose(&unitary.compose(&damp)?)
}

/// Process fidelity of [`composite_noise`] without forming the full product.
pub fn composite_fidelity(spec: &NoiseSpec, n: usize) -> Result<f64> {
    spec.validate(n)?;
    let damp = damping_channel(spec.q, n)?;
    let unitary = unitary_noise(spec.delta, spec.control, spec.target, n)?;
    let dephase = dephasing_channel(spec.p, n)?.diagonal();
    let dim = damp.dim();
    // dephasing is diagonal: tr(D V A) = Σ_i D_ii Σ_k V_ik A_ki
    let trace: f64 = (0..dim)
        .map(|i| {
            let va: f64 = unitary
                .row(i)
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(k, v)| v * damp.get(k, i))
                .sum();
            dephase[i] * va
        })
        .sum();
    Ok(trace / dim as f64)
}

/// Ranges of the raw parameter draws and the target infidelity band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleParams {
    pub infidelity_low: f64,
    pub infidelity_high: f64,
    pub p_max: f64,
    pub q_max: f64,
    pub delta_max: f64,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        EnsembleParams {
            infidelity_low: 0.01,
            infidelity_high: 0.04,
            p_max: 0.02,
            q_max: 0.02,
            delta_max: 0.15,
        }
    }
}

impl EnsembleParams {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.infidelity_low, self.infidelity_high);
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::Validation(format!(
                "infidelity band [{lo}, {hi}] must satisfy 0 < low < high < 1"
            )));
        }
        for (name, v) in [("p_max", self.p_max), ("q_max", self.q_max), ("delta_max", self.delta_max)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!("{name} must be non-negative")));
            }
        }
        if self.p_max + self.q_max + self.delta_max == 0.0 {
            return Err(Error::Validation("all raw parameter ranges are empty".into()));
        }
        Ok(())
    }
}

/// One calibrated ensemble member.
#[derive(Clone, Debug)]
pub struct NoiseSample {
    pub index: usize,
    pub spec: NoiseSpec,
    pub target_infidelity: f64,
    /// `1 − F(Λ)` of the calibrated channel.
    pub infidelity: f64,
    pub channel: TransferMatrix,
}

const CALIBRATION_TOLERANCE: f64 = 1e-5;
const MAX_BISECTION_STEPS: usize = 100;

/// Draw `count` composite channels whose infidelities are uniform on the band.
///
/// Each member draws a target infidelity and raw `(p, q, δ, control, target)`,
/// then bisects a common strength multiplier on `(p, q, δ)` until the channel
/// hits the target within `1e-5`. Member `i` uses substream `i` of `seed`.
pub fn sample_noise_ensemble(
    count: usize,
    n: usize,
    params: &EnsembleParams,
    seed: u64,
) -> Result<Vec<NoiseSample>> {
    params.validate()?;
    if n < 2 {
        return Err(Error::Validation("unitary noise needs at least two qubits".into()));
    }
    (0..count)
        .into_par_iter()
        .map(|i| sample_member(i, n, params, seed))
        .collect()
}

/// The `index`-th member of the ensemble, without generating the others.
pub fn sample_member(index: usize, n: usize, params: &EnsembleParams, seed: u64) -> Result<NoiseSample> {
    let mut rng = substream(seed, &[0x4015E, index as u64]);
    let target_infidelity = rng.random_range(params.infidelity_low..=params.infidelity_high);
    let p_raw = rng.random_range(0.0..=params.p_max);
    let q_raw = rng.random_range(0.0..=params.q_max);
    let delta_raw = rng.random_range(0.0..=params.delta_max);
    let control = rng.random_range(0..n);
    let mut target = rng.random_range(0..n - 1);
    if target >= control {
        target += 1;
    }
    let scaled = |s: f64| NoiseSpec {
        p: (s * p_raw).min(1.0),
        q: (s * q_raw).min(1.0),
        delta: s * delta_raw,
        control,
        target,
        seed,
    };
    let infidelity_at = |s: f64| composite_fidelity(&scaled(s), n).map(|f| 1.0 - f);

    // Largest multiplier keeping p, q ≤ 1 and δ ≤ π/2.
    let mut s_max = f64::INFINITY;
    for (raw, cap) in [(p_raw, 1.0), (q_raw, 1.0), (delta_raw, std::f64::consts::FRAC_PI_2)] {
        if raw > 0.0 {
            s_max = s_max.min(cap / raw);
        }
    }
    let mut hi = 1.0f64.min(s_max);
    while infidelity_at(hi)? < target_infidelity {
        if hi >= s_max {
            return Err(Error::Sampling(format!(
                "member {index}: raw parameters cannot reach infidelity {target_infidelity}"
            )));
        }
        hi = (2.0 * hi).min(s_max);
    }
    let mut lo = 0.0;
    let mut s = hi;
    let mut converged = false;
    for _ in 0..MAX_BISECTION_STEPS {
        s = 0.5 * (lo + hi);
        let r = infidelity_at(s)?;
        if (r - target_infidelity).abs() < CALIBRATION_TOLERANCE {
            converged = true;
            break;
        }
        if r < target_infidelity {
            lo = s;
        } else {
            hi = s;
        }
    }
    if !converged {
        return Err(Error::Sampling(format!(
            "member {index}: bisection did not reach infidelity {target_infidelity}"
        )));
    }
    let spec = scaled(s);
    let channel = composite_noise(&spec, n)?;
    let infidelity = 1.0 - process_fidelity(&channel);
    Ok(NoiseSample {
        index,
        spec,
        target_infidelity,
        infidelity,
        channel,
    })
}

/// Apply SPAM flips to a prepared state and effect for measurement basis `q`.
///
/// On every qubit where `q` is non-identity the prepared eigenstate is mixed
/// with its orthogonal partner with weight `prep_flip`, and each binary
/// outcome with its complement with weight `meas_flip`. Both amount to
/// scaling the Pauli-Liouville component of `R` by `(1 − 2f)` once per such
/// qubit where `R` is non-identity.
pub fn apply_spam(
    q: &PauliString,
    state: &StateVectorPL,
    effect: &EffectPL,
    spam: &SpamSpec,
) -> Result<(StateVectorPL, EffectPL)> {
    spam.validate()?;
    let n = q.num_qubits();
    if state.num_qubits() != n || effect.num_qubits() != n {
        return Err(Error::Dimension {
            expected: n,
            found: state.num_qubits().max(effect.num_qubits()),
        });
    }
    let support = q.x_bits() | q.z_bits();
    let scale = |coeffs: &[f64], flip: f64| -> Vec<f64> {
        let factor = 1.0 - 2.0 * flip;
        coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if c == 0.0 {
                    return c;
                }
                let r = PauliString::from_index_unchecked(n, i);
                let hits = ((r.x_bits() | r.z_bits()) & support).count_ones();
                c * factor.powi(hits as i32)
            })
            .collect()
    };
    Ok((
        StateVectorPL::new(n, scale(state.coeffs(), spam.prep_flip))?,
        EffectPL::new(n, scale(effect.coeffs(), spam.meas_flip))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ptm::{choi_matrix, projector_matrix, stabilizer_state_and_effect};

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn dephasing_values() {
        assert_eq!(dephasing_channel(0.0, 2).unwrap(), TransferMatrix::identity(2).unwrap());
        let half = dephasing_channel(0.5, 1).unwrap();
        assert!(half.max_abs_diff(&TransferMatrix::from_diagonal(1, &[1.0, 0.0, 0.0, 1.0]).unwrap()) < 1e-15);
        let m = dephasing_channel(0.1, 1).unwrap();
        assert!(m.max_abs_diff(&TransferMatrix::from_diagonal(1, &[1.0, 0.8, 0.8, 1.0]).unwrap()) < 1e-15);
        assert!(dephasing_channel(1.5, 1).is_err());
    }

    #[test]
    fn damping_values() {
        assert!(damping_channel(0.0, 1).unwrap().max_abs_diff(&TransferMatrix::identity(1).unwrap()) < 1e-15);
        let reset = damping_channel(1.0, 1).unwrap();
        assert!((reset.get(3, 0) - 1.0).abs() < 1e-15);
        assert!(reset.get(3, 3).abs() < 1e-15);
        let m = damping_channel(0.04, 1).unwrap();
        let root = 0.96f64.sqrt();
        let mut expected = TransferMatrix::from_diagonal(1, &[1.0, root, root, 0.96]).unwrap().entries().to_vec();
        expected[3 * 4] = 0.04;
        assert!(m.max_abs_diff(&TransferMatrix::from_entries(1, expected).unwrap()) < 1e-15);
        assert!(damping_channel(-0.1, 1).is_err());
    }

    #[test]
    fn unitary_noise_values() {
        assert!(unitary_noise(0.0, 0, 1, 3).unwrap().max_abs_diff(&TransferMatrix::identity(3).unwrap()) < 1e-15);
        // e^{iπ/2·X} = iX, so V(π/2) = (S ⊗ I)·CNOT
        let v = unitary_noise(std::f64::consts::FRAC_PI_2, 0, 1, 2).unwrap();
        let s_cnot = gates::embed_two_qubit(&gates::phase_s().kronecker(&DMatrix::identity(2, 2)), 0, 1, 2) * gates::cnot();
        assert!(v.max_abs_diff(&ptm_unitary(&s_cnot, 2).unwrap()) < 1e-14);
        let v = unitary_noise(0.1, 0, 1, 2).unwrap();
        let oracle = ptm_unitary(&gates::controlled_x_rotation(0.1), 2).unwrap();
        assert!(v.max_abs_diff(&oracle) < 1e-14);
        let orth = v.transpose().compose(&v).unwrap();
        assert!(orth.max_abs_diff(&TransferMatrix::identity(2).unwrap()) < 1e-12);
        assert!(unitary_noise(0.1, 1, 1, 2).is_err());
        assert!(unitary_noise(0.1, 0, 3, 3).is_err());
    }

    #[test]
    fn controlled_rotation_at_pi_is_controlled_phase_flip() {
        // e^{iπX} = −I, so V(π) = Z ⊗ I
        let v = unitary_noise(std::f64::consts::PI, 0, 1, 2).unwrap();
        let z = ptm_unitary(&p("ZI").to_matrix(), 2).unwrap();
        assert!(v.max_abs_diff(&z) < 1e-14);
    }

    #[test]
    fn composite_reductions() {
        let id = composite_noise(&NoiseSpec::noiseless(), 3).unwrap();
        assert!(id.max_abs_diff(&TransferMatrix::identity(3).unwrap()) < 1e-15);
        let spec = NoiseSpec {
            delta: 0.2,
            ..NoiseSpec::noiseless()
        };
        let m = composite_noise(&spec, 3).unwrap();
        assert!(process_fidelity(&m) < 1.0);
        assert!(m.max_abs_diff(&unitary_noise(0.2, 0, 1, 3).unwrap()) < 1e-15);
    }

    #[test]
    fn composite_order_is_damping_first() {
        let spec = NoiseSpec {
            p: 0.05,
            q: 0.1,
            delta: 0.3,
            control: 2,
            target: 0,
            seed: 0,
        };
        let m = composite_noise(&spec, 3).unwrap();
        let d = dephasing_channel(0.05, 3).unwrap();
        let v = unitary_noise(0.3, 2, 0, 3).unwrap();
        let a = damping_channel(0.1, 3).unwrap();
        let expected = d.compose(&v).unwrap().compose(&a).unwrap();
        assert!(m.max_abs_diff(&expected) < 1e-15);
        let swapped = a.compose(&v).unwrap().compose(&d).unwrap();
        assert!(m.max_abs_diff(&swapped) > 1e-6);
        assert!((composite_fidelity(&spec, 3).unwrap() - process_fidelity(&m)).abs() < 1e-14);
    }

    #[test]
    fn composite_channels_are_cptp() {
        let spec = NoiseSpec {
            p: 0.3,
            q: 0.4,
            delta: 1.1,
            control: 1,
            target: 0,
            seed: 0,
        };
        let m = composite_noise(&spec, 2).unwrap();
        assert!(m.trace_preservation_defect() < 1e-12);
        let eig = choi_matrix(&m).symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e > -1e-10), "{eig}");
    }

    #[test]
    fn ensemble_edge_cases() {
        let params = EnsembleParams::default();
        assert!(sample_noise_ensemble(0, 3, &params, 1).unwrap().is_empty());
        let bad = EnsembleParams {
            infidelity_low: 0.05,
            infidelity_high: 0.01,
            ..params.clone()
        };
        assert!(sample_noise_ensemble(1, 3, &bad, 1).is_err());
        let a = sample_noise_ensemble(5, 3, &params, 9).unwrap();
        let b = sample_noise_ensemble(5, 3, &params, 9).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.spec, y.spec);
            assert_eq!(x.channel, y.channel);
            assert!((x.infidelity - x.target_infidelity).abs() < 1e-5);
        }
        let single = sample_member(3, 3, &params, 9).unwrap();
        assert_eq!(single.channel, a[3].channel);
    }

    #[test]
    fn spam_examples() {
        let q = p("Z");
        let (rho, m) = stabilizer_state_and_effect(&q).unwrap();
        let (r0, m0) = apply_spam(&q, &rho, &m, &SpamSpec::default()).unwrap();
        assert_eq!((r0.clone(), m0), (rho.clone(), m.clone()));

        let (flipped, _) = apply_spam(&q, &rho, &m, &SpamSpec { prep_flip: 1.0, meas_flip: 0.0 }).unwrap();
        let (minus, _) = stabilizer_state_and_effect(&q).unwrap();
        assert_eq!(flipped.coeffs()[3], -minus.coeffs()[3]);
        assert_eq!(flipped.coeffs()[0], minus.coeffs()[0]);

        let (r, e) = apply_spam(&q, &rho, &m, &SpamSpec::symmetric(0.02)).unwrap();
        let overlap = e.expectation(&projector_matrix(&q).unwrap(), &r);
        assert!((overlap - 0.5 * 0.96f64.powi(2)).abs() < 1e-15);
        assert!((overlap - 0.4608).abs() < 1e-12);
    }

    #[test]
    fn spam_mixes_with_the_orthogonal_eigenstate() {
        // Dense oracle on IZY: ρ = ⊗ ((1−f)|ψ⟩⟨ψ| + f|ψ⊥⟩⟨ψ⊥|) with |0⟩ left alone on the I slot,
        // effect = Σ over parity-even outcome strings of the flipped single-qubit effects.
        let q = p("IZY");
        let f = 0.1;
        let (rho, m) = stabilizer_state_and_effect(&q).unwrap();
        let (r, e) = apply_spam(&q, &rho, &m, &SpamSpec { prep_flip: f, meas_flip: f }).unwrap();
        let id = DMatrix::<Complex64>::identity(2, 2);
        let proj = |axis: &str, sign: f64| -> DMatrix<Complex64> {
            (&id + p(axis).to_matrix() * real(sign)) * real(0.5)
        };
        let mixed = |axis: &str| proj(axis, 1.0) * real(1.0 - f) + proj(axis, -1.0) * real(f);
        let dense_rho = proj("Z", 1.0).kronecker(&mixed("Z")).kronecker(&mixed("Y"));
        let oracle_state = StateVectorPL::from_operator(&dense_rho, 3).unwrap();
        assert!(r.coeffs().iter().zip(oracle_state.coeffs()).all(|(a, b)| (a - b).abs() < 1e-15));

        let noisy = |axis: &str, s: f64| proj(axis, s) * real(1.0 - f) + proj(axis, -s) * real(f);
        let mut dense_effect = DMatrix::<Complex64>::zeros(8, 8);
        for (s1, s2) in [(1.0, 1.0), (-1.0, -1.0)] {
            dense_effect += id.kronecker(&noisy("Z", s1)).kronecker(&noisy("Y", s2));
        }
        let oracle_effect = EffectPL::from_operator(&dense_effect, 3).unwrap();
        assert!(e.coeffs().iter().zip(oracle_effect.coeffs()).all(|(a, b)| (a - b).abs() < 1e-15));
    }
}
