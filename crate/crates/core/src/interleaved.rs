//! Interleaved bounds: recover `F(Λ)` from `F(Λℰ)` and `F(ℰ)`.

use serde::{Deserialize, Serialize};

use crate::crb::{estimate_twirl_fidelity, CrbSettings, QSelection};
use crate::error::{Error, Result};
use crate::ptcb::{estimate_fidelity, EstimatorSettings, PtcbModel};
use crate::ptm::process_fidelity;

/// Which expression attained the minimum systematic-error bound.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// `4(d+1)√(1−F_E) + 2(d+1)/d·(1−F_E)`.
    Root,
    /// Absolute-value term plus `(d²F_E−1)(1−F_E)`, over `d²−1`.
    Absolute,
    /// Absolute-value term plus `(d²F_E−1)(F_E−F_ΛE)`, over `d²−1`.
    Difference,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityInterval {
    pub lower: f64,
    pub upper: f64,
    /// The systematic-error bound used for the endpoints.
    pub e_bound: f64,
    pub branch: Branch,
    /// The three bound expressions, in [`Branch`] order.
    pub candidates: [f64; 3],
}

impl FidelityInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, f: f64) -> bool {
        self.lower <= f && f <= self.upper
    }
}

/// Interval containing `F(Λ)` given `F(Λℰ)`, `F(ℰ)` and dimension `d`.
///
/// The bound `E` is the smallest of the three expressions, floored at zero:
/// the third can go negative when `F(Λℰ) > F(ℰ)`, which would invert the
/// interval. Endpoints are clipped to `[0, 1]`.
pub fn fidelity_interval(f_combined: f64, f_twirl: f64, d: usize) -> Result<FidelityInterval> {
    for (name, v) in [("F(Λℰ)", f_combined), ("F(ℰ)", f_twirl)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Validation(format!("{name} = {v} is outside [0, 1]")));
        }
    }
    if d < 2 {
        return Err(Error::Validation("dimension must be at least 2".into()));
    }
    let d = d as f64;
    let d2 = d * d;
    let denom = d2 * f_twirl - 1.0;
    if denom <= 0.0 {
        return Err(Error::Numerical(format!(
            "d²F(ℰ) − 1 = {denom:e} is not positive; the twirl gates are too noisy for a bound"
        )));
    }
    let infid = 1.0 - f_twirl;
    let root = 4.0 * (d + 1.0) * infid.sqrt() + 2.0 * (d + 1.0) / d * infid;
    let shared = (d2 * (f_combined - f_twirl) + 2.0 * f_twirl - f_combined - 1.0).abs();
    let absolute = (shared + denom * infid) / (d2 - 1.0);
    let difference = (shared + denom * (f_twirl - f_combined)) / (d2 - 1.0);
    let candidates = [root, absolute, difference];
    let (branch, e_min) = [Branch::Root, Branch::Absolute, Branch::Difference]
        .into_iter()
        .zip(candidates)
        .fold((Branch::Root, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
    let e_bound = e_min.max(0.0);
    let endpoint = |f: f64| ((d2 * f - 1.0) / denom * (1.0 - 1.0 / d2) + 1.0 / d2).clamp(0.0, 1.0);
    Ok(FidelityInterval {
        lower: endpoint(f_combined - e_bound),
        upper: endpoint(f_combined + e_bound),
        e_bound,
        branch,
        candidates,
    })
}

/// Fidelities feeding the interleaved bound, estimated and exact.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct CombinedFidelity {
    /// Protocol estimate `F̂` of `F(Λℰ)`.
    pub combined_estimate: f64,
    /// `F(Λℰ)` from the PTMs.
    pub combined_exact: f64,
    /// Twirl-gate fidelity `F(ℰ)` from character benchmarking.
    pub twirl_estimate: f64,
    /// `F(ℰ)` from the PTM.
    pub twirl_exact: f64,
}

/// Run the gate protocol with twirl noise for `F(Λℰ)` and Pauli-group
/// benchmarking for `F(ℰ)`. Without twirl noise `F(ℰ)` is 1.
///
/// The estimate of `F(Λℰ)` carries the gap of the square-root bound, so it
/// matches the exact value only to about `1e-4`; the exact values are
/// returned alongside for that reason.
pub fn combined_fidelity(
    model: &PtcbModel,
    estimator: &EstimatorSettings,
    crb: &CrbSettings,
    selection: QSelection,
    seed: u64,
) -> Result<CombinedFidelity> {
    let combined = estimate_fidelity(model, estimator, seed)?;
    let (twirl_estimate, twirl_exact) = match &model.twirl_noise {
        Some(e) => (
            estimate_twirl_fidelity(e, &model.spam, crb, selection, seed)?.estimate,
            process_fidelity(e),
        ),
        None => (1.0, 1.0),
    };
    Ok(CombinedFidelity {
        combined_estimate: combined.estimate,
        combined_exact: combined.exact,
        twirl_estimate,
        twirl_exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates;
    use crate::noise::{composite_noise, dephasing_channel, NoiseSpec, SpamSpec};
    use crate::ptcb::{InnerSampling, PairSelection, PairSource, Variant};
    use crate::ptm::{ptm_unitary, TransferMatrix};

    #[test]
    fn perfect_twirl_gates_collapse_the_interval() {
        for f in [0.97, 0.99, 0.5] {
            let iv = fidelity_interval(f, 1.0, 8).unwrap();
            assert_eq!(iv.e_bound, 0.0);
            assert_eq!(iv.branch, Branch::Root);
            assert!((iv.lower - f).abs() < 1e-14 && (iv.upper - f).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(fidelity_interval(0.9, 1.0 / 64.0, 8).is_err());
        assert!(fidelity_interval(1.2, 0.99, 8).is_err());
        assert!(fidelity_interval(0.9, 0.99, 1).is_err());
    }

    #[test]
    fn last_two_branches_meet_when_differences_match() {
        let f_e = 0.995;
        let f_le = 2.0 * f_e - 1.0;
        let iv = fidelity_interval(f_le, f_e, 8).unwrap();
        assert!((iv.candidates[1] - iv.candidates[2]).abs() < 1e-15);
        assert!(iv.candidates.iter().all(|&c| c >= -1e-12));
    }

    /// Dephasing strength whose `n`-qubit tensor power combined with `base`
    /// reaches fidelity `target`.
    fn dephasing_for(target: f64, base: &TransferMatrix, n: usize) -> TransferMatrix {
        let f = |p: f64| process_fidelity(&dephasing_channel(p, n).unwrap().compose(base).unwrap());
        let (mut lo, mut hi) = (0.0, 0.5);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        dephasing_channel(0.5 * (lo + hi), n).unwrap()
    }

    #[test]
    fn constructed_pair_is_contained() {
        let e = dephasing_for(0.999, &TransferMatrix::identity(3).unwrap(), 3);
        let lambda = dephasing_for(0.98, &e, 3);
        let f_le = process_fidelity(&lambda.compose(&e).unwrap());
        let f_e = process_fidelity(&e);
        assert!((f_e - 0.999).abs() < 1e-12 && (f_le - 0.98).abs() < 1e-12);
        let iv = fidelity_interval(f_le, f_e, 8).unwrap();
        assert!(iv.contains(process_fidelity(&lambda)), "{iv:?}");
        assert!(iv.lower <= iv.upper);
    }

    #[test]
    fn width_shrinks_as_twirl_gates_improve() {
        let lambda = composite_noise(
            &NoiseSpec { p: 0.004, q: 0.01, delta: 0.1, control: 0, target: 2, seed: 0 },
            3,
        )
        .unwrap();
        let id = TransferMatrix::identity(3).unwrap();
        let widths: Vec<f64> = [0.99, 0.999, 0.9999]
            .iter()
            .map(|&fe| {
                let e = dephasing_for(fe, &id, 3);
                let f_le = process_fidelity(&lambda.compose(&e).unwrap());
                let iv = fidelity_interval(f_le, process_fidelity(&e), 8).unwrap();
                assert!(iv.contains(process_fidelity(&lambda)));
                iv.width()
            })
            .collect();
        assert!(widths[0] > widths[1] && widths[1] > widths[2], "{widths:?}");
    }

    #[test]
    fn identity_gate_noise_reduces_to_the_twirl_fidelity() {
        let toffoli = ptm_unitary(&gates::toffoli(), 3).unwrap();
        let e = dephasing_channel(0.01, 3).unwrap();
        let model = PtcbModel::new(toffoli, &TransferMatrix::identity(3).unwrap(), SpamSpec::default())
            .unwrap()
            .with_twirl_noise(e.clone())
            .unwrap();
        let estimator = EstimatorSettings {
            selection: PairSelection::Exhaustive,
            source: PairSource::ExactPtm,
            variant: Variant::Standard,
        };
        let crb = CrbSettings {
            inner: InnerSampling::Expectation,
            ..CrbSettings::default()
        };
        let c = combined_fidelity(&model, &estimator, &crb, QSelection::All, 0).unwrap();
        assert!((c.combined_exact - c.twirl_exact).abs() < 1e-10);
        assert!((c.twirl_estimate - c.twirl_exact).abs() < 1e-10);
        assert!((c.combined_estimate - c.combined_exact).abs() < 1e-4);
    }
}
