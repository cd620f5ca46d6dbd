//! Parameter sweeps over the calibrated noise ensemble.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, Validate};
use crate::noise::{sample_member, NoiseSample, SpamSpec};
use crate::pauli::PauliString;
use crate::ptcb::{
    estimate_fidelity, estimate_pair_with, EstimatorSettings, PairSelection, PairSource, PtcbModel,
};
use crate::rng::substream;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Exact-PTM estimate over every pair: the gap of the square-root bound.
    EstimationGap,
    /// Importance sampling with exact products, varying the number of pairs.
    OuterSweep,
    /// One pair measured by the protocol, varying the shot count.
    RepetitionSweep,
    /// One pair measured by the protocol, varying the SPAM rate.
    SpamSweep,
    /// Full protocol estimate, varying the number of inner tuples.
    InnerSweep,
}

/// Varied parameters; only the list matching the sweep kind is used.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub outer_samples: Vec<usize>,
    pub inner_samples: Vec<usize>,
    pub shots: Vec<u64>,
    /// Symmetric SPAM rates (preparation and measurement flip).
    pub spam: Vec<f64>,
}

fn default_ensemble_size() -> usize {
    100
}
fn default_repeats() -> usize {
    1
}
fn default_p() -> PauliString {
    "IIY".parse().expect("valid Pauli")
}
fn default_q() -> PauliString {
    "IZY".parse().expect("valid Pauli")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub kind: SweepKind,
    /// Shared settings; its `noise` is replaced by ensemble members and its
    /// `seed` by the plan seed.
    #[serde(default)]
    pub base: ExperimentConfig,
    #[serde(default)]
    pub grid: SweepGrid,
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    /// Independent estimates per (channel, cell).
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Pair used by the single-pair sweeps.
    #[serde(default = "default_p")]
    pub pair_p: PauliString,
    #[serde(default = "default_q")]
    pub pair_q: PauliString,
    #[serde(default)]
    pub seed: u64,
}

/// One varied-parameter setting.
#[derive(Copy, Clone, Debug, PartialEq)]
struct Cell {
    outer_samples: Option<usize>,
    inner_samples: Option<usize>,
    shots: u64,
    spam: SpamSpec,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.ensemble_size == 0 {
            return Err(Error::config("ensemble_size", "must be at least 1"));
        }
        if self.repeats == 0 {
            return Err(Error::config("repeats", "must be at least 1"));
        }
        let n = self.base.gate.num_qubits();
        if n < 2 {
            return Err(Error::config("base.gate", "ensemble noise needs at least two qubits"));
        }
        let (field, empty) = match self.kind {
            SweepKind::EstimationGap => ("", false),
            SweepKind::OuterSweep => ("grid.outer_samples", self.grid.outer_samples.is_empty()),
            SweepKind::RepetitionSweep => ("grid.shots", self.grid.shots.is_empty()),
            SweepKind::SpamSweep => ("grid.spam", self.grid.spam.is_empty()),
            SweepKind::InnerSweep => ("grid.inner_samples", self.grid.inner_samples.is_empty()),
        };
        if empty {
            return Err(Error::config(field, "must not be empty for this sweep kind"));
        }
        for (i, &v) in self.grid.spam.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("grid.spam[{i}]"), format!("{v} is outside [0, 1]")));
            }
        }
        for (i, &v) in self.grid.inner_samples.iter().enumerate() {
            if v == 0 {
                return Err(Error::config(format!("grid.inner_samples[{i}]"), "must be at least 1"));
            }
        }
        if self.kind == SweepKind::OuterSweep {
            let segments = crate::ptcb::SegmentTable::new(&self.base.gate.ideal_ptm()?)?.len();
            for (i, &m) in self.grid.outer_samples.iter().enumerate() {
                if m == 0 || m > segments {
                    return Err(Error::config(
                        format!("grid.outer_samples[{i}]"),
                        format!("{m} is outside 1..={segments}"),
                    ));
                }
            }
        }
        if matches!(self.kind, SweepKind::RepetitionSweep | SweepKind::SpamSweep) {
            for (field, p) in [("pair_p", &self.pair_p), ("pair_q", &self.pair_q)] {
                if p.num_qubits() != n || p.is_identity() || !p.is_phase_free() {
                    return Err(Error::config(field, format!("{p} is not a non-identity {n}-qubit Pauli")));
                }
            }
        }
        Ok(())
    }

    fn cells(&self) -> Vec<Cell> {
        let base = Cell {
            outer_samples: None,
            inner_samples: None,
            shots: self.base.shots,
            spam: self.base.spam,
        };
        match self.kind {
            SweepKind::EstimationGap => vec![Cell { shots: 0, spam: SpamSpec::default(), ..base }],
            SweepKind::OuterSweep => self
                .grid
                .outer_samples
                .iter()
                .map(|&m| Cell {
                    outer_samples: Some(m),
                    shots: 0,
                    spam: SpamSpec::default(),
                    ..base
                })
                .collect(),
            SweepKind::RepetitionSweep => self
                .grid
                .shots
                .iter()
                .map(|&shots| Cell {
                    inner_samples: Some(self.base.inner_samples),
                    shots,
                    ..base
                })
                .collect(),
            SweepKind::SpamSweep => self
                .grid
                .spam
                .iter()
                .map(|&rate| Cell {
                    inner_samples: Some(self.base.inner_samples),
                    spam: SpamSpec::symmetric(rate),
                    ..base
                })
                .collect(),
            SweepKind::InnerSweep => self
                .grid
                .inner_samples
                .iter()
                .map(|&m| Cell {
                    outer_samples: Some(self.base.outer_samples),
                    inner_samples: Some(m),
                    ..base
                })
                .collect(),
        }
    }
}

impl Validate for SweepPlan {
    fn check(&self) -> Result<()> {
        self.validate()
    }
}

/// Infidelity bins used to group rows.
pub fn infidelity_bin(infidelity: f64) -> &'static str {
    if (0.01..0.02).contains(&infidelity) {
        "[0.01,0.02)"
    } else if (0.02..0.03).contains(&infidelity) {
        "[0.02,0.03)"
    } else if (0.03..=0.04).contains(&infidelity) {
        "[0.03,0.04]"
    } else {
        "outside"
    }
}

/// One (channel, cell, repeat) result; carries its full parameter cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: SweepKind,
    pub channel: usize,
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    pub control: usize,
    pub target: usize,
    pub actual_infidelity: f64,
    pub bin: String,
    pub outer_samples: Option<usize>,
    pub inner_samples: Option<usize>,
    pub shots: u64,
    pub prep_flip: f64,
    pub meas_flip: f64,
    pub repeat: usize,
    /// `infidelity` or `pair-product`.
    pub quantity: String,
    pub exact: f64,
    pub estimate: Option<f64>,
    /// `estimate − exact`.
    pub discrepancy: Option<f64>,
    pub clamped: usize,
    pub error: String,
}

fn run_cell(plan: &SweepPlan, member: &NoiseSample, cell: &Cell, seed: u64) -> Result<(String, f64, f64, usize)> {
    let base = &plan.base;
    let ideal = base.gate.ideal_ptm()?;
    let model = PtcbModel::new(ideal, &member.channel, cell.spam)?;
    let mut protocol = base.protocol_settings();
    protocol.shots = cell.shots;
    if let Some(m) = cell.inner_samples {
        protocol.inner = match protocol.inner {
            crate::ptcb::InnerSampling::Sampled { .. } => crate::ptcb::InnerSampling::Sampled { count: m },
            other => other,
        };
    }
    match plan.kind {
        SweepKind::RepetitionSweep | SweepKind::SpamSweep => {
            let (p, q) = (&plan.pair_p, &plan.pair_q);
            let est = estimate_pair_with(&model, p, q, &protocol, base.variant, seed, &[])?;
            let eff = model.effective();
            let exact = match base.variant {
                crate::ptcb::Variant::Standard => eff.entry(p, q) * eff.entry(q, p),
                crate::ptcb::Variant::Inverse => eff.entry(p, q).powi(2),
            };
            Ok(("pair-product".into(), exact, est.product, 0))
        }
        _ => {
            let settings = EstimatorSettings {
                selection: match cell.outer_samples {
                    Some(count) => PairSelection::Importance { count },
                    None => PairSelection::Exhaustive,
                },
                source: match plan.kind {
                    SweepKind::InnerSweep => PairSource::Protocol(protocol),
                    _ => PairSource::ExactPtm,
                },
                variant: base.variant,
            };
            let est = estimate_fidelity(&model, &settings, seed)?;
            Ok(("infidelity".into(), 1.0 - est.exact, 1.0 - est.estimate, est.clamped))
        }
    }
}

/// Run every (channel, cell, repeat) task; failures are recorded in the row.
///
/// Tasks run in parallel and are collected in a fixed order, with per-task
/// seeds derived from the plan seed, so output is independent of threading.
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<SweepRow>> {
    plan.validate()?;
    let n = plan.base.gate.num_qubits();
    let members = (0..plan.ensemble_size)
        .into_par_iter()
        .map(|i| sample_member(i, n, &plan.base.ensemble, plan.seed))
        .collect::<Result<Vec<_>>>()?;
    let cells = plan.cells();
    let tasks: Vec<(usize, usize, usize)> = (0..members.len())
        .flat_map(|c| (0..cells.len()).flat_map(move |k| (0..plan.repeats).map(move |r| (c, k, r))))
        .collect();
    let rows = tasks
        .par_iter()
        .map(|&(c, k, r)| {
            let member = &members[c];
            let cell = &cells[k];
            let seed = substream(plan.seed, &[0x5EE9, c as u64, k as u64, r as u64]).random::<u64>();
            let outcome = run_cell(plan, member, cell, seed);
            let (quantity, exact, estimate, clamped, error) = match outcome {
                Ok((qty, exact, est, clamped)) => (qty, exact, Some(est), clamped, String::new()),
                Err(e) => {
                    let qty = match plan.kind {
                        SweepKind::RepetitionSweep | SweepKind::SpamSweep => "pair-product",
                        _ => "infidelity",
                    };
                    (qty.to_string(), f64::NAN, None, 0, e.to_string())
                }
            };
            SweepRow {
                kind: plan.kind,
                channel: member.index,
                p: member.spec.p,
                q: member.spec.q,
                delta: member.spec.delta,
                control: member.spec.control,
                target: member.spec.target,
                actual_infidelity: member.infidelity,
                bin: infidelity_bin(member.infidelity).to_string(),
                outer_samples: cell.outer_samples,
                inner_samples: cell.inner_samples,
                shots: cell.shots,
                prep_flip: cell.spam.prep_flip,
                meas_flip: cell.spam.meas_flip,
                repeat: r,
                quantity,
                exact,
                estimate,
                discrepancy: estimate.map(|e| e - exact),
                clamped,
                error,
            }
        })
        .collect();
    Ok(rows)
}

/// Aggregate of the rows sharing a bin and a parameter cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub kind: SweepKind,
    pub bin: String,
    pub outer_samples: Option<usize>,
    pub inner_samples: Option<usize>,
    pub shots: u64,
    pub prep_flip: f64,
    pub meas_flip: f64,
    pub count: usize,
    pub failures: usize,
    pub mean_discrepancy: f64,
    pub rms_discrepancy: f64,
    pub min_discrepancy: f64,
    pub max_discrepancy: f64,
}

/// Group rows by (kind, bin, cell) into plot-ready series, plus an `all` bin.
pub fn summarize(rows: &[SweepRow]) -> Vec<SeriesPoint> {
    type Key = (SweepKind, String, Option<usize>, Option<usize>, u64, u64, u64);
    let mut groups: BTreeMap<Key, Vec<&SweepRow>> = BTreeMap::new();
    for row in rows {
        for bin in [row.bin.clone(), "all".to_string()] {
            let key = (
                row.kind,
                bin,
                row.outer_samples,
                row.inner_samples,
                row.shots,
                row.prep_flip.to_bits(),
                row.meas_flip.to_bits(),
            );
            groups.entry(key).or_default().push(row);
        }
    }
    groups
        .into_iter()
        .map(|(key, members)| {
            let ok: Vec<f64> = members.iter().filter_map(|r| r.discrepancy).collect();
            let count = ok.len();
            let (mean, rms, lo, hi) = if count == 0 {
                (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
            } else {
                let k = count as f64;
                (
                    ok.iter().sum::<f64>() / k,
                    (ok.iter().map(|d| d * d).sum::<f64>() / k).sqrt(),
                    ok.iter().cloned().fold(f64::INFINITY, f64::min),
                    ok.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                )
            };
            SeriesPoint {
                kind: key.0,
                bin: key.1,
                outer_samples: key.2,
                inner_samples: key.3,
                shots: key.4,
                prep_flip: f64::from_bits(key.5),
                meas_flip: f64::from_bits(key.6),
                count,
                failures: members.len() - count,
                mean_discrepancy: mean,
                rms_discrepancy: rms,
                min_discrepancy: lo,
                max_discrepancy: hi,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::parse_config;

    fn plan(text: &str) -> SweepPlan {
        parse_config(text).unwrap()
    }

    #[test]
    fn estimation_gap_rows_are_small_and_non_negative() {
        let rows = run_sweep(&plan(r#"{"kind": "estimation-gap", "ensemble_size": 6, "seed": 2}"#)).unwrap();
        assert_eq!(rows.len(), 6);
        for r in &rows {
            let d = r.discrepancy.unwrap();
            assert!((0.0..=1e-4).contains(&d), "{d}");
            assert!(r.bin != "outside");
            assert!(r.error.is_empty());
        }
    }

    #[test]
    fn exhaustive_outer_sweep_reproduces_the_gap() {
        let gap = run_sweep(&plan(r#"{"kind": "estimation-gap", "ensemble_size": 3, "seed": 5}"#)).unwrap();
        let outer = run_sweep(&plan(
            r#"{"kind": "outer-sweep", "ensemble_size": 3, "seed": 5, "grid": {"outer_samples": [256]}}"#,
        ))
        .unwrap();
        for (a, b) in gap.iter().zip(&outer) {
            assert_eq!(a.discrepancy, b.discrepancy);
        }
    }

    #[test]
    fn grid_validation() {
        let err = parse_config::<SweepPlan>(r#"{"kind": "outer-sweep"}"#).unwrap_err();
        assert!(err.to_string().contains("grid.outer_samples"));
        let err = parse_config::<SweepPlan>(r#"{"kind": "outer-sweep", "grid": {"outer_samples": [300]}}"#).unwrap_err();
        assert!(err.to_string().contains("grid.outer_samples[0]"));
        let err = parse_config::<SweepPlan>(r#"{"kind": "spam-sweep", "grid": {"spam": [0.1, 2]}}"#).unwrap_err();
        assert!(err.to_string().contains("grid.spam[1]"));
        assert!(parse_config::<SweepPlan>(r#"{"kind": "nope"}"#).unwrap_err().is_config());
    }

    #[test]
    fn spam_sweep_with_exact_expectation_is_flat() {
        let rows = run_sweep(&plan(
            r#"{"kind": "spam-sweep", "ensemble_size": 2, "grid": {"spam": [0, 0.02, 0.05]},
                "base": {"inner_mode": "expectation"}}"#,
        ))
        .unwrap();
        assert_eq!(rows.len(), 6);
        for chunk in rows.chunks(3) {
            for r in chunk {
                assert!((r.estimate.unwrap() - chunk[0].estimate.unwrap()).abs() < 1e-12);
                assert!(r.discrepancy.unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn summary_groups_by_bin_and_cell() {
        let rows = run_sweep(&plan(
            r#"{"kind": "outer-sweep", "ensemble_size": 4, "repeats": 2, "grid": {"outer_samples": [10, 256]}}"#,
        ))
        .unwrap();
        assert_eq!(rows.len(), 16);
        let series = summarize(&rows);
        let all: Vec<_> = series.iter().filter(|s| s.bin == "all").collect();
        assert_eq!(all.len(), 2);
        assert!(all.iter().all(|s| s.count == 8));
    }
}
