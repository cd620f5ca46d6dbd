//! Output directory handling and the row types written to CSV.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ptcb_core::crb::TwirlFidelity;
use ptcb_core::noise::NoiseSample;
use ptcb_core::{FidelityEstimate, Result, TransferMatrix};
use serde::Serialize;

pub struct OutDir(PathBuf);

impl OutDir {
    pub fn new(path: PathBuf) -> Result<Self> {
        fs::create_dir_all(&path)?;
        Ok(OutDir(path))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(std::io::Error::from)?;
    for row in rows {
        w.serialize(row).map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
pub struct PairRow {
    pub pair: usize,
    pub segment: Option<usize>,
    pub p: String,
    pub q: String,
    pub ideal_entry: f64,
    pub product: f64,
    pub clamped: bool,
    pub clifford_sign: Option<i8>,
    pub g0: Option<f64>,
    pub g1: Option<f64>,
}

pub fn pair_rows(est: &FidelityEstimate) -> Vec<PairRow> {
    est.terms
        .iter()
        .enumerate()
        .map(|(i, t)| PairRow {
            pair: i,
            segment: t.segment,
            p: t.p.to_string(),
            q: t.q.to_string(),
            ideal_entry: t.ideal_entry,
            product: t.product,
            clamped: t.clamped,
            clifford_sign: t.protocol.as_ref().map(|e| e.clifford_sign),
            g0: t.protocol.as_ref().map(|e| e.g0),
            g1: t.protocol.as_ref().map(|e| e.g1),
        })
        .collect()
}

#[derive(Serialize)]
pub struct DepthRow {
    pub pair: usize,
    pub p: String,
    pub q: String,
    pub depth: usize,
    pub value: f64,
}

/// Character-weighted averages `g(m)` for every measured pair and depth.
pub fn depth_rows(est: &FidelityEstimate) -> Vec<DepthRow> {
    let mut rows = Vec::new();
    for (i, t) in est.terms.iter().enumerate() {
        if let Some(e) = &t.protocol {
            for &(depth, value) in &e.decay {
                rows.push(DepthRow {
                    pair: i,
                    p: t.p.to_string(),
                    q: t.q.to_string(),
                    depth,
                    value,
                });
            }
        }
    }
    rows
}

#[derive(Serialize)]
pub struct SequenceRow {
    pub pair: usize,
    pub depth: usize,
    pub paulis: String,
    pub lambda: i8,
    pub probability: f64,
}

pub fn sequence_rows(est: &FidelityEstimate) -> Vec<SequenceRow> {
    let mut rows = Vec::new();
    for (i, t) in est.terms.iter().enumerate() {
        for r in t.protocol.iter().flat_map(|e| &e.records) {
            rows.push(SequenceRow {
                pair: i,
                depth: r.depth,
                paulis: r.paulis.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" "),
                lambda: r.lambda,
                probability: r.probability,
            });
        }
    }
    rows
}

#[derive(Serialize)]
pub struct EigenvalueRow {
    pub q: String,
    pub estimate: f64,
    pub exact: f64,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub max_residual: Option<f64>,
}

pub fn eigenvalue_rows(twirl: &TwirlFidelity, noise: &TransferMatrix) -> Vec<EigenvalueRow> {
    twirl
        .eigenvalues
        .iter()
        .map(|e| EigenvalueRow {
            q: e.q.to_string(),
            estimate: e.eigenvalue,
            exact: noise.entry(&e.q, &e.q),
            slope: e.fit.map(|f| f.slope),
            intercept: e.fit.map(|f| f.intercept),
            max_residual: e.fit.map(|f| f.max_residual),
        })
        .collect()
}

#[derive(Serialize)]
pub struct CrbDepthRow {
    pub q: String,
    pub depth: usize,
    pub value: f64,
}

pub fn crb_depth_rows(twirl: &TwirlFidelity) -> Vec<CrbDepthRow> {
    twirl
        .eigenvalues
        .iter()
        .flat_map(|e| {
            e.decay.iter().map(move |&(depth, value)| CrbDepthRow {
                q: e.q.to_string(),
                depth,
                value,
            })
        })
        .collect()
}

#[derive(Serialize)]
pub struct NoiseRow {
    pub index: usize,
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    pub control: usize,
    pub target: usize,
    pub target_infidelity: f64,
    pub infidelity: f64,
}

pub fn noise_rows(members: &[NoiseSample]) -> Vec<NoiseRow> {
    members
        .iter()
        .map(|m| NoiseRow {
            index: m.index,
            p: m.spec.p,
            q: m.spec.q,
            delta: m.spec.delta,
            control: m.spec.control,
            target: m.spec.target,
            target_infidelity: m.target_infidelity,
            infidelity: m.infidelity,
        })
        .collect()
}
