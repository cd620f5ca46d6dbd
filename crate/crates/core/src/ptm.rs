//! Pauli transfer matrices and Pauli-Liouville vectors.
//!
//! Everything here is expressed in the normalized basis `σ_P = P/√d`, so
//! `⟨⟨σ_P|σ_Q⟩⟩ = δ_PQ`. Rows and columns follow the canonical Pauli
//! enumeration of [`PauliString::enumerate`].

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{check_dims, Error, Result};
use crate::pauli::{Letter, PauliString, MAX_QUBITS};

/// Residual imaginary part tolerated when reducing complex data to a real PTM.
pub const IMAG_TOLERANCE: f64 = 1e-12;
/// Tolerance for trace preservation of Kraus sets and unitarity checks.
pub const VALIDATION_TOLERANCE: f64 = 1e-10;

/// Dense real `d² × d²` matrix of a linear map on operators, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix {
    n: usize,
    dim: usize,
    entries: Vec<f64>,
}

impl TransferMatrix {
    pub fn identity(n: usize) -> Result<Self> {
        let dim = pauli_dim(n)?;
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Ok(TransferMatrix { n, dim, entries })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        let dim = pauli_dim(n)?;
        Ok(TransferMatrix {
            n,
            dim,
            entries: vec![0.0; dim * dim],
        })
    }

    pub fn from_entries(n: usize, entries: Vec<f64>) -> Result<Self> {
        let dim = pauli_dim(n)?;
        check_dims(dim * dim, entries.len())?;
        if let Some(bad) = entries.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite PTM entry {bad}")));
        }
        Ok(TransferMatrix { n, dim, entries })
    }

    pub fn from_diagonal(n: usize, diagonal: &[f64]) -> Result<Self> {
        let mut m = TransferMatrix::zeros(n)?;
        check_dims(m.dim, diagonal.len())?;
        for (i, &v) in diagonal.iter().enumerate() {
            m.entries[i * m.dim + i] = v;
        }
        Ok(m)
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    /// `d² = 4^n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim + col]
    }

    /// Entry `Λ_PQ`.
    pub fn entry(&self, p: &PauliString, q: &PauliString) -> f64 {
        self.get(p.index(), q.index())
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.dim..(row + 1) * self.dim]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Self {
        let dim = self.dim;
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                entries[j * dim + i] = self.entries[i * dim + j];
            }
        }
        TransferMatrix {
            n: self.n,
            dim,
            entries,
        }
    }

    /// Matrix product `self · other`, i.e. `other` acts first.
    ///
    /// Each output entry is summed in ascending inner-index order.
    pub fn compose(&self, other: &TransferMatrix) -> Result<Self> {
        check_dims(self.n, other.n)?;
        let dim = self.dim;
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            let out = &mut entries[i * dim..(i + 1) * dim];
            for k in 0..dim {
                let a = self.entries[i * dim + k];
                if a == 0.0 {
                    continue;
                }
                let row = &other.entries[k * dim..(k + 1) * dim];
                for (o, &b) in out.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        Ok(TransferMatrix {
            n: self.n,
            dim,
            entries,
        })
    }

    /// `self · v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim, "vector length must be d²");
        (0..self.dim)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .collect()
    }

    /// `vᵀ · self`.
    pub fn apply_left(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim, "vector length must be d²");
        let mut out = vec![0.0; self.dim];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += vi * a;
            }
        }
        out
    }

    /// Kronecker product; `self` acts on the leading qubits.
    pub fn kron(&self, other: &TransferMatrix) -> Result<Self> {
        let n = self.n + other.n;
        let dim = pauli_dim(n)?;
        let mut entries = vec![0.0; dim * dim];
        for i in 0..self.dim {
            for j in 0..self.dim {
                let a = self.get(i, j);
                if a == 0.0 {
                    continue;
                }
                for k in 0..other.dim {
                    for l in 0..other.dim {
                        let row = i * other.dim + k;
                        let col = j * other.dim + l;
                        entries[row * dim + col] = a * other.get(k, l);
                    }
                }
            }
        }
        Ok(TransferMatrix { n, dim, entries })
    }

    /// `self^{⊗ copies}`.
    pub fn tensor_power(&self, copies: usize) -> Result<Self> {
        if copies == 0 {
            return Err(Error::Validation("tensor power needs at least one copy".into()));
        }
        let mut out = self.clone();
        for _ in 1..copies {
            out = out.kron(self)?;
        }
        Ok(out)
    }

    /// Embed a map on `qubits.len()` qubits into an `n`-qubit register,
    /// acting as the identity elsewhere. `qubits[i]` receives local qubit `i`.
    pub fn embed(&self, qubits: &[usize], n: usize) -> Result<Self> {
        check_dims(self.n, qubits.len())?;
        for (i, &q) in qubits.iter().enumerate() {
            if q >= n || qubits[..i].contains(&q) {
                return Err(Error::Validation(format!(
                    "invalid embedding qubits {qubits:?} for n = {n}"
                )));
            }
        }
        let mut out = TransferMatrix::zeros(n)?;
        let shift = |k: usize| 2 * (n - 1 - k);
        let local_mask: usize = qubits.iter().map(|&q| 3 << shift(q)).sum();
        let to_local = |global: usize| -> usize {
            qubits
                .iter()
                .fold(0, |acc, &q| (acc << 2) | ((global >> shift(q)) & 3))
        };
        let from_local = |local: usize| -> usize {
            qubits.iter().enumerate().fold(0, |acc, (i, &q)| {
                let code = (local >> (2 * (qubits.len() - 1 - i))) & 3;
                acc | (code << shift(q))
            })
        };
        for row in 0..out.dim {
            let rest = row & !local_mask;
            let local_row = to_local(row);
            for local_col in 0..self.dim {
                let v = self.get(local_row, local_col);
                if v != 0.0 {
                    let col = rest | from_local(local_col);
                    out.entries[row * out.dim + col] = v;
                }
            }
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &TransferMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Deviation from trace preservation: the identity row must read `(1, 0, …, 0)`.
    pub fn trace_preservation_defect(&self) -> f64 {
        self.row(0)
            .iter()
            .enumerate()
            .map(|(j, &v)| if j == 0 { (v - 1.0).abs() } else { v.abs() })
            .fold(0.0, f64::max)
    }

    /// Process fidelity to the identity, `tr(Λ)/d²`.
    pub fn process_fidelity(&self) -> f64 {
        process_fidelity(self)
    }

    /// Plain-text dump: a header line `n d²`, then `d²` rows of floats.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.n, self.dim)?;
        let mut line = String::new();
        for i in 0..self.dim {
            line.clear();
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                write!(line, "{v:e}").expect("writing to a String cannot fail");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(r: R) -> Result<Self> {
        let parse_err = |reason: String| Error::Parse {
            what: "PTM dump",
            reason,
        };
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err("empty input".into()))??;
        let mut fields = header.split_whitespace();
        let mut field = |name: &str| -> Result<usize> {
            fields
                .next()
                .ok_or_else(|| parse_err(format!("header missing {name}")))?
                .parse()
                .map_err(|e| parse_err(format!("bad {name}: {e}")))
        };
        let n = field("n")?;
        let dim = field("d²")?;
        if pauli_dim(n).ok() != Some(dim) {
            return Err(parse_err(format!("header n = {n} does not match d² = {dim}")));
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(format!("row {i}: {e}")))?;
            if row.len() != dim {
                return Err(parse_err(format!("row {i} has {} entries, expected {dim}", row.len())));
            }
            entries.extend(row);
        }
        if entries.len() != dim * dim {
            return Err(parse_err(format!("expected {dim} rows, found {}", entries.len() / dim)));
        }
        TransferMatrix::from_entries(n, entries)
    }
}

fn pauli_dim(n: usize) -> Result<usize> {
    if (1..=MAX_QUBITS).contains(&n) {
        Ok(1 << (2 * n))
    } else {
        Err(Error::Validation(format!(
            "qubit count {n} outside supported range 1..={MAX_QUBITS}"
        )))
    }
}

fn hilbert_dim_of(m: &DMatrix<Complex64>, n: usize) -> Result<usize> {
    let d = 1usize << n;
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::Dimension {
            expected: d,
            found: if m.nrows() != d { m.nrows() } else { m.ncols() },
        });
    }
    Ok(d)
}

/// `tr(P·A)` for a Pauli `P`, using that `P` has one non-zero per column.
fn pauli_trace(p: &PauliString, a: &DMatrix<Complex64>) -> Complex64 {
    // tr(PA) = Σ_k ⟨k|A P|k⟩ = Σ_k amp_k · A[k, P(k)] with P|k⟩ = amp_k |P(k)⟩
    (0..a.nrows())
        .map(|k| {
            let (amp, image) = p.apply_to_basis(k);
            amp * a[(k, image)]
        })
        .sum()
}

/// `A · P` for a Pauli `P`.
fn times_pauli(a: &DMatrix<Complex64>, p: &PauliString) -> DMatrix<Complex64> {
    let d = a.nrows();
    let mut out = DMatrix::zeros(d, d);
    for j in 0..d {
        // P|j⟩ = amp|i⟩, so column j of A·P is amp times column i of A
        let (amp, i) = p.apply_to_basis(j);
        for r in 0..d {
            out[(r, j)] = amp * a[(r, i)];
        }
    }
    out
}

/// Transfer matrix of `ρ ↦ Σ_i K_i ρ K_i†`.
pub fn ptm_from_kraus(kraus: &[DMatrix<Complex64>], n: usize) -> Result<TransferMatrix> {
    if kraus.is_empty() {
        return Err(Error::Validation("empty Kraus set".into()));
    }
    let d = 1usize << n;
    for k in kraus {
        hilbert_dim_of(k, n)?;
    }
    let completeness: DMatrix<Complex64> = kraus.iter().map(|k| k.adjoint() * k).sum();
    let defect = (completeness - DMatrix::<Complex64>::identity(d, d))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if defect > VALIDATION_TOLERANCE {
        return Err(Error::Validation(format!(
            "Kraus operators are not trace preserving (defect {defect:e})"
        )));
    }
    ptm_from_kraus_unchecked(kraus, n)
}

fn ptm_from_kraus_unchecked(kraus: &[DMatrix<Complex64>], n: usize) -> Result<TransferMatrix> {
    let paulis = PauliString::enumerate(n)?;
    let d = 1usize << n;
    let mut out = TransferMatrix::zeros(n)?;
    let dim = out.dim;
    let adjoints: Vec<_> = kraus.iter().map(|k| k.adjoint()).collect();
    for (col, q) in paulis.iter().enumerate() {
        // Λ(Q) = Σ_i K_i Q K_i†
        let image: DMatrix<Complex64> = kraus
            .iter()
            .zip(&adjoints)
            .map(|(k, kd)| times_pauli(k, q) * kd)
            .sum();
        for (row, p) in paulis.iter().enumerate() {
            let v = pauli_trace(p, &image) / d as f64;
            if v.im.abs() > IMAG_TOLERANCE {
                return Err(Error::Numerical(format!(
                    "PTM entry ({p}, {q}) has imaginary part {:e}",
                    v.im
                )));
            }
            out.entries[row * dim + col] = v.re;
        }
    }
    Ok(out)
}

/// Transfer matrix of conjugation by a unitary.
pub fn ptm_unitary(u: &DMatrix<Complex64>, n: usize) -> Result<TransferMatrix> {
    let d = hilbert_dim_of(u, n)?;
    let defect = (u.adjoint() * u - DMatrix::<Complex64>::identity(d, d))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if defect > VALIDATION_TOLERANCE {
        return Err(Error::Validation(format!(
            "matrix is not unitary (defect {defect:e})"
        )));
    }
    ptm_from_kraus_unchecked(std::slice::from_ref(u), n)
}

/// Transfer matrix of a Pauli gate: diagonal, `+1` where it commutes.
pub fn pauli_ptm(p: &PauliString) -> Result<TransferMatrix> {
    let diag: Vec<f64> = PauliString::enumerate(p.num_qubits())?
        .iter()
        .map(|r| if p.commutes_unchecked(r) { 1.0 } else { -1.0 })
        .collect();
    TransferMatrix::from_diagonal(p.num_qubits(), &diag)
}

pub fn compose(a: &TransferMatrix, b: &TransferMatrix) -> Result<TransferMatrix> {
    a.compose(b)
}

/// `F(Λ) = tr(Λ)/d²`.
pub fn process_fidelity(m: &TransferMatrix) -> f64 {
    m.diagonal().iter().sum::<f64>() / m.dim as f64
}

/// Average fidelity from process fidelity, `(d·F + 1)/(d + 1)`.
pub fn average_fidelity(m: &TransferMatrix) -> f64 {
    let d = (1usize << m.n) as f64;
    (d * process_fidelity(m) + 1.0) / (d + 1.0)
}

/// Pauli twirl: keep the diagonal, drop everything else.
pub fn pauli_twirl(m: &TransferMatrix) -> TransferMatrix {
    TransferMatrix::from_diagonal(m.n, &m.diagonal()).expect("same shape as input")
}

/// Rank-one projector `Π_q = |σ_q⟩⟩⟨⟨σ_q|`.
pub fn projector_matrix(q: &PauliString) -> Result<TransferMatrix> {
    if !q.is_phase_free() {
        return Err(Error::Validation(format!("projector label {q} carries a phase")));
    }
    let mut m = TransferMatrix::zeros(q.num_qubits())?;
    let i = q.index();
    m.entries[i * m.dim + i] = 1.0;
    Ok(m)
}

/// Choi matrix `J = Σ_ij |i⟩⟨j| ⊗ Λ(|i⟩⟨j|) = (1/d) Σ_PQ Λ_PQ Qᵀ ⊗ P`.
pub fn choi_matrix(m: &TransferMatrix) -> DMatrix<Complex64> {
    let n = m.n;
    let d = 1usize << n;
    let paulis = PauliString::enumerate(n).expect("validated at construction");
    let dense: Vec<_> = paulis.iter().map(|p| p.to_matrix()).collect();
    let mut choi = DMatrix::<Complex64>::zeros(d * d, d * d);
    for (qi, q) in dense.iter().enumerate() {
        let qt = q.transpose();
        for (pi, p) in dense.iter().enumerate() {
            let v = m.get(pi, qi);
            if v == 0.0 {
                continue;
            }
            choi += qt.kronecker(p) * Complex64::new(v / d as f64, 0.0);
        }
    }
    choi
}

/// Pauli-Liouville vector `⟨⟨σ_P|ρ⟩⟩` of a state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVectorPL {
    n: usize,
    coeffs: Vec<f64>,
}

/// Pauli-Liouville vector `⟨⟨σ_P|M⟩⟩` of a POVM element.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectPL {
    n: usize,
    coeffs: Vec<f64>,
}

macro_rules! pl_vector {
    ($ty:ident) => {
        impl $ty {
            pub fn new(n: usize, coeffs: Vec<f64>) -> Result<Self> {
                check_dims(pauli_dim(n)?, coeffs.len())?;
                Ok($ty { n, coeffs })
            }

            /// Expansion coefficients of a dense operator.
            pub fn from_operator(op: &DMatrix<Complex64>, n: usize) -> Result<Self> {
                let d = hilbert_dim_of(op, n)?;
                let norm = (d as f64).sqrt();
                let coeffs = PauliString::enumerate(n)?
                    .iter()
                    .map(|p| {
                        let v = pauli_trace(p, op) / norm;
                        if v.im.abs() > IMAG_TOLERANCE {
                            Err(Error::Validation("operator is not Hermitian".into()))
                        } else {
                            Ok(v.re)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok($ty { n, coeffs })
            }

            pub fn num_qubits(&self) -> usize {
                self.n
            }

            pub fn coeffs(&self) -> &[f64] {
                &self.coeffs
            }

            /// Dense operator `Σ_P c_P σ_P`.
            pub fn to_operator(&self) -> DMatrix<Complex64> {
                let d = 1usize << self.n;
                let norm = (d as f64).sqrt();
                let mut out = DMatrix::zeros(d, d);
                for (i, &c) in self.coeffs.iter().enumerate() {
                    if c != 0.0 {
                        let p = PauliString::from_index_unchecked(self.n, i);
                        out += p.to_matrix() * Complex64::new(c / norm, 0.0);
                    }
                }
                out
            }
        }
    };
}

pl_vector!(StateVectorPL);
pl_vector!(EffectPL);

impl EffectPL {
    /// `⟨⟨M|ρ⟩⟩ = tr(Mρ)`.
    pub fn overlap(&self, state: &StateVectorPL) -> f64 {
        self.coeffs
            .iter()
            .zip(&state.coeffs)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// `⟨⟨M|Λ|ρ⟩⟩`.
    pub fn expectation(&self, channel: &TransferMatrix, state: &StateVectorPL) -> f64 {
        self.coeffs
            .iter()
            .zip(channel.apply(&state.coeffs))
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Per-qubit single-qubit eigenstate used for slot `letter` of the
/// preparation: the `+1` eigenstate of the letter, `|0⟩` for identity slots.
fn prepared_axis(letter: Letter) -> Letter {
    match letter {
        Letter::I => Letter::Z,
        other => other,
    }
}

/// Product `+1` eigenstate of `q` (with `|0⟩` on identity slots) and the
/// effect `(I + q)/2`, both in Pauli-Liouville form.
pub fn stabilizer_state_and_effect(q: &PauliString) -> Result<(StateVectorPL, EffectPL)> {
    if q.is_identity() {
        return Err(Error::Validation(
            "state preparation needs a non-identity Pauli".into(),
        ));
    }
    if !q.is_phase_free() {
        return Err(Error::Validation(format!("{q} carries a phase")));
    }
    let n = q.num_qubits();
    let d = (1usize << n) as f64;
    let norm = d.sqrt();
    let axes: Vec<Letter> = q.letters().into_iter().map(prepared_axis).collect();
    let paulis = PauliString::enumerate(n)?;
    // tr(R ρ) factorizes; each factor is 1 when R_k ∈ {I, axis_k} and 0 otherwise.
    let state = paulis
        .iter()
        .map(|r| {
            let inside = (0..n).all(|k| {
                let l = r.letter(k);
                l == Letter::I || l == axes[k]
            });
            if inside {
                1.0 / norm
            } else {
                0.0
            }
        })
        .collect();
    let mut effect = vec![0.0; paulis.len()];
    effect[0] = norm / 2.0;
    effect[q.index()] = norm / 2.0;
    Ok((
        StateVectorPL {
            n,
            coeffs: state,
        },
        EffectPL { n, coeffs: effect },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn dephasing_kraus(prob: f64) -> Vec<DMatrix<Complex64>> {
        vec![
            DMatrix::from_row_slice(2, 2, &[c((1.0 - prob).sqrt()), c(0.0), c(0.0), c((1.0 - prob).sqrt())]),
            DMatrix::from_row_slice(2, 2, &[c(prob.sqrt()), c(0.0), c(0.0), c(-prob.sqrt())]),
        ]
    }

    #[test]
    fn identity_kraus_gives_identity() {
        let m = ptm_from_kraus(&[DMatrix::identity(4, 4)], 2).unwrap();
        assert_eq!(m, TransferMatrix::identity(2).unwrap());
    }

    #[test]
    fn dephasing_from_kraus() {
        let m = ptm_from_kraus(&dephasing_kraus(0.1), 1).unwrap();
        let expected = TransferMatrix::from_diagonal(1, &[1.0, 0.8, 0.8, 1.0]).unwrap();
        assert!(m.max_abs_diff(&expected) < 1e-15);
        assert!((process_fidelity(&m) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_trace_preserving_kraus() {
        let mut k = dephasing_kraus(0.1);
        k.pop();
        assert!(matches!(ptm_from_kraus(&k, 1), Err(Error::Validation(_))));
        assert!(matches!(
            ptm_from_kraus(&dephasing_kraus(0.1), 2),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn hadamard_is_a_signed_permutation() {
        let m = ptm_unitary(&gates::hadamard(), 1).unwrap();
        #[rustfmt::skip]
        let expected = TransferMatrix::from_entries(1, vec![
            1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
            0.0, 0.0, -1.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
        ]).unwrap();
        assert!(m.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn rejects_non_unitary() {
        let mut u = gates::hadamard();
        u[(0, 0)] = c(1.0);
        assert!(matches!(ptm_unitary(&u, 1), Err(Error::Validation(_))));
    }

    #[test]
    fn toffoli_entry_census() {
        let m = ptm_unitary(&gates::toffoli(), 3).unwrap();
        let nonzero: Vec<f64> = m.entries().iter().copied().filter(|v| v.abs() > 1e-12).collect();
        assert_eq!(nonzero.len(), 232);
        assert_eq!(nonzero.iter().filter(|v| (*v - 1.0).abs() < 1e-12).count(), 8);
        assert_eq!(nonzero.iter().filter(|v| (v.abs() - 0.5).abs() < 1e-12).count(), 224);
        assert!(m.is_symmetric(1e-12));
    }

    #[test]
    fn pauli_ptms_match_character_signs() {
        for q in PauliString::enumerate(2).unwrap() {
            let dense = ptm_unitary(&q.to_matrix(), 2).unwrap();
            let symbolic = pauli_ptm(&q).unwrap();
            assert!(dense.max_abs_diff(&symbolic) < 1e-14);
            assert!(dense.compose(&dense).unwrap().max_abs_diff(&TransferMatrix::identity(2).unwrap()) < 1e-14);
        }
    }

    #[test]
    fn composition_matches_unitary_product() {
        let h = ptm_unitary(&gates::hadamard(), 1).unwrap();
        let s = ptm_unitary(&gates::phase_s(), 1).unwrap();
        let hssh = h.compose(&s).unwrap().compose(&s).unwrap().compose(&h).unwrap();
        let x = ptm_unitary(&p("X").to_matrix(), 1).unwrap();
        assert!(hssh.max_abs_diff(&x) < 1e-14);
        let id = TransferMatrix::identity(1).unwrap();
        assert_eq!(id.compose(&h).unwrap(), h);
        assert!(id.compose(&TransferMatrix::identity(2).unwrap()).is_err());
    }

    #[test]
    fn twirl_keeps_diagonal_and_fidelity() {
        let u = gates::controlled_x_rotation(0.3);
        let m = ptm_unitary(&u, 2).unwrap();
        let t = pauli_twirl(&m);
        assert_eq!(t.diagonal(), m.diagonal());
        assert!((process_fidelity(&t) - process_fidelity(&m)).abs() < 1e-15);
        assert_eq!(pauli_twirl(&t), t);
    }

    #[test]
    fn twirl_equals_explicit_group_average() {
        for n in 1..=2 {
            let d = 1usize << n;
            let u = gates::random_unitary(d, 7 + n as u64);
            let m = ptm_unitary(&u, n).unwrap();
            let mut avg = vec![0.0; m.dim() * m.dim()];
            let paulis = PauliString::enumerate(n).unwrap();
            for q in &paulis {
                let pm = pauli_ptm(q).unwrap();
                let term = pm.transpose().compose(&m).unwrap().compose(&pm).unwrap();
                for (a, b) in avg.iter_mut().zip(term.entries()) {
                    *a += b / paulis.len() as f64;
                }
            }
            let avg = TransferMatrix::from_entries(n, avg).unwrap();
            assert!(avg.max_abs_diff(&pauli_twirl(&m)) < 1e-14);
        }
    }

    #[test]
    fn projector_from_character_sum() {
        // Π_Z = ¼(ℐ − 𝒳 − 𝒴 + 𝒵)
        let signs = [1.0, -1.0, -1.0, 1.0];
        let mut sum = vec![0.0; 16];
        for (q, s) in PauliString::enumerate(1).unwrap().iter().zip(signs) {
            for (a, b) in sum.iter_mut().zip(pauli_ptm(q).unwrap().entries()) {
                *a += s * b / 4.0;
            }
        }
        assert_eq!(sum, projector_matrix(&p("Z")).unwrap().entries());
        let pi = projector_matrix(&p("XZ")).unwrap();
        assert_eq!(pi.compose(&pi).unwrap(), pi);
    }

    #[test]
    fn z_state_and_effect() {
        let (rho, m) = stabilizer_state_and_effect(&p("Z")).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!(rho.coeffs().iter().zip([h, 0.0, 0.0, h]).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(m.coeffs().iter().zip([h, 0.0, 0.0, h]).all(|(a, b)| (a - b).abs() < 1e-15));
        let overlap = m.expectation(&projector_matrix(&p("Z")).unwrap(), &rho);
        assert!((overlap - 0.5).abs() < 1e-15);
        // Π_I keeps only the trace component
        let traced = projector_matrix(&p("I")).unwrap().apply(rho.coeffs());
        assert_eq!(traced, vec![rho.coeffs()[0], 0.0, 0.0, 0.0]);
    }

    #[test]
    fn izy_state_matches_dense_product_state() {
        let q = p("IZY");
        let (rho, m) = stabilizer_state_and_effect(&q).unwrap();
        let zero = DMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]);
        let y_plus = DMatrix::from_row_slice(
            2,
            2,
            &[c(0.5), Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.5), c(0.5)],
        );
        let dense = zero.kronecker(&zero).kronecker(&y_plus);
        let oracle = StateVectorPL::from_operator(&dense, 3).unwrap();
        assert!(rho.coeffs().iter().zip(oracle.coeffs()).all(|(a, b)| (a - b).abs() < 1e-15));
        let id = DMatrix::<Complex64>::identity(8, 8);
        let effect_dense = (id + q.to_matrix()) * c(0.5);
        let effect_oracle = EffectPL::from_operator(&effect_dense, 3).unwrap();
        assert_eq!(m.coeffs().len(), effect_oracle.coeffs().len());
        assert!(m.coeffs().iter().zip(effect_oracle.coeffs()).all(|(a, b)| (a - b).abs() < 1e-15));
        let overlap = m.expectation(&projector_matrix(&q).unwrap(), &rho);
        assert!((overlap - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identity_preparation_is_rejected() {
        assert!(stabilizer_state_and_effect(&p("III")).is_err());
    }

    #[test]
    fn kron_and_embed_agree_with_dense_unitaries() {
        let cx = gates::cnot();
        let h = gates::hadamard();
        let id = DMatrix::<Complex64>::identity(2, 2);
        // CNOT on (2, 0) of three qubits, built densely
        let local = ptm_unitary(&cx, 2).unwrap();
        let embedded = local.embed(&[2, 0], 3).unwrap();
        let dense = ptm_unitary(&gates::embed_two_qubit(&cx, 2, 0, 3), 3).unwrap();
        assert!(embedded.max_abs_diff(&dense) < 1e-14);
        let hi = ptm_unitary(&h.kronecker(&id), 2).unwrap();
        let kron = ptm_unitary(&h, 1).unwrap().kron(&TransferMatrix::identity(1).unwrap()).unwrap();
        assert!(hi.max_abs_diff(&kron) < 1e-14);
    }

    #[test]
    fn choi_of_identity_is_rank_one() {
        let j = choi_matrix(&TransferMatrix::identity(1).unwrap());
        // |Ω⟩⟨Ω| with |Ω⟩ = |00⟩ + |11⟩
        let mut expected = DMatrix::<Complex64>::zeros(4, 4);
        for (a, b) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            expected[(a, b)] = c(1.0);
        }
        assert!((j - expected).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn dump_round_trip() {
        let m = ptm_unitary(&gates::controlled_x_rotation(0.1), 2).unwrap();
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let back = TransferMatrix::read_dump(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(TransferMatrix::read_dump("2 15\n".as_bytes()).is_err());
        assert!(TransferMatrix::read_dump("1 4\n1 0 0 0\n".as_bytes()).is_err());
    }
}
