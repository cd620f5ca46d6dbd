//! n-qubit Pauli operators in symplectic (x, z) form.
//!
//! Qubit 0 is the leftmost letter of the text form and the most significant
//! tensor factor. The canonical enumeration of the Pauli group orders strings
//! lexicographically with `I < X < Y < Z`, which is also the row/column order
//! of every [`TransferMatrix`](crate::ptm::TransferMatrix).

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};

/// Largest supported register.
pub const MAX_QUBITS: usize = 8;

/// A power of `i`: `0 => +1`, `1 => +i`, `2 => -1`, `3 => -i`.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn from_exponent(e: u32) -> Self {
        Phase((e % 4) as u8)
    }

    pub fn exponent(self) -> u8 {
        self.0
    }

    pub fn times(self, other: Phase) -> Phase {
        Phase((self.0 + other.0) & 3)
    }

    pub fn is_real(self) -> bool {
        self.0 & 1 == 0
    }

    /// `+1` or `-1` for real phases.
    pub fn sign(self) -> Option<i8> {
        match self.0 {
            0 => Some(1),
            2 => Some(-1),
            _ => None,
        }
    }

    pub fn to_complex(self) -> Complex64 {
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }
}

/// Single-qubit Pauli letter.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    I,
    X,
    Y,
    Z,
}

impl Letter {
    pub const ALL: [Letter; 4] = [Letter::I, Letter::X, Letter::Y, Letter::Z];

    fn from_bits(x: bool, z: bool) -> Letter {
        match (x, z) {
            (false, false) => Letter::I,
            (true, false) => Letter::X,
            (true, true) => Letter::Y,
            (false, true) => Letter::Z,
        }
    }

    fn bits(self) -> (bool, bool) {
        match self {
            Letter::I => (false, false),
            Letter::X => (true, false),
            Letter::Y => (true, true),
            Letter::Z => (false, true),
        }
    }

    /// Position in the `I < X < Y < Z` order.
    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Letter {
        Letter::ALL[code & 3]
    }

    pub fn as_char(self) -> char {
        match self {
            Letter::I => 'I',
            Letter::X => 'X',
            Letter::Y => 'Y',
            Letter::Z => 'Z',
        }
    }
}

/// A Pauli operator `i^phase · L_0 ⊗ L_1 ⊗ … ⊗ L_{n-1}` with `Y` the usual
/// Hermitian Pauli-Y.
#[derive(Copy, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: u8,
    // bit k belongs to qubit k
    x: u16,
    z: u16,
    phase: Phase,
}

impl PauliString {
    pub fn identity(n: usize) -> Result<Self> {
        check_qubits(n)?;
        Ok(PauliString {
            n: n as u8,
            x: 0,
            z: 0,
            phase: Phase::ONE,
        })
    }

    pub fn from_letters(letters: &[Letter]) -> Result<Self> {
        let mut p = PauliString::identity(letters.len())?;
        for (k, &l) in letters.iter().enumerate() {
            p.set_letter(k, l);
        }
        Ok(p)
    }

    /// Single-letter operator `letter` on qubit `k` of an n-qubit register.
    pub fn single(n: usize, k: usize, letter: Letter) -> Result<Self> {
        let mut p = PauliString::identity(n)?;
        if k >= n {
            return Err(Error::Validation(format!("qubit {k} out of range for n = {n}")));
        }
        p.set_letter(k, letter);
        Ok(p)
    }

    /// The Pauli at position `index` of the canonical enumeration.
    pub fn from_index(n: usize, index: usize) -> Result<Self> {
        check_qubits(n)?;
        if index >= 1 << (2 * n) {
            return Err(Error::Validation(format!(
                "Pauli index {index} out of range for n = {n}"
            )));
        }
        Ok(Self::from_index_unchecked(n, index))
    }

    pub(crate) fn from_index_unchecked(n: usize, index: usize) -> Self {
        let mut p = PauliString {
            n: n as u8,
            x: 0,
            z: 0,
            phase: Phase::ONE,
        };
        for k in 0..n {
            let code = (index >> (2 * (n - 1 - k))) & 3;
            p.set_letter(k, Letter::from_code(code));
        }
        p
    }

    /// Every phase-free n-qubit Pauli in canonical order.
    pub fn enumerate(n: usize) -> Result<Vec<PauliString>> {
        check_qubits(n)?;
        Ok((0..1usize << (2 * n))
            .map(|i| Self::from_index_unchecked(n, i))
            .collect())
    }

    pub fn num_qubits(&self) -> usize {
        self.n as usize
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    /// Same letters, phase `+1`.
    pub fn unsigned(self) -> Self {
        self.with_phase(Phase::ONE)
    }

    pub fn negated(self) -> Self {
        let phase = self.phase.times(Phase::MINUS_ONE);
        self.with_phase(phase)
    }

    pub fn is_phase_free(&self) -> bool {
        self.phase == Phase::ONE
    }

    pub fn letter(&self, k: usize) -> Letter {
        Letter::from_bits((self.x >> k) & 1 == 1, (self.z >> k) & 1 == 1)
    }

    pub fn letters(&self) -> Vec<Letter> {
        (0..self.num_qubits()).map(|k| self.letter(k)).collect()
    }

    fn set_letter(&mut self, k: usize, letter: Letter) {
        let (xb, zb) = letter.bits();
        let mask = 1u16 << k;
        self.x = (self.x & !mask) | if xb { mask } else { 0 };
        self.z = (self.z & !mask) | if zb { mask } else { 0 };
    }

    pub fn x_bits(&self) -> u16 {
        self.x
    }

    pub fn z_bits(&self) -> u16 {
        self.z
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    /// Number of non-identity letters.
    pub fn weight(&self) -> u32 {
        (self.x | self.z).count_ones()
    }

    /// Position of the letters in the canonical enumeration (phase ignored).
    pub fn index(&self) -> usize {
        let n = self.num_qubits();
        (0..n).fold(0, |acc, k| (acc << 2) | self.letter(k).code())
    }

    /// Group product `self · other`.
    pub fn multiply(&self, other: &PauliString) -> Result<PauliString> {
        check_dims(self.num_qubits(), other.num_qubits())?;
        Ok(self.mul_unchecked(other))
    }

    pub(crate) fn mul_unchecked(&self, other: &PauliString) -> PauliString {
        let mut exponent = self.phase.0 as u32 + other.phase.0 as u32;
        for k in 0..self.num_qubits() {
            exponent += letter_product_exponent(self.letter(k), other.letter(k));
        }
        PauliString {
            n: self.n,
            x: self.x ^ other.x,
            z: self.z ^ other.z,
            phase: Phase::from_exponent(exponent),
        }
    }

    /// Hermitian adjoint; letters are Hermitian so only the phase conjugates.
    pub fn adjoint(&self) -> PauliString {
        let phase = Phase::from_exponent(4 - self.phase.0 as u32);
        self.with_phase(phase)
    }

    /// Whether `self` and `other` commute, from the parity of the symplectic
    /// inner product.
    pub fn commutes(&self, other: &PauliString) -> Result<bool> {
        check_dims(self.num_qubits(), other.num_qubits())?;
        Ok(self.commutes_unchecked(other))
    }

    pub(crate) fn commutes_unchecked(&self, other: &PauliString) -> bool {
        symplectic_parity(self.x, self.z, other.x, other.z)
    }

    /// Action on a computational basis state: `P|j⟩ = amplitude·|j'⟩`.
    ///
    /// Basis index bit `n-1-k` holds qubit `k`.
    pub fn apply_to_basis(&self, j: usize) -> (Complex64, usize) {
        let n = self.num_qubits();
        let mut exponent = self.phase.0 as u32;
        let mut out = j;
        for k in 0..n {
            let bit_pos = n - 1 - k;
            let b = (j >> bit_pos) & 1;
            match self.letter(k) {
                Letter::I => {}
                Letter::X => out ^= 1 << bit_pos,
                Letter::Y => {
                    // Y|0⟩ = i|1⟩, Y|1⟩ = -i|0⟩
                    exponent += if b == 0 { 1 } else { 3 };
                    out ^= 1 << bit_pos;
                }
                Letter::Z => {
                    if b == 1 {
                        exponent += 2;
                    }
                }
            }
        }
        (Phase::from_exponent(exponent).to_complex(), out)
    }

    /// Dense `2^n × 2^n` matrix.
    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        let d = 1usize << self.num_qubits();
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            let (amp, i) = self.apply_to_basis(j);
            m[(i, j)] = amp;
        }
        m
    }
}

pub(crate) fn symplectic_parity(ax: u16, az: u16, bx: u16, bz: u16) -> bool {
    ((ax & bz) ^ (az & bx)).count_ones() % 2 == 0
}

/// Exponent `e` with `a · b = i^e · c` for single-qubit letters.
fn letter_product_exponent(a: Letter, b: Letter) -> u32 {
    use Letter::*;
    match (a, b) {
        (X, Y) | (Y, Z) | (Z, X) => 1,
        (Y, X) | (Z, Y) | (X, Z) => 3,
        _ => 0,
    }
}

fn check_qubits(n: usize) -> Result<()> {
    if (1..=MAX_QUBITS).contains(&n) {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "qubit count {n} outside supported range 1..={MAX_QUBITS}"
        )))
    }
}

/// Character coefficient `λ_p` for the projector onto `q`: `+1` when `p`
/// commutes with `q`, `-1` otherwise. Averaging `λ_p·𝒫` over all `p` gives
/// the rank-one projector `Π_q`.
pub fn character_coefficient(p: &PauliString, q: &PauliString) -> Result<i8> {
    Ok(if p.commutes(q)? { 1 } else { -1 })
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.phase.0 {
            0 => "",
            1 => "+i",
            2 => "-",
            _ => "-i",
        };
        f.write_str(prefix)?;
        for k in 0..self.num_qubits() {
            write!(f, "{}", self.letter(k).as_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliString({self})")
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (phase, body) = if let Some(rest) = s.strip_prefix("+i") {
            (Phase::I, rest)
        } else if let Some(rest) = s.strip_prefix("-i") {
            (Phase::MINUS_I, rest)
        } else if let Some(rest) = s.strip_prefix('+') {
            (Phase::ONE, rest)
        } else if let Some(rest) = s.strip_prefix('-') {
            (Phase::MINUS_ONE, rest)
        } else {
            (Phase::ONE, s)
        };
        let letters = body
            .chars()
            .map(|c| match c {
                'I' => Ok(Letter::I),
                'X' => Ok(Letter::X),
                'Y' => Ok(Letter::Y),
                'Z' => Ok(Letter::Z),
                other => Err(Error::Parse {
                    what: "Pauli string",
                    reason: format!("unexpected character {other:?} in {s:?}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        if letters.is_empty() {
            return Err(Error::Parse {
                what: "Pauli string",
                reason: format!("no letters in {s:?}"),
            });
        }
        let p = PauliString::from_letters(&letters).map_err(|e| Error::Parse {
            what: "Pauli string",
            reason: e.to_string(),
        })?;
        Ok(p.with_phase(phase))
    }
}

impl Serialize for PauliString {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn approx_eq(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> bool {
        a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| (x - y).norm() < 1e-12)
    }

    #[test]
    fn x_times_y_is_i_z() {
        assert_eq!(p("X").multiply(&p("Y")).unwrap(), p("+iZ"));
    }

    #[test]
    fn phase_free_paulis_are_involutions() {
        for q in PauliString::enumerate(2).unwrap() {
            assert_eq!(q.multiply(&q).unwrap(), PauliString::identity(2).unwrap());
        }
    }

    #[test]
    fn xz_times_zx_is_yy() {
        let prod = p("XZ").multiply(&p("ZX")).unwrap();
        assert_eq!(prod, p("YY"));
        let dense = p("XZ").to_matrix() * p("ZX").to_matrix();
        assert!(approx_eq(&dense, &p("YY").to_matrix()));
    }

    #[test]
    fn multiply_matches_dense_matrices_for_two_qubits() {
        let phases = [Phase::ONE, Phase::I, Phase::MINUS_ONE, Phase::MINUS_I];
        let all = PauliString::enumerate(2).unwrap();
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                let a = a.with_phase(phases[i % 4]);
                let b = b.with_phase(phases[j % 4]);
                let prod = a.multiply(&b).unwrap();
                assert!(approx_eq(&prod.to_matrix(), &(a.to_matrix() * b.to_matrix())));
            }
        }
    }

    #[test]
    fn commutation_examples() {
        assert!(p("X").commutes(&p("X")).unwrap());
        assert!(!p("X").commutes(&p("Z")).unwrap());
        assert!(p("XZ").commutes(&p("ZX")).unwrap());
    }

    #[test]
    fn commutes_matches_dense_commutator() {
        let all = PauliString::enumerate(2).unwrap();
        for a in &all {
            for b in &all {
                let (ma, mb) = (a.to_matrix(), b.to_matrix());
                let commutator = &ma * &mb - &mb * &ma;
                let dense = commutator.iter().all(|z| z.norm() < 1e-12);
                assert_eq!(a.commutes(b).unwrap(), dense, "{a} {b}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(
            p("X").multiply(&p("XX")),
            Err(Error::Dimension { expected: 1, found: 2 })
        ));
        assert!(p("X").commutes(&p("XX")).is_err());
        assert!(character_coefficient(&p("X"), &p("XX")).is_err());
    }

    #[test]
    fn canonical_index_order() {
        let all = PauliString::enumerate(1).unwrap();
        let text: Vec<_> = all.iter().map(|q| q.to_string()).collect();
        assert_eq!(text, ["I", "X", "Y", "Z"]);
        assert_eq!(p("IZY").index(), 3 * 4 + 2);
        assert_eq!(p("XII").index(), 16);
        for (i, q) in PauliString::enumerate(3).unwrap().iter().enumerate() {
            assert_eq!(q.index(), i);
        }
    }

    #[test]
    fn text_form_round_trips() {
        for s in ["-IZY", "+iXX", "-iZ", "YXZI"] {
            assert_eq!(p(s).to_string(), s);
        }
        assert_eq!(p("+XY").to_string(), "XY");
        assert!("XQ".parse::<PauliString>().is_err());
        assert!("".parse::<PauliString>().is_err());
        assert!("-".parse::<PauliString>().is_err());
        assert!("XXXXXXXXX".parse::<PauliString>().is_err());
    }

    #[test]
    fn single_qubit_character_coefficients() {
        let all = PauliString::enumerate(1).unwrap();
        let coeffs = |q: &str| -> Vec<i8> {
            all.iter().map(|x| character_coefficient(x, &p(q)).unwrap()).collect()
        };
        assert_eq!(coeffs("I"), [1, 1, 1, 1]);
        assert_eq!(coeffs("X"), [1, 1, -1, -1]);
        assert_eq!(coeffs("Y"), [1, -1, 1, -1]);
        assert_eq!(coeffs("Z"), [1, -1, -1, 1]);
    }
}
