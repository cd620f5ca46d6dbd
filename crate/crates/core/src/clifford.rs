//! Clifford tableaux and the constructive search for a Clifford `C` with
//! `C P C† = ±Q`.

use crate::error::{check_dims, Error, Result};
use crate::pauli::{Letter, Phase, PauliString};

/// A Clifford unitary `C`, stored as the signed images `C X_k C†` and
/// `C Z_k C†` of the single-qubit generators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliffordTableau {
    n: usize,
    x_images: Vec<PauliString>,
    z_images: Vec<PauliString>,
}

/// Elementary gates used to build tableaux.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum CliffordGate {
    H(usize),
    S(usize),
    Cnot { control: usize, target: usize },
}

impl CliffordTableau {
    pub fn identity(n: usize) -> Result<Self> {
        let x_images = (0..n)
            .map(|k| PauliString::single(n, k, Letter::X))
            .collect::<Result<Vec<_>>>()?;
        let z_images = (0..n)
            .map(|k| PauliString::single(n, k, Letter::Z))
            .collect::<Result<Vec<_>>>()?;
        Ok(CliffordTableau {
            n,
            x_images,
            z_images,
        })
    }

    /// Build from generator images, checking that they carry real signs and
    /// satisfy the symplectic commutation relations.
    pub fn from_images(x_images: Vec<PauliString>, z_images: Vec<PauliString>) -> Result<Self> {
        let n = x_images.len();
        check_dims(n, z_images.len())?;
        for img in x_images.iter().chain(&z_images) {
            check_dims(n, img.num_qubits())?;
            if !img.phase().is_real() {
                return Err(Error::Validation(format!(
                    "generator image {img} is not Hermitian"
                )));
            }
        }
        for j in 0..n {
            for k in 0..n {
                let xx = x_images[j].commutes_unchecked(&x_images[k]);
                let zz = z_images[j].commutes_unchecked(&z_images[k]);
                let xz = x_images[j].commutes_unchecked(&z_images[k]);
                if !xx || !zz || xz != (j != k) {
                    return Err(Error::Validation(format!(
                        "images of qubits {j}, {k} break the symplectic condition"
                    )));
                }
            }
        }
        Ok(CliffordTableau {
            n,
            x_images,
            z_images,
        })
    }

    pub fn gate(n: usize, gate: CliffordGate) -> Result<Self> {
        let mut t = CliffordTableau::identity(n)?;
        let check = |k: usize| {
            if k < n {
                Ok(())
            } else {
                Err(Error::Validation(format!("qubit {k} out of range for n = {n}")))
            }
        };
        match gate {
            CliffordGate::H(k) => {
                check(k)?;
                t.x_images[k] = PauliString::single(n, k, Letter::Z)?;
                t.z_images[k] = PauliString::single(n, k, Letter::X)?;
            }
            CliffordGate::S(k) => {
                check(k)?;
                t.x_images[k] = PauliString::single(n, k, Letter::Y)?;
            }
            CliffordGate::Cnot { control, target } => {
                check(control)?;
                check(target)?;
                if control == target {
                    return Err(Error::Validation("CNOT control equals target".into()));
                }
                let xc = PauliString::single(n, control, Letter::X)?;
                let xt = PauliString::single(n, target, Letter::X)?;
                let zc = PauliString::single(n, control, Letter::Z)?;
                let zt = PauliString::single(n, target, Letter::Z)?;
                t.x_images[control] = xc.mul_unchecked(&xt);
                t.z_images[target] = zc.mul_unchecked(&zt);
            }
        }
        Ok(t)
    }

    /// Tableau of conjugation by a Pauli operator: generators pick up a `-1`
    /// exactly when they anticommute with `p`.
    pub fn from_pauli(p: &PauliString) -> Result<Self> {
        let mut t = CliffordTableau::identity(p.num_qubits())?;
        for img in t.x_images.iter_mut().chain(t.z_images.iter_mut()) {
            if !img.commutes_unchecked(p) {
                *img = img.negated();
            }
        }
        Ok(t)
    }

    /// Tableau of the circuit applying `gates` left to right.
    pub fn from_circuit(n: usize, gates: &[CliffordGate]) -> Result<Self> {
        let mut t = CliffordTableau::identity(n)?;
        for &g in gates {
            t = CliffordTableau::gate(n, g)?.after(&t)?;
        }
        Ok(t)
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn x_image(&self, k: usize) -> &PauliString {
        &self.x_images[k]
    }

    pub fn z_image(&self, k: usize) -> &PauliString {
        &self.z_images[k]
    }

    /// `C P C†`, extended linearly from the generator images.
    pub fn conjugate(&self, p: &PauliString) -> Result<PauliString> {
        check_dims(self.n, p.num_qubits())?;
        Ok(self.conjugate_unchecked(p))
    }

    pub(crate) fn conjugate_unchecked(&self, p: &PauliString) -> PauliString {
        // P = i^phase · i^{#Y} · Π_k X_k^{x_k} Z_k^{z_k}, using Y = iXZ.
        let y_count = (p.x_bits() & p.z_bits()).count_ones();
        let start = Phase::from_exponent(p.phase().exponent() as u32 + y_count);
        let mut acc = PauliString::from_index_unchecked(self.n, 0).with_phase(start);
        for k in 0..self.n {
            if (p.x_bits() >> k) & 1 == 1 {
                acc = acc.mul_unchecked(&self.x_images[k]);
            }
            if (p.z_bits() >> k) & 1 == 1 {
                acc = acc.mul_unchecked(&self.z_images[k]);
            }
        }
        acc
    }

    /// The Clifford `self · first`: apply `first`, then `self`.
    pub fn after(&self, first: &CliffordTableau) -> Result<Self> {
        check_dims(self.n, first.n)?;
        Ok(CliffordTableau {
            n: self.n,
            x_images: first
                .x_images
                .iter()
                .map(|p| self.conjugate_unchecked(p))
                .collect(),
            z_images: first
                .z_images
                .iter()
                .map(|p| self.conjugate_unchecked(p))
                .collect(),
        })
    }

    /// Tableau of `C†`.
    pub fn inverse(&self) -> Self {
        let n = self.n;
        // The preimage R of a generator G has x_j(R) = ω(G, C Z_j C†) and
        // z_j(R) = ω(G, C X_j C†) because conjugation preserves the
        // symplectic form. The sign is then fixed by one forward conjugation.
        let preimage = |g: &PauliString| -> PauliString {
            let mut x = 0u16;
            let mut z = 0u16;
            for j in 0..n {
                if !g.commutes_unchecked(&self.z_images[j]) {
                    x |= 1 << j;
                }
                if !g.commutes_unchecked(&self.x_images[j]) {
                    z |= 1 << j;
                }
            }
            let letters: Vec<Letter> = (0..n)
                .map(|j| match ((x >> j) & 1, (z >> j) & 1) {
                    (0, 0) => Letter::I,
                    (1, 0) => Letter::X,
                    (1, 1) => Letter::Y,
                    _ => Letter::Z,
                })
                .collect();
            let r = PauliString::from_letters(&letters).expect("qubit count already validated");
            let image = self.conjugate_unchecked(&r);
            debug_assert_eq!(image.unsigned(), g.unsigned());
            if image.phase() == g.phase() {
                r
            } else {
                r.negated()
            }
        };
        let identity = CliffordTableau::identity(n).expect("qubit count already validated");
        CliffordTableau {
            n,
            x_images: identity.x_images.iter().map(preimage).collect(),
            z_images: identity.z_images.iter().map(preimage).collect(),
        }
    }
}

/// A Clifford found by [`find_clifford_mapping`] together with the sign `s`
/// in `C P C† = s·Q`.
#[derive(Clone, Debug)]
pub struct CliffordMapping {
    pub tableau: CliffordTableau,
    pub sign: i8,
}

/// Gates taking `p` to `±Z` on qubit 0.
///
/// Every X/Y letter is rotated to Z with H or S·H, then a CNOT ladder folds
/// the Z support onto its last qubit, which is finally moved to qubit 0.
fn canonicalizing_circuit(p: &PauliString) -> Vec<CliffordGate> {
    let n = p.num_qubits();
    let mut gates = Vec::new();
    let mut support = Vec::new();
    for k in 0..n {
        match p.letter(k) {
            Letter::I => continue,
            Letter::X => gates.push(CliffordGate::H(k)),
            // S Y S† = -X, then H X H = Z
            Letter::Y => {
                gates.push(CliffordGate::S(k));
                gates.push(CliffordGate::H(k));
            }
            Letter::Z => {}
        }
        support.push(k);
    }
    let Some((&last, rest)) = support.split_last() else {
        return gates;
    };
    // CNOT(c, t) maps Z_c Z_t to Z_t.
    for &c in rest {
        gates.push(CliffordGate::Cnot {
            control: c,
            target: last,
        });
    }
    if last != 0 {
        // Z_j -> Z_0 Z_j -> Z_0
        gates.push(CliffordGate::Cnot {
            control: 0,
            target: last,
        });
        gates.push(CliffordGate::Cnot {
            control: last,
            target: 0,
        });
    }
    gates
}

/// Find a Clifford `C` with `C p C† = ±q` for non-identity, phase-free `p`, `q`.
///
/// Both operators are canonicalized to `Z ⊗ I…I`; the result is the
/// canonicalizer of `p` followed by the inverse canonicalizer of `q`.
pub fn find_clifford_mapping(p: &PauliString, q: &PauliString) -> Result<CliffordMapping> {
    check_dims(p.num_qubits(), q.num_qubits())?;
    for op in [p, q] {
        if op.is_identity() {
            return Err(Error::Validation(
                "Clifford mapping is only defined for non-identity Paulis".into(),
            ));
        }
        if !op.is_phase_free() {
            return Err(Error::Validation(format!("{op} carries a phase")));
        }
    }
    let n = p.num_qubits();
    let to_canonical = CliffordTableau::from_circuit(n, &canonicalizing_circuit(p))?;
    let q_to_canonical = CliffordTableau::from_circuit(n, &canonicalizing_circuit(q))?;
    let tableau = q_to_canonical.inverse().after(&to_canonical)?;
    let image = tableau.conjugate_unchecked(p);
    if image.unsigned() != *q {
        return Err(Error::Consistency(format!(
            "Clifford search mapped {p} to {image}, expected ±{q}"
        )));
    }
    let sign = image
        .phase()
        .sign()
        .ok_or_else(|| Error::Consistency(format!("non-Hermitian image {image}")))?;
    Ok(CliffordMapping { tableau, sign })
}
