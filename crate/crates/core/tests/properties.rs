use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use ptcb_core::crb::{estimate_pauli_eigenvalue, CrbSettings};
use ptcb_core::gates;
use ptcb_core::interleaved::fidelity_interval;
use ptcb_core::noise::{composite_fidelity, composite_noise, dephasing_channel};
use ptcb_core::ptm::{average_fidelity, choi_matrix, pauli_ptm, process_fidelity, projector_matrix, ptm_unitary};
use ptcb_core::{
    character_coefficient, estimate_fidelity, EstimatorSettings, InnerSampling, NoiseSpec, PairSelection,
    PairSource, PauliString, PtcbModel, SpamSpec, StateVectorPL, TransferMatrix, Variant,
};

fn pauli(n: usize) -> impl Strategy<Value = PauliString> {
    (0..1usize << (2 * n)).prop_map(move |i| PauliString::from_index(n, i).unwrap())
}

fn spec(n: usize, p_max: f64, delta_max: f64) -> impl Strategy<Value = NoiseSpec> {
    (0.0..p_max, 0.0..p_max, -delta_max..delta_max, 0..n, 1..n).prop_map(move |(p, q, delta, control, shift)| {
        NoiseSpec {
            p,
            q,
            delta,
            control,
            target: (control + shift) % n,
            seed: 0,
        }
    })
}

fn toffoli() -> TransferMatrix {
    ptm_unitary(&gates::toffoli(), 3).unwrap()
}

fn close(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, tol: f64) -> bool {
    (a - b).iter().all(|z| z.norm() < tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn multiply_matches_dense_products(
        (a, b, c) in (1usize..=2).prop_flat_map(|n| (pauli(n), pauli(n), pauli(n)))
    ) {
        let ab = a.multiply(&b).unwrap();
        prop_assert!(close(&ab.to_matrix(), &(a.to_matrix() * b.to_matrix()), 1e-14));
        let left = ab.multiply(&c).unwrap();
        let right = a.multiply(&b.multiply(&c).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn character_sign_is_the_pauli_ptm_diagonal(
        (p, q) in (1usize..=3).prop_flat_map(|n| (pauli(n), pauli(n)))
    ) {
        let sign = character_coefficient(&p, &q).unwrap();
        prop_assert_eq!(pauli_ptm(&p).unwrap().entry(&q, &q), f64::from(sign));
    }

    #[test]
    fn signed_pauli_sum_is_the_projector(q in (1usize..=2).prop_flat_map(pauli)) {
        let n = q.num_qubits();
        let mut sum = TransferMatrix::zeros(n).unwrap();
        let mut entries = sum.entries().to_vec();
        for p in PauliString::enumerate(n).unwrap() {
            let sign = f64::from(character_coefficient(&p, &q).unwrap());
            for (e, v) in entries.iter_mut().zip(pauli_ptm(&p).unwrap().entries()) {
                *e += sign * v;
            }
        }
        let scale = 1.0 / (1usize << (2 * n)) as f64;
        sum = TransferMatrix::from_entries(n, entries.iter().map(|e| e * scale).collect()).unwrap();
        prop_assert_eq!(sum, projector_matrix(&q).unwrap());
    }

    #[test]
    fn ptm_of_a_product_is_the_composition(n in 1usize..=3, a in 0u64..1000, b in 0u64..1000) {
        let d = 1usize << n;
        let (ua, ub) = (gates::random_unitary(d, a), gates::random_unitary(d, b));
        let product = ptm_unitary(&(&ua * &ub), n).unwrap();
        let composed = ptm_unitary(&ua, n).unwrap().compose(&ptm_unitary(&ub, n).unwrap()).unwrap();
        prop_assert!(product.max_abs_diff(&composed) < 1e-10);
    }

    #[test]
    fn composite_channels_are_cptp(s in spec(2, 0.3, 3.0)) {
        let m = composite_noise(&s, 2).unwrap();
        prop_assert!(m.trace_preservation_defect() < 1e-12);
        let choi = choi_matrix(&m);
        let eig = nalgebra::SymmetricEigen::new(choi.clone()).eigenvalues;
        prop_assert!(eig.iter().all(|&e| e > -1e-10), "{:?}", eig);
        let f = process_fidelity(&m);
        prop_assert!(((4.0 * f + 1.0) / 5.0 - average_fidelity(&m)).abs() < 1e-12);
    }

    #[test]
    fn unitary_noise_is_unital(delta in -3.0..3.0f64, control in 0usize..3, shift in 1usize..3) {
        let s = NoiseSpec { p: 0.0, q: 0.0, delta, control, target: (control + shift) % 3, seed: 0 };
        let m = composite_noise(&s, 3).unwrap();
        for r in 1..m.dim() {
            prop_assert!(m.get(r, 0).abs() < 1e-12);
        }
    }

    #[test]
    fn fidelity_falls_in_every_noise_parameter(s in spec(3, 0.02, 0.15), seed in any::<u64>()) {
        let f = composite_fidelity(&s, 3).unwrap();
        prop_assert_eq!(f, composite_fidelity(&NoiseSpec { seed, ..s.clone() }, 3).unwrap());
        let h = 1e-4;
        let probes = [
            NoiseSpec { p: s.p + h, ..s.clone() },
            NoiseSpec { q: s.q + h, ..s.clone() },
            NoiseSpec { delta: s.delta + h * s.delta.signum(), ..s.clone() },
        ];
        for probe in probes {
            prop_assert!(composite_fidelity(&probe, 3).unwrap() <= f + 1e-15);
        }
    }

    #[test]
    fn exact_estimate_never_exceeds_the_fidelity(s in spec(3, 0.05, 0.4)) {
        let model = PtcbModel::new(toffoli(), &composite_noise(&s, 3).unwrap(), SpamSpec::default()).unwrap();
        let settings = EstimatorSettings {
            selection: PairSelection::Exhaustive,
            source: PairSource::ExactPtm,
            variant: Variant::Standard,
        };
        let est = estimate_fidelity(&model, &settings, 0).unwrap();
        prop_assert!(est.estimate <= est.exact + 1e-12);
        prop_assert!(est.terms.iter().all(|t| t.p.is_identity() == t.q.is_identity()));
    }

    #[test]
    fn eigenvalue_fit_ignores_spam(p in 0.0..0.1f64, q in (1usize..=3).prop_flat_map(pauli)) {
        let n = q.num_qubits();
        let e = dephasing_channel(p, n).unwrap();
        let settings = CrbSettings {
            depths: vec![1, 2, 3, 4, 5],
            inner: InnerSampling::Expectation,
            ..CrbSettings::default()
        };
        let clean = estimate_pauli_eigenvalue(&e, &q, &SpamSpec::default(), &settings, 0, &[]).unwrap();
        let noisy = estimate_pauli_eigenvalue(&e, &q, &SpamSpec::symmetric(0.05), &settings, 0, &[]).unwrap();
        prop_assert!((clean.eigenvalue - noisy.eigenvalue).abs() < 1e-12);
        if let Some(fit) = noisy.fit {
            prop_assert!(fit.max_residual < 1e-10);
        }
    }

    #[test]
    fn interval_contains_physical_pairs(
        lambda in spec(3, 0.05, 0.5),
        twirl in spec(3, 0.003, 0.1),
    ) {
        let (l, e) = (composite_noise(&lambda, 3).unwrap(), composite_noise(&twirl, 3).unwrap());
        let f_e = process_fidelity(&e);
        prop_assume!(f_e >= 0.99);
        let iv = fidelity_interval(process_fidelity(&l.compose(&e).unwrap()), f_e, 8).unwrap();
        prop_assert!(iv.contains(process_fidelity(&l)), "{:?}", iv);
        prop_assert!(iv.e_bound >= 0.0 && iv.lower <= iv.upper);
    }
}

/// Average fidelity from Haar-random pure states agrees with the closed form.
#[test]
fn average_fidelity_matches_haar_sampling() {
    for k in 0..4u64 {
        let m = composite_noise(
            &NoiseSpec { p: 0.02 * k as f64, q: 0.03, delta: 0.3, control: 0, target: 1, seed: 0 },
            2,
        )
        .unwrap();
        let samples = 20_000;
        let mut total = 0.0;
        for s in 0..samples {
            let u = gates::random_unitary(4, 10_000 * k + s);
            let psi = u.column(0);
            let rho = psi * psi.adjoint();
            let v = StateVectorPL::from_operator(&rho, 2).unwrap();
            let out = m.apply(v.coeffs());
            total += v.coeffs().iter().zip(&out).map(|(a, b)| a * b).sum::<f64>();
        }
        let sampled = total / samples as f64;
        assert!((sampled - average_fidelity(&m)).abs() < 1e-3, "{sampled} vs {}", average_fidelity(&m));
    }
}
