use msqg_core::certificates::BinnedSpectrum;
use msqg_core::kernels::{divergence, KernelMode, KernelSet};
use msqg_core::solver::{prepare_initial_data, InitialSpec, Solver, SolverConfig};
use msqg_core::{dealiased_product, Lattice, NormKind, SpectralScalarField};
use proptest::prelude::*;

fn samples(n: usize, values: &[f64]) -> Vec<f64> {
    values.iter().cycle().take(n * n).cloned().collect()
}

fn field_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n * n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transform_round_trip_and_parseval(values in field_strategy(16), l in 0.5f64..20.0) {
        let lat = Lattice::new(16, l).unwrap();
        let f = lat.forward(&values).unwrap();
        let back = f.to_physical();
        let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in values.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
        let physical = lat.physical_inner(&values, &values);
        prop_assert!((f.energy() - physical).abs() <= 1e-12 * physical);
        prop_assert!(f.hermitian_defect() <= 1e-12 * f.energy().sqrt() * l);
    }

    #[test]
    fn product_is_symmetric_and_real(a in field_strategy(16), b in field_strategy(16)) {
        let lat = Lattice::new(16, 2.0).unwrap();
        let f = lat.forward(&samples(16, &a)).unwrap();
        let g = lat.forward(&samples(16, &b)).unwrap();
        let fg = dealiased_product(&f, &g).unwrap();
        let gf = dealiased_product(&g, &f).unwrap();
        prop_assert!(fg.sub(&gf).unwrap().energy().sqrt() <= 1e-13 * fg.energy().sqrt().max(1e-300));
        prop_assert!(fg.reality_defect() <= 1e-12);
    }

    #[test]
    fn binary_dump_round_trips(values in field_strategy(8), l in 0.1f64..100.0) {
        let lat = Lattice::new(8, l).unwrap();
        let f = lat.forward(&values).unwrap();
        let mut buf = Vec::new();
        f.write_msqg(&mut buf).unwrap();
        prop_assert_eq!(buf.len(), 4 + 4 + 8 + 16 * 64);
        let g = SpectralScalarField::read_msqg(buf.as_slice()).unwrap();
        prop_assert_eq!(g.coeffs(), f.coeffs());
        prop_assert_eq!(g.lattice().box_length(), l);
    }

    #[test]
    fn regularized_velocity_is_divergence_free(values in field_strategy(16), beta in 1.05f64..1.95, delta in 0.01f64..1.0) {
        let lat = Lattice::new(16, 4.0).unwrap();
        let theta = lat.forward(&values).unwrap().without_mean();
        let ks = KernelSet::new(beta, delta, &lat).unwrap();
        for mode in [KernelMode::Exact, KernelMode::Regularized] {
            let u = ks.velocity_from_scalar(&theta, mode).unwrap();
            let div = divergence(&u);
            prop_assert!(div.energy().sqrt() <= 1e-12 * u.energy().sqrt().max(1e-300));
        }
    }

    #[test]
    fn inhomogeneous_norms_increase_with_order(values in field_strategy(16), s in -3.0f64..2.0) {
        let lat = Lattice::new(16, 6.0).unwrap();
        let f = lat.forward(&values).unwrap();
        let lo = f.sobolev_norm(NormKind::Inhomogeneous(s)).unwrap();
        let hi = f.sobolev_norm(NormKind::Inhomogeneous(s + 0.5)).unwrap();
        prop_assert!(lo <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn spectrum_slope_recovers_power_laws(exponent in -4.0f64..-0.5, amplitude in 0.1f64..10.0) {
        let lat = Lattice::new(64, 4.0).unwrap();
        let mut pts = Vec::new();
        lat.for_each_mode(|_, i, j| {
            let r = lat.frequency_norm(i, j);
            if r > 0.0 {
                // exponents are measured against the bracket ⟨r⟩ = (1 + r²)^{1/2}
                pts.push((lat.frequency(i, j), amplitude * (1.0 + r * r).powf(exponent / 2.0)));
            }
        });
        let spec = BinnedSpectrum::from_samples(&pts, 0.5, 8.0);
        let (slope, _) = spec.slope(0.5, 8.0).unwrap();
        prop_assert!((slope - exponent).abs() < 1e-9, "{} vs {}", slope, exponent);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn solver_keeps_mean_zero_and_hermitian(seed in 0u64..1000, member in 0u64..8) {
        let cfg = SolverConfig {
            n: 32,
            box_length: 16.0,
            dt: 2e-4,
            t_end: 4e-3,
            seed,
            ensemble_size: 1,
            ..SolverConfig::reference()
        };
        let s = Solver::new(cfg).unwrap();
        let th = prepare_initial_data(
            &InitialSpec::RandomBand { k_min: 1.0, k_max: 5.0, l2_norm: 1.0, seed },
            0.1,
            1.5,
            s.lattice(),
        )
        .unwrap()
        .field;
        let a = s.run(&th, member).unwrap();
        let b = s.run(&th, member).unwrap();
        let end = a.final_state.theta(s.lattice());
        prop_assert_eq!(end.mean(), 0.0);
        prop_assert!(end.hermitian_defect() <= 1e-12 * end.energy().sqrt() * 16.0);
        prop_assert_eq!(&a.ledger, &b.ledger);
        let times: Vec<f64> = a.ledger.records.iter().map(|r| r.time).collect();
        prop_assert!(times.windows(2).all(|w| w[1] > w[0]));
    }
}
