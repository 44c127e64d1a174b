use msqg_core::solver::{prepare_initial_data, InitialSpec, NoiseDrive, Solver, SolverConfig};
use msqg_core::{Lattice, NormKind, SpectralScalarField};

fn config(n: usize, dt: f64, steps: usize) -> SolverConfig {
    SolverConfig {
        n,
        box_length: 16.0,
        dt,
        t_end: dt * steps as f64,
        ensemble_size: 1,
        ..SolverConfig::reference()
    }
}

fn band(lat: &Lattice, k_max: f64, seed: u64) -> SpectralScalarField {
    prepare_initial_data(
        &InitialSpec::RandomBand {
            k_min: 1.0,
            k_max,
            l2_norm: 1.0,
            seed,
        },
        0.1,
        1.5,
        lat,
    )
    .unwrap()
    .field
}

fn max_l2_drift(cfg: SolverConfig) -> f64 {
    let s = Solver::new(cfg).unwrap();
    let out = s.run(&band(s.lattice(), 6.0, 7), 0).unwrap();
    let r = &out.ledger.records;
    r.iter().map(|x| (x.l2 / r[0].l2 - 1.0).abs()).fold(0.0, f64::max)
}

#[test]
fn deterministic_advection_conserves_l2_over_a_thousand_steps() {
    let quiet = |dt| SolverConfig {
        noise: NoiseDrive::Off,
        diffusion: false,
        nonlinearity: true,
        ..config(64, dt, 1000)
    };
    let drift = max_l2_drift(quiet(1e-4));
    assert!(drift < 1e-8, "drift {drift:e}");
    // explicit Euler adds dt² ‖u·∇θ‖² per step, so the drift tracks dt
    let coarse = max_l2_drift(quiet(2e-4));
    let ratio = coarse / drift;
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn zero_datum_stays_zero_under_noise() {
    let cfg = SolverConfig {
        ensemble_size: 3,
        ..config(32, 2e-4, 50)
    };
    let s = Solver::new(cfg).unwrap();
    let zero = SpectralScalarField::zeros(s.lattice());
    for run in s.run_ensemble(&zero).unwrap() {
        assert!(run.failure.is_none());
        assert!(run.final_state.theta(s.lattice()).coeffs().iter().all(|c| c.norm() == 0.0));
        assert!(run.ledger.records.iter().all(|r| r.l2 == 0.0));
    }
}

#[test]
fn full_model_stays_real_and_mean_free() {
    let s = Solver::new(config(32, 2e-4, 200)).unwrap();
    let lat = s.lattice().clone();
    let th = band(&lat, 6.0, 2);
    let mut state = s.initial_state(&th, 4).unwrap();
    let scale = th.energy().sqrt();
    for _ in 0..200 {
        s.step(&mut state).unwrap();
        let f = state.theta(&lat);
        assert!(f.reality_defect() < 1e-10 * scale);
        assert_eq!(f.mean(), 0.0);
    }
}

#[test]
fn ledger_has_one_record_per_step_and_time_increases() {
    let s = Solver::new(config(32, 2e-4, 25)).unwrap();
    let out = s.run(&band(s.lattice(), 6.0, 1), 0).unwrap();
    let r = &out.ledger.records;
    assert_eq!(r.len(), 26);
    assert!(r.windows(2).all(|w| w[1].time > w[0].time));
    assert!(r.iter().all(|x| x.l1 >= 0.0 && x.l2 >= 0.0 && x.lp >= 0.0 && x.hdot_neg >= 0.0 && x.h_reg >= 0.0));
}

#[test]
fn truncation_error_shrinks_as_delta_halves() {
    let lat = Lattice::new(128, 1.0).unwrap();
    let spec = InitialSpec::RandomBand {
        k_min: 1.0,
        k_max: 40.0,
        l2_norm: 1.0,
        seed: 9,
    };
    let errs: Vec<f64> = [0.4, 0.2, 0.1]
        .iter()
        .map(|&d| prepare_initial_data(&spec, d, 1.5, &lat).unwrap().truncation_error)
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    let field = prepare_initial_data(&spec, 0.1, 1.5, &lat).unwrap().field;
    assert!(field.mean().abs() < 1e-14);
}

#[test]
fn band_limited_datum_is_a_truncation_fixed_point() {
    let lat = Lattice::new(64, 16.0).unwrap();
    let th = band(&lat, 4.0, 5);
    let again = prepare_initial_data(&InitialSpec::File(write_temp(&th)), 0.1, 1.5, &lat).unwrap();
    assert_eq!(again.truncation_error, 0.0);
    assert_eq!(again.field.coeffs(), th.coeffs());
    assert!(th.sobolev_norm(NormKind::Homogeneous(-0.75)).unwrap() > 0.0);
}

fn write_temp(field: &SpectralScalarField) -> std::path::PathBuf {
    let dir = tempfile::tempdir().unwrap().keep();
    let path = dir.join("datum.msqg");
    field.write_msqg(std::fs::File::create(&path).unwrap()).unwrap();
    path
}

#[test]
fn lp_defect_shrinks_under_step_refinement() {
    let defect = |dt: f64| {
        let cfg = SolverConfig {
            n: 64,
            dt,
            t_end: 0.05,
            ensemble_size: 4,
            ..SolverConfig::reference()
        };
        let s = Solver::new(cfg).unwrap();
        let th = band(s.lattice(), 6.0, 3);
        s.run_ensemble(&th)
            .unwrap()
            .iter()
            .map(|r| r.ledger.lp_defect())
            .fold(0.0, f64::max)
    };
    let (a, b) = (defect(2e-4), defect(1e-4));
    assert!(a < 0.05 && b < a, "{a} -> {b}");
}
