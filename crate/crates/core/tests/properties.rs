use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use ufus::estimators::{
    run_estimator, AugmentedKalmanFilter, FilterState, Tolerances, UniversalFilter, UniversalSmoother,
};
use ufus::eval::nrmse;
use ufus::linalg::{psd_pinv, range_basis};
use ufus::model::{build_shear_frame, Damping, InputDefinition, SensorLayout, StructuralSystem};
use ufus::sim::{
    add_measurement_noise, generate_impulse_train, simulate_truth, HalfSine, MeasurementSet, NoiseSpec, TapSeries,
};
use ufus::tuner::{
    array_step, build_candidate_grid, innovation_error_update, run_array, uf_array, us_array, ArrayState,
    CandidateGrid, ErrorWindow,
};

const DT: f64 = 0.01;

fn tap_system() -> (StructuralSystem, MeasurementSet) {
    let inputs = InputDefinition::PointForces(vec![1, 3]);
    let frame = build_shear_frame(&[8.083; 5], &[1.24e4; 5], &Damping::ModalRatios(vec![0.016]), &inputs).unwrap();
    let layout = SensorLayout::parse(&["d2", "a4", "a5"]).unwrap();
    let sys = StructuralSystem::assemble(frame, 5, layout, DT, DMatrix::identity(10, 10) * 1e-10, DMatrix::identity(3, 3))
        .unwrap();
    let schedule = [
        TapSeries { dof: 1, start: 0.3, count: 2, interval: 0.6 },
        TapSeries { dof: 3, start: 0.6, count: 1, interval: 0.0 },
    ];
    let pulse = HalfSine { width: 0.05, peak: 20.0 };
    let scenario = generate_impulse_train(&schedule, pulse, &[1, 3], DT, 1.5).unwrap();
    let truth = simulate_truth(&sys, &scenario, &DVector::zeros(10)).unwrap();
    let meas = add_measurement_noise(truth.times.clone(), &truth.clean_outputs(&sys), &NoiseSpec::Snr(vec![200.0]), 4)
        .unwrap();
    let dss = sys.dss.with_r(meas.r_matrix()).unwrap();
    (StructuralSystem { dss, ..sys }, meas)
}

fn psd_strategy() -> impl Strategy<Value = DMatrix<f64>> {
    (2usize..6, 1usize..6).prop_flat_map(|(n, r)| {
        prop::collection::vec(-1.0f64..1.0, n * r).prop_map(move |v| {
            let f = DMatrix::from_vec(n, r.min(n), v[..n * r.min(n)].to_vec());
            &f * f.transpose()
        })
    })
}

proptest! {
    #[test]
    fn window_total_matches_a_brute_force_tail_sum(
        capacity in 1usize..30,
        values in prop::collection::vec(0.0f64..1e3, 0..120),
    ) {
        let mut window = ErrorWindow::new(capacity).unwrap();
        for (i, v) in values.iter().enumerate() {
            let e = innovation_error_update(&mut window, &DVector::from_element(1, v.sqrt()));
            let start = (i + 1).saturating_sub(capacity);
            let brute: f64 = values[start..=i].iter().sum();
            prop_assert!((e - brute).abs() <= 1e-12 * brute.max(1.0));
        }
    }

    #[test]
    fn grid_is_a_log_lattice_starting_at_min(
        lo in -24.0f64..0.0,
        span in 0.5f64..20.0,
        spacing in 0.05f64..2.0,
    ) {
        let (min, max) = (10f64.powf(lo), 10f64.powf(lo + span));
        let grid = build_candidate_grid(min, max, spacing).unwrap();
        let count = (span / spacing).round().max(1.0) as usize;
        prop_assert!((grid.len() as isize - count as isize).abs() <= 1);
        prop_assert_eq!(grid.q_values[0], min);
        for w in grid.q_values.windows(2) {
            prop_assert!((w[1].log10() - w[0].log10() - spacing).abs() < 1e-9);
        }
    }

    #[test]
    fn psd_pinv_satisfies_the_penrose_conditions(a in psd_strategy()) {
        let p = psd_pinv(&a, 1e-10);
        let scale = a.norm().max(1e-300);
        prop_assert!((&a * &p * &a - &a).norm() <= 1e-8 * scale);
        prop_assert!((&p * &a * &p - &p).norm() <= 1e-8 * p.norm().max(1.0));
        prop_assert!((&p - p.transpose()).norm() == 0.0);
        let basis = range_basis(&a, 1e-10);
        let gram = basis.transpose() * &basis;
        prop_assert!((gram - DMatrix::identity(basis.ncols(), basis.ncols())).norm() < 1e-10);
    }

    #[test]
    fn nrmse_is_invariant_to_a_common_rescaling(
        rows in 3usize..40,
        factor in 1e-6f64..1e6,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let truth = DMatrix::from_fn(rows, 3, |i, j| (i as f64 * 0.3 + j as f64).sin() + 0.01 * i as f64);
        let est = truth.map(|v| v + rng.gen_range(-0.1..0.1));
        let times: Vec<f64> = (0..rows).map(|k| k as f64 * DT).collect();
        let base = nrmse(&est, &truth, &times, 0.0).unwrap().value;
        let scaled = nrmse(&(est * factor), &(truth.clone() * factor), &times, 0.0).unwrap().value;
        prop_assert!((base - scaled).abs() <= 1e-10 * base);
        prop_assert_eq!(nrmse(&truth, &truth, &times, 0.0).unwrap().value, 0.0);
    }
}

#[test]
fn single_candidate_array_equals_the_standalone_filter() {
    let (sys, meas) = tap_system();
    let q = 1e-10;
    let tol = Tolerances::default();
    let mut uf = UniversalFilter::new(sys.dss.with_q_scalar(q).unwrap(), FilterState::initial(10, 1e-9)).with_tolerances(tol);
    let alone = run_estimator(&mut uf, &sys, &meas, "uf").unwrap();
    let mut array = uf_array(&sys.dss, &CandidateGrid::single(q), 10, 1e-9, tol).unwrap();
    let tuned = run_array(&mut array, &sys, &meas, "uf").unwrap();
    assert_eq!(alone.trace.state_estimates, tuned.trace.state_estimates);
    assert_eq!(alone.trace.input_estimates, tuned.trace.input_estimates);
    assert!(tuned.records.iter().all(|r| r.selected_q == q));
}

fn assert_broadcast<E, F>(array: &mut ArrayState<E>, meas: &MeasurementSet, steps: usize, state_of: F)
where
    E: ufus::estimators::JointEstimator,
    F: Fn(&E) -> Vec<f64>,
{
    for k in 1..=steps {
        array_step(array, meas, k).unwrap();
        let reference = state_of(&array.candidates[0]);
        for c in &array.candidates[1..] {
            assert_eq!(state_of(c), reference, "candidates differ after step {k}");
        }
    }
}

#[test]
fn broadcast_leaves_every_candidate_identical() {
    let (sys, meas) = tap_system();
    let grid = build_candidate_grid(1e-14, 1e-4, 1.0).unwrap();
    let tol = Tolerances::default();

    let mut uf = uf_array(&sys.dss, &grid, 10, 1e-9, tol).unwrap();
    assert_broadcast(&mut uf, &meas, 40, |c: &UniversalFilter| {
        c.state.x_hat.iter().chain(c.state.p_x.iter()).copied().collect()
    });

    let mut us = us_array(&sys.dss, 5, &grid, 10, 1e-9, tol).unwrap();
    assert_broadcast(&mut us, &meas, 40, |c: &UniversalSmoother| {
        let s = &c.state;
        s.x_hat.iter().chain(s.p.iter()).chain(s.p_xw.iter()).chain(s.p_xv.iter()).copied().collect()
    });

    let candidates = grid.q_values.iter().map(|&q| AugmentedKalmanFilter::new(sys.dss.clone(), 1e-9, q, 1.0)).collect();
    let mut akf = ArrayState::new(candidates, 10).unwrap();
    assert_broadcast(&mut akf, &meas, 40, |c: &AugmentedKalmanFilter| {
        c.state.z_hat.iter().chain(c.state.p_z.iter()).copied().collect()
    });
    // Each candidate keeps its own noise hypothesis.
    let levels: Vec<f64> = akf.candidates.iter().map(|c| c.state.q_x).collect();
    assert_eq!(levels, grid.q_values);
}

#[test]
fn selection_does_not_depend_on_grid_order() {
    let (sys, meas) = tap_system();
    let grid = build_candidate_grid(1e-14, 1e-2, 0.5).unwrap();
    let mut reversed = grid.clone();
    reversed.q_values.reverse();
    let tol = Tolerances::default();
    let forward = run_array(&mut uf_array(&sys.dss, &grid, 10, 1e-9, tol).unwrap(), &sys, &meas, "f").unwrap();
    let backward = run_array(&mut uf_array(&sys.dss, &reversed, 10, 1e-9, tol).unwrap(), &sys, &meas, "b").unwrap();
    let picks = |o: &ufus::tuner::TunerOutput| o.records.iter().map(|r| r.selected_q).collect::<Vec<_>>();
    assert_eq!(picks(&forward), picks(&backward));
    assert_eq!(forward.trace.state_estimates, backward.trace.state_estimates);
}
