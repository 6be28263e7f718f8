//! The augmented Kalman filter treats the input as a random walk with its
//! own noise level. Compared here with the universal filter, which makes no
//! assumption about the input.
//!
//! ```bash
//! cargo run --release --example augmented_baseline
//! ```

use nalgebra::{DMatrix, DVector};

use ufus::estimators::{run_estimator, AugmentedKalmanFilter, FilterState, UniversalFilter};
use ufus::eval::compare_report;
use ufus::model::{build_shear_frame, Damping, InputDefinition, SensorLayout, StructuralSystem};
use ufus::sim::{add_measurement_noise, simulate_truth, synthetic_ground_motion, GroundMotionParams, NoiseSpec};

fn main() -> ufus::Result<()> {
    let frame = build_shear_frame(
        &[8.083; 5],
        &[1.24e4; 5],
        &Damping::ModalRatios(vec![0.016]),
        &InputDefinition::GroundMotion,
    )?;
    let layout = SensorLayout::parse(&["d1", "a2", "a4"])?;
    let sys = StructuralSystem::assemble(frame, 5, layout, 0.01, DMatrix::identity(10, 10) * 1e-12, DMatrix::identity(3, 3))?;
    let mut gm = GroundMotionParams::new(20.0, 0.01, 7);
    gm.pga = 2.0;
    let truth = simulate_truth(&sys, &synthetic_ground_motion(&gm)?, &DVector::zeros(10))?;
    let meas = add_measurement_noise(truth.times.clone(), &truth.clean_outputs(&sys), &NoiseSpec::Snr(vec![100.0]), 3)?;
    let dss = sys.dss.with_r(meas.r_matrix())?;

    let mut traces = vec![run_estimator(&mut UniversalFilter::new(dss.clone(), FilterState::initial(10, 1e-9)), &sys, &meas, "uf")?.trace];
    for q_input in [1e-2, 1.0, 1e2] {
        let mut akf = AugmentedKalmanFilter::new(dss.clone(), 1e-9, 1e-12, q_input);
        traces.push(run_estimator(&mut akf, &sys, &meas, &format!("akf q_p={q_input:e}"))?.trace);
    }
    print!("{}", compare_report(&traces, &truth, 1.0)?.to_table());
    Ok(())
}
