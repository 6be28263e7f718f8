//! Acceleration-only sensing: the smoother's lag buys a lower error than the
//! filter on every scored quantity.
//!
//! ```bash
//! cargo run --release --example smoother_vs_filter
//! ```

use nalgebra::{DMatrix, DVector};

use ufus::estimators::{run_estimator, FilterState, UniversalFilter, UniversalSmoother};
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
    let layout = SensorLayout::parse(&["a3", "a5"])?;
    let sys = StructuralSystem::assemble(frame, 5, layout, 0.01, DMatrix::identity(10, 10) * 1e-12, DMatrix::identity(2, 2))?;

    let mut gm = GroundMotionParams::new(20.0, 0.01, 7);
    gm.pga = 2.0;
    let truth = simulate_truth(&sys, &synthetic_ground_motion(&gm)?, &DVector::zeros(10))?;
    let meas = add_measurement_noise(truth.times.clone(), &truth.clean_outputs(&sys), &NoiseSpec::Snr(vec![50.0]), 3)?;
    let dss = sys.dss.with_r(meas.r_matrix())?;

    let mut uf = UniversalFilter::new(dss.clone(), FilterState::initial(10, 1e-9));
    let mut us = UniversalSmoother::new(dss, 20, 1e-9)?;
    let uf_run = run_estimator(&mut uf, &sys, &meas, "uf")?;
    let us_run = run_estimator(&mut us, &sys, &meas, "us")?;
    println!("smoother latency: {} samples", us_run.trace.latency_steps);

    let report = compare_report(&[uf_run.trace, us_run.trace], &truth, 1.0)?;
    print!("{}", report.to_table());
    Ok(())
}
