//! Three tapped floors seen through one displacement sensor and two
//! accelerometers. The force on floor 2 reaches the measurements at lag zero
//! only through the displacement channel, which is nearly blind to it; the
//! smoother picks it up from the following samples.
//!
//! ```bash
//! cargo run --release --example unobserved_taps
//! ```

use nalgebra::{DMatrix, DVector};

use ufus::estimators::{run_estimator, FilterState, UniversalFilter, UniversalSmoother};
use ufus::eval::{score_quantity, EstimateTrace, Quantity};
use ufus::model::{build_shear_frame, Damping, InputDefinition, SensorLayout, StructuralSystem};
use ufus::sim::{
    add_measurement_noise, generate_impulse_train, simulate_truth, HalfSine, NoiseSpec, TapSeries, TruthTrajectory,
};

fn peak_sample(values: impl Iterator<Item = (usize, f64)>) -> usize {
    values.fold((0, 0.0f64), |best, (k, v)| if v.abs() > best.1.abs() { (k, v) } else { best }).0
}

fn report(trace: &EstimateTrace, truth: &TruthTrajectory) -> ufus::Result<()> {
    let nrmse = score_quantity(trace, truth, Quantity::Input, 1.0)?.value;
    print!("{:>3}: input NRMSE {nrmse:.3}, peak sample offsets", trace.estimator);
    for col in 0..truth.inputs.ncols() {
        let est = peak_sample(trace.sample_indices.iter().enumerate().map(|(r, &k)| (k, trace.input_estimates[(r, col)])));
        let tru = peak_sample(truth.inputs.column(col).iter().copied().enumerate());
        print!(" {:+}", est as i64 - tru as i64);
    }
    println!();
    Ok(())
}

fn main() -> ufus::Result<()> {
    let inputs = [1, 3, 4];
    let frame = build_shear_frame(
        &[8.083; 5],
        &[1.24e4; 5],
        &Damping::ModalRatios(vec![0.016]),
        &InputDefinition::PointForces(inputs.to_vec()),
    )?;
    let layout = SensorLayout::parse(&["d2", "a4", "a5"])?;
    let sys = StructuralSystem::assemble(frame, 5, layout, 0.01, DMatrix::identity(10, 10) * 1e-10, DMatrix::identity(3, 3))?;
    let sv = sys.dss.g().singular_values();
    println!("singular values of G: {:.3e}", sv.transpose());

    let schedule = [
        TapSeries { dof: 1, start: 1.5, count: 1, interval: 0.0 },
        TapSeries { dof: 4, start: 3.0, count: 1, interval: 0.0 },
        TapSeries { dof: 3, start: 4.5, count: 1, interval: 0.0 },
    ];
    let scenario = generate_impulse_train(&schedule, HalfSine { width: 0.05, peak: 20.0 }, &inputs, 0.01, 8.0)?;
    let truth = simulate_truth(&sys, &scenario, &DVector::zeros(10))?;
    let meas = add_measurement_noise(truth.times.clone(), &truth.clean_outputs(&sys), &NoiseSpec::Snr(vec![1000.0]), 2)?;
    let dss = sys.dss.with_r(meas.r_matrix())?;

    let uf = run_estimator(&mut UniversalFilter::new(dss.clone(), FilterState::initial(10, 1e-9)), &sys, &meas, "uf")?;
    let us = run_estimator(&mut UniversalSmoother::new(dss, 20, 1e-9)?, &sys, &meas, "us")?;
    report(&uf.trace, &truth)?;
    report(&us.trace, &truth)?;
    Ok(())
}
