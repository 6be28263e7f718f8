//! Filter-array tuning of the process-noise level on a tapped frame.
//! Prints how often each candidate exponent wins.
//!
//! ```bash
//! cargo run --release --example tuned_array
//! ```

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use ufus::estimators::Tolerances;
use ufus::eval::{score_quantity, Quantity};
use ufus::model::{build_shear_frame, Damping, InputDefinition, SensorLayout, StructuralSystem};
use ufus::sim::{add_measurement_noise, generate_impulse_train, simulate_truth, HalfSine, NoiseSpec, TapSeries};
use ufus::tuner::{build_candidate_grid, run_array, uf_array};

fn main() -> ufus::Result<()> {
    let inputs = [1, 4];
    let frame = build_shear_frame(
        &[8.083; 5],
        &[1.24e4; 5],
        &Damping::ModalRatios(vec![0.016]),
        &InputDefinition::PointForces(inputs.to_vec()),
    )?;
    let layout = SensorLayout::parse(&["d2", "a4", "a5"])?;
    let sys = StructuralSystem::assemble(frame, 5, layout, 0.01, DMatrix::identity(10, 10) * 1e-10, DMatrix::identity(3, 3))?;
    let schedule = [
        TapSeries { dof: 1, start: 0.5, count: 4, interval: 1.5 },
        TapSeries { dof: 4, start: 1.2, count: 4, interval: 1.5 },
    ];
    let scenario = generate_impulse_train(&schedule, HalfSine { width: 0.05, peak: 20.0 }, &inputs, 0.01, 7.0)?;
    let truth = simulate_truth(&sys, &scenario, &DVector::zeros(10))?;
    let meas = add_measurement_noise(truth.times.clone(), &truth.clean_outputs(&sys), &NoiseSpec::Snr(vec![200.0]), 5)?;
    let dss = sys.dss.with_r(meas.r_matrix())?;

    let grid = build_candidate_grid(1e-16, 1e-4, 0.5)?;
    println!("{} candidates, evaluation window 10 samples", grid.len());
    let mut array = uf_array(&dss, &grid, 10, 1e-9, Tolerances::default())?;
    let out = run_array(&mut array, &sys, &meas, "tuned-uf")?;

    let mut wins: BTreeMap<i64, usize> = BTreeMap::new();
    for r in &out.records {
        *wins.entry((r.selected_q.log10() * 2.0).round() as i64).or_default() += 1;
    }
    for (half_exp, n) in wins {
        println!("  q = 1e{:<5} won {n:4} steps", half_exp as f64 / 2.0);
    }
    println!("input NRMSE {:.3}", score_quantity(&out.trace, &truth, Quantity::Input, 1.0)?.value);
    Ok(())
}
