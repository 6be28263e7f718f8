//! Simulates hammer taps on two floors and writes the truth and the noisy
//! measurements as channel files.
//!
//! ```bash
//! cargo run --release --example simulate_taps -- /tmp/taps
//! ```

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};

use ufus::io::{write_channel_file, ChannelFile};
use ufus::model::{build_shear_frame, Damping, InputDefinition, SensorLayout, StructuralSystem};
use ufus::sim::{add_measurement_noise, generate_impulse_train, simulate_truth, HalfSine, NoiseSpec, TapSeries};

fn main() -> ufus::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "taps-out".into()));
    std::fs::create_dir_all(&out)?;

    // Floors 2 and 5, 0-based DOFs 1 and 4.
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
        TapSeries { dof: 1, start: 0.5, count: 3, interval: 1.0 },
        TapSeries { dof: 4, start: 1.0, count: 2, interval: 1.5 },
    ];
    let scenario = generate_impulse_train(&schedule, HalfSine { width: 0.05, peak: 20.0 }, &inputs, 0.01, 5.0)?;
    let truth = simulate_truth(&sys, &scenario, &DVector::zeros(10))?;
    let meas = add_measurement_noise(truth.times.clone(), &truth.clean_outputs(&sys), &NoiseSpec::Snr(vec![100.0]), 1)?;

    let truth_file = ChannelFile::new(
        ["p2", "p5", "d1", "d2", "d3", "d4", "d5"].map(String::from).to_vec(),
        truth.times.clone(),
        DMatrix::from_fn(truth.len(), 7, |i, j| {
            if j < 2 { truth.inputs[(i, j)] } else { truth.physical_disp[(i, j - 2)] }
        }),
    )?;
    let meas_file = ChannelFile::new(sys.layout.names(), meas.times.clone(), meas.values.clone())?;
    write_channel_file(out.join("truth.csv"), &truth_file)?;
    write_channel_file(out.join("measurements.csv"), &meas_file)?;
    println!("{} samples, noise std per channel {:.3e}", meas.len(), nalgebra::DVector::from_vec(meas.noise_std.clone()).transpose());
    println!("wrote {}", out.display());
    Ok(())
}
