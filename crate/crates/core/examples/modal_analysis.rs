//! Natural frequencies, modal reduction and the discrete model of a
//! five-storey shear frame.
//!
//! ```bash
//! cargo run --release --example modal_analysis
//! ```

use nalgebra::DMatrix;

use ufus::model::{
    assemble_continuous, build_shear_frame, discretize, modal_reduce, Damping, InputDefinition, SensorLayout,
    StructuralSystem,
};

fn main() -> ufus::Result<()> {
    let frame = build_shear_frame(
        &[8.083; 5],
        &[1.24e4; 5],
        &Damping::ModalRatios(vec![0.016]),
        &InputDefinition::GroundMotion,
    )?;
    let modes = frame.modal_analysis()?;
    println!("natural frequencies (Hz):");
    for (i, f) in modes.frequencies_hz().iter().enumerate() {
        println!("  mode {}: {f:8.4}", i + 1);
    }

    // Keep the first three modes and sample at 100 Hz.
    let reduced = modal_reduce(&frame, 3)?;
    let css = assemble_continuous(&reduced)?;
    let (a, b) = discretize(&css, 0.01)?;
    let radius = a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    println!("reduced order {}: spectral radius of A = {radius:.6}", reduced.order);
    println!("B (ground acceleration column) = {:.3e}", b.transpose());

    let layout = SensorLayout::parse(&["d1", "a2", "a4"])?;
    let sys = StructuralSystem::assemble(frame, 3, layout, 0.01, DMatrix::identity(6, 6) * 1e-12, DMatrix::identity(3, 3))?;
    println!("G = C B + D for sensors {:?}:{:.4e}", sys.layout.names(), sys.dss.g());
    Ok(())
}
