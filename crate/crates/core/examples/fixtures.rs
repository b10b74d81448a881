//! Regenerates the bundled test fixtures.
//!
//! `cargo run -p tensorreg-core --example fixtures -- <dir>` writes
//! `noiseless_x.csv`, `noiseless_y.dten` (outputs `Y = W ×_0 X` for a random
//! `W` of shape 6×4×5 and multilinear rank (3,2,2), 20 samples) and
//! `cross.ppm` (the 50×50 green cross).

use std::path::PathBuf;

use tensorreg::datagen::{encode_ppm, gen_linear_synthetic, green_cross, SynthSpec};
use tensorreg::fsutil::write_atomic;
use tensorreg::tensor::encode_tensor;
use tensorreg::DenseTensor;

fn main() -> tensorreg::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "crates/cli/tests/fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    let spec = SynthSpec {
        input_dim: 6,
        output_shape: vec![4, 5],
        ranks: vec![3, 2, 2],
        noise_std: 0.0,
        n_train: 20,
        n_test: 1,
        seed: 20,
    };
    let d = gen_linear_synthetic(&spec)?;
    let xp = dir.join("noiseless_x.csv");
    let yp = dir.join("noiseless_y.dten");
    write_atomic(&xp, &encode_tensor(&xp, &DenseTensor::from_matrix(&d.x_train))?)?;
    write_atomic(&yp, &encode_tensor(&yp, &d.y_train)?)?;
    write_atomic(&dir.join("cross.ppm"), &encode_ppm(&green_cross(50))?)?;
    println!("wrote fixtures to {}", dir.display());
    Ok(())
}
