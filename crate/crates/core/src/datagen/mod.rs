//! Seeded data generators: random low-rank regression tensors, the linear and
//! quadratic synthetic problems, and noisy linear measurements of images.

mod image;
mod rng;
mod synth;

pub use image::{encode_ppm, gen_image_measurements, green_cross, load_ppm, read_ppm, write_ppm, ImageTask};
pub use rng::{derive_seed, Rng, Stream};
pub use synth::{
    gen_linear_synthetic, gen_nonlinear_synthetic, kron_square, random_lowrank_tensor, random_tucker, SynthData,
    SynthSpec,
};
