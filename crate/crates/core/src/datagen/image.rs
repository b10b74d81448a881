//! 8-bit PPM images as `height × width × 3` tensors with values in `[0, 1]`,
//! and noisy linear measurements of them.

use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Matrix};

use super::rng::{Rng, Stream};

pub fn read_ppm<R: BufRead>(mut r: R) -> Result<DenseTensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("PPM", "unexpected end of header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let num = |s: String| s.parse::<usize>().map_err(|e| Error::format("PPM", format!("{s:?}: {e}")));
    let width = num(token()?)?;
    let height = num(token()?)?;
    let maxval = num(token()?)?;
    if width == 0 || height == 0 {
        return Err(Error::format("PPM", "empty image"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::format("PPM", format!("only 8-bit images are supported (maxval {maxval})")));
    }
    let count = width * height * 3;
    let samples: Vec<u8> = match magic.as_str() {
        "P6" => {
            // Exactly one whitespace byte separates the header from the raster.
            let start = pos + 1;
            let raster = bytes
                .get(start..start + count)
                .ok_or_else(|| Error::format("PPM", "truncated raster"))?;
            raster.to_vec()
        }
        "P3" => (0..count)
            .map(|_| {
                let v = num(token()?)?;
                if v > maxval {
                    return Err(Error::format("PPM", format!("sample {v} exceeds maxval {maxval}")));
                }
                Ok(v as u8)
            })
            .collect::<Result<_>>()?,
        other => return Err(Error::format("PPM", format!("unsupported magic {other:?}"))),
    };
    if let Some(&bad) = samples.iter().find(|&&v| v as usize > maxval) {
        return Err(Error::format("PPM", format!("sample {bad} exceeds maxval {maxval}")));
    }
    let scale = maxval as f64;
    DenseTensor::from_fn(&[height, width, 3], |ix| {
        samples[(ix[0] * width + ix[1]) * 3 + ix[2]] as f64 / scale
    })
}

/// Writes binary PPM (P6); values are clamped to `[0, 1]` and rounded to 8
/// bits.
pub fn write_ppm<W: Write>(mut w: W, img: &DenseTensor) -> Result<()> {
    let s = img.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::arg(format!("image tensor must be height × width × 3, got {s:?}")));
    }
    let (h, wd) = (s[0], s[1]);
    write!(w, "P6\n{wd} {h}\n255\n")?;
    let mut raster = Vec::with_capacity(h * wd * 3);
    for i in 0..h {
        for j in 0..wd {
            for c in 0..3 {
                let v = img[&[i, j, c][..]];
                let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                raster.push((v * 255.0).round() as u8);
            }
        }
    }
    w.write_all(&raster)?;
    Ok(())
}

pub fn load_ppm(path: &Path) -> Result<DenseTensor> {
    read_ppm(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn encode_ppm(img: &DenseTensor) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_ppm(&mut buf, img)?;
    Ok(buf)
}

/// A white square with a green cross whose arms stop short of the border.
pub fn green_cross(size: usize) -> DenseTensor {
    let lo = size * 2 / 5;
    let hi = size - lo;
    let margin = size / 10;
    let inside = |i: usize, j: usize| {
        let arm = |a: usize, b: usize| (lo..hi).contains(&a) && (margin..size - margin).contains(&b);
        arm(i, j) || arm(j, i)
    };
    DenseTensor::from_fn(&[size, size, 3], |ix| {
        if inside(ix[0], ix[1]) && ix[2] != 1 {
            0.0
        } else {
            1.0
        }
    })
    .expect("positive size")
}

/// Which mode of the image acts as the regression input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageTask {
    /// `W ∈ R^{3 × h × w}`, `x ∈ R^3`.
    Channels,
    /// `W ∈ R^{h × w × 3}`, `x ∈ R^h`.
    Height,
}

impl FromStr for ImageTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "channels" => Ok(ImageTask::Channels),
            "height" => Ok(ImageTask::Height),
            _ => Err(Error::arg(format!("unknown image task {s:?} (expected channels or height)"))),
        }
    }
}

impl std::fmt::Display for ImageTask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ImageTask::Channels => "channels",
            ImageTask::Height => "height",
        })
    }
}

impl ImageTask {
    /// The regression tensor for `img` (`h × w × 3`).
    pub fn to_regression_tensor(self, img: &DenseTensor) -> Result<DenseTensor> {
        match self {
            ImageTask::Channels => img.permute(&[2, 0, 1]),
            ImageTask::Height => Ok(img.clone()),
        }
    }

    /// Inverse of [`ImageTask::to_regression_tensor`].
    pub fn to_image(self, w: &DenseTensor) -> Result<DenseTensor> {
        match self {
            ImageTask::Channels => w.permute(&[1, 2, 0]),
            ImageTask::Height => Ok(w.clone()),
        }
    }
}

/// `N` measurements `Y_n = W ×̄_0 x_n + E_n` of an image, with `x_n` standard
/// normal and noise entries of standard deviation `noise_std`.
pub fn gen_image_measurements(
    image: &DenseTensor,
    task: ImageTask,
    n: usize,
    noise_std: f64,
    seed: u64,
) -> Result<(Matrix, DenseTensor)> {
    if n == 0 {
        return Err(Error::arg("need at least one measurement"));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::arg(format!("noise std must be ≥ 0, got {noise_std}")));
    }
    let w = task.to_regression_tensor(image)?;
    let x = Rng::stream(seed, Stream::Inputs).normal_matrix(n, w.shape()[0]);
    let mut y = w.mode_product(&x, 0)?;
    if noise_std > 0.0 {
        let mut rng = Rng::stream(seed, Stream::Noise);
        for v in y.data_mut() {
            *v += noise_std * rng.normal();
        }
    }
    Ok((x, y))
}
