//! HOLRR v1 model files: the line `HOLRR 1`, one line of JSON describing the
//! model, then the DTEN blocks named in the header's `blocks` list, in order.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::tensor::{read_dten, write_dten, DenseTensor, Matrix, TuckerFactors};

use super::holrr::HolrrModel;
use super::kernel::KernelSpec;
use super::kholrr::KernelHolrrModel;

pub const MODEL_MAGIC: &str = "HOLRR";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Kind {
    Holrr,
    KernelHolrr,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: Kind,
    ranks: Vec<usize>,
    gamma: f64,
    kernel: Option<KernelSpec>,
    warnings: Vec<Warning>,
    blocks: Vec<String>,
}

/// Either kind of fitted tensor regression model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Holrr(HolrrModel),
    Kernel(KernelHolrrModel),
}

impl From<HolrrModel> for Model {
    fn from(m: HolrrModel) -> Self {
        Model::Holrr(m)
    }
}

impl From<KernelHolrrModel> for Model {
    fn from(m: KernelHolrrModel) -> Self {
        Model::Kernel(m)
    }
}

impl Model {
    pub fn predict(&self, x: &[f64]) -> Result<DenseTensor> {
        match self {
            Model::Holrr(m) => m.predict(x),
            Model::Kernel(m) => m.predict(x),
        }
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<DenseTensor> {
        match self {
            Model::Holrr(m) => m.predict_batch(x),
            Model::Kernel(m) => m.predict_batch(x),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Model::Holrr(m) => m.input_dim(),
            Model::Kernel(m) => m.input_dim(),
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        match self {
            Model::Holrr(m) => m.output_shape(),
            Model::Kernel(m) => m.output_shape(),
        }
    }

    pub fn ranks(&self) -> Vec<usize> {
        match self {
            Model::Holrr(m) => m.ranks(),
            Model::Kernel(m) => m.ranks().to_vec(),
        }
    }

    pub fn warnings(&self) -> &[Warning] {
        match self {
            Model::Holrr(m) => m.warnings(),
            Model::Kernel(m) => m.warnings(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let (header, blocks): (Header, Vec<DenseTensor>) = match self {
            Model::Holrr(m) => {
                let order = m.factors.core().order();
                let mut names = vec!["core".to_string()];
                names.extend((0..order).map(|i| format!("factor{i}")));
                let mut blocks = vec![m.factors.core().clone()];
                blocks.extend(m.factors.factors().iter().map(DenseTensor::from_matrix));
                let h = Header {
                    kind: Kind::Holrr,
                    ranks: m.ranks(),
                    gamma: m.gamma,
                    kernel: None,
                    warnings: m.warnings.clone(),
                    blocks: names,
                };
                (h, blocks)
            }
            Model::Kernel(m) => {
                let h = Header {
                    kind: Kind::KernelHolrr,
                    ranks: m.ranks.clone(),
                    gamma: m.gamma,
                    kernel: Some(m.kernel),
                    warnings: m.warnings.clone(),
                    blocks: vec!["coeff".into(), "train_inputs".into()],
                };
                (h, vec![m.coeff.clone(), DenseTensor::from_matrix(&m.train_inputs)])
            }
        };
        writeln!(w, "{MODEL_MAGIC} {MODEL_VERSION}")?;
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for b in &blocks {
            write_dten(&mut w, b)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != format!("{MODEL_MAGIC} {MODEL_VERSION}") {
            return Err(Error::format("HOLRR", format!("bad magic line {:?}", line.trim_end())));
        }
        line.clear();
        r.read_line(&mut line)?;
        let header: Header =
            serde_json::from_str(line.trim_end()).map_err(|e| Error::format("HOLRR", format!("header: {e}")))?;
        let mut blocks = Vec::with_capacity(header.blocks.len());
        for name in &header.blocks {
            blocks.push(read_dten(&mut r).map_err(|e| Error::format("HOLRR", format!("block {name}: {e}")))?);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::format("HOLRR", "trailing bytes after last block"));
        }
        let matrix = |t: DenseTensor, name: &str| -> Result<Matrix> {
            if t.order() != 2 {
                return Err(Error::format("HOLRR", format!("block {name} is not a matrix")));
            }
            Ok(t.unfold0().into_owned())
        };
        match header.kind {
            Kind::Holrr => {
                if blocks.len() < 3 {
                    return Err(Error::format("HOLRR", "model needs a core and one factor per mode"));
                }
                let mut it = blocks.into_iter();
                let core = it.next().unwrap();
                let factors = it
                    .enumerate()
                    .map(|(i, t)| matrix(t, &format!("factor{i}")))
                    .collect::<Result<Vec<_>>>()?;
                let factors = TuckerFactors::new(core, factors).map_err(|e| Error::format("HOLRR", e.to_string()))?;
                if factors.ranks() != header.ranks {
                    return Err(Error::format("HOLRR", "header ranks disagree with the core shape"));
                }
                Ok(Model::Holrr(HolrrModel::new(factors, header.gamma, header.warnings)?))
            }
            Kind::KernelHolrr => {
                let kernel = header
                    .kernel
                    .ok_or_else(|| Error::format("HOLRR", "kernel model without a kernel"))?;
                let [coeff, inputs]: [DenseTensor; 2] = blocks
                    .try_into()
                    .map_err(|_| Error::format("HOLRR", "kernel model needs exactly two blocks"))?;
                let inputs = matrix(inputs, "train_inputs")?;
                let m = KernelHolrrModel::new(coeff, inputs, kernel, header.gamma, header.ranks, header.warnings)
                    .map_err(|e| Error::format("HOLRR", e.to_string()))?;
                Ok(Model::Kernel(m))
            }
        }
    }

    /// Writes the model atomically: either the complete file appears at
    /// `path` or nothing changes.
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::problem;
    use super::super::{holrr_fit, kholrr_fit, RegressionProblem};
    use super::*;

    fn bits(t: &DenseTensor) -> Vec<u64> {
        t.data().iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn holrr_round_trip_is_bit_exact() {
        let (x, y, _) = problem(1, 9, 4, &[3, 2], &[2, 2, 2], 0.1);
        let m: Model = holrr_fit(&RegressionProblem::new(x.clone(), y, 0.1 + 1e-17, vec![2, 5, 2]).unwrap())
            .unwrap()
            .into();
        assert!(!m.warnings().is_empty());
        let bytes = m.to_bytes().unwrap();
        assert!(bytes.starts_with(b"HOLRR 1\n{"));
        let back = Model::read_from(&bytes[..]).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(bits(&back.predict_batch(&x).unwrap()), bits(&m.predict_batch(&x).unwrap()));
    }

    #[test]
    fn kernel_round_trip_is_bit_exact() {
        let (x, y, _) = problem(2, 8, 3, &[2, 2], &[2, 2, 2], 0.1);
        let k = KernelSpec::Rbf { sigma: 0.3 };
        let m: Model = kholrr_fit(k, &x, &y, 1e-3, &[3, 2, 2]).unwrap().into();
        let bytes = m.to_bytes().unwrap();
        let back = Model::read_from(&bytes[..]).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_corrupt_files() {
        let (x, y, _) = problem(3, 6, 2, &[2], &[1, 1], 0.0);
        let m: Model = holrr_fit(&RegressionProblem::new(x, y, 0.1, vec![1, 1]).unwrap()).unwrap().into();
        let bytes = m.to_bytes().unwrap();
        assert!(Model::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Model::read_from(&extra[..]).is_err());
        assert!(Model::read_from(&b"HOLRR 2\n{}\n"[..]).is_err());
        assert!(Model::read_from(&b"HOLRR 1\nnot json\n"[..]).is_err());
    }

    #[test]
    fn save_and_load() {
        let (x, y, _) = problem(4, 6, 2, &[2], &[1, 1], 0.0);
        let m: Model = holrr_fit(&RegressionProblem::new(x, y, 0.1, vec![1, 1]).unwrap()).unwrap().into();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.holrr");
        m.save(&p).unwrap();
        assert_eq!(Model::load(&p).unwrap(), m);
    }
}
