//! DTEN v1: one ASCII header line `DTEN 1 <p> <d_1> ... <d_p>` terminated by
//! `\n`, followed by `∏ d_k` little-endian IEEE-754 doubles in storage order
//! (first index fastest). Order-2 tensors can also be exchanged as headerless
//! CSV, one matrix row per line.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{DenseTensor, Matrix};

pub const DTEN_MAGIC: &str = "DTEN";
const DTEN_VERSION: u32 = 1;
const MAX_HEADER: usize = 4096;

pub fn write_dten<W: Write>(mut w: W, t: &DenseTensor) -> Result<()> {
    let mut header = format!("{DTEN_MAGIC} {DTEN_VERSION} {}", t.order());
    for d in t.shape() {
        header.push_str(&format!(" {d}"));
    }
    header.push('\n');
    w.write_all(header.as_bytes())?;
    let mut buf = Vec::with_capacity(t.len() * 8);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads one DTEN block; the reader is left positioned just past it so that
/// consecutive blocks can be read from one stream.
pub fn read_dten<R: BufRead>(mut r: R) -> Result<DenseTensor> {
    let mut line = Vec::new();
    (&mut r).take(MAX_HEADER as u64).read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::format("DTEN", "missing or overlong header line"));
    }
    let header = std::str::from_utf8(&line[..line.len() - 1])
        .map_err(|_| Error::format("DTEN", "header is not ASCII"))?;
    let mut fields = header.split_ascii_whitespace();
    if fields.next() != Some(DTEN_MAGIC) {
        return Err(Error::format("DTEN", "bad magic"));
    }
    let mut num = |what: &str| -> Result<usize> {
        fields
            .next()
            .ok_or_else(|| Error::format("DTEN", format!("header ends before {what}")))?
            .parse::<usize>()
            .map_err(|e| Error::format("DTEN", format!("{what}: {e}")))
    };
    let version = num("version")?;
    if version != DTEN_VERSION as usize {
        return Err(Error::format("DTEN", format!("unsupported version {version}")));
    }
    let order = num("order")?;
    let shape = (0..order)
        .map(|k| num(&format!("dimension {k}")))
        .collect::<Result<Vec<_>>>()?;
    if fields.next().is_some() {
        return Err(Error::format("DTEN", "trailing fields in header"));
    }
    let len: usize = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::format("DTEN", "shape overflows"))?;
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::format("DTEN", format!("truncated payload: {e}")))?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseTensor::new(shape, data).map_err(|e| Error::format("DTEN", e.to_string()))
}

pub fn write_csv_matrix<W: Write>(w: W, m: &Matrix) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..m.nrows() {
        out.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv_matrix<R: Read>(r: R) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::format("CSV", format!("row {}: {s:?}: {e}", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::format(
                    "CSV",
                    format!("row {} has {} fields, expected {}", line + 1, row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(Error::format("CSV", "empty matrix"));
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Loads a tensor from `path`: CSV (order 2) when the extension is `.csv`,
/// DTEN otherwise.
pub fn load_tensor(path: &Path) -> Result<DenseTensor> {
    let f = std::fs::File::open(path)?;
    if is_csv(path) {
        Ok(DenseTensor::from_matrix(&read_csv_matrix(f)?))
    } else {
        read_dten(std::io::BufReader::new(f))
    }
}

/// Encodes a tensor for `path` using the same extension rule as [`load_tensor`].
pub fn encode_tensor(path: &Path, t: &DenseTensor) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if is_csv(path) {
        if t.order() != 2 {
            return Err(Error::arg(format!(
                "CSV holds order-2 tensors only; shape is {:?}",
                t.shape()
            )));
        }
        write_csv_matrix(&mut buf, &t.matricize(0)?)?;
    } else {
        write_dten(&mut buf, t)?;
    }
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dten_header_layout() {
        let t = DenseTensor::new(vec![2, 1, 3], (0..6).map(f64::from).collect()).unwrap();
        let mut buf = Vec::new();
        write_dten(&mut buf, &t).unwrap();
        let header = b"DTEN 1 3 2 1 3\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(buf.len(), header.len() + 48);
        assert_eq!(&buf[header.len() + 8..header.len() + 16], &1.0f64.to_le_bytes());
    }

    #[test]
    fn dten_blocks_read_back_to_back() {
        let a = DenseTensor::new(vec![2], vec![1.5, -2.0]).unwrap();
        let b = DenseTensor::new(vec![1, 2], vec![f64::MIN_POSITIVE, 1e300]).unwrap();
        let mut buf = Vec::new();
        write_dten(&mut buf, &a).unwrap();
        write_dten(&mut buf, &b).unwrap();
        let mut cur = std::io::Cursor::new(buf);
        assert_eq!(read_dten(&mut cur).unwrap(), a);
        assert_eq!(read_dten(&mut cur).unwrap(), b);
    }

    #[test]
    fn dten_rejects_malformed_input() {
        for bad in [
            &b"DTEX 1 1 1\n\0\0\0\0\0\0\0\0"[..],
            b"DTEN 2 1 1\n\0\0\0\0\0\0\0\0",
            b"DTEN 1 2 1\n\0\0\0\0\0\0\0\0",
            b"DTEN 1 1 2\n\0\0\0\0\0\0\0\0",
            b"DTEN 1 1 0\n",
            b"DTEN 1 1 1",
        ] {
            assert!(read_dten(bad).is_err(), "{:?}", String::from_utf8_lossy(bad));
        }
    }

    #[test]
    fn csv_reads_rows() {
        let m = read_csv_matrix("1, 2,3\n4,5,6e-1\n".as_bytes()).unwrap();
        assert_eq!(m, Matrix::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 0.6]));
        assert!(read_csv_matrix("1,2\n3\n".as_bytes()).is_err());
        assert!(read_csv_matrix("1,x\n".as_bytes()).is_err());
        assert!(read_csv_matrix("".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn dten_round_trip_is_bit_exact(shape in prop::collection::vec(1usize..4, 1..4), seed in any::<u64>()) {
            let len: usize = shape.iter().product();
            let data: Vec<f64> = (0..len as u64).map(|i| f64::from_bits(seed.rotate_left(i as u32) ^ (i * 0x9E37))).map(|v| if v.is_nan() { 0.25 } else { v }).collect();
            let t = DenseTensor::new(shape, data).unwrap();
            let mut buf = Vec::new();
            write_dten(&mut buf, &t).unwrap();
            let back = read_dten(&buf[..]).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            prop_assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }

        #[test]
        fn csv_round_trip_is_exact(r in 1usize..5, c in 1usize..5, scale in -1e6f64..1e6) {
            let m = Matrix::from_fn(r, c, |i, j| scale / (1.0 + i as f64 + 7.0 * j as f64));
            let mut buf = Vec::new();
            write_csv_matrix(&mut buf, &m).unwrap();
            prop_assert_eq!(read_csv_matrix(&buf[..]).unwrap(), m);
        }
    }
}
