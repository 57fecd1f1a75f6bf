//! Checkpoint file layout:
//!
//! ```text
//! {"arch":…,"hyper":…,"norm_mode":…,"seed":…,"step":…}\n   one line of compact JSON
//! for each weight, in declaration order:
//!     rows: u64 LE, cols: u64 LE, rows*cols f64 LE (row-major)
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NormMode;
use crate::net::{ArchSpec, Hyper, ModelState};
use crate::tensor::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub arch: ArchSpec,
    pub step: u64,
    pub hyper: Hyper,
    /// Normalization the model was trained under.
    pub norm_mode: NormMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub weights: Vec<DenseMatrix>,
}

impl Checkpoint {
    pub fn new(arch: &ArchSpec, state: &ModelState, norm_mode: NormMode, seed: u64) -> Self {
        Self {
            header: CheckpointHeader {
                arch: arch.clone(),
                step: state.step,
                hyper: state.hyper,
                norm_mode,
                seed,
            },
            weights: state.weights.clone(),
        }
    }

    /// Rebuilds a model state (optimizer moments reset) from the stored weights.
    pub fn into_model(self) -> Result<(ArchSpec, ModelState)> {
        let mut state = ModelState::from_weights(&self.header.arch, self.header.hyper, self.weights)?;
        state.step = self.header.step;
        Ok((self.header.arch, state))
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        for w in &self.weights {
            out.write_all(&(w.rows() as u64).to_le_bytes())?;
            out.write_all(&(w.cols() as u64).to_le_bytes())?;
            for v in w.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from(input: impl Read) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut line = Vec::new();
        reader.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(Error::Checkpoint("missing header line".into()));
        }
        let header: CheckpointHeader = serde_json::from_slice(&line[..line.len() - 1])?;
        header.arch.validate()?;
        let shapes = header.arch.weight_shapes();
        let mut weights = Vec::with_capacity(shapes.len());
        for (i, &(r, c)) in shapes.iter().enumerate() {
            let rows = read_u64(&mut reader)? as usize;
            let cols = read_u64(&mut reader)? as usize;
            if (rows, cols) != (r, c) {
                return Err(Error::Checkpoint(format!(
                    "blob {i} is {rows}x{cols}, architecture expects {r}x{c}"
                )));
            }
            let mut data = vec![0.0; rows * cols];
            let mut buf = [0u8; 8];
            for v in &mut data {
                reader
                    .read_exact(&mut buf)
                    .map_err(|_| Error::Checkpoint(format!("blob {i} truncated")))?;
                *v = f64::from_le_bytes(buf);
            }
            weights.push(DenseMatrix::from_vec(rows, cols, data)?);
        }
        let mut rest = [0u8; 1];
        if reader.read(&mut rest)? != 0 {
            return Err(Error::Checkpoint("trailing bytes after last blob".into()));
        }
        Ok(Self { header, weights })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(fs::File::open(path)?)
    }
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Checkpoint("truncated blob header".into()))?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    fn sample() -> Checkpoint {
        let arch = ArchSpec::model_scaled(1, 3, 4, 256).unwrap();
        let mut state = ModelState::glorot(&arch, Hyper::default(), &mut Rng::new(4)).unwrap();
        state.step = 17;
        Checkpoint::new(&arch, &state, NormMode::Sym, 99)
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let bytes = ck.to_bytes();
        assert_eq!(Checkpoint::read_from(bytes.as_slice()).unwrap(), ck);
        let (arch, state) = Checkpoint::read_from(bytes.as_slice()).unwrap().into_model().unwrap();
        assert_eq!(arch, ck.header.arch);
        assert_eq!(state.weights, ck.weights);
        assert_eq!(state.step, 17);
    }

    #[test]
    fn layout_is_header_line_then_blobs() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        let keys: Vec<&str> = header.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, vec!["arch", "hyper", "norm_mode", "seed", "step"]);
        let first = &ck.weights[0];
        let blob = &bytes[nl + 1..];
        assert_eq!(u64::from_le_bytes(blob[..8].try_into().unwrap()), first.rows() as u64);
        assert_eq!(u64::from_le_bytes(blob[8..16].try_into().unwrap()), first.cols() as u64);
        assert_eq!(f64::from_le_bytes(blob[16..24].try_into().unwrap()), first.data()[0]);
        let floats: usize = ck.weights.iter().map(|w| w.data().len()).sum();
        assert_eq!(blob.len(), 16 * ck.weights.len() + 8 * floats);
    }

    #[test]
    fn truncated_and_padded_files_fail() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::read_from(&bytes[..bytes.len() - 3]).is_err());
        let mut padded = bytes.clone();
        padded.push(0);
        assert!(Checkpoint::read_from(padded.as_slice()).is_err());
    }
}
