//! Plain-text parameter checkpoints.
//!
//! ```text
//! hessquad-net v1 widths=2,20,20,20,1
//! <parameter 0>
//! <parameter 1>
//! ...
//! ```
//!
//! Parameters are layer-major (row-major weights, then biases), one per line
//! in Rust's shortest round-trip float format, so a save/load cycle is exact.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use super::{DenseNet, NetShape, NnError};

pub const CHECKPOINT_MAGIC: &str = "hessquad-net v1";

impl DenseNet {
    pub fn to_checkpoint_string(&self) -> String {
        let widths: Vec<String> = self.shape().widths().iter().map(|w| w.to_string()).collect();
        let mut out = format!("{CHECKPOINT_MAGIC} widths={}\n", widths.join(","));
        for p in self.params() {
            writeln!(out, "{p:?}").expect("write to string");
        }
        out
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        w.write_all(self.to_checkpoint_string().as_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        std::fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Self, NnError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| NnError::Checkpoint("empty file".into()))??;
        let widths = header
            .strip_prefix(CHECKPOINT_MAGIC)
            .and_then(|rest| rest.trim().strip_prefix("widths="))
            .ok_or_else(|| NnError::Checkpoint(format!("bad header {header:?}")))?;
        let widths = widths
            .split(',')
            .map(|w| w.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| NnError::Checkpoint(format!("bad widths: {e}")))?;
        if widths.len() < 3 || widths[widths.len() - 1] != 1 {
            return Err(NnError::Checkpoint("widths must be d_in,hidden...,1".into()));
        }
        let shape = NetShape::new(widths[0], widths[1..widths.len() - 1].to_vec())?;
        let mut params = Vec::with_capacity(shape.param_count());
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|e| NnError::Checkpoint(format!("parameter {i}: {e}")))?;
            params.push(v);
        }
        DenseNet::from_params(shape, params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        let file = std::fs::File::open(path)?;
        Self::read_checkpoint(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let net = DenseNet::init(NetShape::new(2, vec![5, 3]).unwrap(), 42);
        let text = net.to_checkpoint_string();
        assert!(text.starts_with("hessquad-net v1 widths=2,5,3,1\n"));
        let back = DenseNet::read_checkpoint(text.as_bytes()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn rejects_malformed_checkpoints() {
        assert!(DenseNet::read_checkpoint("".as_bytes()).is_err());
        assert!(DenseNet::read_checkpoint("other v1 widths=2,3,1\n".as_bytes()).is_err());
        assert!(DenseNet::read_checkpoint("hessquad-net v1 widths=2,3,1\n0.5\n".as_bytes()).is_err());
        assert!(DenseNet::read_checkpoint("hessquad-net v1 widths=2,3,2\n".as_bytes()).is_err());
    }
}
