//! Binary checkpoint: magic line, JSON manifest line, then per tensor a name
//! line, a `rows cols` line and `rows*cols` little-endian f32 values.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffmath::{Matrix, Parameterized};

use super::params::{ModelParams, ModelSpec};
use super::ModelError;

pub const CHECKPOINT_MAGIC: &str = "mixhash-ckpt v1";

pub fn write_checkpoint(out: &mut impl Write, params: &ModelParams<f32>) -> std::io::Result<()> {
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    serde_json::to_writer(&mut *out, &params.spec)?;
    writeln!(out)?;
    for p in params.params() {
        writeln!(out, "{}", p.name)?;
        writeln!(out, "{} {}", p.value.rows(), p.value.cols())?;
        for v in p.value.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ModelParams<f32>) -> Result<(), ModelError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, params).expect("writing to memory");
    fs::write(path, buf).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams<f32>, ModelError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_checkpoint(&bytes)
}

struct Reader<'a> {
    rest: &'a [u8],
}

impl<'a> Reader<'a> {
    fn line(&mut self, what: &str) -> Result<&'a str, ModelError> {
        let end = self
            .rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad(format!("truncated before {what}")))?;
        let (line, rest) = self.rest.split_at(end);
        self.rest = &rest[1..];
        std::str::from_utf8(line).map_err(|_| bad(format!("{what} is not UTF-8")))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ModelError> {
        if self.rest.len() < n {
            return Err(bad(format!("truncated inside {what}")));
        }
        let (head, rest) = self.rest.split_at(n);
        self.rest = rest;
        Ok(head)
    }
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<ModelParams<f32>, ModelError> {
    let mut r = Reader { rest: bytes };
    if r.line("header")? != CHECKPOINT_MAGIC {
        return Err(bad(format!("missing `{CHECKPOINT_MAGIC}` header")));
    }
    let spec: ModelSpec = serde_json::from_str(r.line("manifest")?).map_err(|e| bad(format!("manifest: {e}")))?;
    spec.validate()?;
    let mut tensors = Vec::new();
    for (name, (rows, cols)) in spec.layout() {
        let got = r.line("tensor name")?;
        if got != name {
            return Err(bad(format!("expected tensor `{name}`, found `{got}`")));
        }
        let dims = r.line("tensor dims")?;
        if dims != format!("{rows} {cols}") {
            return Err(bad(format!("tensor `{name}` should be {rows}x{cols}, header says `{dims}`")));
        }
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| bad(format!("tensor `{name}` is too large")))?;
        let raw = r.take(len, &name)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(bad(format!("tensor `{name}` has non-finite values")));
        }
        tensors.push(Matrix::from_vec(rows, cols, data)?);
    }
    if !r.rest.is_empty() {
        return Err(bad(format!("{} trailing bytes", r.rest.len())));
    }
    // Every tensor is present, so building the skeleton allocates no more
    // than the file itself holds.
    let mut params = ModelParams::<f32>::init(spec, &mut ChaCha8Rng::seed_from_u64(0))?;
    for (p, t) in params.params_mut().into_iter().zip(tensors) {
        p.value = t;
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::params::tests::spec;
    use crate::models::{ModelKind, NoiseSource};

    fn bytes(kind: ModelKind) -> (ModelParams<f32>, Vec<u8>) {
        let mut s = spec(kind);
        s.noise_source = NoiseSource::Component;
        s.label_names = if kind.is_supervised() { vec!["x".into(), "y".into()] } else { vec![] };
        let p = ModelParams::init(s, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &p).unwrap();
        (p, buf)
    }

    #[test]
    fn round_trip_every_kind() {
        for kind in [ModelKind::Gmsh, ModelKind::Bmsh, ModelKind::GmshS, ModelKind::BmshS] {
            let (p, buf) = bytes(kind);
            assert!(buf.starts_with(b"mixhash-ckpt v1\n{"));
            assert_eq!(parse_checkpoint(&buf).unwrap(), p);
        }
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let (_, buf) = bytes(ModelKind::Gmsh);
        assert!(parse_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(parse_checkpoint(&extra).is_err());
        assert!(parse_checkpoint(b"mixhash-ckpt v2\n{}\n").is_err());
        let mut nan = buf.clone();
        let n = nan.len();
        nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(parse_checkpoint(&nan).is_err());
    }

    #[test]
    fn huge_declared_vocab_fails_without_allocating() {
        let text = format!(
            "{CHECKPOINT_MAGIC}\n{}\nencoder.layer1.weight\n{} 500\n",
            r#"{"kind":"gmsh","bits":8,"components":2,"vocab_size":1000000000000,"num_labels":0,"alpha":1.0,"hidden":500}"#,
            1_000_000_000_000u64
        );
        assert!(parse_checkpoint(text.as_bytes()).is_err());
    }
}
