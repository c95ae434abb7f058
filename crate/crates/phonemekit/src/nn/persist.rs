//! Model file format: magic "PHNM", version, length-prefixed JSON
//! architecture descriptor, then per-layer little-endian f64 weight
//! blobs (weights then bias, in declaration order). Bit-exact.

use super::{Layer, LayerSpec, Model};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PHNM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Descriptor {
    input_shape: [usize; 3],
    class_labels: Vec<String>,
    layers: Vec<LayerSpec>,
}

fn write_f64s(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, values: &mut [f64]) -> Result<()> {
    let mut buf = [0u8; 8];
    for v in values {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(())
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let descriptor = Descriptor {
        input_shape: model.input_shape,
        class_labels: model.class_labels.clone(),
        layers: model.to_specs(),
    };
    let json = serde_json::to_vec(&descriptor)
        .map_err(|e| Error::Format(format!("descriptor encoding: {e}")))?;
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for layer in &model.layers {
        match layer {
            Layer::Conv2D(c) => {
                write_f64s(&mut w, &c.weights)?;
                write_f64s(&mut w, &c.bias)?;
            }
            Layer::Dense(d) => {
                write_f64s(&mut w, &d.weights)?;
                write_f64s(&mut w, &d.bias)?;
            }
            _ => {}
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, not a model file".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion {
            expected: MODEL_VERSION,
            found: version,
        });
    }
    r.read_exact(&mut u32buf)?;
    let json_len = u32::from_le_bytes(u32buf) as usize;
    let mut json = vec![0u8; json_len];
    r.read_exact(&mut json)?;
    let descriptor: Descriptor = serde_json::from_slice(&json)
        .map_err(|e| Error::Format(format!("descriptor decoding: {e}")))?;
    let mut model = Model::new(
        descriptor.input_shape,
        &descriptor.layers,
        descriptor.class_labels,
    )?;
    for layer in &mut model.layers {
        match layer {
            Layer::Conv2D(c) => {
                read_f64s(&mut r, &mut c.weights)?;
                read_f64s(&mut r, &mut c.bias)?;
            }
            Layer::Dense(d) => {
                read_f64s(&mut r, &mut d.weights)?;
                read_f64s(&mut r, &mut d.bias)?;
            }
            _ => {}
        }
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after weight blobs".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::super::{predict, tiny_specs, Tensor};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn sample_model() -> Model {
        let labels = (0..5).map(|i| format!("c{i}")).collect();
        let mut m = Model::new([12, 12, 1], &tiny_specs(5), labels).unwrap();
        m.initialize(&mut ChaCha20Rng::seed_from_u64(21));
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.phnm");
        let m = sample_model();
        save_model(&m, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, m);
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let x = Tensor::from_vec(
            &[2, 12, 12, 1],
            (0..288).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        assert_eq!(predict(&m, &x).unwrap(), predict(&loaded, &x).unwrap());
    }

    #[test]
    fn corrupted_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.phnm");
        save_model(&sample_model(), &path).unwrap();
        let mut raw = std::fs::read(&path).unwrap();
        raw[0] = b'X';
        std::fs::write(&path, raw).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.phnm");
        save_model(&sample_model(), &path).unwrap();
        let mut raw = std::fs::read(&path).unwrap();
        raw[4..8].copy_from_slice(&7u32.to_le_bytes());
        std::fs::write(&path, raw).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(Error::UnsupportedVersion {
                expected: MODEL_VERSION,
                found: 7
            })
        ));
    }

    #[test]
    fn truncated_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.phnm");
        save_model(&sample_model(), &path).unwrap();
        let raw = std::fs::read(&path).unwrap();
        std::fs::write(&path, &raw[..raw.len() - 11]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Io(_))));
    }
}
