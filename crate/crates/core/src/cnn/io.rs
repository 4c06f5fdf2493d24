//! Model files.
//!
//! ```text
//! b"QGCNN1"  u32 LE header length  JSON header  f64 LE tensors
//! ```
//!
//! The header carries the architecture and the tensor list; tensors follow
//! in that order, then the Adam moments (all `m`, then all `v`) when the
//! header records an optimizer step count.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cnn::{AdamState, ArchSpec, CnnModel};
use crate::error::{Error, FormatError, Result};
use crate::io_util::{check_magic, json_header_bytes, read_exact_counted, read_json_header};

pub const MODEL_MAGIC: &[u8; 6] = b"QGCNN1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    arch: ArchSpec,
    tensors: Vec<TensorEntry>,
    optimizer_steps: Option<u64>,
}

fn push_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode_model(model: &CnnModel, opt: Option<&AdamState>) -> Vec<u8> {
    let header = ModelHeader {
        arch: model.arch.clone(),
        tensors: model
            .arch
            .tensor_shapes()
            .into_iter()
            .map(|(name, shape)| TensorEntry { name, shape })
            .collect(),
        optimizer_steps: opt.map(|o| o.t),
    };
    let mut out = MODEL_MAGIC.to_vec();
    out.extend(json_header_bytes(&header));
    for p in &model.params {
        push_f64s(&mut out, p);
    }
    if let Some(o) = opt {
        for t in o.m.iter().chain(&o.v) {
            push_f64s(&mut out, t);
        }
    }
    out
}

fn read_tensor<R: Read>(input: &mut R, len: usize, what: &str) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; len * 8];
    read_exact_counted(input, &mut buf, what)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_model<R: Read>(mut input: R) -> Result<(CnnModel, Option<AdamState>)> {
    let mut magic = [0u8; 6];
    read_exact_counted(&mut input, &mut magic, "model magic")?;
    check_magic(&magic, MODEL_MAGIC)?;
    let header: ModelHeader = read_json_header(&mut input, "model header")?;
    header
        .arch
        .validate()
        .map_err(|e| FormatError::ArchitectureMismatch(e.to_string()))?;
    let expected = header.arch.tensor_shapes();
    if expected.len() != header.tensors.len() {
        return Err(FormatError::ArchitectureMismatch(format!(
            "architecture has {} tensors, file declares {}",
            expected.len(),
            header.tensors.len()
        ))
        .into());
    }
    for ((name, shape), entry) in expected.iter().zip(&header.tensors) {
        if *name != entry.name || *shape != entry.shape {
            return Err(FormatError::ArchitectureMismatch(format!(
                "architecture expects {name} {shape:?}, file declares {} {:?}",
                entry.name, entry.shape
            ))
            .into());
        }
    }
    let lens: Vec<usize> = expected.iter().map(|(_, s)| s.iter().product()).collect();
    let mut params = Vec::with_capacity(lens.len());
    for ((name, _), &len) in expected.iter().zip(&lens) {
        params.push(read_tensor(&mut input, len, name)?);
    }
    let opt = match header.optimizer_steps {
        None => None,
        Some(t) => {
            let mut m = Vec::with_capacity(lens.len());
            let mut v = Vec::with_capacity(lens.len());
            for ((name, _), &len) in expected.iter().zip(&lens) {
                m.push(read_tensor(&mut input, len, &format!("{name} first moment"))?);
            }
            for ((name, _), &len) in expected.iter().zip(&lens) {
                v.push(read_tensor(&mut input, len, &format!("{name} second moment"))?);
            }
            Some(AdamState { m, v, t })
        }
    };
    let mut rest = Vec::new();
    input
        .read_to_end(&mut rest)
        .map_err(|e| Error::io("model stream", e))?;
    if !rest.is_empty() {
        return Err(FormatError::TrailingBytes(rest.len()).into());
    }
    Ok((
        CnnModel {
            arch: header.arch,
            params,
        },
        opt,
    ))
}

pub fn decode_model(bytes: &[u8]) -> Result<(CnnModel, Option<AdamState>)> {
    read_model(bytes)
}

pub fn save_model(path: &Path, model: &CnnModel, opt: Option<&AdamState>) -> Result<()> {
    std::fs::write(path, encode_model(model, opt)).map_err(|e| Error::io(path.display(), e))
}

pub fn load_model(path: &Path) -> Result<(CnnModel, Option<AdamState>)> {
    let file = File::open(path).map_err(|e| Error::io(path.display(), e))?;
    read_model(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::Classifier;

    fn small() -> CnnModel {
        CnnModel::new(
            ArchSpec {
                input: [3, 16, 8],
                ..Default::default()
            },
            4,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = small();
        let mut opt = AdamState::new(&m);
        opt.t = 17;
        opt.m[0][3] = 1.5e-7;
        opt.v[2][1] = f64::MIN_POSITIVE;
        let bytes = encode_model(&m, Some(&opt));
        let (back, back_opt) = decode_model(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back_opt.unwrap(), opt);
        let x = vec![0.25; m.arch.input_len()];
        assert_eq!(m.predict(&x).unwrap(), back.predict(&x).unwrap());
        assert_eq!(encode_model(&back, Some(&opt)), bytes);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.qgcnn");
        save_model(&path, &m, None).unwrap();
        let (l, o) = load_model(&path).unwrap();
        assert_eq!(l, m);
        assert!(o.is_none());
    }

    fn with_header(bytes: &[u8], edit: impl FnOnce(&mut serde_json::Value)) -> Vec<u8> {
        let len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let mut header: serde_json::Value = serde_json::from_slice(&bytes[10..10 + len]).unwrap();
        edit(&mut header);
        let mut out = MODEL_MAGIC.to_vec();
        out.extend(json_header_bytes(&header));
        out.extend_from_slice(&bytes[10 + len..]);
        out
    }

    #[test]
    fn eleven_classes_against_ten_class_blob() {
        let bytes = encode_model(&small(), None);
        let bad = with_header(&bytes, |h| h["arch"]["classes"] = 11.into());
        assert!(matches!(
            decode_model(&bad),
            Err(Error::Format(FormatError::ArchitectureMismatch(_)))
        ));
    }

    #[test]
    fn corruption_is_typed() {
        let bytes = encode_model(&small(), None);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad), Err(Error::Format(FormatError::BadMagic { .. }))));
        for cut in [3, 8, 40, bytes.len() - 1] {
            assert!(matches!(
                decode_model(&bytes[..cut]),
                Err(Error::Format(FormatError::Truncated { .. } | FormatError::Header(_)))
            ));
        }
        assert!(matches!(
            decode_model(&bytes[..bytes.len() - 8]),
            Err(Error::Format(FormatError::Truncated { .. }))
        ));
        let mut extra = bytes.clone();
        extra.extend([0u8; 8]);
        assert!(matches!(decode_model(&extra), Err(Error::Format(FormatError::TrailingBytes(8)))));
    }
}
