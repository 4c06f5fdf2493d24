//! Sample files.
//!
//! ```text
//! b"QGFW1"  u32 LE header length  JSON header  f32 LE tensor
//! ```
//!
//! The tensor is the normalized window in (channel, bin, frame) C-order.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::features::{AxisKind, FeatureWindow, WindowMeta};
use crate::io_util::{check_magic, json_header_bytes, read_exact_counted, read_json_header};
use crate::sim::GestureClass;

pub const SAMPLE_MAGIC: &[u8; 5] = b"QGFW1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleHeader {
    pub id: String,
    pub label: GestureClass,
    pub user: String,
    pub scene: String,
    /// Seed of the attempt that produced the window.
    pub seed: u64,
    pub channels: Vec<AxisKind>,
    pub shape: [usize; 3],
    pub meta: WindowMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub header: SampleHeader,
    pub window: FeatureWindow,
}

impl Sample {
    pub fn new(id: String, label: GestureClass, user: String, scene: String, seed: u64, window: FeatureWindow) -> Self {
        let header = SampleHeader {
            id,
            label,
            user,
            scene,
            seed,
            channels: window.channels.clone(),
            shape: window.shape(),
            meta: window.meta.clone(),
        };
        Self { header, window }
    }
}

pub fn encode_sample(sample: &Sample) -> Vec<u8> {
    let mut out = SAMPLE_MAGIC.to_vec();
    out.extend(json_header_bytes(&sample.header));
    out.reserve(sample.window.data.len() * 4);
    for v in &sample.window.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_sample<R: Read>(mut input: R) -> Result<Sample> {
    let mut magic = [0u8; 5];
    read_exact_counted(&mut input, &mut magic, "sample magic")?;
    check_magic(&magic, SAMPLE_MAGIC)?;
    let header: SampleHeader = read_json_header(&mut input, "sample header")?;
    let [c, b, f] = header.shape;
    if c != header.channels.len() || c * b * f == 0 {
        return Err(FormatError::Header(format!(
            "shape {:?} does not match {} channels",
            header.shape,
            header.channels.len()
        ))
        .into());
    }
    let mut buf = vec![0u8; c * b * f * 4];
    read_exact_counted(&mut input, &mut buf, "sample tensor")?;
    let mut rest = Vec::new();
    input
        .read_to_end(&mut rest)
        .map_err(|e| Error::io("sample stream", e))?;
    if !rest.is_empty() {
        return Err(FormatError::TrailingBytes(rest.len()).into());
    }
    let data = buf
        .chunks_exact(4)
        .map(|ch| f32::from_le_bytes(ch.try_into().unwrap()))
        .collect();
    let window = FeatureWindow::new(header.channels.clone(), b, f, data, header.meta.clone())
        .map_err(|e| FormatError::Header(e.to_string()))?;
    Ok(Sample { header, window })
}

pub fn decode_sample(bytes: &[u8]) -> Result<Sample> {
    read_sample(bytes)
}

pub fn save_sample(path: &Path, sample: &Sample) -> Result<()> {
    std::fs::write(path, encode_sample(sample)).map_err(|e| Error::io(path.display(), e))
}

pub fn load_sample(path: &Path) -> Result<Sample> {
    let file = File::open(path).map_err(|e| Error::io(path.display(), e))?;
    read_sample(BufReader::new(file))
}
