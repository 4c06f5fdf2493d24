//! Raw frame sequence files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0..8    magic  b"QGRAWFRM"
//! 8..12   u32    format version (1)
//! 12..16  u32    metadata length M
//! 16..    M bytes of JSON metadata (RawMeta)
//! ...     frames: binary32 (re, im) pairs in (channel, chirp, sample) C-order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::RadarConfig;
use crate::error::{Error, FormatError, Result};
use crate::io_util::{check_magic, read_exact_counted};
use crate::sim::synth::FrameCube;

pub const RAW_MAGIC: &[u8; 8] = b"QGRAWFRM";
pub const RAW_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMeta {
    pub config: RadarConfig,
    pub config_hash: String,
    /// (channels, chirps per TX, samples per chirp).
    pub shape: [usize; 3],
    pub frame_indices: Vec<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub label: Option<String>,
}

impl RawMeta {
    pub fn new(cfg: &RadarConfig, frame_indices: Vec<u64>) -> Self {
        Self {
            config: cfg.clone(),
            config_hash: cfg.config_hash(),
            shape: [cfg.n_virtual(), cfg.chirps_per_tx(), cfg.samples_per_chirp],
            frame_indices,
            seed: None,
            label: None,
        }
    }

    fn frame_bytes(&self) -> usize {
        self.shape.iter().product::<usize>() * 8
    }
}

/// Streaming writer; the frame count is fixed by the metadata.
pub struct RawFrameWriter<W: Write> {
    out: W,
    meta: RawMeta,
    written: usize,
    buf: Vec<u8>,
}

impl<W: Write> RawFrameWriter<W> {
    pub fn new(mut out: W, meta: RawMeta) -> Result<Self> {
        let json = serde_json::to_vec(&meta).map_err(|e| Error::invalid(e.to_string()))?;
        let mut header = Vec::with_capacity(16 + json.len());
        header.extend_from_slice(RAW_MAGIC);
        header.extend_from_slice(&RAW_VERSION.to_le_bytes());
        header.extend_from_slice(&(json.len() as u32).to_le_bytes());
        header.extend_from_slice(&json);
        out.write_all(&header).map_err(|e| Error::io("raw frame stream", e))?;
        Ok(Self {
            out,
            meta,
            written: 0,
            buf: Vec::new(),
        })
    }

    pub fn write_frame(&mut self, cube: &FrameCube) -> Result<()> {
        if cube.shape() != self.meta.shape {
            return Err(Error::invalid(format!(
                "frame shape {:?} differs from file shape {:?}",
                cube.shape(),
                self.meta.shape
            )));
        }
        if self.written >= self.meta.frame_indices.len() {
            return Err(Error::invalid("more frames written than declared"));
        }
        self.buf.clear();
        for z in cube.data() {
            self.buf.extend_from_slice(&(z.re as f32).to_le_bytes());
            self.buf.extend_from_slice(&(z.im as f32).to_le_bytes());
        }
        self.out.write_all(&self.buf).map_err(|e| Error::io("raw frame stream", e))?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.written != self.meta.frame_indices.len() {
            return Err(Error::invalid(format!(
                "declared {} frames, wrote {}",
                self.meta.frame_indices.len(),
                self.written
            )));
        }
        self.out.flush().map_err(|e| Error::io("raw frame stream", e))?;
        Ok(self.out)
    }
}

/// Streaming reader yielding one [`FrameCube`] at a time.
pub struct RawFrameReader<R: Read> {
    input: R,
    meta: RawMeta,
    next: usize,
    buf: Vec<u8>,
}

impl<R: Read> RawFrameReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut head = [0u8; 16];
        read_exact_counted(&mut input, &mut head, "raw frame header")?;
        check_magic(&head[..8], RAW_MAGIC)?;
        let version = u32::from_le_bytes(head[8..12].try_into().unwrap());
        if version != RAW_VERSION {
            return Err(FormatError::UnsupportedVersion(version).into());
        }
        let len = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
        let mut json = vec![0u8; len];
        read_exact_counted(&mut input, &mut json, "raw frame metadata")?;
        let meta: RawMeta =
            serde_json::from_slice(&json).map_err(|e| FormatError::Header(e.to_string()))?;
        let expected = [
            meta.config.n_virtual(),
            meta.config.chirps_per_tx(),
            meta.config.samples_per_chirp,
        ];
        if meta.shape != expected {
            return Err(FormatError::Header(format!(
                "shape {:?} inconsistent with embedded config {:?}",
                meta.shape, expected
            ))
            .into());
        }
        Ok(Self {
            input,
            meta,
            next: 0,
            buf: Vec::new(),
        })
    }

    pub fn meta(&self) -> &RawMeta {
        &self.meta
    }

    pub fn next_frame(&mut self) -> Result<Option<FrameCube>> {
        if self.next >= self.meta.frame_indices.len() {
            return Ok(None);
        }
        self.buf.resize(self.meta.frame_bytes(), 0);
        read_exact_counted(&mut self.input, &mut self.buf, &format!("frame {}", self.next))?;
        let data = self
            .buf
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes(c[..4].try_into().unwrap());
                let im = f32::from_le_bytes(c[4..].try_into().unwrap());
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        let index = self.meta.frame_indices[self.next];
        self.next += 1;
        let cube = FrameCube::from_parts(index, self.meta.config_hash.clone(), self.meta.shape, data)?;
        Ok(Some(cube))
    }

    /// Errors if bytes remain after the declared frames.
    pub fn expect_end(&mut self) -> Result<()> {
        let mut rest = Vec::new();
        self.input
            .read_to_end(&mut rest)
            .map_err(|e| Error::io("raw frame stream", e))?;
        if rest.is_empty() {
            Ok(())
        } else {
            Err(FormatError::TrailingBytes(rest.len()).into())
        }
    }
}

impl<R: Read> Iterator for RawFrameReader<R> {
    type Item = Result<FrameCube>;
    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

pub fn encode_raw_frames(meta: RawMeta, frames: &[FrameCube]) -> Result<Vec<u8>> {
    let mut w = RawFrameWriter::new(Vec::new(), meta)?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.finish()
}

pub fn decode_raw_frames(bytes: &[u8]) -> Result<(RawMeta, Vec<FrameCube>)> {
    let mut r = RawFrameReader::new(bytes)?;
    let frames = r.by_ref().collect::<Result<Vec<_>>>()?;
    r.expect_end()?;
    Ok((r.meta().clone(), frames))
}

pub fn write_raw_file(path: &Path, meta: RawMeta, frames: &[FrameCube]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display(), e))?;
    let mut w = RawFrameWriter::new(BufWriter::new(file), meta)?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.finish()?;
    Ok(())
}

pub fn open_raw_file(path: &Path) -> Result<RawFrameReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path.display(), e))?;
    RawFrameReader::new(BufReader::new(file))
}

pub fn read_raw_file(path: &Path) -> Result<(RawMeta, Vec<FrameCube>)> {
    let mut r = open_raw_file(path)?;
    let frames = r.by_ref().collect::<Result<Vec<_>>>()?;
    r.expect_end()?;
    Ok((r.meta().clone(), frames))
}
