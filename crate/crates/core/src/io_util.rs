//! Shared helpers for the binary file formats.

use std::io::{ErrorKind, Read};

use crate::error::{Error, FormatError, Result};

/// Fills `buf` completely, reporting a [`FormatError::Truncated`] with the
/// number of bytes actually available when the stream ends early.
pub(crate) fn read_exact_counted<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    let mut got = 0;
    while got < buf.len() {
        match input.read(&mut buf[got..]) {
            Ok(0) => {
                return Err(FormatError::Truncated {
                    what: what.to_string(),
                    expected: buf.len(),
                    got,
                }
                .into())
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::io(what, e)),
        }
    }
    Ok(())
}

pub(crate) fn check_magic(found: &[u8], expected: &[u8]) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(expected).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        }
        .into())
    }
}

/// Reads a `u32` little-endian length-prefixed JSON header.
pub(crate) fn read_json_header<R: Read, T: serde::de::DeserializeOwned>(input: &mut R, what: &str) -> Result<T> {
    let mut len = [0u8; 4];
    read_exact_counted(input, &mut len, what)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > 64 << 20 {
        return Err(FormatError::Header(format!("{what}: implausible header length {len}")).into());
    }
    let mut json = vec![0u8; len];
    read_exact_counted(input, &mut json, what)?;
    serde_json::from_slice(&json).map_err(|e| FormatError::Header(format!("{what}: {e}")).into())
}

pub(crate) fn json_header_bytes<T: serde::Serialize>(header: &T) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(4 + json.len());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out
}
