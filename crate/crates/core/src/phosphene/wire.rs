//! Binary frame encoding: a 16-byte little-endian header
//! (`version: u32`, `tick: u64`, `rows: u16`, `cols: u16`) followed by
//! `rows * cols` level bytes in row-major order.

use super::{PhospheneFrame, MAX_LEVEL};

pub const WIRE_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("frame shorter than header ({0} bytes)")]
    Truncated(usize),
    #[error("unsupported frame version {0}")]
    Version(u32),
    #[error("payload has {got} bytes, header declares {expected}")]
    Length { expected: usize, got: usize },
    #[error("level {level} at index {index} exceeds {max}", max = MAX_LEVEL)]
    Level { index: usize, level: u8 },
}

pub fn encode_frame(frame: &PhospheneFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + frame.levels.len());
    out.extend_from_slice(&WIRE_VERSION.to_le_bytes());
    out.extend_from_slice(&frame.tick.to_le_bytes());
    out.extend_from_slice(&frame.rows.to_le_bytes());
    out.extend_from_slice(&frame.cols.to_le_bytes());
    out.extend_from_slice(&frame.levels);
    out
}

pub fn decode_frame(bytes: &[u8]) -> Result<PhospheneFrame, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated(bytes.len()));
    }
    let version = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if version != WIRE_VERSION {
        return Err(WireError::Version(version));
    }
    let tick = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let rows = u16::from_le_bytes(bytes[12..14].try_into().unwrap());
    let cols = u16::from_le_bytes(bytes[14..16].try_into().unwrap());
    let levels = &bytes[HEADER_LEN..];
    let expected = rows as usize * cols as usize;
    if levels.len() != expected {
        return Err(WireError::Length {
            expected,
            got: levels.len(),
        });
    }
    if let Some((index, &level)) = levels.iter().enumerate().find(|(_, &l)| l > MAX_LEVEL) {
        return Err(WireError::Level { index, level });
    }
    Ok(PhospheneFrame {
        tick,
        rows,
        cols,
        levels: levels.to_vec(),
    })
}
