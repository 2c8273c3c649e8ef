//! Binary frames of the audio stream.
//!
//! Every WebSocket binary message is one frame: a fixed 32-byte
//! little-endian header followed by `channels * block_size` interleaved
//! `f32` samples.
//!
//! | offset | type  | field            |
//! |-------:|-------|------------------|
//! | 0      | [u8;4]| magic `MFAS`     |
//! | 4      | u16   | version (1)      |
//! | 6      | u16   | flags            |
//! | 8      | u64   | block index      |
//! | 16     | u64   | snapshot index   |
//! | 24     | u16   | channels         |
//! | 26     | u16   | reserved (0)     |
//! | 28     | u32   | block size       |
//!
//! Keepalive and gap frames carry no samples and have `block_size = 0`.

use bytes::{BufMut, Bytes, BytesMut};

pub const MAGIC: [u8; 4] = *b"MFAS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;

/// The block was rendered while a crossfade between two parameter snapshots was running.
pub const FLAG_CROSSFADE: u16 = 1 << 0;
/// Frames were dropped for this subscriber right before this one.
pub const FLAG_GAP: u16 = 1 << 1;
/// No audio; sent periodically while the transport is paused.
pub const FLAG_KEEPALIVE: u16 = 1 << 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub flags: u16,
    /// Running count of audio blocks emitted by the session.
    pub block_index: u64,
    /// Parameter snapshot in effect when the block was rendered.
    pub snapshot_index: u64,
    pub channels: u16,
    /// Sample frames in this message; the last block of a source may be short.
    pub block_size: u32,
}

impl FrameHeader {
    pub fn is_audio(&self) -> bool {
        self.flags & (FLAG_GAP | FLAG_KEEPALIVE) == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameError {
    TooShort(usize),
    BadMagic([u8; 4]),
    BadVersion(u16),
    Length { expected: usize, actual: usize },
}

impl std::fmt::Display for FrameError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FrameError::TooShort(n) => write!(f, "frame of {n} bytes is shorter than the header"),
            FrameError::BadMagic(m) => write!(f, "bad frame magic {m:?}"),
            FrameError::BadVersion(v) => write!(f, "unsupported frame version {v}"),
            FrameError::Length { expected, actual } => {
                write!(
                    f,
                    "frame payload is {actual} bytes, header implies {expected}"
                )
            }
        }
    }
}

impl std::error::Error for FrameError {}

pub fn encode(header: &FrameHeader, samples: &[f32]) -> Bytes {
    let mut b = BytesMut::with_capacity(HEADER_LEN + 4 * samples.len());
    b.put_slice(&MAGIC);
    b.put_u16_le(VERSION);
    b.put_u16_le(header.flags);
    b.put_u64_le(header.block_index);
    b.put_u64_le(header.snapshot_index);
    b.put_u16_le(header.channels);
    b.put_u16_le(0);
    b.put_u32_le(header.block_size);
    for s in samples {
        b.put_f32_le(*s);
    }
    b.freeze()
}

pub fn decode(bytes: &[u8]) -> Result<(FrameHeader, Vec<f32>), FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::TooShort(bytes.len()));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    let version = u16_at(4);
    if version != VERSION {
        return Err(FrameError::BadVersion(version));
    }
    let header = FrameHeader {
        flags: u16_at(6),
        block_index: u64_at(8),
        snapshot_index: u64_at(16),
        channels: u16_at(24),
        block_size: u32_at(28),
    };
    let expected = header.channels as usize * header.block_size as usize * 4;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(FrameError::Length {
            expected,
            actual: payload.len(),
        });
    }
    let samples = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, samples))
}
