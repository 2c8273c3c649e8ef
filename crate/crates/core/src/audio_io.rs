//! RIFF/WAVE reading and writing.
//!
//! Supports PCM 16/24-bit and IEEE float 32-bit, little-endian. Samples are
//! held as interleaved `f64`. Unknown chunks are skipped.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, thiserror::Error)]
pub enum WavError {
    #[error("not a RIFF file: chunk 'RIFF' missing (found {0:?})")]
    NotRiff([u8; 4]),
    #[error("RIFF form type is not 'WAVE' (found {0:?})")]
    NotWave([u8; 4]),
    #[error("required chunk '{0}' missing")]
    MissingChunk(&'static str),
    #[error("chunk '{chunk}' is malformed: {reason}")]
    Malformed { chunk: String, reason: String },
    #[error("chunk '{chunk}' is truncated: declared {declared} bytes, {available} available")]
    Truncated {
        chunk: String,
        declared: usize,
        available: usize,
    },
    #[error("unsupported encoding: format tag {format:#06x} with {bits} bits per sample")]
    Unsupported { format: u16, bits: u16 },
    #[error("invalid buffer: {0}")]
    InvalidBuffer(String),
    #[error("wav i/o: {0}")]
    Io(#[from] io::Error),
}

impl WavError {
    pub fn is_io(&self) -> bool {
        matches!(self, WavError::Io(_))
    }
}

/// Output encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    #[default]
    Pcm16,
    Pcm24,
    Float32,
}

impl SampleFormat {
    fn bits(self) -> u16 {
        match self {
            Self::Pcm16 => 16,
            Self::Pcm24 => 24,
            Self::Float32 => 32,
        }
    }
}

impl std::str::FromStr for SampleFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "16" | "pcm16" => Ok(Self::Pcm16),
            "24" | "pcm24" => Ok(Self::Pcm24),
            "32f" | "f32" | "float32" => Ok(Self::Float32),
            other => Err(format!(
                "unknown sample format '{other}' (expected 16, 24 or 32f)"
            )),
        }
    }
}

/// Interleaved floating-point audio.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    fs: f64,
    channels: usize,
    samples: Vec<f64>,
}

impl AudioBuffer {
    pub fn new(fs: f64, channels: usize, samples: Vec<f64>) -> Result<Self, WavError> {
        if channels == 0 {
            return Err(WavError::InvalidBuffer("channel count must be >= 1".into()));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(WavError::InvalidBuffer(format!(
                "sampling rate {fs} must be > 0"
            )));
        }
        if !samples.len().is_multiple_of(channels) {
            return Err(WavError::InvalidBuffer(format!(
                "{} samples do not divide into {channels} channels",
                samples.len()
            )));
        }
        Ok(Self {
            fs,
            channels,
            samples,
        })
    }

    pub fn mono(fs: f64, samples: Vec<f64>) -> Self {
        Self {
            fs,
            channels: 1,
            samples,
        }
    }

    /// Interleaves equally long channel buffers.
    pub fn from_planar(fs: f64, planes: &[Vec<f64>]) -> Self {
        let channels = planes.len().max(1);
        let frames = planes.iter().map(Vec::len).min().unwrap_or(0);
        let mut samples = Vec::with_capacity(frames * channels);
        for i in 0..frames {
            samples.extend(planes.iter().map(|p| p[i]));
        }
        Self {
            fs,
            channels,
            samples,
        }
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn channel(&self, index: usize) -> Vec<f64> {
        self.samples
            .iter()
            .skip(index)
            .step_by(self.channels)
            .copied()
            .collect()
    }
}

/// Averages all channels into one. Mono input passes through unchanged.
pub fn to_mono(buffer: &AudioBuffer) -> AudioBuffer {
    if buffer.channels == 1 {
        return buffer.clone();
    }
    let n = buffer.channels as f64;
    let samples = buffer
        .samples
        .chunks_exact(buffer.channels)
        .map(|frame| frame.iter().sum::<f64>() / n)
        .collect();
    AudioBuffer::mono(buffer.fs, samples)
}

fn quantize(x: f64, full_scale: f64, clipped: &mut usize) -> i32 {
    let max = full_scale - 1.0;
    let min = -full_scale;
    // f64::round rounds half away from zero
    let v = (x * full_scale).round();
    if v > max || v < min || v.is_nan() {
        *clipped += 1;
        if v.is_nan() {
            return 0;
        }
        return v.clamp(min, max) as i32;
    }
    v as i32
}

/// Samples of `x` that `format` cannot represent and would clamp on write.
pub fn clip_count(x: &[f64], format: SampleFormat) -> usize {
    let mut clipped = 0;
    match format {
        SampleFormat::Pcm16 => x.iter().for_each(|&v| {
            quantize(v, 32_768.0, &mut clipped);
        }),
        SampleFormat::Pcm24 => x.iter().for_each(|&v| {
            quantize(v, 8_388_608.0, &mut clipped);
        }),
        SampleFormat::Float32 => clipped = x.iter().filter(|v| v.abs() > 1.0).count(),
    }
    clipped
}

/// Encoded file bytes plus the number of samples that had to be clamped.
pub fn encode_wav(
    buffer: &AudioBuffer,
    format: SampleFormat,
) -> Result<(Vec<u8>, usize), WavError> {
    let fs = buffer.fs.round();
    if fs != buffer.fs || fs > u32::MAX as f64 {
        return Err(WavError::InvalidBuffer(format!(
            "sampling rate {} is not an integer number of hertz",
            buffer.fs
        )));
    }
    let channels = u16::try_from(buffer.channels)
        .map_err(|_| WavError::InvalidBuffer("too many channels".into()))?;
    let bits = format.bits();
    let bytes_per_sample = bits as usize / 8;
    let data_len = buffer.samples.len() * bytes_per_sample;
    let block_align = channels as u32 * bytes_per_sample as u32;
    let tag = match format {
        SampleFormat::Float32 => FORMAT_FLOAT,
        _ => FORMAT_PCM,
    };

    let mut out = Vec::with_capacity(44 + data_len + 1);
    out.extend_from_slice(b"RIFF");
    let riff_len = 4 + (8 + 16) + 8 + data_len + (data_len & 1);
    out.extend_from_slice(&(riff_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&(fs as u32).to_le_bytes());
    out.extend_from_slice(&(fs as u32 * block_align).to_le_bytes());
    out.extend_from_slice(&(block_align as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());

    let mut clipped = 0;
    match format {
        SampleFormat::Pcm16 => {
            for &x in &buffer.samples {
                let v = quantize(x, 32_768.0, &mut clipped) as i16;
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        SampleFormat::Pcm24 => {
            for &x in &buffer.samples {
                let v = quantize(x, 8_388_608.0, &mut clipped);
                out.extend_from_slice(&v.to_le_bytes()[..3]);
            }
        }
        SampleFormat::Float32 => {
            for &x in &buffer.samples {
                if x.abs() > 1.0 {
                    clipped += 1;
                }
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
    }
    if data_len & 1 == 1 {
        out.push(0);
    }
    Ok((out, clipped))
}

/// Writes `buffer` to `path`; returns the clip count (samples clamped to the
/// integer range, or beyond full scale for float output).
pub fn write_wav(
    buffer: &AudioBuffer,
    path: impl AsRef<Path>,
    format: SampleFormat,
) -> Result<usize, WavError> {
    let (bytes, clipped) = encode_wav(buffer, format)?;
    fs::write(path, bytes)?;
    Ok(clipped)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, WavError> {
    decode_wav(&fs::read(path)?)
}

struct Fmt {
    format: u16,
    channels: u16,
    fs: u32,
    block_align: u16,
    bits: u16,
}

fn le16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn le32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

fn tag(b: &[u8]) -> [u8; 4] {
    [b[0], b[1], b[2], b[3]]
}

fn chunk_name(id: [u8; 4]) -> String {
    String::from_utf8_lossy(&id).into_owned()
}

fn parse_fmt(body: &[u8]) -> Result<Fmt, WavError> {
    let malformed = |reason: &str| WavError::Malformed {
        chunk: "fmt ".into(),
        reason: reason.into(),
    };
    if body.len() < 16 {
        return Err(malformed("shorter than 16 bytes"));
    }
    let mut format = le16(&body[0..]);
    let channels = le16(&body[2..]);
    let fs = le32(&body[4..]);
    let block_align = le16(&body[12..]);
    let bits = le16(&body[14..]);
    if format == FORMAT_EXTENSIBLE {
        if body.len() < 40 {
            return Err(malformed("extensible format without subformat"));
        }
        format = le16(&body[24..]);
    }
    if channels == 0 {
        return Err(malformed("zero channels"));
    }
    if fs == 0 {
        return Err(malformed("zero sampling rate"));
    }
    if bits == 0 || block_align as u32 != channels as u32 * (bits as u32).div_ceil(8) {
        return Err(malformed(
            "block alignment does not match channels and bit depth",
        ));
    }
    Ok(Fmt {
        format,
        channels,
        fs,
        block_align,
        bits,
    })
}

pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, WavError> {
    if bytes.len() < 12 {
        let mut found = [0u8; 4];
        found[..bytes.len().min(4)].copy_from_slice(&bytes[..bytes.len().min(4)]);
        return Err(WavError::NotRiff(found));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(WavError::NotRiff(tag(bytes)));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(WavError::NotWave(tag(&bytes[8..])));
    }

    let mut fmt = None;
    let mut data = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = tag(&bytes[pos..]);
        let len = le32(&bytes[pos + 4..]) as usize;
        let start = pos + 8;
        let available = bytes.len() - start;
        if len > available {
            return Err(WavError::Truncated {
                chunk: chunk_name(id),
                declared: len,
                available,
            });
        }
        let body = &bytes[start..start + len];
        match &id {
            b"fmt " => fmt = Some(parse_fmt(body)?),
            b"data" => data = Some(body),
            _ => {}
        }
        pos = start + len + (len & 1);
    }
    let fmt = fmt.ok_or(WavError::MissingChunk("fmt "))?;
    let data = data.ok_or(WavError::MissingChunk("data"))?;

    if data.len() % fmt.block_align as usize != 0 {
        return Err(WavError::Malformed {
            chunk: "data".into(),
            reason: format!("{} bytes is not a whole number of frames", data.len()),
        });
    }
    let samples: Vec<f64> = match (fmt.format, fmt.bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32_768.0)
            .collect(),
        (FORMAT_PCM, 24) => data
            .chunks_exact(3)
            .map(|b| (i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8) as f64 / 8_388_608.0)
            .collect(),
        (FORMAT_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        (format, bits) => return Err(WavError::Unsupported { format, bits }),
    };
    AudioBuffer::new(fmt.fs as f64, fmt.channels as usize, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pcm16_payload(bytes: &[u8]) -> Vec<i16> {
        bytes[44..]
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]))
            .collect()
    }

    #[test]
    fn sixteen_bit_scaling() {
        let buf = AudioBuffer::mono(44_100.0, vec![0.5, -1.0, 1.5, -0.25]);
        let (bytes, clipped) = encode_wav(&buf, SampleFormat::Pcm16).unwrap();
        assert_eq!(pcm16_payload(&bytes), vec![16_384, -32_768, 32_767, -8_192]);
        assert_eq!(clipped, 1);
        let back = decode_wav(&bytes).unwrap();
        assert_eq!(back.samples()[0], 0.5);
        assert_eq!(back.samples()[1], -1.0);
    }

    #[test]
    fn rounds_half_away_from_zero() {
        let buf = AudioBuffer::mono(
            8_000.0,
            vec![0.5 / 32_768.0, -0.5 / 32_768.0, 1.49 / 32_768.0],
        );
        let (bytes, clipped) = encode_wav(&buf, SampleFormat::Pcm16).unwrap();
        assert_eq!(pcm16_payload(&bytes), vec![1, -1, 1]);
        assert_eq!(clipped, 0);
    }

    #[test]
    fn clip_counts_are_exact() {
        let samples = vec![1.0, 1.2, -1.0, -1.0001, 0.999, -3.0, 0.0];
        let buf = AudioBuffer::mono(44_100.0, samples);
        let (_, clipped) = encode_wav(&buf, SampleFormat::Pcm16).unwrap();
        // 1.0 rounds to 32768, which does not fit
        assert_eq!(clipped, 4);
        let (_, clipped) = encode_wav(&buf, SampleFormat::Float32).unwrap();
        assert_eq!(clipped, 3);
        for fmt in [
            SampleFormat::Pcm16,
            SampleFormat::Pcm24,
            SampleFormat::Float32,
        ] {
            assert_eq!(
                clip_count(buf.samples(), fmt),
                encode_wav(&buf, fmt).unwrap().1
            );
        }
    }

    #[test]
    fn header_layout() {
        let buf = AudioBuffer::new(44_100.0, 2, vec![0.0; 6]).unwrap();
        let (b, _) = encode_wav(&buf, SampleFormat::Pcm16).unwrap();
        assert_eq!(&b[0..4], b"RIFF");
        assert_eq!(le32(&b[4..]) as usize, b.len() - 8);
        assert_eq!(&b[8..16], b"WAVEfmt ");
        assert_eq!(le16(&b[20..]), 1);
        assert_eq!(le16(&b[22..]), 2);
        assert_eq!(le32(&b[24..]), 44_100);
        assert_eq!(le32(&b[28..]), 44_100 * 4);
        assert_eq!(le16(&b[32..]), 4);
        assert_eq!(le16(&b[34..]), 16);
        assert_eq!(&b[36..40], b"data");
        assert_eq!(le32(&b[40..]), 12);
    }

    #[test]
    fn pcm24_and_float_roundtrip() {
        let samples = vec![0.5, -0.25, 3.0 / 8_388_608.0, -1.0];
        let buf = AudioBuffer::new(48_000.0, 2, samples.clone()).unwrap();
        for fmt in [SampleFormat::Pcm24, SampleFormat::Float32] {
            let (bytes, _) = encode_wav(&buf, fmt).unwrap();
            let back = decode_wav(&bytes).unwrap();
            assert_eq!(back.fs(), 48_000.0);
            assert_eq!(back.channels(), 2);
            assert_eq!(back.samples(), &samples[..]);
        }
    }

    #[test]
    fn unknown_chunks_are_skipped() {
        let buf = AudioBuffer::mono(44_100.0, vec![0.25, -0.5, 0.125]);
        let (bytes, _) = encode_wav(&buf, SampleFormat::Pcm16).unwrap();
        let mut with_list = bytes[..36].to_vec();
        with_list.extend_from_slice(b"LIST");
        with_list.extend_from_slice(&3u32.to_le_bytes());
        with_list.extend_from_slice(b"abc\0");
        with_list.extend_from_slice(&bytes[36..]);
        let riff_len = (with_list.len() - 8) as u32;
        with_list[4..8].copy_from_slice(&riff_len.to_le_bytes());
        assert_eq!(decode_wav(&with_list).unwrap(), decode_wav(&bytes).unwrap());
    }

    #[test]
    fn structured_errors() {
        let err = decode_wav(b"OggS\0\0\0\0\0\0\0\0").unwrap_err();
        assert!(err.to_string().contains("'RIFF'"), "{err}");
        let err = decode_wav(b"RIFF\x04\0\0\0AVI ").unwrap_err();
        assert!(matches!(err, WavError::NotWave(_)));

        let buf = AudioBuffer::mono(44_100.0, vec![0.1; 100]);
        let (bytes, _) = encode_wav(&buf, SampleFormat::Pcm16).unwrap();
        let err = decode_wav(&bytes[..100]).unwrap_err();
        assert!(
            matches!(&err, WavError::Truncated { chunk, .. } if chunk == "data"),
            "{err}"
        );

        let mut no_data = bytes[..36].to_vec();
        no_data[4..8].copy_from_slice(&28u32.to_le_bytes());
        assert!(matches!(
            decode_wav(&no_data),
            Err(WavError::MissingChunk("data"))
        ));

        let mut eight_bit = bytes.clone();
        eight_bit[32..34].copy_from_slice(&1u16.to_le_bytes());
        eight_bit[34..36].copy_from_slice(&8u16.to_le_bytes());
        assert!(matches!(
            decode_wav(&eight_bit),
            Err(WavError::Unsupported { bits: 8, .. })
        ));
    }

    #[test]
    fn mono_downmix() {
        let mono = AudioBuffer::mono(44_100.0, vec![0.3, -0.2]);
        assert_eq!(to_mono(&mono), mono);
        let st = AudioBuffer::new(44_100.0, 2, vec![1.0, 0.0, 0.4, 0.4]).unwrap();
        assert_eq!(to_mono(&st).samples(), &[0.5, 0.4]);
    }

    #[test]
    fn file_roundtrip_preserves_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let buf = AudioBuffer::new(22_050.0, 3, vec![0.0, 0.5, -0.5, 0.25, -0.25, 0.125]).unwrap();
        write_wav(&buf, &path, SampleFormat::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back, buf);
    }

    proptest! {
        #[test]
        fn pcm16_roundtrip_is_lossless(codes in proptest::collection::vec(any::<i16>(), 1..512)) {
            let samples: Vec<f64> = codes.iter().map(|&c| c as f64 / 32_768.0).collect();
            let buf = AudioBuffer::mono(44_100.0, samples);
            let (bytes, clipped) = encode_wav(&buf, SampleFormat::Pcm16).unwrap();
            prop_assert_eq!(clipped, 0);
            prop_assert_eq!(pcm16_payload(&bytes), codes);
            let back = decode_wav(&bytes).unwrap();
            prop_assert_eq!(back, buf);
        }

        #[test]
        fn quantization_is_idempotent(xs in proptest::collection::vec(-1.5f64..1.5, 1..256)) {
            let once = decode_wav(&encode_wav(&AudioBuffer::mono(44_100.0, xs), SampleFormat::Pcm16).unwrap().0).unwrap();
            let twice = decode_wav(&encode_wav(&once, SampleFormat::Pcm16).unwrap().0).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
