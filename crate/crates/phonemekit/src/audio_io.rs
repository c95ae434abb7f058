//! WAV reading/writing and conditioning into the canonical mono f64
//! representation used by the rest of the pipeline.

use crate::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Mono audio signal with its sample rate. Samples are dimensionless
/// amplitudes, nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source: Option<String>,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Parameter("sample_rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Parameter("samples must be finite".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
            source: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Output sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Pcm16,
    Float32,
}

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

struct FmtChunk {
    format: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

fn read_exact_or_format(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("truncated WAV: {what}")))
}

fn u16_le(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn u32_le(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

/// Read a RIFF/WAVE file into a mono clip. Integer PCM (8/16/24/32 bit)
/// and 32-bit IEEE float are accepted; stereo is averaged to mono;
/// integer full scale maps to +-1 via the symmetric divisor 2^(bits-1).
/// Unknown chunks are skipped.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);

    let mut hdr = [0u8; 12];
    read_exact_or_format(&mut r, &mut hdr, "RIFF header")?;
    if &hdr[0..4] != b"RIFF" || &hdr[8..12] != b"WAVE" {
        return Err(Error::Format("not a RIFF/WAVE file".into()));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<Vec<u8>> = None;
    loop {
        let mut chdr = [0u8; 8];
        match r.read_exact(&mut chdr) {
            Ok(()) => {}
            Err(_) => break,
        }
        let id = [chdr[0], chdr[1], chdr[2], chdr[3]];
        let size = u32_le(&chdr[4..8]) as usize;
        match &id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format("fmt chunk too short".into()));
                }
                let mut body = vec![0u8; size];
                read_exact_or_format(&mut r, &mut body, "fmt chunk")?;
                fmt = Some(FmtChunk {
                    format: u16_le(&body[0..2]),
                    channels: u16_le(&body[2..4]),
                    sample_rate: u32_le(&body[4..8]),
                    bits_per_sample: u16_le(&body[14..16]),
                });
            }
            b"data" => {
                let mut body = vec![0u8; size];
                read_exact_or_format(&mut r, &mut body, "data chunk")?;
                data = Some(body);
                if size % 2 == 1 {
                    let mut pad = [0u8; 1];
                    let _ = r.read_exact(&mut pad);
                }
            }
            _ => {
                // skip unknown chunk (word-aligned)
                let skip = size + (size % 2);
                std::io::copy(&mut r.by_ref().take(skip as u64), &mut std::io::sink())?;
            }
        }
    }

    let fmt = fmt.ok_or_else(|| Error::Format("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("missing data chunk".into()))?;
    if fmt.sample_rate == 0 {
        return Err(Error::Format("zero sample rate in header".into()));
    }
    if fmt.channels == 0 || fmt.channels > 2 {
        return Err(Error::UnsupportedFormat(format!(
            "{} channels (only mono/stereo supported)",
            fmt.channels
        )));
    }

    let decode: fn(&[u8]) -> f64 = match (fmt.format, fmt.bits_per_sample) {
        (FORMAT_PCM, 8) => |b| (b[0] as f64 - 128.0) / 128.0,
        (FORMAT_PCM, 16) => |b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
        (FORMAT_PCM, 24) => |b| {
            let v = ((b[2] as i32) << 16 | (b[1] as i32) << 8 | b[0] as i32) << 8 >> 8;
            v as f64 / 8_388_608.0
        },
        (FORMAT_PCM, 32) => |b| i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / 2_147_483_648.0,
        (FORMAT_IEEE_FLOAT, 32) => |b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        (f, b) => {
            return Err(Error::UnsupportedFormat(format!(
                "format tag {f}, {b} bits per sample"
            )))
        }
    };

    let bytes_per_sample = (fmt.bits_per_sample / 8) as usize;
    let frame_bytes = bytes_per_sample * fmt.channels as usize;
    if frame_bytes == 0 {
        return Err(Error::Format("zero-width sample frames".into()));
    }
    let n_frames = data.len() / frame_bytes;
    let mut samples = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let base = f * frame_bytes;
        let mut acc = 0.0;
        for c in 0..fmt.channels as usize {
            let off = base + c * bytes_per_sample;
            acc += decode(&data[off..off + bytes_per_sample]);
        }
        samples.push(acc / fmt.channels as f64);
    }

    let mut clip = AudioClip::new(samples, fmt.sample_rate)?;
    clip.source = Some(path.display().to_string());
    Ok(clip)
}

/// Write a clip as a mono RIFF/WAVE file at the requested bit depth.
/// Samples are clamped to [-1, 1] before encoding.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>, bit_depth: BitDepth) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let (format, bits) = match bit_depth {
        BitDepth::Pcm16 => (FORMAT_PCM, 16u16),
        BitDepth::Float32 => (FORMAT_IEEE_FLOAT, 32u16),
    };
    let bytes_per_sample = (bits / 8) as u32;
    let data_len = clip.samples.len() as u32 * bytes_per_sample;

    w.write_all(b"RIFF")?;
    w.write_all(&(36 + data_len).to_le_bytes())?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&format.to_le_bytes())?;
    w.write_all(&1u16.to_le_bytes())?; // mono
    w.write_all(&clip.sample_rate.to_le_bytes())?;
    let byte_rate = clip.sample_rate * bytes_per_sample;
    w.write_all(&byte_rate.to_le_bytes())?;
    w.write_all(&(bytes_per_sample as u16).to_le_bytes())?; // block align
    w.write_all(&bits.to_le_bytes())?;
    w.write_all(b"data")?;
    w.write_all(&data_len.to_le_bytes())?;

    for &s in &clip.samples {
        let s = s.clamp(-1.0, 1.0);
        match bit_depth {
            BitDepth::Pcm16 => {
                let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                w.write_all(&q.to_le_bytes())?;
            }
            BitDepth::Float32 => {
                w.write_all(&(s as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Linear-interpolation resampling. Output length is
/// round(len * target / source).
pub fn resample_linear(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::Parameter("target_rate must be positive".into()));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let ratio = clip.sample_rate as f64 / target_rate as f64;
    let out_len =
        (clip.samples.len() as f64 * target_rate as f64 / clip.sample_rate as f64).round() as usize;
    let mut out = Vec::with_capacity(out_len);
    let n = clip.samples.len();
    for i in 0..out_len {
        let pos = i as f64 * ratio;
        let i0 = pos.floor() as usize;
        let frac = pos - i0 as f64;
        let a = clip.samples[i0.min(n - 1)];
        let b = clip.samples[(i0 + 1).min(n - 1)];
        out.push(a + frac * (b - a));
    }
    let mut res = AudioClip::new(out, target_rate)?;
    res.source = clip.source.clone();
    Ok(res)
}

/// Uniformly scale so the peak absolute sample equals `target_peak`.
pub fn normalize_peak(clip: &AudioClip, target_peak: f64) -> Result<AudioClip> {
    if !(target_peak > 0.0 && target_peak <= 1.0) {
        return Err(Error::Parameter("target_peak must be in (0, 1]".into()));
    }
    let peak = clip.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return Err(Error::DegenerateInput("all-zero clip".into()));
    }
    let scale = target_peak / peak;
    let mut out = clip.clone();
    for s in &mut out.samples {
        *s *= scale;
    }
    Ok(out)
}
