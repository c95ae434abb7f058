//! Spectral transforms: DFT/FFT, STFT and its inverse, power/log
//! spectrograms, the Haar wavelet step, mel filterbank, DCT-II, and MFCC.

use crate::audio_io::AudioClip;
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

/// Row-major real matrix.
pub type Matrix = Vec<Vec<f64>>;

/// Log floor used when taking the natural log of mel energies.
pub const MEL_LOG_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Rectangular,
    Hann,
    Hamming,
}

/// STFT framing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftParams {
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window_kind: WindowKind,
}

impl Default for StftParams {
    /// 23 ms hann frames at 44.1 kHz with 4x overlap; satisfies the
    /// overlap-add condition required by [`istft`].
    fn default() -> Self {
        Self {
            window_len: 1024,
            hop: 256,
            fft_size: 1024,
            window_kind: WindowKind::Hann,
        }
    }
}

impl StftParams {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.window_len || self.window_len > self.fft_size {
            return Err(Error::Parameter(
                "require 0 < hop <= window_len <= fft_size".into(),
            ));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(Error::Parameter("fft_size must be a power of two".into()));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn window(&self) -> Vec<f64> {
        let n = self.window_len as f64;
        (0..self.window_len)
            .map(|i| match self.window_kind {
                WindowKind::Rectangular => 1.0,
                WindowKind::Hann => 0.5 * (1.0 - (2.0 * PI * i as f64 / n).cos()),
                WindowKind::Hamming => 0.54 - 0.46 * (2.0 * PI * i as f64 / n).cos(),
            })
            .collect()
    }
}

/// Complex STFT frames: F frames by B = fft_size/2 + 1 bins.
#[derive(Debug, Clone)]
pub struct ComplexFrames {
    pub frames: Vec<Vec<Complex64>>,
    pub params: StftParams,
    pub sample_rate: u32,
}

impl ComplexFrames {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }
}

/// Time-frequency power matrix with axis metadata.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    /// F x B, non-negative.
    pub power: Matrix,
    /// Seconds between frame starts.
    pub frame_period: f64,
    /// Hz per FFT bin.
    pub bin_width: f64,
}

/// Direct O(N^2) DFT. Serves as the oracle for [`fft`].
pub fn dft_naive(signal: &[f64]) -> Vec<Complex64> {
    let n = signal.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &x) in signal.iter().enumerate() {
            let phase = -2.0 * PI * (k * i % n) as f64 / n as f64;
            acc += x * Complex64::new(phase.cos(), phase.sin());
        }
        out.push(acc);
    }
    out
}

fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 2.0 * PI } else { -2.0 * PI };
    let mut len = 2;
    while len <= n {
        let ang = sign / len as f64;
        let wlen = Complex64::new(ang.cos(), ang.sin());
        for start in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let u = buf[start + k];
                let v = buf[start + k + len / 2] * w;
                buf[start + k] = u + v;
                buf[start + k + len / 2] = u - v;
                w *= wlen;
            }
        }
        len <<= 1;
    }
    if inverse {
        let inv_n = 1.0 / n as f64;
        for x in buf.iter_mut() {
            *x *= inv_n;
        }
    }
}

/// Radix-2 FFT of a real signal zero-padded or truncated to `fft_size`.
pub fn fft(signal: &[f64], fft_size: usize) -> Result<Vec<Complex64>> {
    if !fft_size.is_power_of_two() || fft_size == 0 {
        return Err(Error::Parameter("fft_size must be a power of two".into()));
    }
    let mut buf: Vec<Complex64> = signal
        .iter()
        .take(fft_size)
        .map(|&x| Complex64::new(x, 0.0))
        .collect();
    buf.resize(fft_size, Complex64::new(0.0, 0.0));
    fft_in_place(&mut buf, false);
    Ok(buf)
}

/// Inverse FFT of a full complex spectrum.
pub fn ifft(spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
    if !spectrum.len().is_power_of_two() || spectrum.is_empty() {
        return Err(Error::Parameter("length must be a power of two".into()));
    }
    let mut buf = spectrum.to_vec();
    fft_in_place(&mut buf, true);
    Ok(buf)
}

/// Short-time Fourier transform; only the non-redundant bins
/// 0..fft_size/2 are retained.
pub fn stft(clip: &AudioClip, params: StftParams) -> Result<ComplexFrames> {
    params.validate()?;
    if clip.samples.len() < params.window_len {
        return Err(Error::InsufficientInput(format!(
            "clip of {} samples is shorter than one window ({})",
            clip.samples.len(),
            params.window_len
        )));
    }
    let window = params.window();
    let n_frames = (clip.samples.len() - params.window_len) / params.hop + 1;
    let b = params.n_bins();
    let mut frames = Vec::with_capacity(n_frames);
    let mut buf = vec![0.0f64; params.window_len];
    for f in 0..n_frames {
        let start = f * params.hop;
        for (i, w) in window.iter().enumerate() {
            buf[i] = clip.samples[start + i] * w;
        }
        let spec = fft(&buf, params.fft_size)?;
        frames.push(spec[..b].to_vec());
    }
    Ok(ComplexFrames {
        frames,
        params,
        sample_rate: clip.sample_rate,
    })
}

/// Overlap-add synthesis with window-squared normalization. Interior
/// samples of `istft(stft(x))` reproduce `x` when the window/hop pair
/// satisfies constant overlap-add (hann with hop = window_len/4 does).
pub fn istft(frames: &ComplexFrames) -> Result<AudioClip> {
    let p = frames.params;
    p.validate()?;
    let b = p.n_bins();
    let n_frames = frames.frames.len();
    if n_frames == 0 {
        return Ok(AudioClip::new(vec![], frames.sample_rate)?);
    }
    let window = p.window();
    let out_len = (n_frames - 1) * p.hop + p.window_len;
    let mut num = vec![0.0f64; out_len];
    let mut den = vec![0.0f64; out_len];
    let mut full = vec![Complex64::new(0.0, 0.0); p.fft_size];
    for (f, frame) in frames.frames.iter().enumerate() {
        if frame.len() != b {
            return Err(Error::ShapeMismatch(format!(
                "frame {f} has {} bins, expected {b}",
                frame.len()
            )));
        }
        for (k, &v) in frame.iter().enumerate() {
            full[k] = v;
        }
        for k in b..p.fft_size {
            full[k] = frame[p.fft_size - k].conj();
        }
        let time = ifft(&full)?;
        let start = f * p.hop;
        for i in 0..p.window_len {
            num[start + i] += window[i] * time[i].re;
            den[start + i] += window[i] * window[i];
        }
    }
    // Floor the normalizer relative to its interior (COLA) value so the
    // taper at the clip edges attenuates instead of amplifying residue.
    let den_max = den.iter().cloned().fold(0.0f64, f64::max);
    let floor = (den_max * 1e-2).max(1e-12);
    let samples = num
        .iter()
        .zip(&den)
        .map(|(&n, &d)| n / d.max(floor))
        .collect();
    Ok(AudioClip::new(samples, frames.sample_rate)?)
}

/// Squared magnitudes of STFT frames with axis metadata.
pub fn power_spectrogram(frames: &ComplexFrames) -> Spectrogram {
    let power = frames
        .frames
        .iter()
        .map(|row| row.iter().map(|z| z.norm_sqr()).collect())
        .collect();
    Spectrogram {
        power,
        frame_period: frames.params.hop as f64 / frames.sample_rate as f64,
        bin_width: frames.sample_rate as f64 / frames.params.fft_size as f64,
    }
}

/// dB scaling: 10*log10(power + floor_eps).
pub fn log_spectrogram(spec: &Spectrogram, floor_eps: f64) -> Result<Matrix> {
    if floor_eps <= 0.0 {
        return Err(Error::Parameter("floor_eps must be positive".into()));
    }
    Ok(spec
        .power
        .iter()
        .map(|row| row.iter().map(|&p| 10.0 * (p + floor_eps).log10()).collect())
        .collect())
}

/// One level of the orthonormal Haar wavelet transform.
pub fn haar_dwt(signal: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if signal.len() % 2 != 0 {
        return Err(Error::Parameter("haar_dwt requires even length".into()));
    }
    let s = std::f64::consts::SQRT_2.recip();
    let half = signal.len() / 2;
    let mut approx = Vec::with_capacity(half);
    let mut detail = Vec::with_capacity(half);
    for i in 0..half {
        approx.push((signal[2 * i] + signal[2 * i + 1]) * s);
        detail.push((signal[2 * i] - signal[2 * i + 1]) * s);
    }
    Ok((approx, detail))
}

/// Inverse of [`haar_dwt`].
pub fn haar_idwt(approx: &[f64], detail: &[f64]) -> Result<Vec<f64>> {
    if approx.len() != detail.len() {
        return Err(Error::Parameter("approx/detail length mismatch".into()));
    }
    let s = std::f64::consts::SQRT_2.recip();
    let mut out = Vec::with_capacity(approx.len() * 2);
    for (a, d) in approx.iter().zip(detail) {
        out.push((a + d) * s);
        out.push((a - d) * s);
    }
    Ok(out)
}

/// HTK-style mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank: M rows over B FFT bins.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub weights: Matrix,
    pub mel_centers: Vec<f64>,
    pub f_min: f64,
    pub f_max: f64,
}

/// Build `n_mels` triangular filters with centers equally spaced on the
/// mel axis between `f_min` and `f_max`; adjacent filters overlap at
/// each other's centers.
pub fn make_mel_filterbank(
    n_mels: usize,
    fft_size: usize,
    sample_rate: u32,
    f_min: f64,
    f_max: f64,
) -> Result<MelFilterbank> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
        return Err(Error::Parameter(format!(
            "invalid mel band [{f_min}, {f_max}] for nyquist {nyquist}"
        )));
    }
    if n_mels == 0 {
        return Err(Error::Parameter("n_mels must be >= 1".into()));
    }
    let b = fft_size / 2 + 1;
    let mel_lo = hz_to_mel(f_min);
    let mel_hi = hz_to_mel(f_max);
    // n_mels + 2 edge points; filter m spans edges m..m+2
    let edges_hz: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / fft_size as f64;
    let mut weights = vec![vec![0.0; b]; n_mels];
    for m in 0..n_mels {
        let (left, center, right) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        for (k, w) in weights[m].iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            if f > left && f < center {
                *w = (f - left) / (center - left);
            } else if (f - center).abs() < 1e-12 {
                *w = 1.0;
            } else if f > center && f < right {
                *w = (right - f) / (right - center);
            }
        }
    }
    Ok(MelFilterbank {
        weights,
        mel_centers: edges_hz[1..=n_mels].iter().map(|&f| hz_to_mel(f)).collect(),
        f_min,
        f_max,
    })
}

/// Orthonormal DCT-II.
pub fn dct_ii(vector: &[f64]) -> Vec<f64> {
    let m = vector.len();
    let mf = m as f64;
    (0..m)
        .map(|k| {
            let scale = if k == 0 { (1.0 / mf).sqrt() } else { (2.0 / mf).sqrt() };
            let sum: f64 = vector
                .iter()
                .enumerate()
                .map(|(n, &x)| x * (PI * (2 * n + 1) as f64 * k as f64 / (2.0 * mf)).cos())
                .sum();
            scale * sum
        })
        .collect()
}

/// Inverse of [`dct_ii`] (orthonormal DCT-III).
pub fn dct_iii(vector: &[f64]) -> Vec<f64> {
    let m = vector.len();
    let mf = m as f64;
    (0..m)
        .map(|n| {
            (0..m)
                .map(|k| {
                    let scale = if k == 0 { (1.0 / mf).sqrt() } else { (2.0 / mf).sqrt() };
                    scale * vector[k] * (PI * (2 * n + 1) as f64 * k as f64 / (2.0 * mf)).cos()
                })
                .sum()
        })
        .collect()
}

/// Mel-frequency cepstral coefficients: per frame, power spectrum, mel
/// filterbank, natural log with floor, orthonormal DCT-II, first
/// `n_coeffs` coefficients kept. Clips shorter than one window are
/// zero-padded to a single window.
pub fn mfcc(
    clip: &AudioClip,
    params: StftParams,
    n_mels: usize,
    n_coeffs: usize,
) -> Result<Matrix> {
    if n_coeffs > n_mels {
        return Err(Error::Parameter("n_coeffs must be <= n_mels".into()));
    }
    let padded;
    let clip = if clip.samples.len() < params.window_len {
        let mut samples = clip.samples.clone();
        samples.resize(params.window_len, 0.0);
        padded = AudioClip::new(samples, clip.sample_rate)?;
        &padded
    } else {
        clip
    };
    let frames = stft(clip, params)?;
    let spec = power_spectrogram(&frames);
    let fb = make_mel_filterbank(
        n_mels,
        params.fft_size,
        clip.sample_rate,
        0.0,
        clip.sample_rate as f64 / 2.0,
    )?;
    let mut out = Vec::with_capacity(spec.power.len());
    for row in &spec.power {
        let log_mel: Vec<f64> = fb
            .weights
            .iter()
            .map(|w| {
                let e: f64 = w.iter().zip(row).map(|(a, b)| a * b).sum();
                (e + MEL_LOG_EPS).ln()
            })
            .collect();
        let mut coeffs = dct_ii(&log_mel);
        coeffs.truncate(n_coeffs);
        out.push(coeffs);
    }
    Ok(out)
}

/// Write a matrix as CSV, one row per line.
pub fn write_matrix_csv(matrix: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for row in matrix {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

const BLOB_MAGIC: &[u8; 4] = b"SPEC";

/// Binary blob: 16-byte header (magic "SPEC", rows u32, cols u32,
/// reserved u32 = 0), then row-major little-endian f64 values.
pub fn write_matrix_blob(matrix: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, |r| r.len());
    if matrix.iter().any(|r| r.len() != cols) {
        return Err(Error::ShapeMismatch("ragged matrix".into()));
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(BLOB_MAGIC)?;
    w.write_all(&(rows as u32).to_le_bytes())?;
    w.write_all(&(cols as u32).to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    for row in matrix {
        for &v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a matrix written by [`write_matrix_blob`].
pub fn read_matrix_blob(path: impl AsRef<Path>) -> Result<Matrix> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("truncated blob header".into()))?;
    if &header[0..4] != BLOB_MAGIC {
        return Err(Error::Format("bad blob magic".into()));
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let mut matrix = Vec::with_capacity(rows);
    let mut buf = vec![0u8; cols * 8];
    for _ in 0..rows {
        r.read_exact(&mut buf)
            .map_err(|_| Error::Format("truncated blob body".into()))?;
        matrix.push(
            buf.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
    }
    Ok(matrix)
}
