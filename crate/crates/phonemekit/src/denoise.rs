//! Noise-fingerprint estimation, magnitude spectral subtraction, dynamic
//! energy thresholding, and consonant/vowel segmentation with vowel
//! shortening.

use crate::audio_io::AudioClip;
use crate::dsp::{istft, power_spectrogram, stft, ComplexFrames, Spectrogram, StftParams};
use crate::{Error, Result};
use std::io::Write;
use std::path::Path;

/// Per-bin noise magnitude statistics over a set of low-speech frames.
#[derive(Debug, Clone)]
pub struct NoiseProfile {
    pub mean_mag: Vec<f64>,
    pub std_mag: Vec<f64>,
    pub params: StftParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Silence,
    Consonant,
    Vowel,
}

impl SegmentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SegmentKind::Silence => "silence",
            SegmentKind::Consonant => "consonant",
            SegmentKind::Vowel => "vowel",
        }
    }
}

/// Half-open sample range labeled silence/consonant/vowel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentSpan {
    pub start: usize,
    pub end: usize,
    pub kind: SegmentKind,
}

/// Defaults for the subtraction pass (over-subtraction factor, floor
/// ratio, noise-frame fraction, pass count, threshold multiplier,
/// vowel cap in seconds).
pub const DEFAULT_ALPHA: f64 = 2.0;
pub const DEFAULT_BETA: f64 = 0.02;
pub const DEFAULT_FRACTION: f64 = 0.1;
pub const DEFAULT_PASSES: usize = 2;
pub const DEFAULT_THRESHOLD_K: f64 = 3.0;
/// Speech frames must exceed this multiple of the noise-floor mean
/// energy in addition to the mean + k*std rule.
pub const RELATIVE_GATE: f64 = 4.0;
pub const DEFAULT_MAX_VOWEL_SECS: f64 = 0.150;

fn frame_energies(spec: &Spectrogram) -> Vec<f64> {
    spec.power.iter().map(|row| row.iter().sum()).collect()
}

/// The ceil(fraction * F) frames with the lowest total power, taken as
/// the noise region. Ties broken toward lower indices.
pub fn auto_select_noise_frames(spec: &Spectrogram, fraction: f64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter("fraction must be in (0, 1)".into()));
    }
    let f = spec.power.len();
    if f < 4 {
        return Err(Error::InsufficientInput(format!(
            "need >= 4 frames, got {f}"
        )));
    }
    let energies = frame_energies(spec);
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| {
        energies[a]
            .partial_cmp(&energies[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let count = (fraction * f as f64).ceil() as usize;
    let mut selected = order[..count.max(1)].to_vec();
    selected.sort_unstable();
    Ok(selected)
}

/// Per-bin mean and (population) standard deviation of magnitudes over
/// the selected frames.
pub fn estimate_noise_profile(frames: &ComplexFrames, indices: &[usize]) -> Result<NoiseProfile> {
    if indices.is_empty() {
        return Err(Error::Parameter("empty noise frame set".into()));
    }
    let b = frames.params.n_bins();
    if let Some(&bad) = indices.iter().find(|&&i| i >= frames.n_frames()) {
        return Err(Error::Parameter(format!("frame index {bad} out of range")));
    }
    let n = indices.len() as f64;
    let mut mean = vec![0.0; b];
    for &i in indices {
        for (k, z) in frames.frames[i].iter().enumerate() {
            mean[k] += z.norm() / n;
        }
    }
    let mut var = vec![0.0; b];
    for &i in indices {
        for (k, z) in frames.frames[i].iter().enumerate() {
            let d = z.norm() - mean[k];
            var[k] += d * d / n;
        }
    }
    Ok(NoiseProfile {
        mean_mag: mean,
        std_mag: var.into_iter().map(f64::sqrt).collect(),
        params: frames.params,
    })
}

/// Power spectral subtraction with over-subtraction and a spectral
/// floor: |X'|^2 = max(|X|^2 - alpha*mean^2, beta*mean^2), phase
/// preserved. Subtracting powers rather than magnitudes leaves strong
/// tonal bins nearly intact while still gating noise-dominated bins.
pub fn spectral_subtract(
    frames: &ComplexFrames,
    profile: &NoiseProfile,
    alpha: f64,
    beta: f64,
) -> Result<ComplexFrames> {
    if alpha < 1.0 || !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Parameter(
            "require alpha >= 1 and beta in (0, 1)".into(),
        ));
    }
    if profile.mean_mag.len() != frames.params.n_bins() {
        return Err(Error::ShapeMismatch(format!(
            "profile has {} bins, frames have {}",
            profile.mean_mag.len(),
            frames.params.n_bins()
        )));
    }
    let mut out = frames.clone();
    for row in &mut out.frames {
        for (k, z) in row.iter_mut().enumerate() {
            let mag = z.norm();
            let noise_pw = profile.mean_mag[k] * profile.mean_mag[k];
            let new_mag = (mag * mag - alpha * noise_pw).max(beta * noise_pw).sqrt();
            if mag > 0.0 {
                *z *= new_mag / mag;
            } else {
                // zero magnitude: flooring a silent bin keeps it silent
                // unless the floor itself is nonzero (phase undefined,
                // use zero phase)
                *z = num_complex::Complex64::new(new_mag.min(mag), 0.0);
            }
        }
    }
    Ok(out)
}

/// Full fingerprint-subtraction pass: STFT, auto-select the quietest
/// frames, estimate the profile, subtract, repeated `passes` times,
/// then resynthesize. Output length equals input length.
pub fn denoise(
    clip: &AudioClip,
    passes: usize,
    alpha: f64,
    beta: f64,
    fraction: f64,
) -> Result<AudioClip> {
    let params = StftParams::default();
    if clip.samples.len() < 4 * params.window_len {
        return Err(Error::InsufficientInput(
            "clip must be at least 4 windows long".into(),
        ));
    }
    let mut frames = stft(clip, params)?;
    for _ in 0..passes {
        let spec = power_spectrogram(&frames);
        let indices = auto_select_noise_frames(&spec, fraction)?;
        let profile = estimate_noise_profile(&frames, &indices)?;
        frames = spectral_subtract(&frames, &profile, alpha, beta)?;
    }
    let mut out = istft(&frames)?;
    out.samples.resize(clip.samples.len(), 0.0);
    out.source = clip.source.clone();
    Ok(out)
}

/// Energy threshold: mean + k * std over the noise-indexed frames.
pub fn dynamic_threshold(frame_energies: &[f64], noise_indices: &[usize], k: f64) -> Result<f64> {
    if noise_indices.is_empty() {
        return Err(Error::Parameter("empty noise index set".into()));
    }
    let n = noise_indices.len() as f64;
    let mean: f64 = noise_indices.iter().map(|&i| frame_energies[i]).sum::<f64>() / n;
    let var: f64 = noise_indices
        .iter()
        .map(|&i| {
            let d = frame_energies[i] - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(mean + k * var.sqrt())
}

/// Label frames against the dynamic threshold and derive silence /
/// consonant / vowel spans in sample coordinates. The first
/// supra-threshold run is the consonant onset; the highest-energy run
/// after it is the vowel. When speech is one unbroken run, the first
/// frames of the run stand in for the consonant and the rest is vowel.
pub fn segment_cv(clip: &AudioClip, params: StftParams, k: f64) -> Result<Vec<SegmentSpan>> {
    if clip.samples.len() < 4 * params.window_len {
        return Err(Error::InsufficientInput(
            "clip must be at least 4 windows long".into(),
        ));
    }
    let frames = stft(clip, params)?;
    let spec = power_spectrogram(&frames);
    let energies = frame_energies(&spec);
    let noise_idx = auto_select_noise_frames(&spec, DEFAULT_FRACTION)?;
    // mean + k*std alone self-triggers on homogeneous noise because the
    // selected quietest frames bias the stats low; speech must also
    // clear a multiple of the noise floor
    let noise_mean: f64 =
        noise_idx.iter().map(|&i| energies[i]).sum::<f64>() / noise_idx.len() as f64;
    let threshold = dynamic_threshold(&energies, &noise_idx, k)?.max(RELATIVE_GATE * noise_mean);

    let supra: Vec<bool> = energies.iter().map(|&e| e > threshold).collect();
    if !supra.iter().any(|&s| s) {
        return Err(Error::NoSpeech("no frame exceeds the threshold".into()));
    }

    // contiguous supra-threshold runs as (start_frame, end_frame)
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < supra.len() {
        if supra[i] {
            let start = i;
            while i < supra.len() && supra[i] {
                i += 1;
            }
            runs.push((start, i));
        } else {
            i += 1;
        }
    }

    let (consonant, vowel) = if runs.len() >= 2 {
        let first = runs[0];
        let best = runs[1..]
            .iter()
            .max_by(|a, b| {
                let ea: f64 = energies[a.0..a.1].iter().sum();
                let eb: f64 = energies[b.0..b.1].iter().sum();
                ea.partial_cmp(&eb).unwrap()
            })
            .copied()
            .unwrap();
        (Some(first), Some(best))
    } else {
        let (start, end) = runs[0];
        let len = end - start;
        if len >= 2 {
            let onset = (start, start + 2.min(len - 1));
            (Some(onset), Some((onset.1, end)))
        } else {
            (None, Some((start, end)))
        }
    };

    let hop = params.hop;
    let to_samples = |fr: (usize, usize)| (fr.0 * hop, fr.1 * hop);
    let mut spans = Vec::new();
    let first_speech_frame = consonant.or(vowel).unwrap().0;
    let last_speech_frame = vowel.unwrap().1.max(consonant.map_or(0, |c| c.1));
    if first_speech_frame > 0 {
        spans.push(SegmentSpan {
            start: 0,
            end: first_speech_frame * hop,
            kind: SegmentKind::Silence,
        });
    }
    if let Some(c) = consonant {
        let (s, e) = to_samples(c);
        spans.push(SegmentSpan {
            start: s,
            end: e,
            kind: SegmentKind::Consonant,
        });
    }
    if let Some(v) = vowel {
        let (s, e) = to_samples(v);
        // gap between consonant and vowel is silence
        if let Some(last) = spans.last() {
            if s > last.end {
                spans.push(SegmentSpan {
                    start: last.end,
                    end: s,
                    kind: SegmentKind::Silence,
                });
            }
        }
        spans.push(SegmentSpan {
            start: s,
            end: e,
            kind: SegmentKind::Vowel,
        });
    }
    let tail_start = last_speech_frame * hop;
    if tail_start < clip.samples.len() {
        spans.push(SegmentSpan {
            start: tail_start,
            end: clip.samples.len(),
            kind: SegmentKind::Silence,
        });
    }
    Ok(spans)
}

/// Truncate the vowel span to at most `max_vowel` seconds; everything
/// before it is kept verbatim, everything after is dropped.
pub fn trim_vowel(clip: &AudioClip, spans: &[SegmentSpan], max_vowel: f64) -> Result<AudioClip> {
    let vowel = spans
        .iter()
        .find(|s| s.kind == SegmentKind::Vowel)
        .ok_or_else(|| Error::Parameter("no vowel span".into()))?;
    let max_samples = (max_vowel * clip.sample_rate as f64).floor() as usize;
    let vowel_len = (vowel.end - vowel.start).min(max_samples);
    let end = (vowel.start + vowel_len).min(clip.samples.len());
    let mut out = clip.clone();
    out.samples.truncate(end);
    Ok(out)
}

/// Plain-text span list: one `kind start end` line per span.
pub fn write_spans(spans: &[SegmentSpan], path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in spans {
        writeln!(w, "{} {} {}", s.kind.as_str(), s.start, s.end)?;
    }
    w.flush()?;
    Ok(())
}
