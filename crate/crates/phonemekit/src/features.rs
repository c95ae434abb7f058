//! Fixed-size grayscale feature images for the classifier, built from
//! either the STFT or the MFCC front-end: band cropping, min-max
//! normalization, optional binarization, and bilinear resizing.

use crate::audio_io::AudioClip;
use crate::dsp::{
    log_spectrogram, mfcc, power_spectrogram, stft, Matrix, Spectrogram, StftParams,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontEnd {
    Stft,
    Mfcc,
}

/// Front-end and image-shaping configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub front_end: FrontEnd,
    pub stft_params: StftParams,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub crop_f_min: f64,
    pub crop_f_max: f64,
    pub out_height: usize,
    pub out_width: usize,
    pub binarize: bool,
    pub binarize_threshold: f64,
}

impl Default for FeatureConfig {
    /// Short 256-point frames keep the frequency axis (129 bins) close
    /// to the 81-row output so bilinear resizing cannot skip bins.
    fn default() -> Self {
        Self {
            front_end: FrontEnd::Stft,
            stft_params: StftParams {
                window_len: 256,
                hop: 64,
                fft_size: 256,
                window_kind: crate::dsp::WindowKind::Hann,
            },
            n_mels: 40,
            n_coeffs: 13,
            crop_f_min: 0.0,
            crop_f_max: 8000.0,
            out_height: 81,
            out_width: 81,
            binarize: false,
            binarize_threshold: 0.5,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        self.stft_params.validate()?;
        if self.out_height == 0 || self.out_width == 0 {
            return Err(Error::Parameter("output dimensions must be >= 1".into()));
        }
        if self.crop_f_min >= self.crop_f_max {
            return Err(Error::Parameter("crop_f_min must be < crop_f_max".into()));
        }
        if self.binarize && !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(Error::Parameter(
                "binarize_threshold must be in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Fixed-size image with pixels in [0, 1] ({0, 1} when binarized).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    /// out_height rows by out_width columns.
    pub pixels: Matrix,
    pub config: FeatureConfig,
}

impl FeatureImage {
    pub fn height(&self) -> usize {
        self.pixels.len()
    }

    pub fn width(&self) -> usize {
        self.pixels.first().map_or(0, |r| r.len())
    }
}

/// Restrict spectrogram bins to those with center frequency inside
/// [f_min, f_max].
pub fn crop_band(spec: &Spectrogram, f_min: f64, f_max: f64) -> Result<Spectrogram> {
    let b = spec.power.first().map_or(0, |r| r.len());
    let keep: Vec<usize> = (0..b)
        .filter(|&k| {
            let f = k as f64 * spec.bin_width;
            f >= f_min && f <= f_max
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::Parameter(format!(
            "band [{f_min}, {f_max}] contains no bins"
        )));
    }
    Ok(Spectrogram {
        power: spec
            .power
            .iter()
            .map(|row| keep.iter().map(|&k| row[k]).collect())
            .collect(),
        frame_period: spec.frame_period,
        bin_width: spec.bin_width,
    })
}

/// (x - min) / (max - min); a constant matrix maps to all zeros.
pub fn minmax_normalize(matrix: &Matrix) -> Matrix {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for row in matrix {
        for &v in row {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let span = hi - lo;
    matrix
        .iter()
        .map(|row| {
            row.iter()
                .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
                .collect()
        })
        .collect()
}

/// pixel >= threshold -> 1, else 0.
pub fn binarize(image: &Matrix, threshold: f64) -> Matrix {
    image
        .iter()
        .map(|row| {
            row.iter()
                .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Bilinear resize with a corner-aligned sampling grid.
pub fn resize_bilinear(matrix: &Matrix, out_h: usize, out_w: usize) -> Result<Matrix> {
    let in_h = matrix.len();
    let in_w = matrix.first().map_or(0, |r| r.len());
    if in_h == 0 || in_w == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::Parameter("empty matrix in resize".into()));
    }
    let scale_y = if out_h > 1 {
        (in_h - 1) as f64 / (out_h - 1) as f64
    } else {
        0.0
    };
    let scale_x = if out_w > 1 {
        (in_w - 1) as f64 / (out_w - 1) as f64
    } else {
        0.0
    };
    let mut out = vec![vec![0.0; out_w]; out_h];
    for (y, row) in out.iter_mut().enumerate() {
        let sy = y as f64 * scale_y;
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let fy = sy - y0 as f64;
        for (x, px) in row.iter_mut().enumerate() {
            let sx = x as f64 * scale_x;
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let fx = sx - x0 as f64;
            let top = matrix[y0][x0] * (1.0 - fx) + matrix[y0][x1] * fx;
            let bot = matrix[y1][x0] * (1.0 - fx) + matrix[y1][x1] * fx;
            *px = top * (1.0 - fy) + bot * fy;
        }
    }
    Ok(out)
}

fn transpose(m: &Matrix) -> Matrix {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    (0..cols)
        .map(|c| (0..rows).map(|r| m[r][c]).collect())
        .collect()
}

/// Run the configured front-end and shape the result into a
/// `out_height x out_width` image. Frequency/coefficient axis maps to
/// image height, time to width.
pub fn featurize(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureImage> {
    cfg.validate()?;
    let matrix = match cfg.front_end {
        FrontEnd::Stft => {
            let frames = stft(clip, cfg.stft_params)?;
            let spec = power_spectrogram(&frames);
            // floor relative to the peak caps the dynamic range at
            // 80 dB, so noise far below the signal cannot dominate the
            // normalized image
            let max_p = spec
                .power
                .iter()
                .flatten()
                .cloned()
                .fold(0.0f64, f64::max);
            let floor = if max_p > 0.0 { max_p * 1e-8 } else { 1e-10 };
            let db = log_spectrogram(&spec, floor)?;
            let db_spec = Spectrogram {
                power: db,
                frame_period: spec.frame_period,
                bin_width: spec.bin_width,
            };
            let cropped = crop_band(&db_spec, cfg.crop_f_min, cfg.crop_f_max)?;
            transpose(&minmax_normalize(&cropped.power))
        }
        FrontEnd::Mfcc => {
            let coeffs = mfcc(clip, cfg.stft_params, cfg.n_mels, cfg.n_coeffs)?;
            transpose(&minmax_normalize(&coeffs))
        }
    };
    let resized = resize_bilinear(&matrix, cfg.out_height, cfg.out_width)?;
    // binarize last so bilinear interpolation cannot reintroduce grays
    let pixels = if cfg.binarize {
        binarize(&resized, cfg.binarize_threshold)
    } else {
        resized
    };
    Ok(FeatureImage {
        pixels,
        config: *cfg,
    })
}

/// Binary PGM (P5, maxval 255); pixel = round(255 * value).
pub fn export_pgm(image: &FeatureImage, path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", image.width(), image.height())?;
    for row in &image.pixels {
        let bytes: Vec<u8> = row
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}
