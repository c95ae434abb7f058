//! Corpus handling: the 30-class phoneme label inventory, directory
//! scanning, stratified train/test splitting, feature-batch assembly,
//! and a synthetic consonant-vowel corpus generator for desk-scale
//! end-to-end runs.

use crate::audio_io::{read_wav, write_wav, AudioClip, BitDepth};
use crate::features::{featurize, FeatureConfig};
use crate::nn::Tensor;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Vowel,
    Consonant,
    Silence,
}

/// One entry of the fixed 30-class inventory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhonemeLabel {
    pub index: usize,
    pub ascii_name: &'static str,
    pub persian_form: &'static str,
    pub ipa_form: &'static str,
    pub kind: LabelKind,
}

const V: LabelKind = LabelKind::Vowel;
const C: LabelKind = LabelKind::Consonant;

macro_rules! labels {
    ($(($i:expr, $ascii:literal, $fa:literal, $ipa:literal, $kind:expr)),* $(,)?) => {
        [$(PhonemeLabel {
            index: $i,
            ascii_name: $ascii,
            persian_form: $fa,
            ipa_form: $ipa,
            kind: $kind,
        }),*]
    };
}

/// 6 vowels, then 23 consonants, then silence at index 29. Order and
/// names are a runtime constant.
pub const LABEL_INVENTORY: [PhonemeLabel; 30] = labels![
    (0, "aa", "آ", "ɑ", V),
    (1, "ii", "ای", "i", V),
    (2, "uu", "او", "u", V),
    (3, "a", "آ", "æ", V),
    (4, "e", "اِ", "e", V),
    (5, "o", "أ", "o", V),
    (6, "p", "پ", "p", C),
    (7, "b", "ب", "b", C),
    (8, "t", "ت", "t", C),
    (9, "d", "د", "d", C),
    (10, "ch", "چ", "tʃ", C),
    (11, "j", "ج", "dʒ", C),
    (12, "k", "ک", "k", C),
    (13, "g", "گ", "g", C),
    (14, "f", "ف", "f", C),
    (15, "v", "و", "v", C),
    (16, "kh", "خ", "x", C),
    (17, "s", "س", "s", C),
    (18, "z", "ز", "z", C),
    (19, "sh", "ش", "ʃ", C),
    (20, "zh", "ژ", "ʒ", C),
    (21, "m", "م", "m", C),
    (22, "n", "ن", "n", C),
    (23, "h", "ه", "h", C),
    (24, "l", "ل", "l", C),
    (25, "r", "ر", "r", C),
    (26, "q", "ق", "q", C),
    (27, "y", "ی", "j", C),
    (28, "gh", "غ", "ɣ", C),
    (29, "sil", "سکوت", "-", LabelKind::Silence),
];

pub fn label_inventory() -> &'static [PhonemeLabel; 30] {
    &LABEL_INVENTORY
}

pub fn label_by_name(name: &str) -> Option<&'static PhonemeLabel> {
    LABEL_INVENTORY.iter().find(|l| l.ascii_name == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
}

/// Scanned corpus; entries default to the train split until
/// [`stratified_split`] assigns them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub root: PathBuf,
    pub entries: Vec<CorpusEntry>,
    /// Paths under unrecognized directories, excluded from entries.
    pub skipped: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl Corpus {
    pub fn class_count(&self, label: usize) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    pub fn split_entries(&self, split: Split) -> Vec<&CorpusEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }
}

/// Scan `root/<ascii_name>/*.wav` into a corpus; unknown directories
/// are reported, not fatal. Entries are sorted by path.
pub fn scan_corpus(root: impl AsRef<Path>) -> Result<Corpus> {
    let root = root.as_ref();
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    let mut warnings = Vec::new();
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for dir in dirs {
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let label = label_by_name(name);
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().and_then(|x| x.to_str()) == Some("wav") && p.is_file()
            })
            .collect();
        files.sort();
        match label {
            Some(l) => {
                for path in files {
                    entries.push(CorpusEntry {
                        path,
                        label: l.index,
                        split: Split::Train,
                    });
                }
            }
            None => {
                warnings.push(format!("unrecognized class directory: {}", dir.display()));
                skipped.extend(files);
            }
        }
    }
    if entries.is_empty() {
        warnings.push(format!("no labeled WAV files under {}", root.display()));
    }
    Ok(Corpus {
        root: root.to_path_buf(),
        entries,
        skipped,
        warnings,
    })
}

/// Assign ceil(fraction * n) entries per class to the test split via a
/// seeded shuffle; deterministic for a given seed.
pub fn stratified_split(corpus: &mut Corpus, test_fraction: f64, seed: u64) -> Result<()> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Parameter(
            "test_fraction must be in (0, 1)".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for label in 0..LABEL_INVENTORY.len() {
        let mut idx: Vec<usize> = corpus
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label == label)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let n_test = ((test_fraction * idx.len() as f64).ceil() as usize).min(idx.len());
        // Fisher-Yates over the class indices
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        for (rank, &i) in idx.iter().enumerate() {
            corpus.entries[i].split = if rank < n_test {
                Split::Test
            } else {
                Split::Train
            };
        }
    }
    Ok(())
}

/// Manifest CSV: path, ascii label, split.
pub fn write_manifest(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "path,label,split")?;
    for e in &corpus.entries {
        let split = match e.split {
            Split::Train => "train",
            Split::Test => "test",
        };
        writeln!(
            w,
            "{},{},{split}",
            e.path.display(),
            LABEL_INVENTORY[e.label].ascii_name
        )?;
    }
    w.flush()?;
    Ok(())
}

pub const SYNTH_SAMPLE_RATE: u32 = 16_000;
pub const SYNTH_CLIP_LEN: usize = 4096;

fn per_file_rng(seed: u64, class: usize, index: usize) -> ChaCha20Rng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(((class as u64) << 32) | index as u64);
    ChaCha20Rng::seed_from_u64(mixed)
}

/// Synthesize one clip for a class: vowels are two-tone chords,
/// consonants a narrowband noise burst followed by a fixed vowel tone
/// (consonant-vowel structure), silence is low-amplitude noise.
pub fn synth_clip(class: usize, seed: u64, index: usize) -> Result<AudioClip> {
    let label = LABEL_INVENTORY
        .get(class)
        .ok_or_else(|| Error::Parameter(format!("class {class} out of range")))?;
    let mut rng = per_file_rng(seed, class, index);
    let sr = SYNTH_SAMPLE_RATE as f64;
    let n = SYNTH_CLIP_LEN;
    // keep tones on the analysis bin grid so leakage and image-resize
    // alignment are stable per class; per-file variety comes from gain
    // and phase jitter (global gain cancels in min-max normalization,
    // so images vary through frame-boundary and interference effects)
    let bin = sr / 256.0;
    let snap = |f: f64| (f / bin).round() * bin;
    let gain: f64 = rng.gen_range(0.7..1.0);
    let phase: f64 = rng.gen_range(0.0..2.0 * PI);
    let mut samples = vec![0.0f64; n];
    match label.kind {
        LabelKind::Vowel => {
            let f1 = snap(300.0 + 150.0 * class as f64);
            let f2 = snap(1500.0 + 400.0 * class as f64);
            for (i, s) in samples.iter_mut().enumerate() {
                let t = i as f64 / sr;
                *s = gain
                    * (0.45 * (2.0 * PI * f1 * t + phase).sin()
                        + 0.35 * (2.0 * PI * f2 * t).sin());
            }
        }
        LabelKind::Consonant => {
            let c = class - 6;
            let center = snap(600.0 + 280.0 * c as f64);
            // class-distinct burst length adds a temporal signature on
            // top of the spectral band position
            let burst_len = n * (20 + c) / 60;
            // narrowband noise: bin-aligned sinusoids with random
            // phases, so the band is fixed per class but the per-file
            // waveform varies
            let components: Vec<(f64, f64)> = (-1i32..=1)
                .map(|k| (center + bin * k as f64, rng.gen_range(0.0..2.0 * PI)))
                .collect();
            for (i, s) in samples.iter_mut().enumerate().take(burst_len) {
                let t = i as f64 / sr;
                let mut acc = 0.0;
                for &(f, ph) in &components {
                    acc += (2.0 * PI * f * t + ph).sin();
                }
                *s = gain * 0.3 * acc;
            }
            let (v1, v2) = (snap(350.0), snap(1400.0));
            for (i, s) in samples.iter_mut().enumerate().skip(burst_len) {
                let t = i as f64 / sr;
                *s = gain
                    * (0.45 * (2.0 * PI * v1 * t + phase).sin()
                        + 0.3 * (2.0 * PI * v2 * t).sin());
            }
        }
        LabelKind::Silence => {
            for s in samples.iter_mut() {
                *s = 0.01 * rng.gen_range(-1.0..1.0);
            }
        }
    }
    AudioClip::new(samples, SYNTH_SAMPLE_RATE)
}

/// Generate `per_class` WAVs for every inventory class under
/// `root/<ascii_name>/`; bit-identical for a given seed.
pub fn synth_corpus(root: impl AsRef<Path>, per_class: usize, seed: u64) -> Result<Corpus> {
    let root = root.as_ref();
    for label in LABEL_INVENTORY.iter() {
        let dir = root.join(label.ascii_name);
        std::fs::create_dir_all(&dir)?;
        for i in 0..per_class {
            let clip = synth_clip(label.index, seed, i)?;
            write_wav(&clip, dir.join(format!("{:03}.wav", i)), BitDepth::Pcm16)?;
        }
    }
    scan_corpus(root)
}

/// Featurize one split into an NHWC batch tensor plus one-hot labels.
pub fn load_features(
    corpus: &Corpus,
    split: Split,
    cfg: &FeatureConfig,
) -> Result<(Tensor, Tensor, Vec<usize>)> {
    let entries = corpus.split_entries(split);
    if entries.is_empty() {
        return Err(Error::Parameter("split has no entries".into()));
    }
    let (h, w) = (cfg.out_height, cfg.out_width);
    let k = LABEL_INVENTORY.len();
    let mut x = Vec::with_capacity(entries.len() * h * w);
    let mut y = vec![0.0; entries.len() * k];
    let mut labels = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        let clip = read_wav(&e.path)?;
        let image = featurize(&clip, cfg)?;
        for row in &image.pixels {
            x.extend_from_slice(row);
        }
        y[i * k + e.label] = 1.0;
        labels.push(e.label);
    }
    Ok((
        Tensor::from_vec(&[entries.len(), h, w, 1], x)?,
        Tensor::from_vec(&[entries.len(), k], y)?,
        labels,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inventory_is_the_fixed_30_class_list() {
        let inv = label_inventory();
        assert_eq!(inv.len(), 30);
        let vowels = inv.iter().filter(|l| l.kind == LabelKind::Vowel).count();
        let consonants = inv
            .iter()
            .filter(|l| l.kind == LabelKind::Consonant)
            .count();
        assert_eq!(vowels, 6);
        assert_eq!(consonants, 23);
        assert_eq!(vowels * consonants, 138);
        assert_eq!(inv[29].ascii_name, "sil");
        assert_eq!(inv[29].kind, LabelKind::Silence);
        for (i, l) in inv.iter().enumerate() {
            assert_eq!(l.index, i);
        }
        let mut names: Vec<&str> = inv.iter().map(|l| l.ascii_name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 30);
        assert_eq!(label_by_name("gh").map(|l| l.index), Some(28));
        assert!(label_by_name("xx").is_none());
    }

    #[test]
    fn scan_empty_root_warns() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = scan_corpus(dir.path()).unwrap();
        assert!(corpus.entries.is_empty());
        assert!(!corpus.warnings.is_empty());
        assert!(matches!(
            scan_corpus(dir.path().join("missing")),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn scan_labels_sil_and_skips_unknown_dirs() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("sil")).unwrap();
        std::fs::create_dir(dir.path().join("mystery")).unwrap();
        let clip = synth_clip(29, 1, 0).unwrap();
        write_wav(&clip, dir.path().join("sil/000.wav"), BitDepth::Pcm16).unwrap();
        write_wav(&clip, dir.path().join("mystery/000.wav"), BitDepth::Pcm16).unwrap();
        let corpus = scan_corpus(dir.path()).unwrap();
        assert_eq!(corpus.entries.len(), 1);
        assert_eq!(corpus.entries[0].label, 29);
        assert_eq!(corpus.skipped.len(), 1);
        assert!(corpus.warnings.iter().any(|w| w.contains("mystery")));
    }

    fn fake_corpus(per_class: &[usize]) -> Corpus {
        let mut entries = Vec::new();
        for (label, &n) in per_class.iter().enumerate() {
            for i in 0..n {
                entries.push(CorpusEntry {
                    path: PathBuf::from(format!("{label}/{i}.wav")),
                    label,
                    split: Split::Train,
                });
            }
        }
        Corpus {
            root: PathBuf::from("."),
            entries,
            skipped: vec![],
            warnings: vec![],
        }
    }

    #[test]
    fn stratified_split_counts_and_determinism() {
        let mut a = fake_corpus(&[10, 7, 0, 3]);
        stratified_split(&mut a, 0.2, 5).unwrap();
        assert_eq!(
            a.entries
                .iter()
                .filter(|e| e.label == 0 && e.split == Split::Test)
                .count(),
            2
        );
        // ceil(0.2 * 7) = 2, ceil(0.2 * 3) = 1
        assert_eq!(
            a.entries
                .iter()
                .filter(|e| e.label == 1 && e.split == Split::Test)
                .count(),
            2
        );
        assert_eq!(
            a.entries
                .iter()
                .filter(|e| e.label == 3 && e.split == Split::Test)
                .count(),
            1
        );
        let mut b = fake_corpus(&[10, 7, 0, 3]);
        stratified_split(&mut b, 0.2, 5).unwrap();
        assert_eq!(a, b);
        let mut c = fake_corpus(&[10, 7, 0, 3]);
        stratified_split(&mut c, 0.2, 6).unwrap();
        let total_test = c.entries.iter().filter(|e| e.split == Split::Test).count();
        assert_eq!(total_test, 5);
        assert!(matches!(
            stratified_split(&mut c, 0.0, 1),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn split_proportions_within_one_sample() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for trial in 0..20 {
            let sizes: Vec<usize> = (0..5).map(|_| rng.gen_range(1..40)).collect();
            let mut corpus = fake_corpus(&sizes);
            let fraction = 0.3;
            stratified_split(&mut corpus, fraction, trial).unwrap();
            for (label, &n) in sizes.iter().enumerate() {
                let t = corpus
                    .entries
                    .iter()
                    .filter(|e| e.label == label && e.split == Split::Test)
                    .count();
                let ideal = fraction * n as f64;
                assert!((t as f64 - ideal).abs() <= 1.0, "class {label}: {t} vs {ideal}");
            }
        }
    }

    #[test]
    fn synth_corpus_layout_and_reproducibility() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = synth_corpus(dir.path(), 2, 7).unwrap();
        assert_eq!(corpus.entries.len(), 60);
        for label in 0..30 {
            assert_eq!(corpus.class_count(label), 2);
        }
        let first = std::fs::read(dir.path().join("aa/000.wav")).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        synth_corpus(dir2.path(), 2, 7).unwrap();
        let again = std::fs::read(dir2.path().join("aa/000.wav")).unwrap();
        assert_eq!(first, again);
        let other_seed = synth_clip(0, 8, 0).unwrap();
        let this_seed = synth_clip(0, 7, 0).unwrap();
        assert_ne!(other_seed.samples, this_seed.samples);
    }

    #[test]
    fn featurized_classes_are_separated() {
        // class centroids: min inter-class L1 > mean intra-class L1
        let dir = tempfile::tempdir().unwrap();
        let mut corpus = synth_corpus(dir.path(), 4, 11).unwrap();
        stratified_split(&mut corpus, 0.25, 1).unwrap();
        let cfg = FeatureConfig::default();
        let (x, _, labels) = load_features(&corpus, Split::Train, &cfg).unwrap();
        let dim = 81 * 81;
        let mut centroids = vec![vec![0.0f64; dim]; 30];
        let mut counts = vec![0usize; 30];
        for (i, &l) in labels.iter().enumerate() {
            for (c, &v) in centroids[l].iter_mut().zip(&x.data[i * dim..(i + 1) * dim]) {
                *c += v;
            }
            counts[l] += 1;
        }
        for (c, count) in centroids.iter_mut().zip(&counts) {
            for v in c.iter_mut() {
                *v /= *count as f64;
            }
        }
        let l1 = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
        };
        let mut min_inter = f64::INFINITY;
        for i in 0..30 {
            for j in (i + 1)..30 {
                min_inter = min_inter.min(l1(&centroids[i], &centroids[j]));
            }
        }
        let mut intra_sum = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            intra_sum += l1(&x.data[i * dim..(i + 1) * dim], &centroids[l]);
        }
        let mean_intra = intra_sum / labels.len() as f64;
        assert!(
            min_inter > mean_intra,
            "min inter {min_inter} vs mean intra {mean_intra}"
        );
    }

    #[test]
    fn manifest_csv_round_trip_of_fields() {
        let dir = tempfile::tempdir().unwrap();
        let mut corpus = fake_corpus(&[2, 1]);
        stratified_split(&mut corpus, 0.5, 2).unwrap();
        let path = dir.path().join("manifest.csv");
        write_manifest(&corpus, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("path,label,split\n"));
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains(",aa,") && text.contains(",ii,"));
    }
}
