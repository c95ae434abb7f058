//! Command-line entry point: one subcommand per pipeline stage.

use crate::audio_io::{read_wav, write_wav, BitDepth};
use crate::dataset::{
    label_inventory, load_features, scan_corpus, stratified_split, synth_corpus, write_manifest,
    Split,
};
use crate::denoise;
use crate::dsp::{write_matrix_blob, write_matrix_csv};
use crate::eval::{
    confusion, format_report, precision_recall_f1, report_csv, report_from_rows, top_k_accuracy,
};
use crate::features::{export_pgm, featurize, FeatureConfig, FrontEnd};
use crate::nn::{
    fit, load_model, predict, save_model, OptimizerKind, OptimizerState, TrainConfig,
};
use crate::phoneme_net::build_phoneme_cnn;
use crate::{Error, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;
use std::path::PathBuf;

/// Experiment manifest mirroring the tunable run options; explicit
/// flags win over file values.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    feature: Option<FeatureConfig>,
    train: Option<TrainConfig>,
    optimizer: Option<String>,
    test_fraction: Option<f64>,
}

#[derive(Parser)]
#[command(name = "phonemekit", version, about = "Phoneme recognition toolkit")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus of WAV files.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        per_class: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write a manifest CSV next to the corpus root.
        #[arg(long)]
        manifest: bool,
    },
    /// Extract features from one WAV into CSV, binary blob, or PGM.
    Extract {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = ["stft", "mfcc"])]
        front_end: Option<String>,
        #[arg(long, value_parser = ["csv", "blob", "pgm"], default_value = "csv")]
        format: String,
        #[arg(long)]
        binarize: bool,
    },
    /// Noise-fingerprint subtraction: WAV in, cleaned WAV out.
    Denoise {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the classifier on a corpus directory.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_parser = ["sgd", "adam", "adadelta"])]
        optimizer: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = ["stft", "mfcc"])]
        front_end: Option<String>,
        #[arg(long)]
        test_fraction: Option<f64>,
    },
    /// Evaluate a trained model on the held-out test split.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long, value_parser = ["stft", "mfcc"])]
        front_end: Option<String>,
        /// Also write the per-class metrics as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify one WAV and print the top candidates.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        #[arg(long, default_value_t = 3)]
        top: usize,
        #[arg(long, value_parser = ["stft", "mfcc"])]
        front_end: Option<String>,
    },
    /// Re-render a metrics CSV (from evaluate --out) as a text table.
    Report {
        #[arg(long)]
        csv: PathBuf,
    },
}

/// Parse argv and dispatch. Exit 0 on success, 1 on user error, 2 on
/// internal or numeric failure.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own usage/help text
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e @ Error::Numeric(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_file_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Format(format!("config {}: {e}", p.display())))
        }
    }
}

fn parse_front_end(name: &str) -> Result<FrontEnd> {
    match name {
        "stft" => Ok(FrontEnd::Stft),
        "mfcc" => Ok(FrontEnd::Mfcc),
        other => Err(Error::Parameter(format!("unknown front end '{other}'"))),
    }
}

fn feature_config(file: &FileConfig, front_end: &Option<String>) -> Result<FeatureConfig> {
    let mut cfg = file.feature.unwrap_or_default();
    if let Some(fe) = front_end {
        cfg.front_end = parse_front_end(fe)?;
    }
    Ok(cfg)
}

fn split_corpus(root: &PathBuf, fraction: f64, seed: u64) -> Result<crate::dataset::Corpus> {
    let mut corpus = scan_corpus(root)?;
    for w in &corpus.warnings {
        eprintln!("warning: {w}");
    }
    stratified_split(&mut corpus, fraction, seed)?;
    Ok(corpus)
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = load_file_config(&cli.config)?;
    match cli.command {
        Command::Synth {
            out,
            per_class,
            seed,
            manifest,
        } => {
            let seed = seed.unwrap_or(42);
            let corpus = synth_corpus(&out, per_class, seed)?;
            if manifest {
                write_manifest(&corpus, out.join("manifest.csv"))?;
            }
            println!(
                "wrote {} clips across {} classes under {}",
                corpus.entries.len(),
                label_inventory().len(),
                out.display()
            );
            Ok(())
        }
        Command::Extract {
            wav,
            out,
            front_end,
            format,
            binarize,
        } => {
            let mut cfg = feature_config(&file, &front_end)?;
            if binarize {
                cfg.binarize = true;
            }
            let clip = read_wav(&wav)?;
            let image = featurize(&clip, &cfg)?;
            match format.as_str() {
                "csv" => write_matrix_csv(&image.pixels, &out)?,
                "blob" => write_matrix_blob(&image.pixels, &out)?,
                "pgm" => export_pgm(&image, &out)?,
                other => {
                    return Err(Error::Parameter(format!("unknown format '{other}'")))
                }
            }
            println!(
                "{} -> {} ({}x{} {format})",
                wav.display(),
                out.display(),
                image.height(),
                image.width()
            );
            Ok(())
        }
        Command::Denoise { wav, out } => {
            let clip = read_wav(&wav)?;
            let cleaned = denoise::denoise(
                &clip,
                denoise::DEFAULT_PASSES,
                denoise::DEFAULT_ALPHA,
                denoise::DEFAULT_BETA,
                denoise::DEFAULT_FRACTION,
            )?;
            write_wav(&cleaned, &out, BitDepth::Pcm16)?;
            println!("{} -> {}", wav.display(), out.display());
            Ok(())
        }
        Command::Train {
            corpus,
            model,
            optimizer,
            epochs,
            batch_size,
            seed,
            front_end,
            test_fraction,
        } => {
            let fcfg = feature_config(&file, &front_end)?;
            let mut tcfg = file.train.unwrap_or_default();
            if let Some(e) = epochs {
                tcfg.epochs = e;
            }
            if let Some(b) = batch_size {
                tcfg.batch_size = b;
            }
            if let Some(s) = seed {
                tcfg.seed = s;
            }
            let opt_name = optimizer
                .or_else(|| file.optimizer.clone())
                .unwrap_or_else(|| "adadelta".to_string());
            let kind = OptimizerKind::parse(&opt_name)?;
            let fraction = test_fraction.or(file.test_fraction).unwrap_or(0.2);
            let split = split_corpus(&corpus, fraction, tcfg.seed)?;
            let (x, y, _) = load_features(&split, Split::Train, &fcfg)?;
            eprintln!(
                "training on {} clips ({}x{} {:?} features, {opt_name})",
                x.shape[0], fcfg.out_height, fcfg.out_width, fcfg.front_end
            );
            let labels = label_inventory()
                .iter()
                .map(|l| l.ascii_name.to_string())
                .collect();
            let mut net =
                build_phoneme_cnn([fcfg.out_height, fcfg.out_width, 1], 30, labels)?;
            net.initialize(&mut ChaCha20Rng::seed_from_u64(tcfg.seed));
            let mut state = OptimizerState::new(kind, &net);
            let history = fit(&mut net, &x, &y, &tcfg, &mut state, None)?;
            for (i, e) in history.epochs.iter().enumerate() {
                eprintln!(
                    "epoch {:3}: loss {:.4} accuracy {:.3}",
                    i + 1,
                    e.loss,
                    e.accuracy
                );
            }
            save_model(&net, &model)?;
            let last = history.epochs.last().expect("epochs >= 1");
            println!(
                "saved {} (final train loss {:.4}, accuracy {:.3})",
                model.display(),
                last.loss,
                last.accuracy
            );
            Ok(())
        }
        Command::Evaluate {
            corpus,
            model,
            seed,
            test_fraction,
            front_end,
            out,
        } => {
            let fcfg = feature_config(&file, &front_end)?;
            let tcfg = file.train.unwrap_or_default();
            let seed = seed.unwrap_or(tcfg.seed);
            let fraction = test_fraction.or(file.test_fraction).unwrap_or(0.2);
            let net = load_model(&model)?;
            let split = split_corpus(&corpus, fraction, seed)?;
            let (x, _, truth) = load_features(&split, Split::Test, &fcfg)?;
            let probs = predict(&net, &x)?;
            let predicted: Vec<usize> = probs
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                        .map(|(i, _)| i)
                        .unwrap_or(0)
                })
                .collect();
            let mut cm = confusion(&predicted, &truth, 30)?;
            cm.labels = label_inventory()
                .iter()
                .map(|l| l.ascii_name.to_string())
                .collect();
            let report = precision_recall_f1(&cm);
            print!("{}", format_report(&report));
            let top1 = top_k_accuracy(&probs, &truth, 1)?;
            let top3 = top_k_accuracy(&probs, &truth, 3)?;
            println!("top-1 accuracy: {top1:.4}");
            println!("top-3 accuracy: {top3:.4}");
            if let Some(path) = out {
                std::fs::write(&path, report_csv(&report))?;
                eprintln!("metrics csv written to {}", path.display());
            }
            Ok(())
        }
        Command::Predict {
            model,
            wav,
            top,
            front_end,
        } => {
            let fcfg = feature_config(&file, &front_end)?;
            let net = load_model(&model)?;
            let clip = read_wav(&wav)?;
            let image = featurize(&clip, &fcfg)?;
            let mut data = Vec::with_capacity(image.height() * image.width());
            for row in &image.pixels {
                data.extend_from_slice(row);
            }
            let x = crate::nn::Tensor::from_vec(
                &[1, image.height(), image.width(), 1],
                data,
            )?;
            let probs = predict(&net, &x)?;
            let row = &probs[0];
            if top == 0 || top > row.len() {
                return Err(Error::Parameter(format!(
                    "--top {top} outside 1..={}",
                    row.len()
                )));
            }
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
            for (rank, &c) in order.iter().take(top).enumerate() {
                let name = net
                    .class_labels
                    .get(c)
                    .cloned()
                    .unwrap_or_else(|| c.to_string());
                println!("{} {} {:.6}", rank + 1, name, row[c]);
            }
            Ok(())
        }
        Command::Report { csv } => {
            let text = std::fs::read_to_string(&csv)?;
            let mut rows = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if i == 0 || line.starts_with("weighted_avg") || line.starts_with("macro_avg") {
                    continue;
                }
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != 5 {
                    return Err(Error::Format(format!("line {}: expected 5 fields", i + 1)));
                }
                let parse = |s: &str| -> Result<f64> {
                    s.parse()
                        .map_err(|_| Error::Format(format!("line {}: bad number '{s}'", i + 1)))
                };
                rows.push((
                    parse(fields[1])?,
                    parse(fields[2])?,
                    parse(fields[3])?,
                    fields[4].parse::<usize>().map_err(|_| {
                        Error::Format(format!("line {}: bad support '{}'", i + 1, fields[4]))
                    })?,
                ));
            }
            if rows.is_empty() {
                return Err(Error::Format("no class rows in csv".into()));
            }
            print!("{}", format_report(&report_from_rows(&rows)));
            Ok(())
        }
    }
}
