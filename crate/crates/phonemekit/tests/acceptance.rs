//! Acceptance gate: one test per release criterion. Each prints a
//! single PASS/FAIL line (visible with `--nocapture`) and fails the
//! suite when its criterion is not met.

use phonemekit::audio_io::AudioClip;
use phonemekit::dataset::{
    label_inventory, load_features, stratified_split, synth_corpus, Split,
};
use phonemekit::dsp::{dft_naive, fft, istft, mfcc, stft, Matrix, StftParams, WindowKind};
use phonemekit::eval::{f1_score, report_from_rows, top_k_accuracy};
use phonemekit::features::FeatureConfig;
use phonemekit::nn::{
    cross_entropy, fit, gradient_check, gradient_check_sampled, optimizer_step, predict,
    Activation, Gradients, Layer, LayerSpec, Model, OptimizerKind, OptimizerState, ParamGrads,
    StageShape, Tensor, TrainConfig,
};
use phonemekit::phoneme_net::build_phoneme_cnn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::time::Instant;

fn criterion(name: &str, body: impl FnOnce() -> Result<(), String>) {
    match body() {
        Ok(()) => println!("PASS {name}"),
        Err(msg) => {
            println!("FAIL {name}: {msg}");
            panic!("{name}: {msg}");
        }
    }
}

fn check(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

#[test]
fn fft_oracle_equivalence() {
    criterion("fft-oracle-equivalence", || {
        let sizes = [8usize, 16, 32, 64, 128, 256];
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let start = Instant::now();
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            let n = sizes[i % sizes.len()];
            let signal: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fast = fft(&signal, n).map_err(|e| e.to_string())?;
            let slow = dft_naive(&signal);
            let scale = slow.iter().map(|c| c.norm()).fold(1e-12, f64::max);
            for (a, b) in fast.iter().zip(&slow) {
                worst = worst.max((a - b).norm() / scale);
            }
        }
        let elapsed = start.elapsed();
        check(worst < 1e-9, format!("relative error {worst:.3e} >= 1e-9"))?;
        check(
            elapsed.as_secs_f64() < 10.0,
            format!("took {elapsed:?} (limit 10 s)"),
        )
    });
}

#[test]
fn stft_round_trip() {
    criterion("stft-round-trip", || {
        let params = StftParams {
            window_len: 1024,
            hop: 256,
            fft_size: 1024,
            window_kind: WindowKind::Hann,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let samples: Vec<f64> = (0..8192).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let clip = AudioClip::new(samples.clone(), 16_000).map_err(|e| e.to_string())?;
            let frames = stft(&clip, params).map_err(|e| e.to_string())?;
            let back = istft(&frames).map_err(|e| e.to_string())?;
            for i in params.window_len..samples.len() - params.window_len {
                worst = worst.max((back.samples[i] - samples[i]).abs());
            }
        }
        check(worst < 1e-8, format!("interior error {worst:.3e} >= 1e-8"))
    });
}

#[test]
fn mfcc_gain_property() {
    criterion("mfcc-gain-property", || {
        let params = StftParams::default();
        let sr = 44_100u32;
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        // voiced frame: harmonic stack plus low-level broadband noise so
        // every mel band sits well above the log floor
        let samples: Vec<f64> = (0..4096)
            .map(|i| {
                let t = i as f64 / sr as f64;
                let mut v = 0.0;
                for h in 1..=8 {
                    v += (2.0 * std::f64::consts::PI * 150.0 * h as f64 * t).sin()
                        / h as f64;
                }
                v * 0.1 + rng.gen_range(-0.05..0.05)
            })
            .collect();
        let clip = AudioClip::new(samples.clone(), sr).map_err(|e| e.to_string())?;
        let scaled = AudioClip::new(samples.iter().map(|s| s * 10.0).collect(), sr)
            .map_err(|e| e.to_string())?;
        let a = mfcc(&clip, params, 40, 13).map_err(|e| e.to_string())?;
        let b = mfcc(&scaled, params, 40, 13).map_err(|e| e.to_string())?;
        let shift = 100.0f64.ln() * 40.0f64.sqrt();
        for (ra, rb) in a.iter().zip(&b) {
            let c0_err = (rb[0] - ra[0] - shift).abs();
            check(c0_err < 1e-6, format!("c0 shift error {c0_err:.3e} >= 1e-6"))?;
            for (x, y) in ra[1..].iter().zip(&rb[1..]) {
                let d = (x - y).abs();
                check(d < 1e-9, format!("c1..12 drift {d:.3e} >= 1e-9"))?;
            }
        }
        Ok(())
    });
}

fn rand_batch(shape: &[usize], classes: usize, seed: u64) -> (Tensor, Tensor) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let x = Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .unwrap();
    let batch = shape[0];
    let mut y = vec![0.0; batch * classes];
    for b in 0..batch {
        y[b * classes + rng.gen_range(0..classes)] = 1.0;
    }
    (x, Tensor::from_vec(&[batch, classes], y).unwrap())
}

fn softmax_head(units: usize) -> LayerSpec {
    LayerSpec::Dense {
        units,
        activation: Activation::Softmax,
        max_norm: None,
    }
}

#[test]
fn gradient_check_all_layer_kinds() {
    criterion("gradient-check", || {
        let start = Instant::now();

        // every layer kind of the full stack, scaled to a 9x9 input
        let conv = |f: usize, k: usize, s: usize| LayerSpec::Conv2D {
            n_filters: f,
            kernel: (k, k),
            stride: (s, s),
        };
        let reduced = vec![
            conv(4, 3, 1),
            LayerSpec::Dropout { rate: 0.2 },
            conv(4, 3, 1),
            LayerSpec::MaxPool2D { pool: (3, 3) },
            conv(8, 3, 1),
            LayerSpec::Dropout { rate: 0.2 },
            conv(8, 3, 2),
            LayerSpec::MaxPool2D { pool: (3, 3) },
            LayerSpec::Flatten,
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense {
                units: 16,
                activation: Activation::Relu,
                max_norm: Some(3.0),
            },
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense {
                units: 8,
                activation: Activation::Relu,
                max_norm: Some(3.0),
            },
            LayerSpec::Dropout { rate: 0.6 },
            softmax_head(3),
        ];
        let mut model = Model::new([9, 9, 1], &reduced, vec![]).map_err(|e| e.to_string())?;
        model.initialize(&mut ChaCha20Rng::seed_from_u64(10));
        let (x, y) = rand_batch(&[2, 9, 9, 1], 3, 11);
        let err = gradient_check(&model, &x, &y, 1e-5).map_err(|e| e.to_string())?;
        check(
            err < 1e-4,
            format!("reduced stack max relative error {err:.3e} >= 1e-4"),
        )?;

        // each parameterized/routing layer in isolation at the full
        // configuration (filters, kernel, stride as in the deployed
        // network), sampled finite differences
        let isolated: Vec<([usize; 3], Vec<LayerSpec>)> = vec![
            ([9, 9, 1], vec![conv(32, 3, 1), LayerSpec::Flatten, softmax_head(3)]),
            ([7, 7, 32], vec![conv(32, 3, 1), LayerSpec::Flatten, softmax_head(3)]),
            ([7, 7, 32], vec![conv(64, 3, 1), LayerSpec::Flatten, softmax_head(3)]),
            ([9, 9, 64], vec![conv(64, 5, 3), LayerSpec::Flatten, softmax_head(3)]),
            ([9, 9, 64], vec![conv(128, 5, 3), LayerSpec::Flatten, softmax_head(3)]),
            ([6, 6, 128], vec![conv(128, 5, 3), LayerSpec::Flatten, softmax_head(3)]),
            (
                [9, 9, 32],
                vec![
                    LayerSpec::MaxPool2D { pool: (3, 3) },
                    LayerSpec::Flatten,
                    softmax_head(3),
                ],
            ),
            (
                [4, 4, 8],
                vec![
                    LayerSpec::Flatten,
                    LayerSpec::Dense {
                        units: 1024,
                        activation: Activation::Relu,
                        max_norm: Some(3.0),
                    },
                    softmax_head(3),
                ],
            ),
            (
                [32, 32, 1],
                vec![
                    LayerSpec::Flatten,
                    LayerSpec::Dense {
                        units: 128,
                        activation: Activation::Relu,
                        max_norm: Some(3.0),
                    },
                    softmax_head(3),
                ],
            ),
            ([4, 4, 8], vec![LayerSpec::Flatten, softmax_head(30)]),
        ];
        for (i, (shape, specs)) in isolated.iter().enumerate() {
            let classes = match specs.last() {
                Some(LayerSpec::Dense { units, .. }) => *units,
                _ => unreachable!(),
            };
            let mut m =
                Model::new(*shape, specs, vec![]).map_err(|e| e.to_string())?;
            m.initialize(&mut ChaCha20Rng::seed_from_u64(20 + i as u64));
            let (x, y) = rand_batch(&[1, shape[0], shape[1], shape[2]], classes, 40 + i as u64);
            let err = gradient_check_sampled(&m, &x, &y, 1e-5, 120, 60 + i as u64)
                .map_err(|e| e.to_string())?;
            check(
                err < 1e-4,
                format!("isolated layer case {i} max relative error {err:.3e} >= 1e-4"),
            )?;
        }
        let elapsed = start.elapsed();
        check(
            elapsed.as_secs_f64() < 60.0,
            format!("took {elapsed:?} (limit 60 s)"),
        )
    });
}

#[test]
fn shape_contract() {
    criterion("shape-contract", || {
        let net = build_phoneme_cnn([81, 81, 1], 30, vec![]).map_err(|e| e.to_string())?;
        let kinds: Vec<&str> = net.layers.iter().map(|l| l.kind_name()).collect();
        check(
            kinds
                == vec![
                    "conv2d", "dropout", "conv2d", "maxpool2d", "conv2d", "dropout",
                    "conv2d", "maxpool2d", "conv2d", "dropout", "conv2d", "maxpool2d",
                    "flatten", "dropout", "dense", "dropout", "dense", "dropout", "dense",
                ],
            format!("layer kind sequence mismatch: {kinds:?}"),
        )?;
        let convs: Vec<(usize, usize, usize)> = net
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::Conv2D(c) => {
                    check(c.kernel_h == c.kernel_w && c.stride_h == c.stride_w, format!(
                        "non-square conv {c:?}"
                    ))
                    .ok()?;
                    Some((c.n_filters, c.kernel_h, c.stride_h))
                }
                _ => None,
            })
            .collect();
        check(
            convs == vec![(32, 3, 1), (32, 3, 1), (64, 3, 1), (64, 5, 3), (128, 5, 3), (128, 5, 3)],
            format!("conv hyperparameters mismatch: {convs:?}"),
        )?;
        let pools: Vec<(usize, usize)> = net
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::MaxPool2D { pool_h, pool_w } => Some((*pool_h, *pool_w)),
                _ => None,
            })
            .collect();
        check(pools == vec![(3, 3); 3], format!("pool sizes mismatch: {pools:?}"))?;
        let drops: Vec<f64> = net
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::Dropout { rate } => Some(*rate),
                _ => None,
            })
            .collect();
        check(
            drops == vec![0.2, 0.2, 0.2, 0.5, 0.5, 0.6],
            format!("dropout rates mismatch: {drops:?}"),
        )?;
        let denses: Vec<(usize, Activation, Option<f64>)> = net
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::Dense(d) => Some((d.units, d.activation, d.max_norm)),
                _ => None,
            })
            .collect();
        check(
            denses
                == vec![
                    (1024, Activation::Relu, Some(3.0)),
                    (128, Activation::Relu, Some(3.0)),
                    (30, Activation::Softmax, None),
                ],
            format!("dense configuration mismatch: {denses:?}"),
        )?;
        let trace = net.shape_trace();
        let flatten_width = trace
            .iter()
            .find_map(|s| match s {
                StageShape::Flat { width } => Some(*width),
                _ => None,
            })
            .ok_or("no flatten stage")?;
        check(flatten_width == 128, format!("flatten width {flatten_width} != 128"))?;
        check(
            net.output_width() == 30,
            format!("output width {} != 30", net.output_width()),
        )
    });
}

#[test]
fn max_norm_constraint() {
    criterion("max-norm-constraint", || {
        let specs = vec![
            LayerSpec::Conv2D {
                n_filters: 4,
                kernel: (3, 3),
                stride: (2, 2),
            },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                units: 8,
                activation: Activation::Relu,
                max_norm: Some(3.0),
            },
            LayerSpec::Dense {
                units: 5,
                activation: Activation::Relu,
                max_norm: Some(3.0),
            },
            softmax_head(4),
        ];
        for kind in [OptimizerKind::sgd(), OptimizerKind::adam(), OptimizerKind::adadelta()] {
            let mut model =
                Model::new([6, 6, 1], &specs, vec![]).map_err(|e| e.to_string())?;
            model.initialize(&mut ChaCha20Rng::seed_from_u64(5));
            let mut state = OptimizerState::new(kind, &model);
            let mut rng = ChaCha20Rng::seed_from_u64(6);
            for _ in 0..100 {
                let per_layer = model
                    .layers
                    .iter()
                    .map(|l| match l {
                        Layer::Conv2D(c) => Some(ParamGrads {
                            weights: (0..c.weights.len())
                                .map(|_| rng.gen_range(-1.0..1.0))
                                .collect(),
                            bias: (0..c.bias.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                        }),
                        Layer::Dense(d) => Some(ParamGrads {
                            weights: (0..d.weights.len())
                                .map(|_| rng.gen_range(-1.0..1.0))
                                .collect(),
                            bias: (0..d.bias.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                        }),
                        _ => None,
                    })
                    .collect();
                optimizer_step(&mut state, &mut model, &Gradients { per_layer })
                    .map_err(|e| e.to_string())?;
            }
            for layer in &model.layers {
                let Layer::Dense(d) = layer else { continue };
                let Some(bound) = d.max_norm else { continue };
                for j in 0..d.units {
                    let norm: f64 = (0..d.in_dim)
                        .map(|i| d.weights[i * d.units + j].powi(2))
                        .sum::<f64>()
                        .sqrt();
                    check(
                        norm <= bound + 1e-9,
                        format!("{kind:?}: column norm {norm} > {bound} + 1e-9"),
                    )?;
                }
            }
        }
        Ok(())
    });
}

/// Published per-class test results: (precision, recall, f1, support)
/// for the 30 classes, plus weighted averages 0.77/0.76/0.76 over a
/// total support of 360.
const REFERENCE_ROWS: [(f64, f64, f64, usize); 30] = [
    (0.78, 0.58, 0.67, 12),
    (0.70, 0.58, 0.64, 12),
    (0.78, 0.64, 0.70, 11),
    (0.59, 0.83, 0.69, 12),
    (0.54, 0.64, 0.58, 11),
    (0.58, 0.92, 0.71, 12),
    (0.75, 0.69, 0.72, 13),
    (0.80, 0.73, 0.76, 11),
    (0.91, 0.67, 0.77, 15),
    (0.67, 0.50, 0.57, 16),
    (0.62, 0.80, 0.70, 10),
    (0.69, 0.69, 0.69, 13),
    (0.79, 0.69, 0.73, 16),
    (0.58, 0.78, 0.67, 9),
    (0.74, 0.88, 0.80, 16),
    (0.60, 0.50, 0.55, 12),
    (0.62, 0.56, 0.59, 9),
    (0.77, 0.77, 0.77, 13),
    (0.54, 0.50, 0.52, 14),
    (0.75, 0.67, 0.71, 9),
    (0.75, 0.90, 0.82, 10),
    (0.73, 0.67, 0.70, 12),
    (0.78, 0.78, 0.78, 9),
    (0.90, 1.00, 0.95, 9),
    (1.00, 1.00, 1.00, 14),
    (1.00, 1.00, 1.00, 13),
    (1.00, 0.94, 0.97, 16),
    (1.00, 1.00, 1.00, 9),
    (1.00, 1.00, 1.00, 13),
    (1.00, 1.00, 1.00, 9),
];

#[test]
fn reference_table_arithmetic() {
    criterion("reference-table-arithmetic", || {
        for (i, &(p, r, f1, _)) in REFERENCE_ROWS.iter().enumerate() {
            let computed = f1_score(p, r);
            let d = (computed - f1).abs();
            check(
                d <= 0.01,
                format!("row {}: recomputed F1 {computed:.4} vs {f1} (|d| {d:.4})", i + 1),
            )?;
        }
        let report = report_from_rows(&REFERENCE_ROWS);
        let (wp, wr, wf) = report.weighted;
        check((wp - 0.77).abs() <= 0.01, format!("weighted precision {wp:.4}"))?;
        check((wr - 0.76).abs() <= 0.01, format!("weighted recall {wr:.4}"))?;
        check((wf - 0.76).abs() <= 0.01, format!("weighted F1 {wf:.4}"))?;
        check(
            report.total_support == 360,
            format!("total support {} != 360", report.total_support),
        )
    });
}

#[test]
fn metric_laws() {
    criterion("metric-laws", || {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let n = 100_000;
        let mut probs: Matrix = Vec::with_capacity(n);
        let mut truth = Vec::with_capacity(n);
        for _ in 0..n {
            let mut row: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..1.0)).collect();
            let sum: f64 = row.iter().sum();
            for v in &mut row {
                *v /= sum;
            }
            probs.push(row);
            truth.push(rng.gen_range(0..30));
        }
        let mut prev = 0.0;
        for k in 1..=30 {
            let acc = top_k_accuracy(&probs, &truth, k).map_err(|e| e.to_string())?;
            check(acc >= prev, format!("top-{k} {acc} < top-{} {prev}", k - 1))?;
            prev = acc;
        }
        check(prev == 1.0, format!("top-30 {prev} != 1.0"))?;
        let top3 = top_k_accuracy(&probs, &truth, 3).map_err(|e| e.to_string())?;
        check(
            (top3 - 0.1).abs() <= 0.01,
            format!("uniform-random top-3 {top3:.4} outside 0.1 +/- 0.01"),
        )
    });
}

#[test]
fn denoising_snr_gain() {
    criterion("denoising-snr-gain", || {
        let sr = 16_000u32;
        let seg = 8192usize;
        let tone_hz = 1000.0;
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        // uniform noise on [-1, 1] has power 1/3; the tone amplitude is
        // chosen for 0 dB SNR in the voiced segment
        let amp = (2.0f64 / 3.0).sqrt();
        let mut clean = vec![0.0; 3 * seg];
        let mut noisy = Vec::with_capacity(3 * seg);
        for i in 0..3 * seg {
            if (seg..2 * seg).contains(&i) {
                let t = i as f64 / sr as f64;
                clean[i] = amp * (2.0 * std::f64::consts::PI * tone_hz * t).sin();
            }
            noisy.push(0.5 * (clean[i] + rng.gen_range(-1.0..1.0)));
        }
        let clean: Vec<f64> = clean.iter().map(|v| 0.5 * v).collect();
        let clip = AudioClip::new(noisy, sr).map_err(|e| e.to_string())?;
        let out = phonemekit::denoise::denoise(
            &clip,
            phonemekit::denoise::DEFAULT_PASSES,
            phonemekit::denoise::DEFAULT_ALPHA,
            phonemekit::denoise::DEFAULT_BETA,
            phonemekit::denoise::DEFAULT_FRACTION,
        )
        .map_err(|e| e.to_string())?;
        check(
            out.samples.len() == clip.samples.len(),
            "denoise changed length".into(),
        )?;
        // SNR over the voiced segment: project the output onto the
        // clean tone, the projection is signal and the rest residual
        let y = &out.samples[seg..2 * seg];
        let c = &clean[seg..2 * seg];
        let cc: f64 = c.iter().map(|v| v * v).sum();
        let yc: f64 = y.iter().zip(c).map(|(a, b)| a * b).sum();
        let alpha = yc / cc;
        let sig = alpha * alpha * cc;
        let res: f64 = y
            .iter()
            .zip(c)
            .map(|(a, b)| (a - alpha * b).powi(2))
            .sum();
        let snr_db = 10.0 * (sig / res).log10();
        check(snr_db >= 6.0, format!("output SNR {snr_db:.2} dB < 6 dB"))?;
        // band-energy retention: output energy near the tone frequency
        // vs the clean tone's energy there
        let band_energy = |x: &[f64]| -> f64 {
            let n = 8192;
            let spec = fft(x, n).unwrap();
            let center = (tone_hz * n as f64 / sr as f64).round() as usize;
            (center - 2..=center + 2).map(|b| spec[b].norm_sqr()).sum()
        };
        let retention = band_energy(y) / band_energy(c);
        check(
            retention >= 0.9,
            format!("band retention {retention:.3} < 0.9"),
        )
    });
}

#[test]
fn cross_entropy_closed_forms() {
    criterion("cross-entropy-closed-forms", || {
        let n = 4;
        let uniform = Tensor::from_vec(&[n, 30], vec![1.0 / 30.0; n * 30]).unwrap();
        let mut onehot = vec![0.0; n * 30];
        for b in 0..n {
            onehot[b * 30 + (b * 7) % 30] = 1.0;
        }
        let y = Tensor::from_vec(&[n, 30], onehot.clone()).unwrap();
        let loss = cross_entropy(&uniform, &y).map_err(|e| e.to_string())?;
        let d = (loss - 30.0f64.ln()).abs();
        check(d <= 1e-9, format!("uniform loss off ln(30) by {d:.3e}"))?;
        let perfect = Tensor::from_vec(&[n, 30], onehot).unwrap();
        let loss = cross_entropy(&perfect, &y).map_err(|e| e.to_string())?;
        check(loss == 0.0, format!("perfect-prediction loss {loss} != 0"))
    });
}

struct PipelineResult {
    weights_bits: Vec<u64>,
    top1: f64,
    top3: f64,
}

fn run_pipeline(epochs: usize) -> Result<PipelineResult, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut corpus = synth_corpus(dir.path(), 20, 42).map_err(|e| e.to_string())?;
    stratified_split(&mut corpus, 0.2, 42).map_err(|e| e.to_string())?;
    let cfg = FeatureConfig::default();
    let (xtr, ytr, _) = load_features(&corpus, Split::Train, &cfg).map_err(|e| e.to_string())?;
    let (xte, _, truth) = load_features(&corpus, Split::Test, &cfg).map_err(|e| e.to_string())?;
    let labels = label_inventory()
        .iter()
        .map(|l| l.ascii_name.to_string())
        .collect();
    let mut net = build_phoneme_cnn([81, 81, 1], 30, labels).map_err(|e| e.to_string())?;
    net.initialize(&mut ChaCha20Rng::seed_from_u64(42));
    let mut state = OptimizerState::new(OptimizerKind::adadelta(), &net);
    let tcfg = TrainConfig {
        epochs,
        batch_size: 32,
        seed: 42,
    };
    fit(&mut net, &xtr, &ytr, &tcfg, &mut state, None).map_err(|e| e.to_string())?;
    let probs = predict(&net, &xte).map_err(|e| e.to_string())?;
    let top1 = top_k_accuracy(&probs, &truth, 1).map_err(|e| e.to_string())?;
    let top3 = top_k_accuracy(&probs, &truth, 3).map_err(|e| e.to_string())?;
    let mut weights_bits = Vec::new();
    for layer in &net.layers {
        let (w, b) = match layer {
            Layer::Conv2D(c) => (&c.weights, &c.bias),
            Layer::Dense(d) => (&d.weights, &d.bias),
            _ => continue,
        };
        weights_bits.extend(w.iter().chain(b.iter()).map(|v| v.to_bits()));
    }
    Ok(PipelineResult {
        weights_bits,
        top1,
        top3,
    })
}

#[test]
fn end_to_end_training() {
    criterion("end-to-end-training", || {
        let epochs = 20;
        let start = Instant::now();
        let first = run_pipeline(epochs)?;
        let elapsed = start.elapsed();
        check(
            first.top1 >= 0.90,
            format!("top-1 accuracy {:.4} < 0.90", first.top1),
        )?;
        check(
            first.top3 >= 0.98,
            format!("top-3 accuracy {:.4} < 0.98", first.top3),
        )?;
        check(
            elapsed.as_secs_f64() <= 30.0 * 60.0,
            format!("pipeline took {elapsed:?} (limit 30 min)"),
        )?;
        let second = run_pipeline(epochs)?;
        check(
            first.weights_bits == second.weights_bits
                && first.top1 == second.top1
                && first.top3 == second.top3,
            "rerun with the same seed produced different results".into(),
        )
    });
}
