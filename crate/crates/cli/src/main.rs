use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use signbench::error::{io_at, BenchError};
use signbench::{harness, image_io, manifest_io, render, stats_io, synth, validate};

use signbench_core::augment::{apply, sample_policy, AugmentationPolicy};
use signbench_core::dataset::{split_frames, subsample_manifest, SplitMode, SplitTag};
use signbench_core::explain::{explain, grid_segments, Baseline, ExplainParams};
use signbench_core::image::resize_bilinear;
use signbench_core::nn::{
    build_model, evaluate, frames_with_tag, from_bytes, to_bytes, train, Batch, DataSplit,
    ModelConfig, ModelKind, MultiStreamModel, Scalar, Tensor, TrainConfig,
};
use signbench_core::stats::mean_and_sd;
use signbench_core::{Image, RngState};

type Result<T> = signbench::Result<T>;

#[derive(Parser)]
#[command(
    name = "signbench",
    version,
    about = "Frame-rate and augmentation experiments for sign-language frame classification"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a manifest: structure, file existence, decodability, mask
    /// dimensions, and hand-box bounds. Exits 1 if violations are found.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Decimate every clip to a lower capture rate and write the result.
    Subsample {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        fps: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign train/test tags (validation-tagged frames are left alone).
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        fraction: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Frames)]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw one augmentation from a policy and write the transformed image.
    AugmentPreview {
        #[arg(long)]
        image: PathBuf,
        /// Policy JSON; defaults to the built-in policy when omitted.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Composite every frame against a pool background chosen by seeded
    /// draw; writes a self-contained manifest under --out-dir.
    PrepareBackgrounds {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory of .ppm background images.
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train one model on a manifest that already carries train/test tags;
    /// writes checkpoint.snnc and history.csv under --out-dir.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the frames carrying a split tag; prints a
    /// JSON report (accuracy, confusion, per-class recall).
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = TagArg::Test)]
        tag: TagArg,
    },
    /// Fit a local surrogate for one prediction and report the patches that
    /// drive it; writes an Explanation JSON and a tinted overlay PPM.
    Explain(ExplainArgs),
    /// Run a full experiment matrix from a config file; resumable per
    /// (condition, run) cell. Emits results.csv, comparison.json,
    /// summary.md, and confusion matrices under --out-dir.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Rebuild the report files from the persisted runs in --out-dir.
    Report {
        #[arg(long)]
        out_dir: PathBuf,
        /// Original experiment config; when given, rows keep config order.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare accuracy groups from a CSV: ANOVA for three or more
    /// conditions, pooled t-test for two. Prints a JSON report.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "accuracy")]
        column: String,
    },
    /// Generate synthetic datasets with known structure.
    #[command(subcommand)]
    Synth(SynthCmd),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::Multi)]
    kind: KindArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Augmentation policy JSON applied to training frames.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// TrainConfig JSON; defaults apply to absent fields.
    #[arg(long)]
    train_config: Option<PathBuf>,
    /// ModelConfig JSON; defaults apply to absent fields.
    #[arg(long)]
    model_config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Class id to explain (0-based).
    #[arg(long)]
    class: usize,
    /// Patch grid as ROWSxCOLS, e.g. 8x8.
    #[arg(long, default_value = "8x8")]
    grid: String,
    #[arg(long, default_value_t = 512)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.25)]
    kernel_width: f64,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = BaselineArg::Gray)]
    baseline: BaselineArg,
    /// How many of the strongest patches the overlay tints.
    #[arg(long, default_value_t = 3)]
    top: usize,
    #[arg(long)]
    out_json: PathBuf,
    #[arg(long)]
    out_overlay: PathBuf,
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Solid-color frames, linearly separable, one clip per class.
    Solid {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 24)]
        size: u32,
        #[arg(long, default_value_t = 3)]
        train: usize,
        #[arg(long, default_value_t = 1)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Frames whose class signal lives only inside the annotated hand
    /// boxes; the reduced global view is class-uninformative.
    Hands {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 4)]
        train: usize,
        #[arg(long, default_value_t = 2)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// A ready-to-run two-condition experiment over a solid-color dataset.
    Experiment {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Frames,
    Clips,
}

impl From<ModeArg> for SplitMode {
    fn from(m: ModeArg) -> SplitMode {
        match m {
            ModeArg::Frames => SplitMode::Frames,
            ModeArg::Clips => SplitMode::Clips,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Single,
    Multi,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> ModelKind {
        match k {
            KindArg::Single => ModelKind::Single,
            KindArg::Multi => ModelKind::Multi,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TagArg {
    Train,
    Test,
    Validation,
}

impl From<TagArg> for SplitTag {
    fn from(t: TagArg) -> SplitTag {
        match t {
            TagArg::Train => SplitTag::Train,
            TagArg::Test => SplitTag::Test,
            TagArg::Validation => SplitTag::Validation,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Gray,
    MeanColor,
}

impl From<BaselineArg> for Baseline {
    fn from(b: BaselineArg) -> Baseline {
        match b {
            BaselineArg::Gray => Baseline::Gray,
            BaselineArg::MeanColor => Baseline::MeanColor,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Cmd) -> Result<u8> {
    match cmd {
        Cmd::Validate { manifest } => cmd_validate(&manifest),
        Cmd::Subsample { manifest, fps, out } => {
            let m = manifest_io::load_manifest(&manifest)?;
            let sub = subsample_manifest(&m, fps)?;
            manifest_io::save_manifest(&out, &sub)?;
            println!("{}: {} frames -> {}", out.display(), m.total_frames(), sub.total_frames());
            Ok(0)
        }
        Cmd::Split { manifest, fraction, mode, seed, out } => {
            let mut m = manifest_io::load_manifest(&manifest)?;
            split_frames(&mut m, fraction, seed, mode.into())?;
            manifest_io::save_manifest(&out, &m)?;
            println!(
                "{}: {} train / {} test",
                out.display(),
                m.count_with_tag(SplitTag::Train),
                m.count_with_tag(SplitTag::Test)
            );
            Ok(0)
        }
        Cmd::AugmentPreview { image, policy, seed, out } => {
            let img = image_io::read_image(&image)?;
            let policy = load_policy(policy.as_deref())?;
            let mut rng = RngState::new(seed);
            let drawn = sample_policy(&policy, &mut rng);
            image_io::write_image(&out, &apply(&img, &drawn))?;
            println!("{}", out.display());
            Ok(0)
        }
        Cmd::PrepareBackgrounds { manifest, pool, seed, out_dir } => {
            let path = harness::prepare_backgrounds(&manifest, &pool, seed, &out_dir)?;
            println!("{}", path.display());
            Ok(0)
        }
        Cmd::Train(args) => cmd_train(args),
        Cmd::Evaluate { checkpoint, manifest, tag } => {
            let model: MultiStreamModel<f32> = load_checkpoint(&checkpoint)?;
            let m = manifest_io::load_manifest(&manifest)?;
            let items = frames_with_tag(&m, tag.into());
            let provider = manifest_io::DiskProvider::for_manifest(&manifest);
            let result = evaluate(&model, &items, &provider)?;
            println!("{}", to_json_pretty(&result)?);
            Ok(0)
        }
        Cmd::Explain(args) => cmd_explain(args),
        Cmd::Experiment { config, out_dir } => {
            let (config, config_dir) = harness::ExperimentConfig::load(&config)?;
            let records = harness::run_experiment(&config, &config_dir, &out_dir)?;
            let comparison = harness::emit_report(&records, &out_dir)?;
            match &comparison {
                Some(report) => println!("{}", to_json_pretty(report)?),
                None => println!("no comparison emitted (need 2 conditions with 2 runs each)"),
            }
            eprintln!("report written under {}", out_dir.display());
            Ok(0)
        }
        Cmd::Report { out_dir, config } => {
            let config = match config {
                Some(path) => Some(harness::ExperimentConfig::load(&path)?.0),
                None => None,
            };
            let records = harness::load_records(&out_dir, config.as_ref())?;
            harness::emit_report(&records, &out_dir)?;
            eprintln!("report written under {}", out_dir.display());
            Ok(0)
        }
        Cmd::Stats { input, column } => {
            let groups = stats_io::read_run_groups(&input, &column)?;
            let report = stats_io::run_test(&groups)?;
            #[derive(Serialize)]
            struct GroupLine {
                condition: String,
                runs: usize,
                mean: f64,
                #[serde(skip_serializing_if = "Option::is_none")]
                sd: Option<f64>,
            }
            #[derive(Serialize)]
            struct Output {
                groups: Vec<GroupLine>,
                report: signbench_core::stats::TestReport,
            }
            let groups = groups
                .iter()
                .map(|g| {
                    let (mean, sd) = match mean_and_sd(&g.accuracies) {
                        Ok((m, s)) => (m, Some(s)),
                        Err(_) => (g.accuracies[0], None),
                    };
                    GroupLine {
                        condition: g.name.clone(),
                        runs: g.accuracies.len(),
                        mean,
                        sd,
                    }
                })
                .collect();
            println!("{}", to_json_pretty(&Output { groups, report })?);
            Ok(0)
        }
        Cmd::Synth(which) => cmd_synth(which),
    }
}

fn cmd_validate(manifest_path: &Path) -> Result<u8> {
    let manifest = manifest_io::load_manifest(manifest_path)?;
    let base = manifest_io::manifest_dir(manifest_path);
    let violations = validate::validate_manifest(&manifest, &base);
    if violations.is_empty() {
        println!(
            "ok: {} clips, {} frames",
            manifest.clips.len(),
            manifest.total_frames()
        );
        Ok(0)
    } else {
        for v in &violations {
            println!("{v}");
        }
        eprintln!("{} violation(s)", violations.len());
        Ok(1)
    }
}

fn load_policy(path: Option<&Path>) -> Result<AugmentationPolicy> {
    let policy = match path {
        None => AugmentationPolicy::default(),
        Some(p) => {
            let bytes = fs::read(p).map_err(io_at(p))?;
            serde_json::from_slice(&bytes).map_err(|e| BenchError::Format {
                path: p.to_path_buf(),
                detail: e.to_string(),
            })?
        }
    };
    policy.validate()?;
    Ok(policy)
}

fn load_json_or_default<T: Default + serde::de::DeserializeOwned>(
    path: Option<&Path>,
) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let bytes = fs::read(p).map_err(io_at(p))?;
            serde_json::from_slice(&bytes).map_err(|e| BenchError::Format {
                path: p.to_path_buf(),
                detail: e.to_string(),
            })
        }
    }
}

fn load_checkpoint(path: &Path) -> Result<MultiStreamModel<f32>> {
    let bytes = fs::read(path).map_err(io_at(path))?;
    Ok(from_bytes(&bytes)?)
}

fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| BenchError::Config(format!("serialization failed: {e}")))
}

fn cmd_train(args: TrainArgs) -> Result<u8> {
    let kind: ModelKind = args.kind.into();
    let model_config: ModelConfig = load_json_or_default(args.model_config.as_deref())?;
    let mut train_config: TrainConfig = load_json_or_default(args.train_config.as_deref())?;
    train_config.seed = args.seed;

    // The core accepts zero learning rates as probes; a real training run
    // with one is a config mistake.
    let phases: &[_] = match kind {
        ModelKind::Single => &[&train_config.baseline],
        ModelKind::Multi => &[&train_config.phase1, &train_config.phase2],
    };
    if phases.iter().any(|p| p.learning_rate <= 0.0) {
        return Err(BenchError::Config(
            "learning rate must be positive for every scheduled phase".into(),
        ));
    }

    let policy = match &args.policy {
        Some(p) => Some(load_policy(Some(p))?),
        None => None,
    };
    let manifest = manifest_io::load_manifest(&args.manifest)?;
    let provider = manifest_io::DiskProvider::for_manifest(&args.manifest);
    let split = DataSplit::from_manifest(&manifest);

    let mut model = build_model::<f32>(kind, &model_config, args.seed)?;
    let history = train(&mut model, &split, &provider, policy.as_ref(), &train_config)?;

    fs::create_dir_all(&args.out_dir).map_err(io_at(&args.out_dir))?;
    let ckpt_path = args.out_dir.join("checkpoint.snnc");
    fs::write(&ckpt_path, to_bytes(&model)).map_err(io_at(&ckpt_path))?;
    harness::write_history(&args.out_dir.join("history.csv"), &history)?;

    let last = history.last().expect("at least one epoch");
    println!(
        "{}: {} epochs, final train_acc {:.4}, test_acc {:.4}",
        ckpt_path.display(),
        history.len(),
        last.train_acc,
        last.test_acc
    );
    Ok(0)
}

fn image_to_tensor(img: &Image) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut t = Tensor::zeros(&[1, 3, h, w]);
    for c in 0..3 {
        let base = t.idx4(0, c, 0, 0);
        for i in 0..h * w {
            t.data_mut()[base + i] = img.data()[i * 3 + c] as f32 / 255.0;
        }
    }
    t
}

/// Class probabilities for one full frame. Hand streams (when present) see
/// the mid-gray placeholder: explanations here are about the global view,
/// and no box annotations exist for arbitrary input images.
fn predict_probabilities(model: &MultiStreamModel<f32>, img: &Image) -> Result<Vec<f64>> {
    let config = model.config();
    let global = resize_bilinear(img, config.global_res, config.global_res)?;
    let hands = match model.kind() {
        ModelKind::Single => None,
        ModelKind::Multi => {
            let gray = Image::filled(config.hand_res, config.hand_res, [128; 3])
                .expect("hand resolution is nonzero");
            let t = image_to_tensor(&gray);
            Some((t.clone(), t))
        }
    };
    let batch = Batch { global: image_to_tensor(&global), hands, labels: vec![0] };
    let logits = model.forward(&batch)?;
    let row: Vec<f64> = logits.data().iter().map(|v| v.to_f64()).collect();
    let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.iter().map(|e| e / sum).collect())
}

fn parse_grid(spec: &str) -> Result<(u32, u32)> {
    let parts: Vec<&str> = spec.split(['x', 'X']).collect();
    let parsed = if parts.len() == 2 {
        parts[0].parse::<u32>().ok().zip(parts[1].parse::<u32>().ok())
    } else {
        None
    };
    parsed.ok_or_else(|| {
        BenchError::Config(format!("grid must look like 8x8, got \"{spec}\""))
    })
}

fn cmd_explain(args: ExplainArgs) -> Result<u8> {
    let model: MultiStreamModel<f32> = load_checkpoint(&args.checkpoint)?;
    let img = image_io::read_image(&args.image)?;
    let (rows, cols) = parse_grid(&args.grid)?;
    let grid = grid_segments(&img, rows, cols)?;
    let params = ExplainParams {
        n_samples: args.samples,
        kernel_width: args.kernel_width,
        ridge_lambda: args.lambda,
        baseline: args.baseline.into(),
        seed: args.seed,
    };
    let mut predictor = |img: &Image| {
        predict_probabilities(&model, img)
            .map_err(|e| signbench_core::explain::ExplainError::Predictor(e.to_string()))
    };
    let explanation = explain(&mut predictor, &img, &grid, args.class, &params)?;

    let mut text = to_json_pretty(&explanation)?;
    text.push('\n');
    if let Some(parent) = args.out_json.parent() {
        fs::create_dir_all(parent).map_err(io_at(parent))?;
    }
    fs::write(&args.out_json, text).map_err(io_at(&args.out_json))?;
    let overlay = render::explanation_overlay(&img, &grid, &explanation, args.top)?;
    image_io::write_image(&args.out_overlay, &overlay)?;
    println!("{} {}", args.out_json.display(), args.out_overlay.display());
    Ok(0)
}

fn cmd_synth(which: SynthCmd) -> Result<u8> {
    let path = match which {
        SynthCmd::Solid { out_dir, size, train, test, seed } => synth::solid_colors(
            size,
            &[(SplitTag::Train, train), (SplitTag::Test, test)],
            seed,
        )
        .write(&out_dir)?,
        SynthCmd::Hands { out_dir, train, test, seed } => {
            synth::hand_checker(train, test, seed).write(&out_dir)?
        }
        SynthCmd::Experiment { out_dir } => synth::experiment_bundle(&out_dir)?,
    };
    println!("{}", path.display());
    Ok(0)
}
