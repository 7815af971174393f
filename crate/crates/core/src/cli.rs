//! Command-line workflow: dataset synthesis, training, sampling,
//! reconstruction, interpolation, pose alignment, rarity ranking, corpus
//! evaluation, and gradient verification.
//!
//! Exit codes: 0 success, 1 failed check (`gradcheck` over tolerance),
//! 2 usage error, 3 data/file error, 4 numerical error.

use crate::align::{align_pose, AlignConfig};
use crate::data::io::{load_cloud, load_corpus, save_cloud, save_manifest, Corpus};
use crate::data::{normalize, synth_dataset, PointCloud, ShapeFamily};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricSelection, MetricsReport};
use crate::model::{FlowModel, ModelConfig};
use crate::scalar::{Dtype, Scalar};
use crate::train::checkpoint::{load as load_trainer, load_model, peek_dtype, save as save_trainer};
use crate::train::{EpochStats, TrainConfig, Trainer};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "cloudflow",
    version,
    about = "Conditional normalizing-flow generative model for 3-D point clouds"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ArchChoice {
    /// Minimal architecture for smoke tests and gradient checks.
    Toy,
    /// Trains in minutes on one CPU core.
    Desk,
    /// The 10x3 / 5x2, 32-dim embedding architecture.
    Full,
}

impl ArchChoice {
    fn config(self, seed: u64) -> ModelConfig {
        match self {
            ArchChoice::Toy => ModelConfig::toy(seed),
            ArchChoice::Desk => ModelConfig::desk_scale(seed),
            ArchChoice::Full => ModelConfig::full_scale(seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PrecisionChoice {
    F32,
    F64,
}

impl PrecisionChoice {
    fn dtype(self) -> Dtype {
        match self {
            PrecisionChoice::F32 => Dtype::F32,
            PrecisionChoice::F64 => Dtype::F64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricChoice {
    Cd,
    Emd,
    All,
}

impl MetricChoice {
    fn selection(self) -> MetricSelection {
        match self {
            MetricChoice::Cd => MetricSelection::Cd,
            MetricChoice::Emd => MetricSelection::Emd,
            MetricChoice::All => MetricSelection::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyChoice {
    Sphere,
    BoxSurface,
    NotchedPlane,
    LShape,
    TwoClusters,
}

impl FamilyChoice {
    fn family(self) -> ShapeFamily {
        match self {
            FamilyChoice::Sphere => ShapeFamily::Sphere,
            FamilyChoice::BoxSurface => ShapeFamily::BoxSurface,
            FamilyChoice::NotchedPlane => ShapeFamily::NotchedPlane,
            FamilyChoice::LShape => ShapeFamily::LShape,
            FamilyChoice::TwoClusters => ShapeFamily::TwoClusters,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its manifest.
    Synth(SynthArgs),
    /// Train a model on a corpus; writes checkpoints and a loss log.
    Train(Box<TrainArgs>),
    /// Draw fresh clouds from a trained model.
    Sample(SampleArgs),
    /// Re-synthesize a cloud from its own embedding.
    Reconstruct(ReconstructArgs),
    /// Decode the straight line between two clouds' embeddings.
    Interpolate(InterpolateArgs),
    /// Recover the rotation that puts a cloud into the trained pose.
    Align(AlignArgs),
    /// Order a corpus by embedding rarity, rarest first.
    Rank(RankArgs),
    /// Score a generated corpus against a reference corpus.
    Eval(EvalArgs),
    /// Verify training-loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Shape families to draw from (repeatable).
    #[arg(long = "family", required = true)]
    families: Vec<FamilyChoice>,
    /// Clouds per family.
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long = "n-points", default_value_t = 512)]
    n_points: usize,
    /// Gaussian jitter applied to surface points.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; receives cloud files plus manifest.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Corpus to train on: a manifest file or a directory of cloud files.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for model.ckpt and loss.log.
    #[arg(long)]
    out: PathBuf,
    /// Resume from this checkpoint instead of initializing fresh.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ArchChoice::Desk)]
    arch: ArchChoice,
    #[arg(long, value_enum, default_value_t = PrecisionChoice::F64)]
    precision: PrecisionChoice,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr0: f64,
    #[arg(long, default_value_t = 0.8)]
    decay_factor: f64,
    #[arg(long, default_value_t = 10)]
    decay_every: usize,
    /// Clouds per Adam step.
    #[arg(long, default_value_t = 10)]
    batch: usize,
    /// Points scored per cloud per epoch.
    #[arg(long, default_value_t = 256)]
    points_f: usize,
    /// Points shown to the encoder per cloud per epoch.
    #[arg(long, default_value_t = 256)]
    points_h: usize,
    /// Cap on the global gradient norm.
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Center and rescale each training cloud to the unit ball.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    normalize: bool,
    /// Also write the checkpoint every N epochs (0 = only at the end).
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long = "n-points", default_value_t = 512)]
    n_points: usize,
    /// Standard-deviation multiplier on the embedding prior.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Clouds to draw.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; receives sample_NNNN.txt files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Cloud to reconstruct.
    #[arg(long)]
    input: PathBuf,
    /// Points in the output cloud (default: as many as the input).
    #[arg(long = "n-points")]
    n_points: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output cloud file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InterpolateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Endpoint clouds.
    #[arg(long)]
    from: PathBuf,
    #[arg(long)]
    to: PathBuf,
    /// Clouds to decode, endpoints included.
    #[arg(long, default_value_t = 8)]
    steps: usize,
    #[arg(long = "n-points", default_value_t = 512)]
    n_points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; receives interp_NN.txt files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AlignArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Cloud to align.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; receives aligned.txt and rotation.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Corpus to score: a manifest file or a directory of cloud files.
    #[arg(long)]
    manifest: PathBuf,
    /// Center and rescale each cloud before scoring.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    normalize: bool,
    /// Output listing (rank, corpus index, embedding NLL, path).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Generated corpus: manifest or directory.
    #[arg(long)]
    gen: PathBuf,
    /// Reference corpus: manifest or directory.
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricChoice::All)]
    metric: MetricChoice,
    /// Also print the scaled presentation table.
    #[arg(long)]
    table: bool,
    /// Report file; a CSV twin is written next to it. Stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Worst acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
}

/// Parses `argv` and runs one command; returns the process exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own message and distinguishes --help/--version
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 2,
        Error::ShapeMismatch { .. } | Error::NonFinite { .. } | Error::Numerical(_) => 4,
        Error::Io { .. } | Error::Parse { .. } | Error::Checkpoint(_) | Error::Data(_) => 3,
    }
}

fn dispatch(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(*a),
        Command::Sample(a) => cmd_sample(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Interpolate(a) => cmd_interpolate(a),
        Command::Align(a) => cmd_align(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn cmd_synth(a: SynthArgs) -> Result<u8> {
    if a.count == 0 {
        return Err(Error::InvalidArgument("synth: count must be positive".into()));
    }
    ensure_dir(&a.out)?;
    let mut manifest = Vec::new();
    let mut index = 0usize;
    for fam in &a.families {
        let family = fam.family();
        let seed = a.seed.wrapping_add(index as u64);
        let clouds = synth_dataset(family, a.count, a.n_points, a.noise, seed)?;
        for cloud in &clouds {
            let name = format!("cloud_{index:04}.txt");
            save_cloud(cloud, &a.out.join(&name))?;
            manifest.push((name, family));
            index += 1;
        }
    }
    let manifest_path = a.out.join("manifest.txt");
    save_manifest(&manifest, &manifest_path)?;
    println!("wrote {} clouds and {}", index, manifest_path.display());
    Ok(0)
}

fn load_training_corpus(path: &Path, normalize_clouds: bool) -> Result<Vec<PointCloud>> {
    let corpus = load_corpus(path)?;
    if normalize_clouds {
        corpus
            .clouds
            .iter()
            .map(|c| normalize(c).map(|(n, _)| n))
            .collect()
    } else {
        Ok(corpus.clouds)
    }
}

fn cmd_train(a: TrainArgs) -> Result<u8> {
    ensure_dir(&a.out)?;
    let dataset = load_training_corpus(&a.manifest, a.normalize)?;
    let config = TrainConfig {
        lr0: a.lr0,
        decay_factor: a.decay_factor,
        decay_every: a.decay_every,
        epochs: a.epochs,
        clouds_per_batch: a.batch,
        points_f: a.points_f,
        points_h: a.points_h,
        grad_clip: a.grad_clip,
        seed: a.seed,
        ..TrainConfig::default()
    };
    match a.resume {
        Some(ref ckpt) => match peek_dtype(ckpt)? {
            Dtype::F32 => train_loop::<f32>(&a, config, &dataset),
            Dtype::F64 => train_loop::<f64>(&a, config, &dataset),
        },
        None => match a.precision.dtype() {
            Dtype::F32 => train_loop::<f32>(&a, config, &dataset),
            Dtype::F64 => train_loop::<f64>(&a, config, &dataset),
        },
    }
}

fn train_loop<S: Scalar>(
    a: &TrainArgs,
    config: TrainConfig,
    dataset: &[PointCloud],
) -> Result<u8> {
    let mut trainer = match &a.resume {
        Some(ckpt) => {
            let mut t = load_trainer::<S>(ckpt)?;
            // the checkpoint carries optimizer state and epoch; the epoch
            // budget may be extended on the command line
            t.config.epochs = config.epochs;
            t
        }
        None => {
            let model = FlowModel::<S>::new(a.arch.config(a.seed))?;
            Trainer::new(model, config)?
        }
    };

    let log_path = a.out.join("loss.log");
    let mut log = String::new();
    if trainer.next_epoch == 0 || !log_path.exists() {
        log.push_str(EpochStats::log_header());
        log.push('\n');
    } else {
        log = fs::read_to_string(&log_path).map_err(|e| Error::io(&log_path, e))?;
    }

    let ckpt_path = a.out.join("model.ckpt");
    let every = a.checkpoint_every;
    trainer.run(dataset, |t, stats| {
        let line = stats.log_line();
        println!("{line}");
        log.push_str(&line);
        log.push('\n');
        fs::write(&log_path, &log).map_err(|e| Error::io(&log_path, e))?;
        if every > 0 && (stats.epoch + 1) % every == 0 {
            save_trainer(t, &ckpt_path)?;
        }
        Ok(())
    })?;
    save_trainer(&trainer, &ckpt_path)?;
    println!("checkpoint: {}", ckpt_path.display());
    Ok(0)
}

fn flat_to_cloud<S: Scalar>(flat: &[S]) -> Result<PointCloud> {
    let as_f64: Vec<f64> = flat.iter().map(|&v| v.to_f64()).collect();
    PointCloud::from_flat(&as_f64)
}

fn cmd_sample(a: SampleArgs) -> Result<u8> {
    match peek_dtype(&a.checkpoint)? {
        Dtype::F32 => sample_as::<f32>(&a),
        Dtype::F64 => sample_as::<f64>(&a),
    }
}

fn sample_as<S: Scalar>(a: &SampleArgs) -> Result<u8> {
    if a.count == 0 {
        return Err(Error::InvalidArgument("sample: count must be positive".into()));
    }
    let model = load_model::<S>(&a.checkpoint)?;
    ensure_dir(&a.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    for i in 0..a.count {
        let flat = model.sample_cloud(a.n_points, a.temperature, &mut rng)?;
        let cloud = flat_to_cloud(&flat)?;
        save_cloud(&cloud, &a.out.join(format!("sample_{i:04}.txt")))?;
    }
    println!("wrote {} clouds to {}", a.count, a.out.display());
    Ok(0)
}

fn cmd_reconstruct(a: ReconstructArgs) -> Result<u8> {
    match peek_dtype(&a.checkpoint)? {
        Dtype::F32 => reconstruct_as::<f32>(&a),
        Dtype::F64 => reconstruct_as::<f64>(&a),
    }
}

fn reconstruct_as<S: Scalar>(a: &ReconstructArgs) -> Result<u8> {
    let model = load_model::<S>(&a.checkpoint)?;
    let input = load_cloud(&a.input)?;
    let n_points = a.n_points.unwrap_or(input.len());
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let flat = model.reconstruct(&input.to_flat::<S>(), n_points, &mut rng)?;
    save_cloud(&flat_to_cloud(&flat)?, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(0)
}

fn cmd_interpolate(a: InterpolateArgs) -> Result<u8> {
    match peek_dtype(&a.checkpoint)? {
        Dtype::F32 => interpolate_as::<f32>(&a),
        Dtype::F64 => interpolate_as::<f64>(&a),
    }
}

fn interpolate_as<S: Scalar>(a: &InterpolateArgs) -> Result<u8> {
    let model = load_model::<S>(&a.checkpoint)?;
    let from = load_cloud(&a.from)?;
    let to = load_cloud(&a.to)?;
    ensure_dir(&a.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let steps = model.interpolate(
        &from.to_flat::<S>(),
        &to.to_flat::<S>(),
        a.steps,
        a.n_points,
        &mut rng,
    )?;
    for (k, flat) in steps.iter().enumerate() {
        save_cloud(&flat_to_cloud(flat)?, &a.out.join(format!("interp_{k:02}.txt")))?;
    }
    println!("wrote {} clouds to {}", steps.len(), a.out.display());
    Ok(0)
}

fn cmd_align(a: AlignArgs) -> Result<u8> {
    match peek_dtype(&a.checkpoint)? {
        Dtype::F32 => align_as::<f32>(&a),
        Dtype::F64 => align_as::<f64>(&a),
    }
}

fn align_as<S: Scalar>(a: &AlignArgs) -> Result<u8> {
    let model = load_model::<S>(&a.checkpoint)?;
    let input = load_cloud(&a.input)?;
    ensure_dir(&a.out)?;
    let cfg = AlignConfig {
        restarts: a.restarts,
        seed: a.seed,
        ..AlignConfig::default()
    };
    let flat: Vec<f64> = input.points.iter().flatten().copied().collect();
    let result = align_pose(&model, &flat, &cfg)?;

    let aligned = PointCloud::from_flat(&result.aligned)?;
    save_cloud(&aligned, &a.out.join("aligned.txt"))?;

    let aa = result.axis_angle;
    let angle_rad = (aa[0] * aa[0] + aa[1] * aa[1] + aa[2] * aa[2]).sqrt();
    let mut report = String::new();
    let _ = writeln!(report, "axis_angle = {} {} {}", aa[0], aa[1], aa[2]);
    let _ = writeln!(report, "angle_degrees = {}", angle_rad.to_degrees());
    let _ = writeln!(report, "nll = {}", result.nll);
    let _ = writeln!(report, "identity_nll = {}", result.identity_nll);
    let rot_path = a.out.join("rotation.txt");
    fs::write(&rot_path, &report).map_err(|e| Error::io(&rot_path, e))?;
    print!("{report}");
    Ok(0)
}

fn cmd_rank(a: RankArgs) -> Result<u8> {
    match peek_dtype(&a.checkpoint)? {
        Dtype::F32 => rank_as::<f32>(&a),
        Dtype::F64 => rank_as::<f64>(&a),
    }
}

fn rank_as<S: Scalar>(a: &RankArgs) -> Result<u8> {
    let model = load_model::<S>(&a.checkpoint)?;
    let corpus = load_corpus(&a.manifest)?;
    let clouds: Vec<Vec<S>> = if a.normalize {
        corpus
            .clouds
            .iter()
            .map(|c| normalize(c).map(|(n, _)| n.to_flat::<S>()))
            .collect::<Result<_>>()?
    } else {
        corpus.clouds.iter().map(|c| c.to_flat::<S>()).collect()
    };
    let ranking = model.rank_by_embedding_nll(&clouds)?;
    let mut out = String::from("rank\tindex\tembed_nll\tpath\n");
    for (rank, (index, nll)) in ranking.iter().enumerate() {
        let _ = writeln!(
            out,
            "{rank}\t{index}\t{nll}\t{}",
            corpus.paths[*index].display()
        );
    }
    match &a.out {
        Some(path) => {
            fs::write(path, &out).map_err(|e| Error::io(path, e))?;
            println!("wrote {}", path.display());
        }
        None => print!("{out}"),
    }
    Ok(0)
}

fn cmd_eval(a: EvalArgs) -> Result<u8> {
    let gen = load_corpus(&a.gen)?;
    let refs = load_corpus(&a.reference)?;
    let mut selection = a.metric.selection();
    // The earth-mover distance is only defined between equal-sized clouds.
    // With the default `all` selection we degrade gracefully; an explicit
    // `--metric emd` request still fails loudly.
    if selection == MetricSelection::All && !uniform_point_count(&gen, &refs) {
        eprintln!("note: clouds have differing point counts; skipping earth-mover metrics");
        selection = MetricSelection::Cd;
    }
    let report = evaluate(&gen.clouds, &refs.clouds, selection)?;
    emit_report(&report, a.out.as_deref(), a.table)
}

fn uniform_point_count(gen: &Corpus, refs: &Corpus) -> bool {
    let mut counts = gen.clouds.iter().chain(&refs.clouds).map(PointCloud::len);
    match counts.next() {
        Some(first) => counts.all(|n| n == first),
        None => true,
    }
}

fn emit_report(report: &MetricsReport, out: Option<&Path>, table: bool) -> Result<u8> {
    let kv = report.to_kv();
    match out {
        Some(path) => {
            fs::write(path, &kv).map_err(|e| Error::io(path, e))?;
            let csv_path = path.with_extension("csv");
            let csv = format!("{}\n{}\n", MetricsReport::csv_header(), report.to_csv_row());
            fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
            println!("wrote {} and {}", path.display(), csv_path.display());
        }
        None => print!("{kv}"),
    }
    if table {
        print!("{}", report.to_table());
    }
    Ok(0)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<u8> {
    let model = FlowModel::<f64>::new(ModelConfig::toy(a.seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let clouds = synth_dataset(ShapeFamily::TwoClusters, 2, 16, 0.01, a.seed)?;
    let mut worst = 0.0f64;
    for cloud in &clouds {
        let (xf, xh) = crate::data::split_fh(cloud, 8, 8, &mut rng)?;
        let err = model.check_loss_gradients(
            &xf.to_flat::<f64>(),
            &xh.to_flat::<f64>(),
            a.step,
        )?;
        worst = worst.max(err);
    }
    println!("max relative gradient error = {worst:e}");
    if worst < a.tolerance {
        println!("PASS (tolerance {:e})", a.tolerance);
        Ok(0)
    } else {
        println!("FAIL (tolerance {:e})", a.tolerance);
        Ok(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_separate_usage_data_and_numerical_failures() {
        assert_eq!(exit_code(&Error::InvalidArgument("x".into())), 2);
        assert_eq!(exit_code(&Error::Data("x".into())), 3);
        assert_eq!(exit_code(&Error::Checkpoint("x".into())), 3);
        assert_eq!(
            exit_code(&Error::Parse {
                path: "f".into(),
                line: 1,
                msg: "m".into()
            }),
            3
        );
        assert_eq!(
            exit_code(&Error::NonFinite {
                context: "x".into()
            }),
            4
        );
        assert_eq!(
            exit_code(&Error::ShapeMismatch {
                op: "op",
                lhs: vec![1],
                rhs: vec![2]
            }),
            4
        );
    }

    #[test]
    fn unknown_flags_are_usage_errors() {
        assert_eq!(run(["cloudflow", "sample", "--bogus"]), 2);
        assert_eq!(run(["cloudflow", "no-such-command"]), 2);
    }

    #[test]
    fn help_exits_cleanly() {
        assert_eq!(run(["cloudflow", "--help"]), 0);
        assert_eq!(run(["cloudflow", "synth", "--help"]), 0);
    }
}
