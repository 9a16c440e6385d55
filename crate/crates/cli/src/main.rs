//! `reswd` command-line tool: synthetic benchmarks, point-cloud matching and
//! CDL colour matching.
//!
//! Exit status is 0 on success, 2 for invalid arguments or unreadable
//! inputs, and 1 when a run fails or outputs cannot be written.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reswd::color::{apply_cdl, cdl_xml_write, color_match, ColorMatchConfig, RgbImage};
use reswd::harness::{run_benchmark, BenchConfig, MethodSpec};
use reswd::{match_particles, Mode, OptimizerKind, ReswdConfig, SampleSet};

#[derive(Parser)]
#[command(name = "reswd", version, about = "Reservoir sliced Wasserstein matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the synthetic distribution-matching benchmark
    Bench(BenchArgs),
    /// Move a source point cloud onto a target point cloud
    Match(MatchArgs),
    /// Fit an ASC CDL grading a source image towards a reference
    ColorMatch(ColorArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Swd,
    Reswd,
}

impl From<MethodArg> for Mode {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Swd => Mode::Swd,
            MethodArg::Reswd => Mode::Reswd,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Args)]
struct EstimatorArgs {
    /// Total projection budget per step (L)
    #[arg(long, default_value_t = 64)]
    projections: usize,
    /// Fresh directions drawn per step (M)
    #[arg(long, default_value_t = 8)]
    fresh: usize,
    /// Wasserstein order
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Flush the reservoir when ESS falls below alpha times its size
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Time-decay constant; 0 disables decay
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    optimizer: OptimizerArg,
}

impl EstimatorArgs {
    fn config(&self) -> ReswdConfig {
        ReswdConfig {
            total_projections: self.projections,
            fresh_count: self.fresh,
            p: self.p,
            alpha: self.alpha,
            tau: self.tau,
            seed: self.seed,
        }
    }

    fn optimizer(&self, lr: f64) -> OptimizerKind {
        match self.optimizer {
            OptimizerArg::Adam => OptimizerKind::adam(lr),
            OptimizerArg::Sgd => OptimizerKind::sgd(lr),
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    #[arg(long, default_value_t = 1024)]
    samples: usize,
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    /// Estimator seeds per pair
    #[arg(long, default_value_t = 1)]
    seeds_per_pair: usize,
    /// Extra reservoir runs with these fresh counts (comma separated)
    #[arg(long, value_delimiter = ',')]
    ablation: Vec<usize>,
    #[arg(long, default_value_t = reswd::harness::DEFAULT_LR)]
    lr: f64,
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    /// Worker threads; defaults to the number of logical cores
    #[arg(long)]
    jobs: Option<usize>,
    /// Write per-step wall time into the CSV (makes it non-reproducible)
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    est: EstimatorArgs,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Reswd)]
    method: MethodArg,
    #[arg(long, default_value_t = reswd::harness::DEFAULT_LR)]
    lr: f64,
    /// Directory for trajectory.csv and final_points.txt
    #[arg(long, default_value = "match-out")]
    out: PathBuf,
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    est: EstimatorArgs,
}

#[derive(Args)]
struct ColorArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, default_value_t = 150)]
    steps: usize,
    /// Working resolution of the longer image side
    #[arg(long, default_value_t = 128)]
    max_dim: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Reswd)]
    method: MethodArg,
    #[arg(long, default_value_t = reswd::color::matching::DEFAULT_COLOR_LR)]
    lr: f64,
    /// Path of the CDL XML to write
    #[arg(long)]
    out: PathBuf,
    /// Optional full-resolution graded PNG
    #[arg(long)]
    preview: Option<PathBuf>,
    #[command(flatten)]
    est: EstimatorArgs,
}

/// Failure classes, mapped to exit codes 2 and 1.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn usage(e: impl ToString) -> Self {
        Self::Usage(e.to_string())
    }

    fn runtime(e: impl ToString) -> Self {
        Self::Runtime(e.to_string())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    let est = args.est.config();
    let mut methods = vec![MethodSpec::swd(&est), MethodSpec::reswd(&est)];
    methods.extend(args.ablation.iter().map(|&m| MethodSpec::reswd_fresh(&est, m)));
    let cfg = BenchConfig {
        n_pairs: args.pairs,
        n_samples: args.samples,
        dim: args.dim,
        steps: args.steps,
        seeds_per_pair: args.seeds_per_pair,
        seed: args.est.seed,
        methods,
        optimizer: args.est.optimizer(args.lr),
    };
    cfg.validate().map_err(Failure::usage)?;
    if args.jobs == Some(0) {
        return Err(Failure::usage("--jobs must be >= 1"));
    }
    create_dir(&args.out)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = args.jobs {
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(Failure::runtime)?;
    let report = pool.install(|| run_benchmark(&cfg)).map_err(Failure::runtime)?;

    for m in &report.methods {
        write_file(&args.out.join(format!("{}.csv", m.name)), &m.series_csv(args.timing))?;
        for f in &m.failed {
            eprintln!("warning: {} run (pair {}, seed {}) failed: {}", m.name, f.pair, f.rep, f.message);
        }
    }
    let summary = report.summary_json();
    write_file(&args.out.join("summary.json"), &summary)?;
    println!("{summary}");
    Ok(())
}

fn read_points(path: &Path) -> Result<SampleSet, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    SampleSet::parse_points(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn match_cmd(args: MatchArgs) -> Result<(), Failure> {
    let x = read_points(&args.source)?;
    let y = read_points(&args.target)?;
    if x.dim() != y.dim() {
        return Err(Failure::Usage(format!(
            "source points have dimension {}, target points have {}",
            x.dim(),
            y.dim()
        )));
    }
    let cfg = args.est.config();
    cfg.validate().map_err(Failure::usage)?;
    if args.steps == 0 {
        return Err(Failure::usage("--steps must be >= 1"));
    }
    create_dir(&args.out)?;
    let report = match_particles(&x, &y, &cfg, args.steps, &args.est.optimizer(args.lr), args.method.into())
        .map_err(Failure::runtime)?;
    write_file(&args.out.join("trajectory.csv"), &report.to_csv(args.timing))?;
    if let Some(points) = &report.final_samples {
        write_file(&args.out.join("final_points.txt"), &points.to_text())?;
    }
    let first = report.records.first().map_or(f64::NAN, |r| r.mean_w1);
    println!("mean W1: {first} -> {}", report.final_mean_w1);
    Ok(())
}

fn load_image(path: &Path) -> Result<RgbImage, Failure> {
    RgbImage::load(path).map_err(|e| Failure::Usage(format!("cannot read image {}: {e}", path.display())))
}

fn color_cmd(args: ColorArgs) -> Result<(), Failure> {
    let source = load_image(&args.source)?;
    let reference = load_image(&args.reference)?;
    let cfg = ColorMatchConfig {
        estimator: args.est.config(),
        mode: args.method.into(),
        steps: args.steps,
        max_dim: args.max_dim,
        optimizer: args.est.optimizer(args.lr),
    };
    cfg.estimator.validate().map_err(Failure::usage)?;
    if args.steps == 0 || args.max_dim == 0 {
        return Err(Failure::usage("--steps and --max-dim must be >= 1"));
    }
    let (cdl, report) = color_match(&source, &reference, &cfg).map_err(Failure::runtime)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    write_file(&args.out, &cdl_xml_write(&cdl))?;
    if let Some(path) = &args.preview {
        apply_cdl(&source, &cdl)
            .save_png(path, false)
            .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    println!("{}", cdl_xml_write(&cdl).trim_end());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(a) => bench(a),
        Command::Match(a) => match_cmd(a),
        Command::ColorMatch(a) => color_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
