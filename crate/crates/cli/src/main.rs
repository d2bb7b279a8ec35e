//! Binary entry point. All behavior lives in the library; this file
//! only parses arguments, forwards to the library functions, prints
//! `key value` result lines and maps failures to categorized exit
//! codes (config 2, io 3, data 4, internal 5).

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use handflow_cli::gen::{DbSource, GenOptions, PRESET_TEST_SEQUENCES, PRESET_TRAIN_SEQUENCES};
use handflow_cli::{eval, gen, ik, inspect, Categorized};
use handflow_core::handmodel::HandShape;
use handflow_core::poseflow::FlowConfig;

#[derive(Parser)]
#[command(
    name = "handflow",
    version,
    about = "Synthetic hand-pose sequence datasets: generate, audit, fit, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an annotated dataset of rendered pose sequences.
    Gen(GenArgs),
    /// Score predicted joints against ground truth.
    Eval(EvalArgs),
    /// Fit articulation parameters to a joint-sequence file.
    Ik(IkArgs),
    /// Audit a generated run directory for internal consistency.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 40000 sequences.
    Train,
    /// 1000 sequences.
    Test,
}

impl Preset {
    fn sequences(self) -> usize {
        match self {
            Preset::Train => PRESET_TRAIN_SEQUENCES,
            Preset::Test => PRESET_TEST_SEQUENCES,
        }
    }
}

#[derive(Args)]
#[command(group = ArgGroup::new("seqcount").required(true).args(["seqs", "preset"]))]
#[command(group = ArgGroup::new("dbsource").required(true).args(["db", "synth_db"]))]
struct GenArgs {
    /// Output directory; created if absent, must be empty.
    out: PathBuf,
    /// Number of sequences to generate.
    #[arg(long)]
    seqs: Option<usize>,
    /// Named sequence count.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Pose database file to snap frames to.
    #[arg(long)]
    db: Option<PathBuf>,
    /// Sample a synthetic pose database with this many records instead.
    #[arg(long, value_name = "COUNT")]
    synth_db: Option<usize>,
    /// Master seed; every byte of output is a pure function of it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Frames per sequence.
    #[arg(long)]
    frames: Option<usize>,
    /// Interpolation step size in (0, frames].
    #[arg(long)]
    alpha: Option<f64>,
    /// Per-coordinate pose jitter in mm; 0 keeps flows deterministic.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Frame width in pixels.
    #[arg(long)]
    width: Option<u32>,
    /// Frame height in pixels.
    #[arg(long)]
    height: Option<u32>,
    /// Worker threads; 0 uses all cores. Output bytes do not depend on
    /// this.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Directory of background images; omitted uses a procedural pool.
    #[arg(long)]
    backgrounds: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted joint-sequence file.
    pred: PathBuf,
    /// Ground truth: a joint-sequence file or a sequence annot.json.
    truth: PathBuf,
    /// Smallest threshold in mm.
    #[arg(long, default_value_t = eval::DEFAULT_T_MIN_MM)]
    t_min: f64,
    /// Largest threshold in mm.
    #[arg(long, default_value_t = eval::DEFAULT_T_MAX_MM)]
    t_max: f64,
    /// Threshold spacing in mm; must tile the range exactly.
    #[arg(long, default_value_t = eval::DEFAULT_T_STEP_MM)]
    t_step: f64,
    /// Write the per-threshold curve to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct IkArgs {
    /// Joint-sequence file to fit.
    input: PathBuf,
    /// Write fitted parameters here, one frame per line.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Ten comma-separated shape coefficients in [-2, 2].
    #[arg(long, value_parser = parse_beta, default_value = "0,0,0,0,0,0,0,0,0,0")]
    beta: HandShape,
}

#[derive(Args)]
struct InspectArgs {
    /// Run directory holding manifest.json.
    run_dir: PathBuf,
    /// Audit only the first N sequences.
    #[arg(long, value_name = "N")]
    max_seqs: Option<usize>,
}

fn parse_beta(text: &str) -> Result<HandShape, String> {
    let values: Vec<f64> = text
        .split(',')
        .map(|f| f.trim().parse::<f64>().map_err(|e| format!("{f:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let arr: [f64; 10] = values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected 10 coefficients, got {}", v.len()))?;
    Ok(HandShape(arr))
}

fn fail(err: &(impl std::fmt::Display + Categorized)) -> i32 {
    eprintln!("error[{}]: {err}", err.category().label());
    err.category().exit_code()
}

fn run_gen(args: GenArgs) -> i32 {
    let mut config = FlowConfig::default();
    if let Some(n) = args.frames {
        config.n_frames = n;
    }
    if let Some(a) = args.alpha {
        config.alpha = a;
    }
    if let Some(s) = args.noise_sigma {
        config.noise_sigma = s;
    }
    if let Some(w) = args.width {
        config.width = w;
    }
    if let Some(h) = args.height {
        config.height = h;
    }
    let sequence_count = args
        .seqs
        .or(args.preset.map(Preset::sequences))
        .expect("clap enforces the group");
    let db = match (args.db, args.synth_db) {
        (Some(path), None) => DbSource::File(path),
        (None, Some(count)) => DbSource::Synthetic { count },
        _ => unreachable!("clap enforces the group"),
    };
    let opts = GenOptions {
        out_dir: args.out.clone(),
        sequence_count,
        master_seed: args.seed,
        config,
        db,
        backgrounds: args.backgrounds,
        workers: args.workers,
    };
    match gen::run(&opts) {
        Ok(summary) => {
            println!("sequences {}", summary.sequences);
            println!("frames_per_sequence {}", summary.frames_per_sequence);
            println!("db_fingerprint {}", summary.db_fingerprint);
            println!("elapsed_s {:.3}", summary.elapsed.as_secs_f64());
            println!("out {}", args.out.display());
            0
        }
        Err(e) => fail(&e),
    }
}

fn run_eval(args: EvalArgs) -> i32 {
    let opts = eval::EvalOptions {
        pred: args.pred,
        truth: args.truth,
        t_min: args.t_min,
        t_max: args.t_max,
        t_step: args.t_step,
        csv: args.csv,
    };
    match eval::run(&opts) {
        Ok(report) => {
            println!("frames {}", report.frames);
            println!("mean_error_mm {}", report.mean_error_mm);
            println!("auc {}", report.auc);
            let first = report.thresholds_mm.first().zip(report.fractions.first());
            let last = report.thresholds_mm.last().zip(report.fractions.last());
            if let (Some((t0, f0)), Some((t1, f1))) = (first, last) {
                println!("pck@{t0}mm {f0}");
                println!("pck@{t1}mm {f1}");
            }
            0
        }
        Err(e) => fail(&e),
    }
}

fn run_ik(args: IkArgs) -> i32 {
    let opts = ik::IkOptions {
        input: args.input,
        output: args.output.clone(),
        beta: args.beta,
    };
    match ik::run(&opts) {
        Ok(report) => {
            println!("frames {}", report.frames);
            println!("mean_residual_mm {}", report.mean_residual_mm);
            println!("max_residual_mm {}", report.max_residual_mm);
            if let Some(path) = args.output {
                println!("output {}", path.display());
            }
            0
        }
        Err(e) => fail(&e),
    }
}

fn run_inspect(args: InspectArgs) -> i32 {
    let opts = inspect::InspectOptions {
        run_dir: args.run_dir,
        max_sequences: args.max_seqs,
    };
    match inspect::run(&opts) {
        Ok(report) => {
            for check in &report.checks {
                if check.pass {
                    println!("check {}: ok ({})", check.name, check.detail);
                } else {
                    println!("check {}: FAIL ({})", check.name, check.detail);
                }
            }
            println!("sequences {}", report.sequences_checked);
            println!("frames {}", report.frames_checked);
            if report.all_pass() {
                0
            } else {
                handflow_cli::ErrorCategory::Data.exit_code()
            }
        }
        Err(e) => fail(&e),
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Gen(args) => run_gen(args),
        Cmd::Eval(args) => run_eval(args),
        Cmd::Ik(args) => run_ik(args),
        Cmd::Inspect(args) => run_inspect(args),
    };
    std::process::exit(code);
}
