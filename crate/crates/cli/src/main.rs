use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sparse_ndp::coding::{encode_region, write_codes_csv, L1Config, PatchCoder};
use sparse_ndp::config::{format_task_file, load_task, parse_key_values, ExperimentConfig};
use sparse_ndp::experiments;
use sparse_ndp::gabor::{build_dictionary, decode_dictionary, encode_dictionary, CopulaModel};
use sparse_ndp::image::{decode_pgm, write_pgm_sequence, Point, Region};
use sparse_ndp::ndp::{
    decode_approximator, encode_approximator, evaluate, sequential_train, FeatureCode, FeatureKind, TaskFeatures,
};
use sparse_ndp::tracking::{solve_exact_dp, solve_greedy, Trajectory};

#[derive(Parser, Debug)]
#[command(name = "sparse-ndp", version, about = "Sparse image codes and neuro-dynamic programming for target tracking")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write seeded synthetic PGM sequences, target files and task files.
    GenData {
        #[arg(long)]
        tasks: Option<usize>,
    },
    /// Sample a Gabor dictionary and write it in binary form.
    Dict {
        #[arg(long)]
        atoms: Option<usize>,
        #[arg(long)]
        patch: Option<usize>,
        #[arg(long)]
        normalize: bool,
    },
    /// Encode the non-overlapping patches of a PGM image.
    Encode {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Sparsity weight; 0 selects least squares.
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
    },
    /// Tracking solvers.
    Track {
        #[command(subcommand)]
        action: TrackAction,
    },
    /// Train a cost-to-go approximator on tasks in order.
    Train(TrainArgs),
    /// Roll out a trained approximator on a task and print its cost ratio.
    Eval {
        #[arg(long)]
        approx: PathBuf,
        #[arg(long)]
        task: PathBuf,
    },
    /// Run an experiment driver and write its CSV tables.
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
    },
}

#[derive(Subcommand, Debug)]
enum TrackAction {
    /// Exact dynamic programming, or the one-step greedy policy.
    Solve {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        greedy: bool,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Task files, comma separated or repeated, in training order.
    #[arg(long, value_delimiter = ',', required = true)]
    tasks: Vec<PathBuf>,
    #[arg(long, default_value = "sparse")]
    feature: String,
    #[arg(long)]
    partitions: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExperimentName {
    Capacity,
    Speed,
    Seqlearn,
    Entropy,
    Appendix1d,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut pairs = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            parse_key_values(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => Vec::new(),
    };
    for o in &cli.overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("override `{o}` is not KEY=VALUE"))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = cli.seed {
        pairs.push(("seed".into(), seed.to_string()));
    }
    let mut cfg = ExperimentConfig::default();
    cfg.apply(&pairs)?;
    Ok(cfg)
}

fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::from("k,x,y,stage_cost,ux,uy\n");
    for (k, (x, c)) in traj.states.iter().zip(&traj.stage_costs).enumerate() {
        let u = traj.controls.get(k).copied();
        let (ux, uy) = u.map_or((String::new(), String::new()), |u| (u.x.to_string(), u.y.to_string()));
        let _ = writeln!(s, "{},{},{},{},{ux},{uy}", k + 1, x.x, x.y, c);
    }
    s
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Runs one command writing into `stage`; the caller publishes on success.
fn run(cli: &Cli, cfg: &ExperimentConfig, stage: &Path) -> Result<()> {
    match &cli.command {
        Command::GenData { tasks } => {
            let count = tasks.unwrap_or(cfg.tasks);
            if count == 0 {
                bail!("gen-data needs at least one task");
            }
            let cfg = ExperimentConfig { tasks: count, ..cfg.clone() };
            for i in 0..count {
                let dir = stage.join(format!("task_{:03}", i + 1));
                let seq = experiments::synthetic_sequence(&cfg, i)?;
                let frames = write_pgm_sequence(&seq, &dir)?;
                let names: Vec<PathBuf> = frames.iter().filter_map(|p| p.file_name().map(PathBuf::from)).collect();
                write(&dir, "task.txt", format_task_file(&names, "targets.txt", cfg.region, experiments::center_start(&cfg)))?;
            }
        }
        Command::Dict { atoms, patch, normalize } => {
            let side = patch.unwrap_or(cfg.patch);
            let m = atoms.unwrap_or(side * side);
            let dict = build_dictionary(&CopulaModel::default(), side, m, cfg.seed, *normalize || cfg.normalize_atoms)?;
            write(stage, "dictionary.bin", encode_dictionary(&dict))?;
        }
        Command::Encode { dict, input, lambda } => {
            let bytes = fs::read(dict).with_context(|| format!("reading {}", dict.display()))?;
            let dict = decode_dictionary(&bytes).with_context(|| format!("decoding {}", dict.display()))?;
            let img = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
            let frame = decode_pgm(&img).with_context(|| format!("decoding {}", input.display()))?;
            let side = dict.patch_side;
            let (w, h) = (frame.width() / side * side, frame.height() / side * side);
            if w == 0 || h == 0 {
                bail!("image is smaller than one {side}x{side} patch");
            }
            let coder = PatchCoder::new(&dict, L1Config { lambda: *lambda, ..cfg.l1() })?;
            let mut codes = Vec::new();
            for y in (0..h).step_by(side) {
                for x in (0..w).step_by(side) {
                    let region = Region::from_frame(&frame, Point::new(x as i64, y as i64), side)
                        .context("patch outside image")?;
                    codes.push(encode_region(&coder, &region, side)?);
                }
            }
            let path = stage.join("codes.csv");
            let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_codes_csv(file, &codes)?;
        }
        Command::Track { action: TrackAction::Solve { task, greedy } } => {
            let task = load_task(task).with_context(|| format!("loading task {}", task.display()))?;
            if *greedy {
                let traj = solve_greedy(&task);
                write(stage, "trajectory.csv", trajectory_csv(&traj))?;
                println!("greedy cost {}", traj.total_cost);
            } else {
                let table = solve_exact_dp(&task);
                let mut s = String::from("k,x,y,J,u\n");
                for (k, x, j, u) in table.rows() {
                    let _ = writeln!(s, "{k},{},{},{j},{}:{}", x.x, x.y, u.x, u.y);
                }
                write(stage, "cost_to_go.csv", s)?;
                let traj = sparse_ndp::tracking::rollout(&task, &table)?;
                write(stage, "trajectory.csv", trajectory_csv(&traj))?;
                println!("optimal cost {}", table.optimal_cost());
            }
        }
        Command::Train(args) => {
            let kind = FeatureKind::parse(&args.feature)?;
            let tasks = args
                .tasks
                .iter()
                .map(|p| load_task(p).with_context(|| format!("loading task {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let code = FeatureCode::new(cfg.feature_spec(kind))?;
            let result = sequential_train(&tasks, &code, &cfg.train(), args.partitions)?;
            write(stage, "approximator.txt", encode_approximator(&result.approx))?;
            let mut s = String::from("task,partition,cost_ratio,dp_ratio\n");
            for (i, o) in result.outcomes.iter().enumerate() {
                let part = o.partition.map_or_else(|| "-".to_string(), |p| p.to_string());
                let _ = writeln!(s, "{},{part},{},{}", i + 1, o.cost_ratio, o.dp_ratio);
                println!("task {} cost ratio {} (exact DP {})", i + 1, o.cost_ratio, o.dp_ratio);
            }
            write(stage, "train.csv", s)?;
        }
        Command::Eval { approx, task } => {
            let text = fs::read_to_string(approx).with_context(|| format!("reading {}", approx.display()))?;
            let approx = decode_approximator(&text).with_context(|| format!("decoding {}", approx.display()))?;
            let task = load_task(task).with_context(|| format!("loading task {}", task.display()))?;
            let code = FeatureCode::new(approx.spec)?;
            let features = TaskFeatures::build(&code, &task)?;
            let partition = approx.partition_for(task.target(0));
            let out = evaluate(&task, &features, &approx, partition)?;
            println!("cost ratio {} (exact DP {})", out.cost_ratio, out.dp_ratio);
        }
        Command::Experiment { name } => match name {
            ExperimentName::Capacity => {
                experiments::write_capacity(stage, &experiments::capacity(cfg)?)?;
            }
            ExperimentName::Speed => {
                experiments::write_speed(stage, &experiments::speed(cfg)?)?;
            }
            ExperimentName::Seqlearn => {
                experiments::write_seqlearn(stage, &experiments::seqlearn(cfg)?)?;
            }
            ExperimentName::Entropy => {
                experiments::write_entropy(stage, &experiments::entropy(cfg)?)?;
            }
            ExperimentName::Appendix1d => {
                let lines = experiments::appendix1d(cfg)?;
                for l in &lines {
                    println!("{l}");
                }
                experiments::write_appendix1d(stage, &lines)?;
            }
        },
    }
    Ok(())
}

/// Moves every entry of `stage` into `out`, replacing existing entries.
fn publish(stage: &Path, out: &Path) -> Result<()> {
    for entry in fs::read_dir(stage)? {
        let entry = entry?;
        let target = out.join(entry.file_name());
        if target.is_dir() {
            fs::remove_dir_all(&target)?;
        } else if target.exists() {
            fs::remove_file(&target)?;
        }
        fs::rename(entry.path(), &target).with_context(|| format!("moving output to {}", target.display()))?;
    }
    fs::remove_dir(stage)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli).and_then(|cfg| {
        fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
        let stage = cli.out.join(format!(".partial-{}", std::process::id()));
        fs::create_dir_all(&stage).with_context(|| format!("creating {}", stage.display()))?;
        match run(&cli, &cfg, &stage) {
            Ok(()) => publish(&stage, &cli.out),
            Err(e) => {
                let _ = fs::remove_dir_all(&stage);
                Err(e)
            }
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
