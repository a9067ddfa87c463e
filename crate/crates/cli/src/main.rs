use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use laddernet::config::RunConfig;
use laddernet::data::{fov_strategy, read_pnm, synth::write_synthetic};
use laddernet::ladder::{LadderNet, LadderTopology};
use laddernet::pipeline::{load_scored_maps, predict_files, score_maps, train, Model};
use laddernet::verify::{gradient_suite, max_error, SUITE_TOLERANCE};
use laddernet::Error;

#[derive(Parser)]
#[command(name = "laddernet", version, about = "LadderNet retinal vessel segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// `key = value` run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scoring {
    /// Inside field-of-view masks where present.
    Fov,
    /// Every pixel.
    All,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Train on `<data_dir>/train` and write history, checkpoint and resolved config.
    Train(ConfigArgs),
    /// Write `<stem>_prob.pgm` and `<stem>_prob.f32` for each image.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Score probability maps against `<stem>_label` masks.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Directory for metrics and curve CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "auto")]
        fov_mode: String,
        #[arg(long, value_enum, default_value = "fov")]
        scoring: Scoring,
    },
    /// Count source-to-sink paths of a ladder topology.
    Paths {
        #[arg(long)]
        levels: usize,
        #[arg(long)]
        pairs: usize,
        /// Print every path as well.
        #[arg(long)]
        list: bool,
    },
    /// Count trainable parameters for a configuration.
    Params {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        breakdown: bool,
    },
    /// Finite-difference gradient suite; fails above 1e-5.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Synthetic vessel images in `<out>/train` and `<out>/test`.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Failure {
    category: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { category: e.category(), message: e.to_string() }
    }
}

fn resolve(args: &ConfigArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let usage = |message: String| Failure { category: "config", message };
    for o in &args.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| usage(format!("override `{o}` is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim()).map_err(|e| usage(format!("override `{o}`: {e}")))?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = &args.data_dir {
        cfg.data_dir = d.clone();
    }
    if let Some(d) = &args.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    Ok(cfg)
}

fn image_stem(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_suffix("_img").map(str::to_string).unwrap_or(stem)
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train(args) => {
            let cfg = resolve(&args)?;
            let report = train(&cfg)?;
            for row in &report.history {
                println!("{}", row.csv());
            }
            println!(
                "parameters={} train_patches={} val_patches={} checkpoint={}",
                report.parameters,
                report.train_patches,
                report.val_patches,
                report.checkpoint.display()
            );
        }
        Command::Predict { checkpoint, out, images } => {
            let mut model = Model::load(&checkpoint)?;
            let images = images
                .iter()
                .map(|p| {
                    let mut img = read_pnm(p)?;
                    img.name = image_stem(p);
                    Ok(img)
                })
                .collect::<Result<Vec<_>, Error>>()?;
            for path in predict_files(&mut model, &images, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Eval { pred, truth, out, fov_mode, scoring } => {
            let maps = load_scored_maps(&pred, &truth, fov_strategy(&fov_mode)?)?;
            let scopes: &[(bool, &str)] = match scoring {
                Scoring::Fov => &[(true, "")],
                Scoring::All => &[(false, "")],
                Scoring::Both => &[(true, "_fov"), (false, "_all")],
            };
            for &(restricted, suffix) in scopes {
                let report = score_maps(&maps, restricted)?;
                if let Some(dir) = &out {
                    report.write(dir, suffix)?;
                }
                match suffix {
                    "" => println!("{}", report.summary()),
                    s => println!("scope={} {}", &s[1..], report.summary()),
                }
            }
        }
        Command::Paths { levels, pairs, list } => {
            let topology = LadderTopology::new(levels, pairs)?;
            if list {
                for path in topology.enumerate_paths()? {
                    let labels: Vec<String> = path.iter().map(ToString::to_string).collect();
                    println!("{}", labels.join(" -> "));
                }
            }
            println!("{}", topology.count_paths()?);
        }
        Command::Params { config, breakdown } => {
            let cfg = resolve(&config)?;
            let net = LadderNet::<f32>::build(&cfg.ladder(), cfg.seed)?;
            if breakdown {
                println!("{}", net.breakdown());
            }
            println!("{}", net.count_parameters());
        }
        Command::Gradcheck { seed } => {
            let cases = gradient_suite(seed)?;
            for c in &cases {
                println!("{:<32} {:.3e}", c.name, c.report.max_rel_error);
            }
            let worst = max_error(&cases);
            println!("max_rel_error={worst:.3e}");
            if worst.is_nan() || worst > SUITE_TOLERANCE {
                return Err(Failure {
                    category: "gradcheck",
                    message: format!("max relative error {worst:.3e} exceeds {SUITE_TOLERANCE:e}"),
                });
            }
        }
        Command::Synth { count, seed, out } => {
            let (train, test) = write_synthetic(&out, count, seed)?;
            println!("train={train} test={test}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error category=usage message={first}");
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error category={} message={}", f.category, f.message.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
