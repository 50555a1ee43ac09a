use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lsenet::encodings::LocationMode;
use lsenet::model::SeasonalSetting;
use lsenet_cli::commands::{self, InputSpec};
use lsenet_cli::config::{Overrides, RunConfig};
use lsenet_cli::{CliError, CliResult, EXIT_CHECK_FAILED, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "lsenet", version, about = "Multi-class ocean front segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Seasonal {
    Month,
    Season,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Location {
    Pe2d,
    Coordconv,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Toy,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration; the built-in desk configuration when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    no_csu: bool,
    #[arg(long, value_enum)]
    seasonal: Option<Seasonal>,
    #[arg(long, value_enum)]
    location: Option<Location>,
    #[arg(long)]
    no_augment: bool,
    /// Drop the location-attention branch; with --no-csu this is the plain encoder–decoder.
    #[arg(long)]
    no_attention: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::desk(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            epochs: self.epochs,
            no_csu: self.no_csu,
            seasonal: self.seasonal.map(|s| match s {
                Seasonal::Month => SeasonalSetting::Month,
                Seasonal::Season => SeasonalSetting::Season,
                Seasonal::Off => SeasonalSetting::Off,
            }),
            location: self.location.map(|l| match l {
                Location::Pe2d => LocationMode::Pe2d,
                Location::Coordconv => LocationMode::CoordConv,
                Location::Off => LocationMode::Off,
            }),
            no_augment: self.no_augment,
            no_attention: self.no_attention,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// A dataset directory (with --id) or an LST1 image (with --month).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    month: Option<u8>,
}

impl InputArgs {
    fn spec(&self) -> CliResult<InputSpec> {
        InputSpec::resolve(&self.input, self.id.clone(), self.month)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate train, val and test datasets.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Train a model and write checkpoints and the epoch log.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory holding train/ and optionally val/; defaults to data.dir of the config.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Run directory; defaults to output_dir of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
        /// Continue from the run directory's final checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Per-class IoU report of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the front/background report.
        #[arg(long)]
        binary: bool,
        /// Refuse the checkpoint unless it matches this configuration's model.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write the predicted label mask of one sample.
    Predict {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also render the mask as a greyscale PGM.
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Export per-class attention maps of one sample.
    Attention {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference checks of every operator and the toy network.
    Gradcheck {
        #[arg(long, value_enum, default_value = "toy")]
        scale: Scale,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn required(p: Option<PathBuf>, fallback: Option<&Path>, what: &str) -> CliResult<PathBuf> {
    p.or_else(|| fallback.map(Path::to_path_buf)).ok_or_else(|| CliError::usage(format!("{what} is required")))
}

fn run(cli: Cli) -> CliResult<i32> {
    let text = match cli.command {
        Command::Synth { cfg, out, force } => commands::synth(&cfg.resolve()?, &out, force)?,
        Command::Train { cfg, data, out, force, resume } => {
            let cfg = cfg.resolve()?;
            let data = required(data, cfg.data.dir.as_deref(), "--data")?;
            let out = required(out, cfg.output_dir.as_deref(), "--out")?;
            commands::train(&cfg, &data, &out, force, resume)?
        }
        Command::Eval { checkpoint, data, out, binary, config } => {
            let expected = config.map(|p| RunConfig::load(&p)).transpose()?.map(|c| c.model);
            commands::eval(&checkpoint, &data, &out, binary, expected.as_ref())?
        }
        Command::Predict { input, out, pgm } => commands::predict(&input.checkpoint, &input.spec()?, &out, pgm.as_deref())?,
        Command::Attention { input, out } => commands::attention(&input.checkpoint, &input.spec()?, &out)?,
        Command::Gradcheck { scale: Scale::Toy, instances, seed } => {
            let (text, passed) = commands::gradcheck(instances, seed)?;
            print!("{text}");
            return Ok(if passed { 0 } else { EXIT_CHECK_FAILED });
        }
    };
    print!("{text}");
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
