use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fcdae::checkpoint::{load_checkpoint, save_checkpoint};
use fcdae::config::RunConfig;
use fcdae::core::fit::{fit_slices, ModelKind, DEFAULT_EDGE_EXCLUSION};
use fcdae::core::model::denoise;
use fcdae::dataset::build_dataset;
use fcdae::formats::{read_c2, write_atomic, write_c2};
use fcdae::manifest::Manifest;
use fcdae::study::{self, write_json};
use fcdae::{Error, Result};

const CONFIG_HELP: &str = "\
Configuration (TOML, unknown keys rejected, every key optional):
  seed = 0                      master seed
  out_dir = \"out\"               artifact root; --out overrides
  [dataset]  n_samples = 48, n_frames = 128, frame_interval_s = 1.0,
             q_label = \"\", splits = [0.7, 0.15, 0.15], crop_size = 64,
             crop_stride = 64, write_pixel_series = false
  [dataset.augmentation]  reverse_age = true, subsample = [2]
  [[dataset.dynamics]]  kind = stationary_kww | aging_kww | oscillatory | two_step
                        (default: one stationary_kww, tau_c = 20, gamma = 1)
  [[dataset.speckle]]   n_pixels = 4000, n_modes = 1, mean_counts = 5.0
  [architecture]  encoder_channels = [1, 4, 8, 16, 32], kernel_size = 3,
                  input_channels = 1
  [train]  learning_rate = 1e-3, beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8,
           batch_size = 8, max_epochs = 30, early_stop_loss_threshold = 1e-3,
           shuffle_seed = 0
  [eval]  z = 1.96, max_lag = 20, ssim_threshold = 0.15
  [bootstrap]  fractions = [1.0, 0.5, 0.25, 0.1, 0.05], model = \"composite\",
               n_frames = 128, frame_interval_s = 1.0, checkpoint (default
               <out_dir>/model/checkpoint.fcda), dynamics and speckle tables
               (default: oscillatory tau_c = 15, gamma = 1, amplitude = 0.5,
               omega = 0.2, damping = 0.01; 4000 pixels, 1 mode, 5 counts)
  [ensemble]  seeds = [1, 2, 3, 4], max_epochs, max_train_crops
See configs/example.toml for a complete file.";

#[derive(Parser)]
#[command(name = "fcdae", version, about = "Denoise XPCS two-time correlation maps", after_long_help = CONFIG_HELP)]
struct Cli {
    /// Embed a `generated_at` unix time in JSON reports.
    #[arg(long, global = true)]
    timestamps: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Kww,
    Composite,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Kww => ModelKind::Kww,
            Model::Composite => ModelKind::Composite,
        }
    }
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its manifest.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on the manifest's training split.
    Train {
        #[command(flatten)]
        common: Common,
        /// Manifest to train on [default: <out_dir>/dataset/manifest.tsv].
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Denoise one C2F1 map with a checkpoint.
    Denoise { checkpoint: PathBuf, input: PathBuf, output: PathBuf },
    /// Reliability metrics of a raw/denoised pair, as JSON.
    Eval {
        raw: PathBuf,
        denoised: PathBuf,
        /// Read the [eval] section from this configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write eval_report.json here instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit every age slice of a map and emit the parameter trace as CSV.
    Fit {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "kww")]
        model: Model,
        /// Fraction of ages dropped at each end.
        #[arg(long, default_value_t = DEFAULT_EDGE_EXCLUSION)]
        edge_exclude: f64,
        /// Ages averaged on each side of the slice age.
        #[arg(long, default_value_t = 0)]
        half_window: usize,
        /// Write trace.csv and trace.svg here instead of printing the CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Denoise pixel-subsampled versions of a simulated scenario.
    BootstrapStudy {
        #[command(flatten)]
        common: Common,
        /// Comma-separated pixel fractions in (0, 1].
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        #[arg(long, value_enum)]
        model: Option<Model>,
        /// Checkpoint to denoise with.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train a seed ensemble and report its variance on held-out samples.
    Ensemble {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Comma-separated ensemble seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

fn read_manifest(cfg: &RunConfig, explicit: Option<&PathBuf>) -> Result<Manifest> {
    let path = explicit.cloned().unwrap_or_else(|| cfg.manifest_path());
    if !path.exists() {
        return Err(Error::config(format!("manifest {} does not exist; run `fcdae synth` first", path.display())));
    }
    Manifest::read(&path)
}

fn stdout_bytes(bytes: &[u8]) -> Result<()> {
    std::io::stdout().write_all(bytes).map_err(Error::io(Path::new("<stdout>")))
}

fn run(cli: Cli) -> Result<()> {
    let stamp = |t: bool| t.then(study::unix_time);
    match cli.command {
        Command::Synth { common } => {
            let cfg = common.load()?;
            let s = build_dataset(&cfg)?;
            println!("manifest: {}", cfg.manifest_path().display());
            println!("base samples: train {} val {} test {}", s.base.train, s.base.val, s.base.test);
            println!("records: train {} val {} test {}", s.records[0], s.records[1], s.records[2]);
            println!("training crops: {}", s.train_crops);
        }
        Command::Train { common, manifest } => {
            let cfg = common.load()?;
            let manifest = read_manifest(&cfg, manifest.as_ref())?;
            let (model, report) = study::train_from_manifest(&cfg, &manifest, |epoch, loss| {
                eprintln!("epoch {}: loss {loss:.6e}", epoch + 1);
            })?;
            let ckpt = cfg.model_dir().join("checkpoint.fcda");
            save_checkpoint(&ckpt, &model, &study::training_meta(&report))?;
            write_atomic(&cfg.model_dir().join("loss_history.csv"), &study::loss_history_csv(&report)?)?;
            println!("checkpoint: {}", ckpt.display());
            println!("epochs: {} final loss: {:.6e}", report.epochs_run(), report.final_loss());
        }
        Command::Denoise { checkpoint, input, output } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let raw = read_c2(&input)?;
            let den = denoise(&ckpt.model, &raw)?;
            write_c2(&output, &den, &format!("denoised {} with {}", input.display(), checkpoint.display()))?;
        }
        Command::Eval { raw, denoised, config, out } => {
            let cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            let (raw, den) = (read_c2(&raw)?, read_c2(&denoised)?);
            if raw.n_frames() != den.n_frames() {
                return Err(Error::Shape(format!(
                    "raw map is {0}x{0}, denoised map is {1}x{1}",
                    raw.n_frames(),
                    den.n_frames()
                )));
            }
            let mut report = study::evaluate(&raw, &den, &cfg.eval)?;
            report.generated_at = stamp(cli.timestamps);
            match out {
                Some(dir) => write_json(&dir.join("eval_report.json"), &report)?,
                None => {
                    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::format("json", e.to_string()))?;
                    println!("{text}");
                }
            }
        }
        Command::Fit { input, model, edge_exclude, half_window, out } => {
            let c2 = read_c2(&input)?;
            let kind = ModelKind::from(model);
            let fits = fit_slices(&c2, kind, half_window, edge_exclude)?;
            let csv = study::trace_csv(kind, &fits)?;
            match out {
                Some(dir) => {
                    write_atomic(&dir.join("trace.csv"), &csv)?;
                    write_atomic(&dir.join("trace.svg"), study::trace_svg(&fits).as_bytes())?;
                    let converged = fits.iter().filter(|f| f.fit.converged).count();
                    println!("fitted {} slices, {converged} converged", fits.len());
                }
                None => stdout_bytes(&csv)?,
            }
        }
        Command::BootstrapStudy { common, fractions, model, checkpoint } => {
            let mut cfg = common.load()?;
            if let Some(f) = fractions {
                cfg.bootstrap.fractions = f;
            }
            if let Some(m) = model {
                cfg.bootstrap.model = m.into();
            }
            if let Some(c) = checkpoint {
                cfg.bootstrap.checkpoint = Some(c);
            }
            cfg.validate()?;
            let ckpt = load_checkpoint(&cfg.checkpoint_path())?;
            let dir = cfg.out_dir.join("bootstrap");
            let report = study::run_bootstrap(&cfg, &ckpt.model, &dir, cli.timestamps)?;
            println!("report: {}", dir.join("report.json").display());
            for r in &report.records {
                println!(
                    "{:>8}  snr_raw {:.4}  snr_denoised {:.4}",
                    r.label, r.metrics.snr_raw, r.metrics.snr_denoised
                );
            }
        }
        Command::Ensemble { common, manifest, seeds } => {
            let cfg = common.load()?;
            let seeds = seeds.unwrap_or_else(|| cfg.ensemble.seeds.clone());
            if seeds.len() < 2 {
                return Err(fcdae::core::Error::TooFewModels(seeds.len()).into());
            }
            let manifest = read_manifest(&cfg, manifest.as_ref())?;
            let dir = cfg.out_dir.join("ensemble");
            let s = study::run_ensemble(&cfg, &manifest, &seeds, &dir, cli.timestamps)?;
            println!("report: {}", dir.join("report.json").display());
            println!(
                "median variance/beta_obs {:.3e} (p10 {:.3e}, p90 {:.3e})",
                s.report.median_ratio, s.report.p10_ratio, s.report.p90_ratio
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("E_CONFIG: {e}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
