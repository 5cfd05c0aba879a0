mod clipio;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use trifuse_core::frame_io::{clip_to_rgb, write_png_sequence, ColorSpace};
use trifuse_core::metrics::PsnrPlanes;
use trifuse_core::model::{load_checkpoint, save_checkpoint};
use trifuse_core::pipeline::{
    build_dataset, degrade_clip, enhance_clip, enhance_clip_padded, evaluate, load_dataset, save_dataset,
    synthetic_clip, train_from, EvalColor,
};
use trifuse_core::selftest::run_selftest;
use trifuse_core::{DegradeSpec, Error, ErrorKind, GeneratorConfig, GeneratorModel, Result, TrainingConfig};

use clipio::{clips_in, read_clip, write_clip, ColorArgs, RawGeometry};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Multi-frame enhancement of decoded video.
#[derive(Parser, Debug)]
#[command(name = "trifuse", version)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Planes {
    All,
    Luma,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Apply the blockwise-DCT codec stand-in to a clip.
    Degrade {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        strength: f64,
        /// Seed for subtractive dither; off when absent.
        #[arg(long)]
        dither_seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        geometry: RawGeometry,
    },
    /// Cut degraded/pristine patch pairs from a directory of clips.
    Dataset {
        #[arg(long)]
        pristine: PathBuf,
        #[arg(long)]
        strength: f64,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        geometry: RawGeometry,
    },
    /// Train a generator on a dataset file.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// TOML training configuration; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from this checkpoint instead of a fresh initialization.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a freshly initialized generator.
    Init {
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enhance every frame of a decoded clip.
    Enhance {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the result as an RGB PNG sequence here.
        #[arg(long)]
        png_dir: Option<PathBuf>,
        /// Accept one- and two-frame clips by replicating neighbours.
        #[arg(long)]
        replicate_pad: bool,
        /// Bit depth of raw `.yuv` output, which is always planar 4:4:4.
        #[arg(long, default_value_t = 8)]
        out_bit_depth: u8,
        #[command(flatten)]
        geometry: RawGeometry,
        #[command(flatten)]
        color: ColorArgs,
    },
    /// Report per-frame PSNR of enhanced and decoded clips against the pristine one.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        decoded: PathBuf,
        #[arg(long)]
        pristine: PathBuf,
        #[arg(long, value_enum, default_value = "ycbcr")]
        color: EvalMode,
        #[arg(long, value_enum, default_value = "all")]
        planes: Planes,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        geometry: RawGeometry,
        #[command(flatten)]
        color_args: ColorArgs,
    },
    /// Generate a synthetic pristine clip.
    Synth {
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 5)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in numerical checks.
    Selftest,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EvalMode {
    Ycbcr,
    Rgb,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn load_model(path: &Path) -> Result<GeneratorModel> {
    let model = load_checkpoint(path)?;
    log::info!(
        "loaded {} ({} parameters, {} steps)",
        path.display(),
        model.parameter_count(),
        model.meta.steps
    );
    Ok(model)
}

fn read_config(path: Option<&Path>) -> Result<TrainingConfig> {
    let Some(path) = path else {
        return Ok(TrainingConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    toml::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Degrade {
            input,
            strength,
            dither_seed,
            out,
            geometry,
        } => {
            let spec = DegradeSpec {
                dither_seed,
                ..DegradeSpec::with_strength(strength)
            };
            let clip = read_clip(&input, &geometry)?;
            let degraded = degrade_clip(&clip, &spec)?;
            write_clip(&degraded, &out, geometry.bit_depth)?;
            println!("degraded {} frames -> {}", degraded.len(), out.display());
        }
        Command::Dataset {
            pristine,
            strength,
            count,
            seed,
            out,
            geometry,
        } => {
            let clips = clips_in(&pristine)?
                .iter()
                .map(|p| read_clip(p, &geometry))
                .collect::<Result<Vec<_>>>()?;
            let pairs = build_dataset(&clips, &DegradeSpec::with_strength(strength), count, seed)?;
            save_dataset(&pairs, &out)?;
            println!("{} pairs from {} clips -> {}", pairs.len(), clips.len(), out.display());
        }
        Command::Train {
            dataset,
            config,
            resume,
            out,
        } => {
            let config = read_config(config.as_deref())?;
            let pairs = load_dataset(&dataset)?;
            let model = match resume {
                Some(p) => load_model(&p)?,
                None => GeneratorModel::init(config.generator, config.seed)?,
            };
            let outcome = train_from(model, &config, &pairs)?;
            for e in &outcome.log {
                log::info!(
                    "epoch {:>4}  lr {:.2e}  steps {:>6}  loss {:.6}",
                    e.epoch,
                    e.lr,
                    e.steps,
                    e.mean_loss
                );
            }
            save_checkpoint(&outcome.model, &out)?;
            let last = outcome.log.last().map_or(f64::NAN, |e| e.mean_loss);
            println!(
                "trained {} steps, final epoch loss {last:.6} -> {}",
                outcome.model.meta.steps,
                out.display()
            );
        }
        Command::Init {
            width,
            blocks,
            seed,
            out,
        } => {
            let config = GeneratorConfig {
                hidden_width: width,
                residual_blocks: blocks,
                ..GeneratorConfig::default()
            };
            let model = GeneratorModel::init(config, seed)?;
            save_checkpoint(&model, &out)?;
            println!("{} parameters -> {}", model.parameter_count(), out.display());
        }
        Command::Enhance {
            model,
            input,
            out,
            png_dir,
            replicate_pad,
            out_bit_depth,
            geometry,
            color,
        } => {
            let model = load_model(&model)?;
            let clip = read_clip(&input, &geometry)?;
            let enhanced = if replicate_pad {
                enhance_clip_padded(&model, &clip)?
            } else {
                enhance_clip(&model, &clip)?
            };
            write_clip(&enhanced, &out, out_bit_depth)?;
            if let Some(dir) = png_dir {
                std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
                let files = write_png_sequence(&clip_to_rgb(&enhanced, color.config())?, &dir)?;
                log::info!("wrote {} png frames to {}", files.len(), dir.display());
            }
            println!("enhanced {} frames -> {}", enhanced.len(), out.display());
        }
        Command::Evaluate {
            model,
            decoded,
            pristine,
            color,
            planes,
            report,
            geometry,
            color_args,
        } => {
            let model = load_model(&model)?;
            let decoded = read_clip(&decoded, &geometry)?;
            let pristine = read_clip(&pristine, &geometry)?;
            let color = match color {
                EvalMode::Ycbcr => EvalColor::YCbCr,
                EvalMode::Rgb => EvalColor::Rgb,
            };
            let planes = match planes {
                Planes::All => PsnrPlanes::All,
                Planes::Luma => PsnrPlanes::LumaOnly,
            };
            let r = evaluate(&model, &decoded, &pristine, color, planes, color_args.config())?;
            std::fs::write(&report, r.to_text()).map_err(|e| io_err(&report, e))?;
            println!(
                "{} frames ({}, {} planes): decoded {:.4} dB, enhanced {:.4} dB, gain {:+.4} dB",
                r.frames.len(),
                r.color,
                r.planes,
                r.mean_anchor_db,
                r.mean_enhanced_db,
                r.mean_delta_db
            );
        }
        Command::Synth {
            width,
            height,
            frames,
            seed,
            out,
        } => {
            let clip = synthetic_clip(width, height, frames, seed)?;
            debug_assert_eq!(clip.space(), ColorSpace::YCbCr444);
            write_clip(&clip, &out, 8)?;
            println!("{width}x{height}x{frames} -> {}", out.display());
        }
        Command::Selftest => {
            let results = run_selftest();
            for r in &results {
                println!("{} {:<24} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if let Some(r) = results.iter().find(|r| !r.passed) {
                return Err(Error::Numerical(format!("selftest check '{}' failed", r.name)));
            }
        }
    }
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Validation => 1,
        ErrorKind::Io => 2,
        ErrorKind::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
