use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cogesture::conditioning::Emotion;
use cogesture::dataset::ToyCorpusConfig;
use cogesture::diffusion::SamplerMode;
use cogesture::selfcheck::SelfCheckOptions;
use cogesture_cli::commands::{self, Representation, SampleRequest};
use cogesture_cli::config::RunConfig;
use cogesture_cli::error::CliError;

#[derive(Parser)]
#[command(name = "cogesture", version, about = "Co-speech gesture diffusion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a procedural corpus of BVH/WAV/TextGrid triples.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        clips: usize,
        #[arg(long, default_value_t = 240)]
        frames: usize,
        #[arg(long, default_value_t = 75)]
        joints: usize,
        #[arg(long, default_value_t = 20.0)]
        fps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Ingest a corpus into a manifest plus blobs.
    Preprocess {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Validate everything without writing.
        #[arg(long)]
        dry_run: bool,
        #[arg(long)]
        joints: Option<usize>,
    },
    /// Train the denoiser on a preprocessed dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint directory to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Total number of optimizer steps.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Reduce the batch on one thread.
        #[arg(long)]
        serial: bool,
    },
    /// Generate a BVH for a speech recording.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        textgrid: PathBuf,
        #[arg(long)]
        emotion: String,
        /// Second emotion; guidance then interpolates between the two.
        #[arg(long)]
        emotion2: Option<String>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<SamplerMode>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        allow_untrained: bool,
    },
    /// FGD (and paired MSE) between a real dataset and generated motion.
    Eval {
        #[arg(long)]
        real: PathBuf,
        /// Dataset directory or directory of .bvh files.
        #[arg(long)]
        generated: PathBuf,
        #[arg(long, value_enum, default_value = "features")]
        representation: Representation,
        #[arg(long)]
        paired: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the numerical self-checks.
    Selfcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_attention_fault: bool,
    },
    /// Debug conversion between BVH and feature matrices.
    Convert {
        #[command(subcommand)]
        direction: Convert,
    },
    /// Print the resolved default config as TOML.
    Config {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Convert {
    BvhToFeatures {
        #[arg(long)]
        bvh: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    FeaturesToBvh {
        #[arg(long)]
        features: PathBuf,
        /// Any BVH with the target skeleton.
        #[arg(long)]
        skeleton: PathBuf,
        #[arg(long, default_value_t = 20.0)]
        fps: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<SamplerMode, String> {
    match s {
        "consistent" => Ok(SamplerMode::Consistent),
        "literal" => Ok(SamplerMode::Literal),
        _ => Err(format!("unknown sampler mode {s:?} (consistent | literal)")),
    }
}

fn emotion(s: &str) -> Result<Emotion, CliError> {
    s.parse().map_err(|e: cogesture::conditioning::ConditioningError| CliError::Input(e.to_string()))
}

fn write_json(path: &std::path::Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { out, clips, frames, joints, fps, seed } => {
            let stems = commands::cmd_synth(&out, &ToyCorpusConfig { clips, frames, joint_count: joints, fps, seed })?;
            println!("wrote {} clips to {}", stems.len(), out.display());
        }
        Command::Preprocess { corpus, out, config, dry_run, joints } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            cfg.data.dry_run |= dry_run;
            if let Some(j) = joints {
                cfg.data.joint_count = j;
            }
            let (path, manifest) = commands::cmd_preprocess(&corpus, &out, &cfg)?;
            let verb = if cfg.data.dry_run { "validated" } else { "wrote" };
            println!("{verb} {} clips, {} windows -> {}", manifest.entries.len(), manifest.window_count(), path.display());
        }
        Command::Train { data, out, config, steps, resume, seed, serial } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            if let Some(s) = steps {
                cfg.training.steps = s;
            }
            if let Some(s) = seed {
                cfg.training.seed = s;
            }
            if serial {
                cfg.training.parallel = false;
            }
            let outcome = commands::cmd_train(&data, &out, &cfg, resume.as_deref())?;
            match outcome.stats.last() {
                Some(s) => println!("step {} loss {:.6} -> {}", s.step, s.loss, outcome.checkpoint.display()),
                None => println!("no steps run -> {}", outcome.checkpoint.display()),
            }
        }
        Command::Sample { checkpoint, wav, textgrid, emotion: e1, emotion2, gamma, seed, mode, out, allow_untrained } => {
            let req = SampleRequest {
                checkpoint,
                wav,
                textgrid,
                emotion: emotion(&e1)?,
                emotion2: emotion2.as_deref().map(emotion).transpose()?,
                gamma,
                seed,
                mode,
                out,
                allow_untrained,
            };
            let side = commands::cmd_sample(&req)?;
            println!("{} frames ({} segments) -> {}", side.frames, side.segments, req.out.display());
        }
        Command::Eval { real, generated, representation, paired, out, config } => {
            let cfg = RunConfig::load(config.as_deref())?;
            let report = commands::cmd_eval(&real, &generated, representation, paired, &cfg)?;
            write_json(&out, &report)?;
            for m in &report.metrics {
                println!("{} ({:?}, d={}): {:.6e}", m.metric, m.representation, m.dim, m.value);
            }
        }
        Command::Selfcheck { seed, inject_attention_fault } => {
            let table = commands::cmd_selfcheck(SelfCheckOptions { seed, inject_attention_fault })?;
            print!("{table}");
        }
        Command::Convert { direction } => match direction {
            Convert::BvhToFeatures { bvh, out } => {
                let d = commands::cmd_bvh_to_features(&bvh, &out)?;
                println!("{d} feature columns -> {}", out.display());
            }
            Convert::FeaturesToBvh { features, skeleton, fps, out } => {
                let n = commands::cmd_features_to_bvh(&features, &skeleton, fps, &out)?;
                println!("{n} frames -> {}", out.display());
            }
        },
        Command::Config { config } => {
            let cfg = RunConfig::load(config.as_deref())?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
