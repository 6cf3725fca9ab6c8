//! `framevoc` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 malformed input file,
//! 3 numeric failure during synthesis.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use log::warn;

use framevoc::dsp::{wav_read, wav_write, Signal};
use framevoc::engine::{bench, copy_synthesis, synthesize, Network};
use framevoc::features::{analyze, read_ffe, write_ffe};
use framevoc::model::{
    count_flops, dequantize_model, load_model, quantize_model, save_model, Model, ModelConfig,
    Precision,
};
use framevoc::{Error, Result};

#[derive(Parser)]
#[command(name = "framevoc", version, about = "Framewise autoregressive neural vocoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract features from a 16 kHz mono PCM16 WAV file.
    Analyze { input: PathBuf, output: PathBuf },
    /// Synthesize speech from a feature file.
    Synthesize {
        model: PathBuf,
        features: PathBuf,
        output: PathBuf,
    },
    /// Analyze a WAV file and resynthesize it.
    Copysynth {
        model: PathBuf,
        input: PathBuf,
        output: PathBuf,
    },
    /// Measure the real-time factor on synthetic features.
    Bench {
        model: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        seconds: f64,
        /// Run the float path instead of int8.
        #[arg(long)]
        float: bool,
    },
    /// Convert a float model to int8.
    Quantize { input: PathBuf, output: PathBuf },
    /// Print a model's configuration, size and complexity.
    Inspect {
        model: PathBuf,
        /// Also list every tensor.
        #[arg(long)]
        tensors: bool,
    },
    /// Write a randomly initialized model (for testing the pipeline).
    Init {
        output: PathBuf,
        /// TOML file with `ModelConfig` fields; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        int8: bool,
    },
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn network(path: &Path) -> Result<Arc<Network>> {
    Ok(Arc::new(Network::from_model(&load_model(&read(path)?)?)?))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Analyze { input, output } => {
            let signal = wav_read(&read(&input)?)?;
            let frames = analyze(signal.samples())?;
            if frames.is_empty() {
                warn!("input shorter than one analysis window; no frames written");
            }
            write(&output, &write_ffe(&frames))?;
            println!("{} frames", frames.len());
        }
        Command::Synthesize {
            model,
            features,
            output,
        } => {
            let net = network(&model)?;
            let frames = read_ffe(&read(&features)?)?;
            let audio = synthesize(&net, &frames)?;
            write(&output, &wav_write(&Signal::new(audio)?)?)?;
        }
        Command::Copysynth {
            model,
            input,
            output,
        } => {
            let net = network(&model)?;
            let signal = wav_read(&read(&input)?)?;
            let audio = copy_synthesis(&net, signal.samples())?;
            write(&output, &wav_write(&Signal::new(audio)?)?)?;
        }
        Command::Bench {
            model,
            seconds,
            float,
        } => {
            let mut m = load_model(&read(&model)?)?;
            match (float, m.precision()) {
                (false, Precision::Float) => m = quantize_model(&m)?,
                (true, Precision::Int8) => {
                    warn!("benchmarking dequantized int8 weights on the float path");
                    m = dequantize_model(&m)?;
                }
                _ => {}
            }
            let net = Arc::new(Network::from_model(&m)?);
            let r = bench(&net, seconds)?;
            println!("precision        {:?}", m.precision());
            println!("audio            {:.2} s", r.audio_seconds);
            println!("compute          {:.3} s", r.compute_seconds);
            println!("rtf              {:.5}", r.rtf);
            println!("samples/s        {:.0}", r.samples_per_sec);
            println!("nominal GFLOPS   {:.3}", r.flops_nominal * 1e-9);
        }
        Command::Quantize { input, output } => {
            let m = load_model(&read(&input)?)?;
            write(&output, &save_model(&quantize_model(&m)?))?;
        }
        Command::Inspect { model, tensors } => {
            let bytes = read(&model)?;
            let m = load_model(&bytes)?;
            let flops = count_flops(m.config());
            print!("{}", m.config().to_toml());
            println!("precision = {:?}", m.precision());
            println!("params = {}", m.param_count());
            println!(
                "gflops = {:.4} (conditioning {:.4}, subframe {:.4}, elementwise {:.4})",
                flops.total() * 1e-9,
                flops.cond_flops * 1e-9,
                flops.subframe_flops * 1e-9,
                flops.elementwise_flops * 1e-9
            );
            println!("file_bytes = {}", bytes.len());
            if tensors {
                for t in m.tensors() {
                    println!("  {:<20} {:?} {:?}", t.name, t.dtype, t.shape);
                }
            }
        }
        Command::Init {
            output,
            config,
            seed,
            int8,
        } => {
            let cfg = match config {
                Some(p) => {
                    let text = String::from_utf8(read(&p)?)
                        .map_err(|_| Error::InvalidConfig("config file is not UTF-8".into()))?;
                    ModelConfig::from_toml(&text)?
                }
                None => ModelConfig::default(),
            };
            let mut m = Model::random(cfg, seed)?;
            if int8 {
                m = quantize_model(&m)?;
            }
            write(&output, &save_model(&m))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_format_error() {
                2
            } else if e.is_numeric_error() {
                3
            } else {
                1
            })
        }
    }
}
