//! Command-line surface over the specloss library.
//!
//! Every subcommand emits machine-readable JSON on stdout (or to `--out`)
//! and keeps human diagnostics on stderr. Exit codes: 0 success, 1 usage
//! error, 2 data error, 3 numerical degeneracy.

use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use specloss::dsp::{StftConfig, Waveform};
use specloss::loss::{mr_stft_loss, MultiResolutionConfig};
use specloss::mask::{design_lp_from_corpus, MaskFile};
use specloss::metrics::{default_lsd_config, log_spectral_distance};
use specloss::noise_shaping::{analysis_filter, synthesis_filter};
use specloss::optim::{optimize_waveform, valley_error_profile};
use specloss::wav::{read_corpus, read_wav, scan_corpus, write_wav};
use specloss::{Error, Result};

/// Step size used by `optimize-demo`; the demonstration exposes the budget
/// and seed, not the update rule's internals.
const DEMO_STEP_SIZE: f64 = 0.05;

#[derive(Parser)]
#[command(
    name = "specloss",
    version,
    about = "Perceptually weighted multi-resolution STFT losses and LP tooling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design a perceptual mask from a WAV corpus by LSF-averaged linear
    /// prediction.
    DesignMask {
        /// Directory scanned recursively for .wav files.
        #[arg(long)]
        corpus: PathBuf,
        /// Linear prediction order.
        #[arg(long, default_value_t = 40)]
        order: usize,
        /// Normalization range for the mask weights, as LO,HI.
        #[arg(long, default_value = "0.5,1.0", value_parser = parse_range)]
        range: (f64, f64),
        /// Mask JSON destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the multi-resolution STFT loss between two waveforms.
    EvalLoss {
        /// Reference waveform.
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Estimated waveform, the gradient target.
        #[arg(long)]
        est: PathBuf,
        /// Optional mask JSON for perceptual weighting.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Dump the waveform gradient as raw little-endian float64.
        #[arg(long)]
        grad: Option<PathBuf>,
        /// Report JSON destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the log-spectral distance between two waveforms.
    Lsd {
        /// Reference waveform.
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Estimated waveform.
        #[arg(long)]
        est: PathBuf,
        /// Report JSON destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the LP noise-shaping filter or its inverse over a waveform.
    NoiseShape {
        /// Filter direction.
        #[arg(long)]
        mode: ShapeMode,
        /// Mask JSON providing the LP model.
        #[arg(long)]
        mask: PathBuf,
        /// Input waveform.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output WAV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit the normalized mask weight row for one FFT size.
    MaskDump {
        /// Mask JSON providing the LP model and range.
        #[arg(long)]
        mask: PathBuf,
        /// FFT size the row is evaluated for.
        #[arg(long)]
        fft: usize,
        /// Weights JSON destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a waveform to a target by gradient descent on the loss.
    OptimizeDemo {
        /// Target waveform.
        #[arg(long)]
        target: PathBuf,
        /// Optional mask JSON for perceptual weighting.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Number of gradient updates.
        #[arg(long)]
        steps: usize,
        /// Seed for the noise initialization.
        #[arg(long)]
        seed: u64,
        /// Run report JSON destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeMode {
    /// Apply the FIR analysis filter, producing the residual.
    Analyze,
    /// Apply the all-pole inverse, reconstructing from a residual.
    Synthesize,
}

fn parse_range(text: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = text
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got {text:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad number {lo:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad number {hi:?}"))?;
    Ok((lo, hi))
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    if let Some(code) = configure_threads() {
        return code;
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

/// Applies SPECLOSS_THREADS to the global thread pool. Returns an exit
/// code when the variable is present but unusable.
fn configure_threads() -> Option<i32> {
    let raw = match std::env::var("SPECLOSS_THREADS") {
        Ok(raw) => raw,
        Err(std::env::VarError::NotPresent) => return None,
        Err(std::env::VarError::NotUnicode(_)) => {
            eprintln!("SPECLOSS_THREADS is not valid UTF-8");
            return Some(1);
        }
    };
    match raw.parse::<usize>() {
        Ok(n) if n >= 1 => {
            if let Err(err) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("failed to configure {n} threads: {err}");
                return Some(1);
            }
            None
        }
        _ => {
            eprintln!("SPECLOSS_THREADS must be a positive integer, got {raw:?}");
            Some(1)
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_)
        | Error::MalformedWav(_)
        | Error::UnsupportedFormat(_)
        | Error::UnsupportedChannels(_)
        | Error::UnsupportedBitDepth(_)
        | Error::MalformedMask(_)
        | Error::Io { .. } => 2,
        Error::NumericalDegeneracy(_)
        | Error::NonMinimumPhase { .. }
        | Error::DivisionGuard(_)
        | Error::AbortedRun { .. } => 3,
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::DesignMask {
            corpus,
            order,
            range,
            out,
        } => cmd_design_mask(&corpus, order, range, out.as_deref()),
        Command::EvalLoss {
            reference,
            est,
            mask,
            grad,
            out,
        } => cmd_eval_loss(
            &reference,
            &est,
            mask.as_deref(),
            grad.as_deref(),
            out.as_deref(),
        ),
        Command::Lsd {
            reference,
            est,
            out,
        } => cmd_lsd(&reference, &est, out.as_deref()),
        Command::NoiseShape {
            mode,
            mask,
            input,
            out,
        } => cmd_noise_shape(mode, &mask, &input, &out),
        Command::MaskDump { mask, fft, out } => cmd_mask_dump(&mask, fft, out.as_deref()),
        Command::OptimizeDemo {
            target,
            mask,
            steps,
            seed,
            out,
        } => cmd_optimize_demo(&target, mask.as_deref(), steps, seed, out.as_deref()),
    }
}

fn emit(json: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, json).map_err(|e| Error::io(path, e)),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn load_mask(path: &Path) -> Result<MaskFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MaskFile::from_json(&text)
}

fn load_waveform(path: &Path) -> Result<Waveform> {
    Ok(read_wav(path)?.into_waveform())
}

fn cmd_design_mask(
    corpus: &Path,
    order: usize,
    range: (f64, f64),
    out: Option<&Path>,
) -> Result<()> {
    let paths = scan_corpus(corpus)?;
    let files = read_corpus(corpus)?;
    let sample_rate = files[0].waveform().sample_rate();
    let utterances: Vec<Waveform> = files.into_iter().map(|f| f.into_waveform()).collect();
    eprintln!(
        "designing order-{order} mask from {} files at {sample_rate} Hz",
        utterances.len()
    );
    let design = design_lp_from_corpus(&utterances, order)?;
    for &index in &design.skipped {
        eprintln!(
            "warning: skipped {} (LP extraction failed)",
            paths[index].display()
        );
    }
    eprintln!("averaged LSF vectors from {} files", design.used);
    let mask = MaskFile::new(design.model, range, sample_rate)?;
    emit(&mask.to_json(), out)
}

fn cmd_eval_loss(
    reference: &Path,
    est: &Path,
    mask: Option<&Path>,
    grad: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let x = load_waveform(reference)?;
    let xhat = load_waveform(est)?;
    let mask = mask.map(load_mask).transpose()?;
    let mrc = MultiResolutionConfig::default();
    let report = mr_stft_loss(&x, &xhat, &mrc, mask.as_ref(), grad.is_some())?;
    if let Some(grad_path) = grad {
        let gradient = report.gradient().expect("gradient was requested");
        let mut bytes = Vec::with_capacity(8 * gradient.len());
        for value in gradient {
            bytes.extend_from_slice(&value.to_le_bytes());
        }
        fs::write(grad_path, bytes).map_err(|e| Error::io(grad_path, e))?;
        eprintln!(
            "wrote {} gradient values to {}",
            gradient.len(),
            grad_path.display()
        );
    }
    emit(&report.to_json(), out)
}

fn cmd_lsd(reference: &Path, est: &Path, out: Option<&Path>) -> Result<()> {
    let x = load_waveform(reference)?;
    let xhat = load_waveform(est)?;
    let report = log_spectral_distance(&x, &xhat, &default_lsd_config())?;
    emit(&report.to_json(), out)
}

#[derive(Serialize)]
struct ShapeSummary<'a> {
    mode: &'a str,
    samples: usize,
    sample_rate: u32,
    clipped: usize,
}

fn cmd_noise_shape(mode: ShapeMode, mask: &Path, input: &Path, out: &Path) -> Result<()> {
    let mask = load_mask(mask)?;
    let lp = mask.lp();
    if !lp.is_minimum_phase() {
        return Err(Error::NonMinimumPhase {
            order: lp.order(),
            detail: "the mask's model cannot drive a stable filter pair".to_string(),
        });
    }
    let x = load_waveform(input)?;
    let (mode_name, y) = match mode {
        ShapeMode::Analyze => ("analyze", analysis_filter(&x, lp)?),
        ShapeMode::Synthesize => ("synthesize", synthesis_filter(&x, lp)?),
    };
    let clipped = write_wav(out, &y)?;
    if clipped > 0 {
        eprintln!("warning: clipped {clipped} samples while encoding {}", out.display());
    }
    let summary = ShapeSummary {
        mode: mode_name,
        samples: y.len(),
        sample_rate: y.sample_rate(),
        clipped,
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serialization");
    json.push('\n');
    print!("{json}");
    Ok(())
}

#[derive(Serialize)]
struct MaskDump {
    fft_size: usize,
    num_bins: usize,
    norm_range: [f64; 2],
    degenerate: bool,
    weights: Vec<f64>,
}

fn cmd_mask_dump(mask: &Path, fft: usize, out: Option<&Path>) -> Result<()> {
    let mask = load_mask(mask)?;
    let cfg = StftConfig::new(fft, fft, 1)?;
    let response = mask.mask_for(&cfg)?;
    if response.is_degenerate() {
        eprintln!("warning: flat spectral response, every weight is the upper bound");
    }
    let dump = MaskDump {
        fft_size: fft,
        num_bins: response.weights().len(),
        norm_range: [mask.norm_range().0, mask.norm_range().1],
        degenerate: response.is_degenerate(),
        weights: response.weights().to_vec(),
    };
    let mut json = serde_json::to_string_pretty(&dump).expect("mask dump serialization");
    json.push('\n');
    emit(&json, out)
}

#[derive(Serialize)]
struct OptimizeReport<'a> {
    steps: usize,
    step_size: f64,
    seed: u64,
    weighted: bool,
    initial_loss: f64,
    final_loss: f64,
    valley_error: Option<f64>,
    formant_error: Option<f64>,
    loss_history: &'a [f64],
}

fn cmd_optimize_demo(
    target: &Path,
    mask: Option<&Path>,
    steps: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let target = load_waveform(target)?;
    let mask = mask.map(load_mask).transpose()?;
    let mrc = MultiResolutionConfig::default();
    let run = optimize_waveform(&target, &mrc, mask.as_ref(), steps, DEMO_STEP_SIZE, seed)?;
    let profile = match &mask {
        Some(mask) => Some(valley_error_profile(
            &target,
            run.estimate(),
            mask.lp(),
            &default_lsd_config(),
        )?),
        None => None,
    };
    let report = OptimizeReport {
        steps: run.steps(),
        step_size: run.step_size(),
        seed,
        weighted: mask.is_some(),
        initial_loss: run.initial_loss(),
        final_loss: run.final_loss(),
        valley_error: profile.map(|p| p.0),
        formant_error: profile.map(|p| p.1),
        loss_history: run.loss_history(),
    };
    let mut json = serde_json::to_string_pretty(&report).expect("run report serialization");
    json.push('\n');
    emit(&json, out)
}
