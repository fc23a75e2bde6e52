//! `lpcc`: compress, decompress, evaluate and inspect LiDAR scans.
//!
//! Exit codes: 0 success, 2 bad input (including corrupt or mismatched
//! frames), 3 internal failure. Errors are printed to stderr as one JSON
//! object: `{"error": "...", "kind": "input" | "internal", "code": N}`.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lpcc::CodecId;

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "lpcc", version, about = "Range-image LiDAR point cloud codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct CalibArg {
    /// Sensor calibration (TOML). Defaults to the built-in 32x1812 synthetic sensor.
    #[arg(long, value_name = "PATH")]
    calib: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic scans as PCD files.
    Gen(GenArgs),
    /// Compress ordered PCD scans into an .lpcc stream.
    Compress(CompressArgs),
    /// Decode an .lpcc stream back to PCD.
    Decompress(DecompressArgs),
    /// Compare an original and a reconstructed cloud.
    Evaluate(EvaluateArgs),
    /// Describe the frames of an .lpcc stream.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    calib: CalibArg,
    /// Output PCD. With --frames > 1, `_NNN` is appended to the file stem.
    #[arg(short, long, value_name = "PATH")]
    output: PathBuf,
    /// First seed. Defaults to the scene file's seed, or 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Scene description (TOML). Defaults to the seeded courtyard scene.
    #[arg(long, value_name = "PATH")]
    scene: Option<PathBuf>,
    /// Dropout rate for the default scene; overrides the scene file when given.
    #[arg(long)]
    dropout: Option<f64>,
    /// Number of consecutive seeds to generate.
    #[arg(long, default_value_t = 1)]
    frames: u32,
    #[arg(long)]
    ascii: bool,
}

#[derive(Args, Debug)]
pub struct CompressArgs {
    #[command(flatten)]
    calib: CalibArg,
    /// Input PCD files; each becomes one frame, in order.
    #[arg(required = true, value_name = "PCD")]
    inputs: Vec<PathBuf>,
    #[arg(short, long, value_name = "PATH")]
    output: PathBuf,
    #[arg(long, value_parser = parse_codec, default_value = "j2k")]
    range_codec: CodecId,
    #[arg(long, value_parser = parse_codec, default_value = "j2k")]
    azimuth_codec: CodecId,
    #[arg(long, value_parser = parse_codec, default_value = "png")]
    intensity_codec: CodecId,
    /// JPEG 2000 compression ratio for the range plane, and for the azimuth
    /// plane unless --azimuth-quality is given. Default 10.
    #[arg(long, value_name = "R")]
    quality: Option<f32>,
    #[arg(long, value_name = "R")]
    azimuth_quality: Option<f32>,
    /// Bitstream from the external neural range codec (range codec `rnn`).
    #[arg(long, value_name = "PATH")]
    rnn_bitstream: Option<PathBuf>,
    /// Iterations encoded in --rnn-bitstream.
    #[arg(long, value_name = "N")]
    rnn_iterations: Option<u32>,
    /// Also write the normalized range plane for the external neural codec.
    #[arg(long, value_name = "PATH")]
    export_range_plane: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecompressArgs {
    #[command(flatten)]
    calib: CalibArg,
    #[arg(value_name = "LPCC")]
    input: PathBuf,
    /// Output PCD. Streams with several frames get `_NNN` appended to the stem.
    #[arg(short, long, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Normalized range plane decoded by the external neural codec.
    #[arg(long, value_name = "PATH")]
    rnn_plane: Option<PathBuf>,
    /// Write the EXTERNAL_RNN bitstream of the frame to this path.
    #[arg(long, value_name = "PATH")]
    extract_rnn: Option<PathBuf>,
    #[arg(long)]
    ascii: bool,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(value_name = "ORIGINAL")]
    original: PathBuf,
    #[arg(value_name = "RECONSTRUCTED", required_unless_present = "voxel")]
    reconstructed: Option<PathBuf>,
    /// Compressed frame; adds bits per point to the record.
    #[arg(long, value_name = "LPCC")]
    payload: Option<PathBuf>,
    /// Evaluate the voxel-center baseline of ORIGINAL at this cell size instead.
    #[arg(long, value_name = "METERS", conflicts_with = "reconstructed")]
    voxel: Option<f64>,
    /// Append the JSON record to this file.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[command(flatten)]
    calib: CalibArg,
    #[arg(value_name = "LPCC")]
    input: PathBuf,
}

fn parse_codec(s: &str) -> Result<CodecId, String> {
    match s.to_ascii_lowercase().as_str() {
        "raw" => Ok(CodecId::Raw),
        "png" | "lossless" => Ok(CodecId::Lossless),
        "j2k" | "jpeg2000" | "wavelet" | "lossy-wavelet" | "lossy_wavelet" => {
            Ok(CodecId::LossyWavelet)
        }
        "rnn" | "external-rnn" | "external_rnn" => Ok(CodecId::ExternalRnn),
        _ => Err(format!(
            "unknown codec `{s}` (expected raw, png, j2k or rnn)"
        )),
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("LPCC_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::input(format!(
            "LPCC_THREADS must be a positive integer, got `{v}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::internal(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Compress(a) => commands::compress(a),
        Command::Decompress(a) => commands::decompress(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Inspect(a) => commands::inspect(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::input(e.render().to_string().trim().to_string());
            err.report();
            return ExitCode::from(err.code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            ExitCode::from(e.code)
        }
    }
}
