//! Command-line frontend: encode, scramble, issue, decode, trace, psnr,
//! inspect.
//!
//! Exit codes: 0 success (including a trace MATCH), 1 usage or io error,
//! 2 malformed or unsupported input file, 3 trace NO_MATCH, 4 violated
//! precondition or registry conflict.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dcfe_core::codec::{
    decode_to_rgb, encode_rgb, parse_jpeg, read_ppm, serialize_jpeg, CoefficientImage, RgbImage,
    Subsampling,
};
use dcfe_core::dcfe::{decode_image, recover_original, scramble_image};
use dcfe_core::error::{Error, Result};
use dcfe_core::keys::{
    issue_user_key, parse_key, serialize_key, ComponentSelection, Key, KeyGenConfig, XiMode,
};
use dcfe_core::metrics::psnr;
use dcfe_core::trace::{
    canonical_bytes, digest128, register_user, trace as trace_suspect, Registry, TraceOutcome,
};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

#[derive(Parser)]
#[command(
    name = "dcfe",
    version,
    about = "Scramble JPEGs into trial images, issue fingerprinting decode keys, trace leaked copies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a PPM raster into a baseline JPEG.
    Encode {
        #[arg(long = "in", value_name = "PPM")]
        input: PathBuf,
        #[arg(long = "out", value_name = "JPG")]
        output: PathBuf,
        /// Quality factor, 1..=100.
        #[arg(long, default_value_t = 75)]
        quality: u32,
        /// Chroma sampling: 444 or 420.
        #[arg(long, default_value = "420", value_parser = parse_subsampling)]
        subsampling: Subsampling,
    },
    /// Scramble a JPEG into a degraded trial image, writing the producer key.
    Scramble {
        #[arg(long = "in", value_name = "JPG")]
        input: PathBuf,
        #[arg(long = "out", value_name = "JPG")]
        output: PathBuf,
        #[arg(long = "key-out", value_name = "KEY")]
        key_out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Offset selection: "random" or "fixed:<value>".
        #[arg(long = "xi-mode", default_value = "random", value_parser = parse_xi_mode)]
        xi_mode: XiMode,
        /// Components to scramble: "all" or "luma".
        #[arg(long, default_value = "all", value_parser = parse_components)]
        components: ComponentSelection,
    },
    /// Issue a user decode key and record it in the registry.
    Issue {
        #[arg(long, value_name = "JPG")]
        trial: PathBuf,
        #[arg(long = "producer-key", value_name = "KEY")]
        producer_key: PathBuf,
        #[arg(long = "user-id", value_name = "ID")]
        user_id: String,
        #[arg(long = "key-out", value_name = "KEY")]
        key_out: PathBuf,
        #[arg(long, value_name = "JSON")]
        registry: PathBuf,
        /// Largest fingerprint offset magnitude.
        #[arg(long = "delta-max", default_value_t = 2)]
        delta_max: u16,
    },
    /// Decode a trial image with a user key (or invert it with the
    /// producer key).
    Decode {
        #[arg(long = "in", value_name = "JPG")]
        input: PathBuf,
        #[arg(long, value_name = "KEY")]
        key: PathBuf,
        #[arg(long = "out", value_name = "JPG")]
        output: PathBuf,
    },
    /// Trace a suspect image against a registry.
    Trace {
        #[arg(long = "in", value_name = "JPG")]
        input: PathBuf,
        #[arg(long, value_name = "JSON")]
        registry: PathBuf,
        /// Re-derive every user's key and reference hash for audit.
        #[arg(long)]
        recompute: bool,
        #[arg(long, value_name = "JPG", requires = "recompute")]
        trial: Option<PathBuf>,
        #[arg(long = "producer-key", value_name = "KEY", requires = "recompute")]
        producer_key: Option<PathBuf>,
    },
    /// Measure MSE and PSNR of a test image against a PPM reference.
    Psnr {
        #[arg(long = "ref", value_name = "PPM")]
        reference: PathBuf,
        #[arg(long = "test", value_name = "IMG")]
        test: PathBuf,
    },
    /// Print block and coefficient statistics of a JPEG.
    Inspect {
        #[arg(long = "in", value_name = "JPG")]
        input: PathBuf,
    },
}

fn parse_subsampling(s: &str) -> std::result::Result<Subsampling, String> {
    match s {
        "444" => Ok(Subsampling::S444),
        "420" => Ok(Subsampling::S420),
        _ => Err(format!("unknown subsampling {s:?}, expected 444 or 420")),
    }
}

fn parse_xi_mode(s: &str) -> std::result::Result<XiMode, String> {
    if s == "random" {
        return Ok(XiMode::PerBlock);
    }
    if let Some(v) = s.strip_prefix("fixed:") {
        let v: i16 = v
            .parse()
            .map_err(|_| format!("bad fixed offset {v:?}, expected an integer"))?;
        return Ok(XiMode::Fixed(v));
    }
    Err(format!(
        "unknown xi mode {s:?}, expected random or fixed:<value>"
    ))
}

fn parse_components(s: &str) -> std::result::Result<ComponentSelection, String> {
    match s {
        "all" => Ok(ComponentSelection::All),
        "luma" => Ok(ComponentSelection::LumaOnly),
        _ => Err(format!(
            "unknown component selection {s:?}, expected all or luma"
        )),
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
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Argument(_) | Error::Io(_) => 1,
        Error::Format { .. } | Error::Unsupported(_) => 2,
        Error::Precondition(_) | Error::Conflict(_) => 4,
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Encode {
            input,
            output,
            quality,
            subsampling,
        } => {
            let raster = read_ppm(&read_file(&input)?).map_err(|e| in_file(&input, e))?;
            let image = encode_rgb(&raster, quality, subsampling)?;
            write_atomic(&output, &serialize_jpeg(&image)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Scramble {
            input,
            output,
            key_out,
            seed,
            xi_mode,
            components,
        } => {
            let image = load_jpeg(&input)?;
            let config = KeyGenConfig {
                xi_mode,
                components,
                ..KeyGenConfig::default()
            };
            let (trial, producer) = scramble_image(&image, &config, seed)?;
            write_atomic(&output, &serialize_jpeg(&trial)?)?;
            write_atomic(&key_out, &serialize_key(&Key::Producer(producer))?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Issue {
            trial,
            producer_key,
            user_id,
            key_out,
            registry,
            delta_max,
        } => {
            let trial_image = load_jpeg(&trial)?;
            let producer = load_producer_key(&producer_key)?;
            let config = KeyGenConfig {
                delta_max,
                ..KeyGenConfig::default()
            };
            let key = issue_user_key(&trial_image, &producer, &user_id, &config)?;
            let mut reg = if registry.exists() {
                load_registry(&registry)?
            } else {
                Registry::new(digest128(&canonical_bytes(&trial_image)))
            };
            register_user(&mut reg, &key, &trial_image, &producer, &now_rfc3339())?;
            write_atomic(&key_out, &serialize_key(&Key::User(key))?)?;
            write_atomic(&registry, reg.to_json().as_bytes())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Decode { input, key, output } => {
            let image = load_jpeg(&input)?;
            let decoded = match parse_key_file(&key)? {
                Key::User(user) => decode_image(&image, &user)?,
                Key::Producer(producer) => recover_original(&image, &producer)?,
            };
            write_atomic(&output, &serialize_jpeg(&decoded)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Trace {
            input,
            registry,
            recompute,
            trial,
            producer_key,
        } => {
            let suspect = load_jpeg(&input)?;
            let reg = load_registry(&registry)?;
            let outcome = if recompute {
                let (Some(trial), Some(producer_key)) = (trial, producer_key) else {
                    return Err(Error::Argument(
                        "--recompute needs --trial and --producer-key".into(),
                    ));
                };
                trace_recomputed(&suspect, &reg, &trial, &producer_key)?
            } else {
                trace_suspect(&suspect, &reg)
            };
            match outcome {
                TraceOutcome::Match(user) => {
                    println!("MATCH {user}");
                    Ok(ExitCode::SUCCESS)
                }
                TraceOutcome::NoMatch => {
                    println!("NO_MATCH");
                    Ok(ExitCode::from(3))
                }
            }
        }
        Command::Psnr { reference, test } => {
            let reference =
                read_ppm(&read_file(&reference)?).map_err(|e| in_file(&reference, e))?;
            let test = load_raster(&test)?;
            let report = psnr(&reference, &test)?;
            println!("mse: {:.4}", report.mse);
            match report.psnr_db {
                Some(db) => println!("psnr: {db:.4} dB"),
                None => println!("psnr: IDENTICAL"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Inspect { input } => {
            let image = load_jpeg(&input)?;
            inspect(&image);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| io_at(path, e))
}

fn io_at(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

/// Prefix format and unsupported errors with the file they came from.
fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Format { offset, msg } => Error::Format {
            offset,
            msg: format!("{}: {msg}", path.display()),
        },
        Error::Unsupported(msg) => Error::Unsupported(format!("{}: {msg}", path.display())),
        other => other,
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let Some(name) = path.file_name() else {
        return Err(Error::Argument(format!(
            "{} is not a file path",
            path.display()
        )));
    };
    let mut tmp_name = name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| io_at(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_at(path, e))
}

fn load_jpeg(path: &Path) -> Result<CoefficientImage> {
    parse_jpeg(&read_file(path)?).map_err(|e| in_file(path, e))
}

fn parse_key_file(path: &Path) -> Result<Key> {
    parse_key(&read_file(path)?).map_err(|e| in_file(path, e))
}

fn load_producer_key(path: &Path) -> Result<dcfe_core::dcfe::ProducerKey> {
    match parse_key_file(path)? {
        Key::Producer(producer) => Ok(producer),
        Key::User(_) => Err(Error::Argument(format!(
            "{}: expected a producer key, found a user key",
            path.display()
        ))),
    }
}

fn load_registry(path: &Path) -> Result<Registry> {
    let text = fs::read_to_string(path).map_err(|e| io_at(path, e))?;
    Registry::from_json(&text).map_err(|e| in_file(path, e))
}

fn load_raster(path: &Path) -> Result<RgbImage> {
    let bytes = read_file(path)?;
    if bytes.starts_with(&[0xFF, 0xD8]) {
        let image = parse_jpeg(&bytes).map_err(|e| in_file(path, e))?;
        return decode_to_rgb(&image);
    }
    if bytes.starts_with(b"P6") {
        return read_ppm(&bytes).map_err(|e| in_file(path, e));
    }
    Err(Error::format(format!(
        "{}: unrecognized image format, expected JPEG or PPM",
        path.display()
    )))
}

fn now_rfc3339() -> String {
    OffsetDateTime::now_utc()
        .replace_nanosecond(0)
        .expect("zero nanoseconds is valid")
        .format(&Rfc3339)
        .expect("UTC timestamp formats")
}

/// Audit mode: re-derive each registered user's key and reference hash
/// from the trial and producer key, report records that no longer agree,
/// and trace against the recomputed hashes.
fn trace_recomputed(
    suspect: &CoefficientImage,
    registry: &Registry,
    trial: &Path,
    producer_key: &Path,
) -> Result<TraceOutcome> {
    let trial_image = load_jpeg(trial)?;
    let producer = load_producer_key(producer_key)?;
    let trial_digest = digest128(&canonical_bytes(&trial_image));
    if trial_digest != registry.image_digest() {
        return Err(Error::Precondition(format!(
            "registry is bound to content {}, {} digests to {trial_digest}",
            registry.image_digest(),
            trial.display()
        )));
    }
    let config = KeyGenConfig::default();
    let suspect_digest = digest128(&canonical_bytes(suspect));
    let mut outcome = TraceOutcome::NoMatch;
    for record in registry.users() {
        let key = issue_user_key(&trial_image, &producer, &record.user_id, &config)?;
        let key_digest = digest128(&serialize_key(&Key::User(key.clone()))?);
        let reference = digest128(&canonical_bytes(&decode_image(&trial_image, &key)?));
        let mut notes = Vec::new();
        if key_digest != record.key_digest {
            notes.push("key digest differs");
        }
        if reference != record.reference_hash {
            notes.push("reference hash differs");
        }
        if notes.is_empty() {
            println!("audit {}: ok", record.user_id);
        } else {
            println!("audit {}: stale ({})", record.user_id, notes.join(", "));
        }
        if reference == suspect_digest {
            outcome = TraceOutcome::Match(record.user_id.clone());
        }
    }
    Ok(outcome)
}

fn inspect(image: &CoefficientImage) {
    println!("size: {}x{}", image.width, image.height);
    println!("components: {}", image.components.len());
    println!("blocks: {}", image.total_blocks());
    println!("content digest: {}", digest128(&canonical_bytes(image)));
    for comp in &image.components {
        println!(
            "component {}: sampling {}x{}, quant slot {}, grid {}x{}, {} blocks",
            comp.id,
            comp.h,
            comp.v,
            comp.quant_table,
            comp.blocks_w,
            comp.blocks_h,
            comp.blocks.len()
        );
        let nonzero: usize = comp.blocks.iter().map(|b| b.nonzero_count()).sum();
        let empty = comp
            .blocks
            .iter()
            .filter(|b| b.nonzero_count() == 0)
            .count();
        let max_mag = comp
            .blocks
            .iter()
            .flat_map(|b| b.0.iter())
            .map(|c| c.abs())
            .max()
            .unwrap_or(0);
        println!(
            "  nonzero: {} total, {:.2} mean per block, {} all-zero blocks",
            nonzero,
            nonzero as f64 / comp.blocks.len() as f64,
            empty
        );
        println!("  max |coefficient|: {max_mag}");
    }
}
