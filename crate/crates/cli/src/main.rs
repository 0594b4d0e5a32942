//! `onesweep` command-line driver: generate key files, sort them, verify a
//! sorted file against the stable oracle, and run benchmark sweeps.

mod wire;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use onesweep::executor::{default_workers, WORKERS_ENV};
use onesweep::keycodec::DEFAULT_TILE_SIZE;
use onesweep::keygen::{generate_keys, KeyGenSpec};
use onesweep::{
    onesweep_sort_pairs, oracle_stable_sort, rts_sort_pairs, Executor, RadixConfig, RadixKey,
    SortReport,
};

use wire::{read_keys, read_pairs, same_bits, write_keys, write_pairs, Wire};

#[derive(Parser)]
#[command(
    name = "onesweep",
    version,
    about = "Single-sweep LSD radix sort driver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write n entropy-banded random keys.
    Gen(GenArgs),
    /// Sort a key file.
    Sort(SortArgs),
    /// Check a sorted file against the stable oracle sort of its input.
    Verify(VerifyArgs),
    /// Time sorts over a grid of sizes, entropies and digit widths; emit CSV.
    Bench(bench::BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KeyType {
    U32,
    U64,
    I32,
    I64,
    F32,
    F64,
}

impl KeyType {
    pub fn bits(self) -> u32 {
        match self {
            KeyType::U32 | KeyType::I32 | KeyType::F32 => 32,
            KeyType::U64 | KeyType::I64 | KeyType::F64 => 64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KeyType::U32 => "u32",
            KeyType::U64 => "u64",
            KeyType::I32 => "i32",
            KeyType::I64 => "i64",
            KeyType::F32 => "f32",
            KeyType::F64 => "f64",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Onesweep,
    Rts,
    Oracle,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Onesweep => "onesweep",
            Algo::Rts => "rts",
            Algo::Oracle => "oracle",
        }
    }
}

/// Runs `$body` with `$K` bound to the Rust type of a [`KeyType`].
macro_rules! with_key_type {
    ($kt:expr, $K:ident => $body:expr) => {
        match $kt {
            crate::KeyType::U32 => {
                type $K = u32;
                $body
            }
            crate::KeyType::U64 => {
                type $K = u64;
                $body
            }
            crate::KeyType::I32 => {
                type $K = i32;
                $body
            }
            crate::KeyType::I64 => {
                type $K = i64;
                $body
            }
            crate::KeyType::F32 => {
                type $K = f32;
                $body
            }
            crate::KeyType::F64 => {
                type $K = f64;
                $body
            }
        }
    };
}

macro_rules! with_value_bits {
    ($vb:expr, $V:ident => $body:expr) => {
        match $vb {
            32 => {
                type $V = u32;
                $body
            }
            _ => {
                type $V = u64;
                $body
            }
        }
    };
}

mod bench;

/// Key width and interpretation. Either flag alone is enough; the default
/// is 32-bit unsigned keys.
#[derive(Args, Clone, Copy)]
struct KeyArgs {
    /// Key width in bits.
    #[arg(long, value_parser = parse_width)]
    bits: Option<u32>,
    /// How key bits are interpreted when ordering.
    #[arg(long, value_enum)]
    key_type: Option<KeyType>,
}

impl KeyArgs {
    fn resolve(self) -> KeyType {
        match (self.bits, self.key_type) {
            (Some(b), Some(kt)) if kt.bits() != b => usage_error(
                ErrorKind::ArgumentConflict,
                format!(
                    "--bits {b} does not match --key-type {} ({} bits)",
                    kt.name(),
                    kt.bits()
                ),
            ),
            (_, Some(kt)) => kt,
            (Some(64), None) => KeyType::U64,
            _ => KeyType::U32,
        }
    }
}

#[derive(Args, Clone, Copy)]
struct ValueArgs {
    /// Records carry a payload after each key.
    #[arg(long)]
    values: bool,
    /// Payload width in bits.
    #[arg(long, default_value = "32", value_parser = parse_width)]
    value_bits: u32,
}

#[derive(Args)]
struct GenArgs {
    /// Number of keys; accepts `2^k`.
    #[arg(long, value_parser = parse_count)]
    n: usize,
    /// Uniform words AND-ed per key; higher q means lower entropy.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    q: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Key width in bits.
    #[arg(long, default_value = "32", value_parser = parse_width)]
    bits: u32,
    /// Write key-value records whose value is the record index.
    #[command(flatten)]
    values: ValueArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SortArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    key: KeyArgs,
    #[command(flatten)]
    values: ValueArgs,
    #[arg(long, value_enum, default_value_t = Algo::Onesweep)]
    algo: Algo,
    /// Digit width in bits.
    #[arg(long, default_value_t = 8)]
    d: u32,
    /// Elements per tile.
    #[arg(long, default_value_t = DEFAULT_TILE_SIZE, value_parser = parse_count)]
    tile: usize,
    /// Elements per strip; defaults to the largest supported.
    #[arg(long, value_parser = parse_count)]
    strip: Option<usize>,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    sorted: PathBuf,
    #[command(flatten)]
    key: KeyArgs,
    #[command(flatten)]
    values: ValueArgs,
}

/// Accepts 32 or 64.
fn parse_width(s: &str) -> Result<u32, String> {
    match s.trim() {
        "32" => Ok(32),
        "64" => Ok(64),
        other => Err(format!("width must be 32 or 64, got {other:?}")),
    }
}

/// Accepts a decimal count or `2^k`.
pub fn parse_count(s: &str) -> Result<usize, String> {
    let s = s.trim();
    if let Some(exp) = s.strip_prefix("2^") {
        let e: u32 = exp
            .parse()
            .map_err(|e| format!("bad exponent {exp:?}: {e}"))?;
        return 1usize
            .checked_shl(e)
            .filter(|_| e < usize::BITS)
            .ok_or_else(|| format!("2^{e} overflows"));
    }
    s.parse().map_err(|e| format!("bad count {s:?}: {e}"))
}

pub fn usage_error(kind: ErrorKind, msg: impl std::fmt::Display) -> ! {
    Cli::command().error(kind, msg).exit()
}

fn radix_config(bits: u32, d: u32, tile: usize, strip: Option<usize>) -> RadixConfig {
    let cfg = RadixConfig::new(bits, d).and_then(|c| c.with_tile_size(tile));
    let cfg = match strip {
        Some(s) => cfg.and_then(|c| c.with_strip_size(s)),
        None => cfg,
    };
    cfg.unwrap_or_else(|e| usage_error(ErrorKind::InvalidValue, e))
}

/// Sorts with the chosen algorithm. The oracle reports no ledger.
pub fn run_algo<K: RadixKey, V: Copy + Send + Sync>(
    algo: Algo,
    keys: &mut [K],
    values: &mut [V],
    cfg: &RadixConfig,
    exec: &Executor,
) -> Result<Option<SortReport>> {
    Ok(match algo {
        Algo::Onesweep => Some(onesweep_sort_pairs(keys, values, cfg, exec)?),
        Algo::Rts => Some(rts_sort_pairs(keys, values, cfg, exec)?),
        Algo::Oracle => {
            oracle_stable_sort(keys, values);
            None
        }
    })
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let spec = KeyGenSpec {
        q: args.q,
        seed: args.seed,
        n: args.n,
        key_bits: args.bits,
    };
    let index = |n: usize| 0..n as u64;
    if args.bits == 32 {
        let keys = generate_keys::<u32>(&spec)?;
        write_generated(&args.out, &keys, args.values, index(keys.len()))
    } else {
        let keys = generate_keys::<u64>(&spec)?;
        write_generated(&args.out, &keys, args.values, index(keys.len()))
    }
}

fn write_generated<K: Wire>(
    out: &Path,
    keys: &[K],
    values: ValueArgs,
    index: impl Iterator<Item = u64>,
) -> Result<()> {
    if !values.values {
        return write_keys(out, keys);
    }
    with_value_bits!(values.value_bits, V => {
        let payload: Vec<V> = index.map(|i| i as V).collect();
        write_pairs(out, keys, &payload)
    })
}

fn cmd_sort(args: &SortArgs) -> Result<()> {
    let kt = args.key.resolve();
    let cfg = radix_config(kt.bits(), args.d, args.tile, args.strip);
    let exec = Executor::new(args.workers.unwrap_or_else(default_workers));
    with_key_type!(kt, K => {
        if args.values.values {
            with_value_bits!(args.values.value_bits, V => {
                let (mut keys, mut values) = read_pairs::<K, V>(&args.input)?;
                let report = timed_sort(args.algo, &mut keys, &mut values, &cfg, &exec)?;
                write_pairs(&args.out, &keys, &values)?;
                summarize(args.algo, kt, keys.len(), report);
            })
        } else {
            let mut keys = read_keys::<K>(&args.input)?;
            let mut unit = vec![(); keys.len()];
            let report = timed_sort(args.algo, &mut keys, &mut unit, &cfg, &exec)?;
            write_keys(&args.out, &keys)?;
            summarize(args.algo, kt, keys.len(), report);
        }
    });
    Ok(())
}

fn timed_sort<K: RadixKey, V: Copy + Send + Sync>(
    algo: Algo,
    keys: &mut [K],
    values: &mut [V],
    cfg: &RadixConfig,
    exec: &Executor,
) -> Result<(Option<SortReport>, f64)> {
    let start = Instant::now();
    let report = run_algo(algo, keys, values, cfg, exec)?;
    Ok((report, start.elapsed().as_secs_f64()))
}

fn summarize(algo: Algo, kt: KeyType, n: usize, (report, secs): (Option<SortReport>, f64)) {
    let mut line = format!("{} {} n={n} {:.3} ms", algo.name(), kt.name(), secs * 1e3);
    if let Some(r) = report {
        line += &format!(
            " passes={} element_ops={} final_copy={}",
            r.passes,
            r.ledger.element_ops(),
            r.ledger.copy_ops()
        );
    }
    eprintln!("{line}");
}

/// Outcome of comparing a sorted file with the oracle.
enum Verdict {
    Match(usize),
    Mismatch(String),
}

fn cmd_verify(args: &VerifyArgs) -> Result<Verdict> {
    let kt = args.key.resolve();
    with_key_type!(kt, K => {
        if args.values.values {
            with_value_bits!(args.values.value_bits, V => {
                let (mut keys, mut values) = read_pairs::<K, V>(&args.input)?;
                let (got_keys, got_values) = read_pairs::<K, V>(&args.sorted)?;
                oracle_stable_sort(&mut keys, &mut values);
                Ok(compare(&keys, Some(&values), &got_keys, Some(&got_values)))
            })
        } else {
            let mut keys = read_keys::<K>(&args.input)?;
            let got = read_keys::<K>(&args.sorted)?;
            let mut unit = vec![(); keys.len()];
            oracle_stable_sort(&mut keys, &mut unit);
            Ok(compare::<K, u32>(&keys, None, &got, None))
        }
    })
}

fn compare<K: Wire, V: Wire>(
    expected: &[K],
    expected_values: Option<&[V]>,
    actual: &[K],
    actual_values: Option<&[V]>,
) -> Verdict {
    if expected.len() != actual.len() {
        return Verdict::Mismatch(format!(
            "record count differs: input has {}, sorted file has {}",
            expected.len(),
            actual.len()
        ));
    }
    let record = |keys: &[K], values: Option<&[V]>, i: usize| match values {
        Some(v) => format!("key={:?} value={:?}", keys[i], v[i]),
        None => format!("key={:?}", keys[i]),
    };
    for i in 0..expected.len() {
        let key_ok = same_bits(expected[i], actual[i]);
        let value_ok = match (expected_values, actual_values) {
            (Some(e), Some(a)) => same_bits(e[i], a[i]),
            _ => true,
        };
        if !(key_ok && value_ok) {
            return Verdict::Mismatch(format!(
                "first divergence at index {i}: expected {}, found {}",
                record(expected, expected_values, i),
                record(actual, actual_values, i)
            ));
        }
    }
    Verdict::Match(expected.len())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Sort(args) => cmd_sort(args),
        Command::Verify(args) => match cmd_verify(args) {
            Ok(Verdict::Match(n)) => {
                eprintln!("ok: {n} records match the stable oracle");
                Ok(())
            }
            Ok(Verdict::Mismatch(msg)) => {
                eprintln!("verification failed: {msg}");
                return ExitCode::from(1);
            }
            Err(e) => Err(e),
        },
        Command::Bench(args) => bench::cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
