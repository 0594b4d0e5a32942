//! Benchmark sweeps. One CSV row per (algo, key type, size, q, d, workers,
//! trial); a warmup run per configuration is discarded.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::Args;
use onesweep::executor::{default_workers, LedgerSnapshot, OpKind, Phase, WORKERS_ENV};
use onesweep::keygen::{generate_keys, KeyGenSpec};
use onesweep::{Executor, RadixConfig, RadixKey};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{run_algo, usage_error, Algo, KeyType};

#[derive(Args)]
pub struct BenchArgs {
    /// Exponent range `LO..HI` (inclusive) or a single exponent.
    #[arg(long, default_value = "12..24", value_parser = parse_exponents)]
    sizes: (u32, u32),
    /// Draw this many sizes log-uniformly from the range instead of taking
    /// every power of two in it.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    q: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "8")]
    d: Vec<u32>,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "onesweep,rts"
    )]
    algos: Vec<Algo>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "u32")]
    key_types: Vec<KeyType>,
    /// Timed trials per configuration, after one untimed warmup.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    trials: u32,
    #[arg(long, value_delimiter = ',', env = WORKERS_ENV)]
    workers: Vec<usize>,
    /// Seed for key generation and size sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; standard output when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_exponents(s: &str) -> Result<(u32, u32), String> {
    let parse = |t: &str| {
        t.trim()
            .parse::<u32>()
            .map_err(|e| format!("bad exponent {t:?}: {e}"))
    };
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
        None => {
            let e = parse(s)?;
            (e, e)
        }
    };
    if lo > hi || hi > 40 {
        return Err(format!(
            "exponent range {lo}..{hi} must be ascending and at most 40"
        ));
    }
    Ok((lo, hi))
}

pub fn sizes(lo: u32, hi: u32, samples: Option<usize>, seed: u64) -> Vec<usize> {
    match samples {
        None => (lo..=hi).map(|e| 1usize << e).collect(),
        Some(k) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out: Vec<usize> = (0..k)
                .map(|_| {
                    let e = rng.random_range(lo as f64..=hi as f64);
                    e.exp2().round() as usize
                })
                .collect();
            out.sort_unstable();
            out
        }
    }
}

const LEDGER_COLUMNS: [(&str, Phase, OpKind); 8] = [
    ("histogram_reads", Phase::Histogram, OpKind::ElementRead),
    ("partition_reads", Phase::Partition, OpKind::ElementRead),
    ("partition_writes", Phase::Partition, OpKind::ElementWrite),
    ("upsweep_reads", Phase::Upsweep, OpKind::ElementRead),
    ("downsweep_reads", Phase::Downsweep, OpKind::ElementRead),
    ("downsweep_writes", Phase::Downsweep, OpKind::ElementWrite),
    ("final_copy_ops", Phase::FinalCopy, OpKind::CopyOp),
    ("counter_ops", Phase::Partition, OpKind::CounterOp),
];

pub fn header() -> Vec<String> {
    let mut h: Vec<String> = [
        "algo",
        "key_type",
        "n",
        "q",
        "d",
        "workers",
        "trial",
        "wall_seconds",
        "throughput",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(LEDGER_COLUMNS.iter().map(|c| c.0.to_string()));
    h.extend(
        ["element_ops", "element_ops_per_n", "traffic_ratio", "error"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

/// Configuration of one row, without its measurements.
#[derive(Clone, Copy)]
struct RowKey {
    algo: Algo,
    key_type: KeyType,
    n: usize,
    q: u32,
    d: u32,
    workers: usize,
}

struct Measurement {
    wall: f64,
    ledger: LedgerSnapshot,
    passes: u64,
}

fn record(key: RowKey, trial: u32, outcome: &Result<Measurement>) -> Vec<String> {
    let mut row = vec![
        key.algo.name().to_string(),
        key.key_type.name().to_string(),
        key.n.to_string(),
        key.q.to_string(),
        key.d.to_string(),
        key.workers.to_string(),
        trial.to_string(),
    ];
    match outcome {
        Ok(m) => {
            let n = key.n as f64;
            let ops = m.ledger.element_ops();
            let optimal = (2 * m.passes + 1) as f64 * n;
            row.push(format!("{:.9}", m.wall));
            row.push(format!("{:.1}", n / m.wall));
            row.extend(LEDGER_COLUMNS.iter().map(|&(_, p, k)| {
                let v = if k == OpKind::CounterOp {
                    m.ledger.counter_ops()
                } else {
                    m.ledger.get(p, k)
                };
                v.to_string()
            }));
            row.push(ops.to_string());
            row.push(format!("{:.4}", ops as f64 / n));
            // The oracle is not instrumented.
            row.push(if m.passes > 0 {
                format!("{:.4}", ops as f64 / optimal)
            } else {
                String::new()
            });
            row.push(String::new());
        }
        Err(e) => {
            row.extend(std::iter::repeat_n(
                String::new(),
                2 + LEDGER_COLUMNS.len() + 3,
            ));
            row.push(format!("{e:#}"));
        }
    }
    row
}

fn measure<K: RadixKey>(key: RowKey, input: &[K]) -> Result<Measurement> {
    let cfg = RadixConfig::new(key.key_type.bits(), key.d)?;
    let exec = Executor::new(key.workers);
    let mut keys = input.to_vec();
    let mut unit = vec![(); keys.len()];
    let start = Instant::now();
    let report = run_algo(key.algo, &mut keys, &mut unit, &cfg, &exec)?;
    let wall = start.elapsed().as_secs_f64();
    if !keys.windows(2).all(|w| w[0].encode() <= w[1].encode()) {
        anyhow::bail!("output is not sorted");
    }
    Ok(Measurement {
        wall,
        ledger: report.map(|r| r.ledger).unwrap_or_default(),
        passes: report.map_or(0, |r| r.passes),
    })
}

fn bench_type<K: RadixKey>(
    args: &BenchArgs,
    key_type: KeyType,
    ns: &[usize],
    workers: &[usize],
    out: &mut csv::Writer<Box<dyn Write>>,
) -> Result<()> {
    for &n in ns {
        for &q in &args.q {
            let spec = KeyGenSpec {
                q,
                seed: args.seed,
                n,
                key_bits: key_type.bits(),
            };
            let input: Vec<K> = generate_keys::<K::Bits>(&spec)?
                .into_iter()
                .map(K::decode)
                .collect();
            for &d in &args.d {
                for &algo in &args.algos {
                    for &w in workers {
                        let key = RowKey {
                            algo,
                            key_type,
                            n,
                            q,
                            d,
                            workers: w,
                        };
                        let _ = measure(key, &input);
                        for trial in 1..=args.trials {
                            out.write_record(record(key, trial, &measure(key, &input)))?;
                        }
                        out.flush()?;
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    if args.q.contains(&0) {
        usage_error(ErrorKind::InvalidValue, "--q values must be at least 1");
    }
    let workers = if args.workers.is_empty() {
        vec![default_workers()]
    } else {
        args.workers.iter().map(|&w| w.max(1)).collect()
    };
    let ns = sizes(args.sizes.0, args.sizes.1, args.samples, args.seed);
    let sink: Box<dyn Write> = match &args.csv {
        Some(path) => Box::new(
            std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
        ),
        None => Box::new(std::io::stdout()),
    };
    let mut out = csv::Writer::from_writer(sink);
    out.write_record(header())?;
    for &kt in &args.key_types {
        with_key_type!(kt, K => bench_type::<K>(args, kt, &ns, &workers, &mut out)?);
    }
    out.flush()?;
    Ok(())
}
