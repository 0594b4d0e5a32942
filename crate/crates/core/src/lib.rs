//! Single-sweep LSD radix sorting on a CPU worker pool.
//!
//! The sorter computes digit histograms for all digit places in one read,
//! turns them into global bin offsets, then performs one chained-scan
//! partition pass per place in which each tile discovers its bin-relative
//! offsets through decoupled lookback over per-digit status counters. Each
//! partition pass reads and writes every element once, so a full sort moves
//! `(2p + 1) n` elements; the reduce-then-scan baseline in [`baseline`]
//! moves `3pn`. The [`executor`] ledger counts both.
//!
//! ```
//! use onesweep::{onesweep_sort, Executor, RadixConfig};
//!
//! let mut keys = vec![17u32, 8, 24, 5];
//! let cfg = RadixConfig::new(32, 8).unwrap();
//! let report = onesweep_sort(&mut keys, &cfg, &Executor::new(2)).unwrap();
//! assert_eq!(keys, vec![5, 8, 17, 24]);
//! assert_eq!(report.ledger.element_ops(), 9 * 4);
//! ```

pub mod baseline;
pub mod binning;
pub mod executor;
pub mod histogram;
pub mod keycodec;
pub mod keygen;
pub mod lookback;

pub use baseline::{oracle_stable_sort, oracle_stable_sort_keys, rts_sort, rts_sort_pairs};
pub use binning::{
    onesweep_sort, onesweep_sort_encoded, onesweep_sort_pairs, PassStats, SortError, SortReport,
};
pub use executor::{DelayInjection, Executor, LedgerSnapshot, OpKind, Phase};
pub use keycodec::{ConfigError, KeyBits, RadixConfig, RadixKey};
