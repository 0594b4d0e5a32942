//! Upfront digit histograms for every digit place, and their exclusive sums.
//!
//! Digit counts depend only on the multiset of keys, so one read of the
//! input yields the histograms for all passes. Each worker counts its own
//! contiguous range into private 32-bit counters and flushes them into the
//! shared 64-bit table after every portion.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::executor::{Executor, OpKind, Phase};
use crate::keycodec::{KeyBits, RadixConfig};

/// `passes x radix` digit counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalHistogram {
    passes: usize,
    radix: usize,
    counts: Vec<u64>,
}

impl GlobalHistogram {
    pub fn zeroed(passes: usize, radix: usize) -> Self {
        GlobalHistogram {
            passes,
            radix,
            counts: vec![0; passes * radix],
        }
    }

    /// Builds a histogram from explicit rows, all of the same length.
    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let radix = rows.first().map_or(0, Vec::len);
        assert!(
            rows.iter().all(|r| r.len() == radix),
            "ragged histogram rows"
        );
        GlobalHistogram {
            passes: rows.len(),
            radix,
            counts: rows.concat(),
        }
    }

    pub fn passes(&self) -> usize {
        self.passes
    }

    pub fn radix(&self) -> usize {
        self.radix
    }

    pub fn row(&self, place: usize) -> &[u64] {
        &self.counts[place * self.radix..(place + 1) * self.radix]
    }
}

/// `passes x radix` exclusive prefix sums of a [`GlobalHistogram`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalBinOffsets {
    passes: usize,
    radix: usize,
    offsets: Vec<u64>,
}

impl GlobalBinOffsets {
    pub fn passes(&self) -> usize {
        self.passes
    }

    pub fn radix(&self) -> usize {
        self.radix
    }

    pub fn row(&self, place: usize) -> &[u64] {
        &self.offsets[place * self.radix..(place + 1) * self.radix]
    }
}

pub fn exclusive_sum(counts: &[u64]) -> Vec<u64> {
    counts
        .iter()
        .scan(0u64, |acc, &c| {
            let start = *acc;
            *acc += c;
            Some(start)
        })
        .collect()
}

pub fn global_bin_offsets(h: &GlobalHistogram) -> GlobalBinOffsets {
    let offsets = (0..h.passes)
        .flat_map(|place| exclusive_sum(h.row(place)))
        .collect();
    GlobalBinOffsets {
        passes: h.passes,
        radix: h.radix,
        offsets,
    }
}

/// Digit counts of `keys` for every place of `cfg`.
///
/// Records one element read per key in the histogram phase, independent of
/// the number of places.
pub fn global_histograms<B: KeyBits>(
    keys: &[B],
    cfg: &RadixConfig,
    exec: &Executor,
) -> GlobalHistogram {
    let (passes, radix) = (cfg.passes, cfg.radix);
    let shared: Vec<AtomicU64> = (0..passes * radix).map(|_| AtomicU64::new(0)).collect();
    let n = keys.len();
    // One contiguous range per worker.
    let blocks = exec.workers().min(n);
    let mask = cfg.digit_mask();

    exec.run_blocks::<(), _>(blocks, |block, _ctx| {
        let start = n * block / blocks;
        let end = n * (block + 1) / blocks;
        let mut local = vec![0u32; passes * radix];
        for portion in keys[start..end].chunks(cfg.portion_size) {
            for &k in portion {
                for place in 0..passes {
                    local[place * radix + k.field(cfg.shift(place), mask)] += 1;
                }
            }
            for (slot, c) in shared.iter().zip(local.iter_mut()) {
                if *c != 0 {
                    slot.fetch_add(*c as u64, Ordering::Relaxed);
                    *c = 0;
                }
            }
            exec.ledger_record(Phase::Histogram, OpKind::ElementRead, portion.len() as u64);
        }
        Ok(())
    })
    .expect("histogram blocks are infallible");

    GlobalHistogram {
        passes,
        radix,
        counts: shared.into_iter().map(AtomicU64::into_inner).collect(),
    }
}
