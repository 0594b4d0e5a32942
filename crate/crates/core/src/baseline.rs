//! Reference sorters: a sequential stable oracle and a reduce-then-scan LSD
//! radix sort.
//!
//! The reduce-then-scan sorter reads the input twice per digit place (an
//! upsweep to count digits per tile, then a downsweep to scatter), so it
//! moves about `3n` elements per pass against the `2n` of chained-scan
//! binning. It shares ranking and scatter code with the single-sweep
//! sorter so the ledgers differ only by that extra read.

use std::sync::Mutex;

use crate::binning::{
    homogeneous_digit, ping_pong, rank_tile_into, ScatterTarget, SortError, SortReport, TileScratch,
};
use crate::executor::{Executor, OpKind, Phase};
use crate::keycodec::{KeyBits, RadixConfig, RadixKey};

/// Stable ascending sort by encoded key order, single-threaded.
pub fn oracle_stable_sort<K: RadixKey, V: Copy>(keys: &mut [K], values: &mut [V]) {
    assert_eq!(keys.len(), values.len(), "keys and values differ in length");
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by_key(|&i| keys[i].encode());
    let sorted_keys: Vec<K> = order.iter().map(|&i| keys[i]).collect();
    let sorted_values: Vec<V> = order.iter().map(|&i| values[i]).collect();
    keys.copy_from_slice(&sorted_keys);
    values.copy_from_slice(&sorted_values);
}

pub fn oracle_stable_sort_keys<K: RadixKey>(keys: &mut [K]) {
    keys.sort_by_key(|k| k.encode());
}

/// `tiles x radix` per-tile digit counts of one pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockHistogramTable {
    tiles: usize,
    radix: usize,
    counts: Vec<u64>,
}

impl BlockHistogramTable {
    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let radix = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == radix), "ragged table rows");
        BlockHistogramTable {
            tiles: rows.len(),
            radix,
            counts: rows.concat(),
        }
    }

    pub fn tiles(&self) -> usize {
        self.tiles
    }

    pub fn radix(&self) -> usize {
        self.radix
    }

    pub fn row(&self, tile: usize) -> &[u64] {
        &self.counts[tile * self.radix..(tile + 1) * self.radix]
    }
}

/// Absolute output start of every (tile, digit) run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockOffsets {
    tiles: usize,
    radix: usize,
    offsets: Vec<u64>,
}

impl BlockOffsets {
    pub fn tiles(&self) -> usize {
        self.tiles
    }

    /// Offset of `digit`'s run in `tile`.
    pub fn get(&self, tile: usize, digit: usize) -> u64 {
        self.offsets[tile * self.radix + digit]
    }

    pub fn row(&self, tile: usize) -> &[u64] {
        &self.offsets[tile * self.radix..(tile + 1) * self.radix]
    }
}

fn tile_count(n: usize, cfg: &RadixConfig) -> usize {
    n.div_ceil(cfg.tile_size)
}

fn tile_range(tile: usize, n: usize, cfg: &RadixConfig) -> std::ops::Range<usize> {
    let start = tile * cfg.tile_size;
    start..(start + cfg.tile_size).min(n)
}

/// Per-tile digit counts at `place`.
pub fn rts_upsweep<B: KeyBits>(
    keys: &[B],
    place: usize,
    cfg: &RadixConfig,
    exec: &Executor,
) -> BlockHistogramTable {
    let tiles = tile_count(keys.len(), cfg);
    let radix = cfg.radix;
    let mut counts = vec![0u64; tiles * radix];
    let target = ScatterTarget::new(&mut counts);
    let (shift, mask) = (cfg.shift(place), cfg.digit_mask());
    exec.run_blocks::<(), _>(tiles, |tile, _ctx| {
        let tile_keys = &keys[tile_range(tile, keys.len(), cfg)];
        let mut row = vec![0u64; radix];
        for k in tile_keys {
            row[k.field(shift, mask)] += 1;
        }
        // SAFETY: each tile owns its row.
        unsafe { target.write_run(tile * radix, &row) };
        exec.ledger_record(Phase::Upsweep, OpKind::ElementRead, tile_keys.len() as u64);
        exec.ledger_record(Phase::Upsweep, OpKind::CounterOp, radix as u64);
        Ok(())
    })
    .expect("upsweep blocks are infallible");
    BlockHistogramTable {
        tiles,
        radix,
        counts,
    }
}

/// Exclusive scan over the table in digit-major order: every tile's
/// digit-0 count, then every tile's digit-1 count, and so on.
pub fn rts_block_prefix(t: &BlockHistogramTable) -> BlockOffsets {
    let mut offsets = vec![0u64; t.counts.len()];
    let mut acc = 0u64;
    for digit in 0..t.radix {
        for tile in 0..t.tiles {
            let i = tile * t.radix + digit;
            offsets[i] = acc;
            acc += t.counts[i];
        }
    }
    BlockOffsets {
        tiles: t.tiles,
        radix: t.radix,
        offsets,
    }
}

/// Stable scatter of every tile to the runs given by `offsets`.
#[allow(clippy::too_many_arguments)]
pub fn rts_downsweep<B: KeyBits, V: Copy + Send + Sync>(
    keys_in: &[B],
    values_in: &[V],
    keys_out: &mut [B],
    values_out: &mut [V],
    place: usize,
    offsets: &BlockOffsets,
    cfg: &RadixConfig,
    exec: &Executor,
) {
    let n = keys_in.len();
    assert_eq!(values_in.len(), n);
    assert_eq!(offsets.tiles(), tile_count(n, cfg));
    let keys_target = ScatterTarget::new(keys_out);
    let values_target = ScatterTarget::new(values_out);
    let scratch: Vec<Mutex<TileScratch<B, V>>> = (0..exec.workers())
        .map(|_| Mutex::new(TileScratch::new(cfg.radix)))
        .collect();
    exec.run_blocks::<(), _>(offsets.tiles(), |tile, ctx| {
        let mut s = scratch[ctx.worker()].lock().unwrap();
        let range = tile_range(tile, n, cfg);
        let (keys, values) = (&keys_in[range.clone()], &values_in[range]);
        s.load_digits(keys, place, cfg);
        let s = &mut *s;
        rank_tile_into(&s.digits, cfg.digit_bits, &mut s.counts, &mut s.ranks);
        s.dst.copy_from_slice(offsets.row(tile));
        // SAFETY: the digit-major scan gives each (tile, digit) its own run.
        unsafe {
            match homogeneous_digit(&s.counts, keys.len()) {
                Some(d) => {
                    keys_target.write_run(s.dst[d] as usize, keys);
                    values_target.write_run(s.dst[d] as usize, values);
                }
                None => s.reorder_and_scatter(keys, values, &keys_target, &values_target),
            }
        }
        exec.ledger_record(Phase::Downsweep, OpKind::ElementRead, keys.len() as u64);
        exec.ledger_record(Phase::Downsweep, OpKind::ElementWrite, keys.len() as u64);
        exec.ledger_record(Phase::Downsweep, OpKind::CounterOp, cfg.radix as u64);
        Ok(())
    })
    .expect("downsweep blocks are infallible");
}

pub fn rts_sort_encoded<B: KeyBits, V: Copy + Send + Sync>(
    keys: &mut [B],
    values: &mut [V],
    cfg: &RadixConfig,
    exec: &Executor,
) -> Result<SortReport, SortError> {
    if keys.len() != values.len() {
        return Err(SortError::LengthMismatch {
            keys: keys.len(),
            values: values.len(),
        });
    }
    if cfg.key_bits != B::BITS {
        return Err(SortError::KeyWidth {
            config: cfg.key_bits,
            keys: B::BITS,
        });
    }
    let n = keys.len();
    let before = exec.ledger_snapshot();
    let mut report = SortReport {
        n: n as u64,
        passes: cfg.passes as u64,
        ..SortReport::default()
    };
    if n <= 1 {
        return Ok(report);
    }
    ping_pong(
        keys,
        values,
        cfg.passes,
        exec,
        |place, (ki, vi), (ko, vo)| {
            let table = rts_upsweep(ki, place, cfg, exec);
            let offsets = rts_block_prefix(&table);
            rts_downsweep(ki, vi, ko, vo, place, &offsets, cfg, exec);
            Ok(())
        },
    )?;
    report.ledger = exec.ledger_snapshot().since(&before);
    Ok(report)
}

pub fn rts_sort<K: RadixKey>(
    keys: &mut [K],
    cfg: &RadixConfig,
    exec: &Executor,
) -> Result<SortReport, SortError> {
    let mut unit = vec![(); keys.len()];
    rts_sort_pairs(keys, &mut unit, cfg, exec)
}

pub fn rts_sort_pairs<K: RadixKey, V: Copy + Send + Sync>(
    keys: &mut [K],
    values: &mut [V],
    cfg: &RadixConfig,
    exec: &Executor,
) -> Result<SortReport, SortError> {
    let mut bits: Vec<K::Bits> = keys.iter().map(|k| k.encode()).collect();
    let report = rts_sort_encoded(&mut bits, values, cfg, exec)?;
    for (k, b) in keys.iter_mut().zip(bits) {
        *k = K::decode(b);
    }
    Ok(report)
}
