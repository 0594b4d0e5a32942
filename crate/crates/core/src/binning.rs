//! Chained-scan digit binning and the full single-sweep sort.
//!
//! The sort runs in three phases:
//!
//! 1. one read of the input builds digit histograms for every place,
//! 2. an exclusive sum per place turns those into global bin offsets,
//! 3. one partition pass per place moves every element exactly once.
//!
//! Within a partition pass each tile ranks its keys, publishes per-digit
//! local counts, looks back over its predecessors for its bin-relative
//! offsets, then stages its elements by digit and writes them out run by
//! run. Tiles only talk to each other through the [`CounterMatrix`].
//!
//! Inputs longer than one strip are processed strip by strip; the last tile
//! of each strip leaves 64-bit running bin offsets for the next strip.

use std::marker::PhantomData;
use std::ptr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::executor::{BlockContext, Executor, LedgerSnapshot, OpKind, Phase};
use crate::histogram::{global_bin_offsets, global_histograms, GlobalBinOffsets};
use crate::keycodec::{KeyBits, RadixConfig, RadixKey};
use crate::lookback::{CounterError, CounterMatrix};

/// Width of a lane group; votes are 32-bit masks.
pub const LANES: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SortError {
    #[error("{keys} keys but {values} values")]
    LengthMismatch { keys: usize, values: usize },
    #[error("config is for {config}-bit keys but the keys are {keys}-bit")]
    KeyWidth { config: u32, keys: u32 },
    #[error(transparent)]
    Counter(#[from] CounterError),
}

/// Ranks of one lane group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchRanking {
    /// Rank of each lane among the lanes sharing its digit.
    pub ranks: Vec<u32>,
    /// `(digit, population)` for every digit present, in order of the
    /// population's lowest lane.
    pub counts: Vec<(u32, u32)>,
}

/// Ranks up to 32 digits with per-bit ballot masks.
///
/// For each of the `digit_bits` bits every lane votes whether that bit of
/// its digit is set. A lane's peers are the lanes that agree with it on
/// every vote; its rank is the number of peers in lower lanes, and the
/// lowest peer reports the population size.
pub fn wlms_rank(digits: &[u32], digit_bits: u32) -> BatchRanking {
    let v = vote(digits, digit_bits);
    BatchRanking {
        ranks: v.ranks[..digits.len()].to_vec(),
        counts: v.leaders[..v.groups].to_vec(),
    }
}

struct Votes {
    ranks: [u32; LANES],
    leaders: [(u32, u32); LANES],
    groups: usize,
}

#[inline(always)]
fn vote(digits: &[u32], digit_bits: u32) -> Votes {
    let len = digits.len();
    assert!(len <= LANES, "lane group holds at most {LANES} digits");
    let active = if len == LANES {
        u32::MAX
    } else {
        (1u32 << len) - 1
    };
    let mut lanes = [0u32; LANES];
    lanes[..len].copy_from_slice(digits);
    let mut ballots = [0u32; 16];
    cast_ballots(&lanes, digit_bits, &mut ballots);
    let mut peers = [active; LANES];
    for (b, &ballot) in ballots.iter().enumerate().take(digit_bits as usize) {
        let ballot = ballot & active;
        // Keep the ballot where a lane voted yes, its complement where it voted no.
        for (p, &d) in peers.iter_mut().zip(&lanes) {
            *p &= ballot ^ ((d >> b) & 1).wrapping_sub(1);
        }
    }
    let mut out = Votes {
        ranks: [0; LANES],
        leaders: [(0, 0); LANES],
        groups: 0,
    };
    for lane in 0..len {
        let rank = (peers[lane] & ((1u32 << lane) - 1)).count_ones();
        if rank == 0 {
            out.leaders[out.groups] = (lanes[lane], peers[lane].count_ones());
            out.groups += 1;
        }
        out.ranks[lane] = rank;
    }
    out
}

/// Transposes an 8x8 bit matrix held one row per byte.
#[inline(always)]
fn transpose8(mut x: u64) -> u64 {
    let t = 0x0F0F_0F0F_0000_0000 & (x ^ (x << 28));
    x ^= t ^ (t >> 28);
    let t = 0x3333_0000_3333_0000 & (x ^ (x << 14));
    x ^= t ^ (t >> 14);
    let t = 0x5500_5500_5500_5500 & (x ^ (x << 7));
    x ^= t ^ (t >> 7);
    x
}

/// `ballots[b]` gets bit `lane` set when bit `b` of `lanes[lane]` is set.
/// Equivalent to one 32-lane vote per digit bit, computed eight lanes by
/// eight bits at a time.
#[inline(always)]
fn cast_ballots(lanes: &[u32; LANES], digit_bits: u32, ballots: &mut [u32; 16]) {
    for byte in 0..digit_bits.div_ceil(8) as usize {
        for (group, chunk) in lanes.chunks_exact(8).enumerate() {
            let mut rows = 0u64;
            for (i, &d) in chunk.iter().enumerate() {
                rows |= (((d >> (8 * byte)) & 0xFF) as u64) << (8 * i);
            }
            let cols = transpose8(rows);
            for (j, ballot) in ballots[8 * byte..8 * byte + 8].iter_mut().enumerate() {
                *ballot |= (((cols >> (8 * j)) & 0xFF) as u32) << (8 * group);
            }
        }
    }
}

/// Stable per-digit ranks of one tile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileRanking {
    pub digit_counts: Vec<u32>,
    pub ranks: Vec<u32>,
}

impl TileRanking {
    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }
}

pub(crate) fn rank_tile_into(
    digits: &[u32],
    digit_bits: u32,
    counts: &mut [u32],
    ranks: &mut Vec<u32>,
) {
    counts.fill(0);
    ranks.clear();
    for batch in digits.chunks(LANES) {
        let v = vote(batch, digit_bits);
        // Lanes offset by the running count before this batch's leaders add theirs.
        ranks.extend(
            batch
                .iter()
                .zip(&v.ranks)
                .map(|(&d, &r)| counts[d as usize] + r),
        );
        for &(d, pop) in &v.leaders[..v.groups] {
            counts[d as usize] += pop;
        }
    }
}

/// Ranks a whole tile in lane groups of 32, carrying per-digit running
/// counts across groups so ranks are tile-wide and stable.
pub fn rank_tile(digits: &[u32], cfg: &RadixConfig) -> TileRanking {
    let mut digit_counts = vec![0; cfg.radix];
    let mut ranks = Vec::with_capacity(digits.len());
    rank_tile_into(digits, cfg.digit_bits, &mut digit_counts, &mut ranks);
    TileRanking {
        digit_counts,
        ranks,
    }
}

/// The digit shared by every element of a non-empty tile, if there is one.
pub fn short_circuit_check(t: &TileRanking) -> Option<usize> {
    homogeneous_digit(&t.digit_counts, t.len())
}

pub(crate) fn homogeneous_digit(counts: &[u32], len: usize) -> Option<usize> {
    if len == 0 {
        return None;
    }
    counts.iter().position(|&c| c as usize == len)
}

/// Output slice shared by all workers of a pass. Tiles write disjoint
/// ranges, which the chained scan guarantees.
pub(crate) struct ScatterTarget<'a, T> {
    ptr: *mut T,
    len: usize,
    _borrow: PhantomData<&'a mut [T]>,
}

unsafe impl<T: Send> Send for ScatterTarget<'_, T> {}
unsafe impl<T: Send> Sync for ScatterTarget<'_, T> {}

impl<'a, T: Copy> ScatterTarget<'a, T> {
    pub(crate) fn new(slice: &'a mut [T]) -> Self {
        ScatterTarget {
            ptr: slice.as_mut_ptr(),
            len: slice.len(),
            _borrow: PhantomData,
        }
    }

    /// # Safety
    ///
    /// No other thread may access `start..start + src.len()` concurrently.
    #[inline]
    pub(crate) unsafe fn write_run(&self, start: usize, src: &[T]) {
        assert!(
            start <= self.len && src.len() <= self.len - start,
            "scatter run {start}+{} out of bounds for {}",
            src.len(),
            self.len
        );
        ptr::copy_nonoverlapping(src.as_ptr(), self.ptr.add(start), src.len());
    }
}

/// Per-worker tile storage, reused across tiles.
pub(crate) struct TileScratch<B, V> {
    pub(crate) digits: Vec<u32>,
    pub(crate) ranks: Vec<u32>,
    pub(crate) counts: Vec<u32>,
    pub(crate) local_start: Vec<u32>,
    pub(crate) dst: Vec<u64>,
    pub(crate) keys: Vec<B>,
    pub(crate) values: Vec<V>,
}

impl<B: KeyBits, V: Copy> TileScratch<B, V> {
    pub(crate) fn new(radix: usize) -> Self {
        TileScratch {
            digits: Vec::new(),
            ranks: Vec::new(),
            counts: vec![0; radix],
            local_start: vec![0; radix],
            dst: vec![0; radix],
            keys: Vec::new(),
            values: Vec::new(),
        }
    }

    pub(crate) fn load_digits(&mut self, keys: &[B], place: usize, cfg: &RadixConfig) {
        let (shift, mask) = (cfg.shift(place), cfg.digit_mask());
        self.digits.clear();
        self.digits
            .extend(keys.iter().map(|k| k.field(shift, mask) as u32));
    }

    /// Stages the tile grouped by digit in rank order, then writes each
    /// digit's run to `dst[digit]`.
    ///
    /// # Safety
    ///
    /// The runs `dst[d]..dst[d] + counts[d]` must not be touched by any
    /// other thread during the call.
    pub(crate) unsafe fn reorder_and_scatter(
        &mut self,
        keys: &[B],
        values: &[V],
        keys_out: &ScatterTarget<'_, B>,
        values_out: &ScatterTarget<'_, V>,
    ) {
        let mut acc = 0u32;
        for (start, &c) in self.local_start.iter_mut().zip(&self.counts) {
            *start = acc;
            acc += c;
        }
        // Staging buffers are fully overwritten below.
        self.keys.clear();
        self.keys.extend_from_slice(keys);
        self.values.clear();
        self.values.extend_from_slice(values);
        for (i, (&d, &r)) in self.digits.iter().zip(&self.ranks).enumerate() {
            let pos = (self.local_start[d as usize] + r) as usize;
            self.keys[pos] = keys[i];
            self.values[pos] = values[i];
        }
        for d in 0..self.counts.len() {
            let c = self.counts[d] as usize;
            if c == 0 {
                continue;
            }
            let s = self.local_start[d] as usize;
            let dst = self.dst[d] as usize;
            keys_out.write_run(dst, &self.keys[s..s + c]);
            values_out.write_run(dst, &self.values[s..s + c]);
        }
    }
}

/// Running 64-bit bin offsets for one pass, advanced strip by strip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StripCarry {
    pub offsets: Vec<u64>,
}

impl StripCarry {
    /// Carry for the first strip of `place`: its global bin offsets.
    pub fn start(offsets: &GlobalBinOffsets, place: usize) -> Self {
        StripCarry {
            offsets: offsets.row(place).to_vec(),
        }
    }
}

/// Element and counter traffic of one tile.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TileStats {
    pub element_reads: u64,
    pub element_writes: u64,
    pub counter_ops: u64,
    pub short_circuit: bool,
    pub full: bool,
}

/// Tile counts of one or more partition passes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PassStats {
    pub tiles: u64,
    pub full_tiles: u64,
    /// Tiles written with a single contiguous copy.
    pub fast_path_tiles: u64,
    /// Full tiles among the fast-path tiles.
    pub fast_path_full_tiles: u64,
}

impl PassStats {
    fn add(&mut self, t: &TileStats) {
        self.tiles += 1;
        self.full_tiles += t.full as u64;
        self.fast_path_tiles += t.short_circuit as u64;
        self.fast_path_full_tiles += (t.short_circuit && t.full) as u64;
    }

    fn merge(&mut self, o: &PassStats) {
        self.tiles += o.tiles;
        self.full_tiles += o.full_tiles;
        self.fast_path_tiles += o.fast_path_tiles;
        self.fast_path_full_tiles += o.fast_path_full_tiles;
    }
}

/// One chained-scan invocation over a single strip.
pub struct StripPass<'a, B, V> {
    keys_in: &'a [B],
    values_in: &'a [V],
    keys_out: ScatterTarget<'a, B>,
    values_out: ScatterTarget<'a, V>,
    strip_start: usize,
    strip_len: usize,
    tile_size: usize,
    place: usize,
    carry: &'a [u64],
    next_carry: Vec<AtomicU64>,
    counters: CounterMatrix,
    cfg: &'a RadixConfig,
}

impl<'a, B: KeyBits, V: Copy + Send + Sync> StripPass<'a, B, V> {
    /// Sets up the strip `strip_start..strip_start + strip_len` of the input.
    /// `carry` holds the 64-bit bin starts for this strip.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        keys_in: &'a [B],
        values_in: &'a [V],
        keys_out: &'a mut [B],
        values_out: &'a mut [V],
        strip_start: usize,
        strip_len: usize,
        place: usize,
        carry: &'a [u64],
        cfg: &'a RadixConfig,
    ) -> Self {
        assert_eq!(keys_in.len(), values_in.len());
        assert_eq!(keys_in.len(), keys_out.len());
        assert_eq!(values_in.len(), values_out.len());
        assert!(strip_start + strip_len <= keys_in.len());
        assert!(strip_len <= cfg.strip_size);
        assert_eq!(carry.len(), cfg.radix);
        let tile_size = cfg.effective_tile_size();
        let tiles = strip_len.div_ceil(tile_size);
        StripPass {
            keys_in,
            values_in,
            keys_out: ScatterTarget::new(keys_out),
            values_out: ScatterTarget::new(values_out),
            strip_start,
            strip_len,
            tile_size,
            place,
            carry,
            next_carry: carry.iter().map(|&c| AtomicU64::new(c)).collect(),
            counters: CounterMatrix::new(cfg.radix, tiles),
            cfg,
        }
    }

    pub fn tiles(&self) -> usize {
        self.counters.tiles()
    }

    pub fn counters(&self) -> &CounterMatrix {
        &self.counters
    }

    fn tile_range(&self, tile: usize) -> (usize, usize) {
        let start = self.strip_start + tile * self.tile_size;
        let end = (start + self.tile_size).min(self.strip_start + self.strip_len);
        (start, end)
    }

    /// Bins one tile: rank, publish local counts, look back, publish
    /// inclusive prefixes, then scatter (or copy, for a single-digit tile).
    pub fn process_tile(
        &self,
        tile: usize,
        ctx: &mut BlockContext<'_>,
    ) -> Result<TileStats, CounterError> {
        let mut scratch = TileScratch::new(self.cfg.radix);
        self.process_tile_with(tile, &mut scratch, ctx)
    }

    fn process_tile_with(
        &self,
        tile: usize,
        s: &mut TileScratch<B, V>,
        ctx: &mut BlockContext<'_>,
    ) -> Result<TileStats, CounterError> {
        let (start, end) = self.tile_range(tile);
        let keys = &self.keys_in[start..end];
        let values = &self.values_in[start..end];
        let len = keys.len();
        let radix = self.cfg.radix;

        s.load_digits(keys, self.place, self.cfg);
        rank_tile_into(&s.digits, self.cfg.digit_bits, &mut s.counts, &mut s.ranks);
        ctx.delay_point();

        for (d, &c) in s.counts.iter().enumerate() {
            self.counters.publish_local(d, tile, c)?;
        }
        ctx.delay_point();

        let mut reads = 0;
        let last = tile + 1 == self.tiles();
        for d in 0..radix {
            let lb = self
                .counters
                .lookback_exclusive(d, tile, ctx.cancel_flag())?;
            reads += lb.reads;
            let inclusive = lb.exclusive + s.counts[d];
            self.counters.publish_inclusive(d, tile, inclusive)?;
            s.dst[d] = self.carry[d] + lb.exclusive as u64;
            if last {
                self.next_carry[d].store(self.carry[d] + inclusive as u64, Ordering::Relaxed);
            }
            if d == radix / 2 {
                ctx.delay_point();
            }
        }

        let short_circuit = homogeneous_digit(&s.counts, len);
        // SAFETY: the chained scan gives every (tile, digit) a private
        // output run of exactly counts[digit] elements.
        unsafe {
            match short_circuit {
                Some(d) => {
                    let dst = s.dst[d] as usize;
                    self.keys_out.write_run(dst, keys);
                    self.values_out.write_run(dst, values);
                }
                None => s.reorder_and_scatter(keys, values, &self.keys_out, &self.values_out),
            }
        }

        Ok(TileStats {
            element_reads: len as u64,
            element_writes: len as u64,
            counter_ops: 2 * radix as u64 + reads,
            short_circuit: short_circuit.is_some(),
            full: len == self.tile_size,
        })
    }

    /// Runs every tile of the strip on `exec` and returns the carry for the
    /// next strip.
    pub fn run(self, exec: &Executor) -> Result<(StripCarry, PassStats), CounterError> {
        let scratch: Vec<Mutex<TileScratch<B, V>>> = (0..exec.workers())
            .map(|_| Mutex::new(TileScratch::new(self.cfg.radix)))
            .collect();
        let stats = Mutex::new(PassStats::default());
        exec.run_blocks(self.tiles(), |tile, ctx| {
            let mut s = scratch[ctx.worker()].lock().unwrap();
            let t = self.process_tile_with(tile, &mut s, ctx)?;
            exec.ledger_record(Phase::Partition, OpKind::ElementRead, t.element_reads);
            exec.ledger_record(Phase::Partition, OpKind::ElementWrite, t.element_writes);
            exec.ledger_record(Phase::Partition, OpKind::CounterOp, t.counter_ops);
            stats.lock().unwrap().add(&t);
            Ok(())
        })?;
        let carry = StripCarry {
            offsets: self
                .next_carry
                .into_iter()
                .map(AtomicU64::into_inner)
                .collect(),
        };
        Ok((carry, stats.into_inner().unwrap()))
    }
}

/// Stable partition of `keys_in` (and its payload) by the digit at
/// `place`, strip by strip, into the output buffers. `carry` enters as the
/// pass's global bin offsets and leaves as the bin ends.
#[allow(clippy::too_many_arguments)]
pub fn partition_pass<B: KeyBits, V: Copy + Send + Sync>(
    keys_in: &[B],
    values_in: &[V],
    keys_out: &mut [B],
    values_out: &mut [V],
    place: usize,
    carry: StripCarry,
    cfg: &RadixConfig,
    exec: &Executor,
) -> Result<(StripCarry, PassStats), CounterError> {
    let n = keys_in.len();
    let mut carry = carry;
    let mut stats = PassStats::default();
    let mut strip_start = 0;
    while strip_start < n {
        let strip_len = cfg.strip_size.min(n - strip_start);
        let pass = StripPass::new(
            keys_in,
            values_in,
            &mut *keys_out,
            &mut *values_out,
            strip_start,
            strip_len,
            place,
            &carry.offsets,
            cfg,
        );
        let (next, s) = pass.run(exec)?;
        carry = next;
        stats.merge(&s);
        strip_start += strip_len;
    }
    Ok((carry, stats))
}

/// Outcome of a full sort.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SortReport {
    pub n: u64,
    pub passes: u64,
    pub tiles: PassStats,
    /// Ledger traffic of this sort alone.
    pub ledger: LedgerSnapshot,
}

fn check_lengths(keys: usize, values: usize) -> Result<(), SortError> {
    if keys != values {
        return Err(SortError::LengthMismatch { keys, values });
    }
    Ok(())
}

fn check_width<B: KeyBits>(cfg: &RadixConfig) -> Result<(), SortError> {
    if cfg.key_bits != B::BITS {
        return Err(SortError::KeyWidth {
            config: cfg.key_bits,
            keys: B::BITS,
        });
    }
    Ok(())
}

/// Ping-pong driver shared by both sorters: runs `pass(place, src, dst)` for
/// every place and leaves the result in the caller's buffers, copying back
/// (and ledgering the copy) after an odd number of passes.
pub(crate) fn ping_pong<B, V, F>(
    keys: &mut [B],
    values: &mut [V],
    passes: usize,
    exec: &Executor,
    mut pass: F,
) -> Result<(), SortError>
where
    B: KeyBits,
    V: Copy,
    F: FnMut(usize, (&[B], &[V]), (&mut [B], &mut [V])) -> Result<(), SortError>,
{
    let mut alt_keys = keys.to_vec();
    let mut alt_values = values.to_vec();
    for place in 0..passes {
        if place % 2 == 0 {
            pass(place, (keys, values), (&mut alt_keys, &mut alt_values))?;
        } else {
            pass(place, (&alt_keys, &alt_values), (keys, values))?;
        }
    }
    if passes % 2 == 1 {
        keys.copy_from_slice(&alt_keys);
        values.copy_from_slice(&alt_values);
        exec.ledger_record(Phase::FinalCopy, OpKind::CopyOp, keys.len() as u64);
    }
    Ok(())
}

/// Sorts encoded keys and their payload in place of the caller's buffers.
pub fn onesweep_sort_encoded<B: KeyBits, V: Copy + Send + Sync>(
    keys: &mut [B],
    values: &mut [V],
    cfg: &RadixConfig,
    exec: &Executor,
) -> Result<SortReport, SortError> {
    check_lengths(keys.len(), values.len())?;
    check_width::<B>(cfg)?;
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

    let histogram = global_histograms(keys, cfg, exec);
    let offsets = global_bin_offsets(&histogram);

    let mut tiles = PassStats::default();
    ping_pong(
        keys,
        values,
        cfg.passes,
        exec,
        |place, (ki, vi), (ko, vo)| {
            let carry = StripCarry::start(&offsets, place);
            let (end, stats) = partition_pass(ki, vi, ko, vo, place, carry, cfg, exec)?;
            debug_assert_eq!(end.offsets.last().copied(), Some(n as u64));
            tiles.merge(&stats);
            Ok(())
        },
    )?;

    report.tiles = tiles;
    report.ledger = exec.ledger_snapshot().since(&before);
    Ok(report)
}

pub fn onesweep_sort_encoded_keys<B: KeyBits>(
    keys: &mut [B],
    cfg: &RadixConfig,
    exec: &Executor,
) -> Result<SortReport, SortError> {
    let mut unit = vec![(); keys.len()];
    onesweep_sort_encoded(keys, &mut unit, cfg, exec)
}

/// Stable ascending sort of `keys`.
pub fn onesweep_sort<K: RadixKey>(
    keys: &mut [K],
    cfg: &RadixConfig,
    exec: &Executor,
) -> Result<SortReport, SortError> {
    let mut unit = vec![(); keys.len()];
    onesweep_sort_pairs(keys, &mut unit, cfg, exec)
}

/// Stable ascending sort of `keys`, moving `values` along with them.
pub fn onesweep_sort_pairs<K: RadixKey, V: Copy + Send + Sync>(
    keys: &mut [K],
    values: &mut [V],
    cfg: &RadixConfig,
    exec: &Executor,
) -> Result<SortReport, SortError> {
    check_lengths(keys.len(), values.len())?;
    let mut bits: Vec<K::Bits> = keys.iter().map(|k| k.encode()).collect();
    let report = onesweep_sort_encoded(&mut bits, values, cfg, exec)?;
    for (k, b) in keys.iter_mut().zip(bits) {
        *k = K::decode(b);
    }
    Ok(report)
}
