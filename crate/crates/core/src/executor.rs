//! Worker pool that stands in for a grid of thread blocks.
//!
//! [`Executor::run_blocks`] hands out tile indices from a shared
//! [`TileTicket`] in strictly increasing order. A worker finishes its tile
//! before drawing another ticket, so a tile only ever waits on tiles that
//! are already in flight on some other worker. All body writes are visible
//! to the caller once `run_blocks` returns.
//!
//! The executor also owns the [`MemOpLedger`], which counts element-level
//! reads and writes of the large key/value arrays per phase, plus status
//! counter traffic and the final-copy line item on their own.

use std::any::Any;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Environment variable that overrides the default worker count.
pub const WORKERS_ENV: &str = "ONESWEEP_WORKERS";

/// Shared counter issuing tile indices `0..limit` exactly once each.
#[derive(Debug)]
pub struct TileTicket {
    next: AtomicUsize,
    limit: usize,
}

impl TileTicket {
    pub fn new(limit: usize) -> Self {
        TileTicket {
            next: AtomicUsize::new(0),
            limit,
        }
    }

    /// Next unissued tile, or `None` once all tiles have been handed out.
    pub fn next_tile(&self) -> Option<usize> {
        let t = self.next.fetch_add(1, Ordering::Relaxed);
        (t < self.limit).then_some(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Upfront all-places histogram.
    Histogram,
    /// Chained-scan digit binning.
    Partition,
    /// Reduce-then-scan per-tile counting pass.
    Upsweep,
    /// Reduce-then-scan scatter pass.
    Downsweep,
    /// Copy back into the caller's buffer after an odd number of passes.
    FinalCopy,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Histogram,
        Phase::Partition,
        Phase::Upsweep,
        Phase::Downsweep,
        Phase::FinalCopy,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Histogram => "histogram",
            Phase::Partition => "partition",
            Phase::Upsweep => "upsweep",
            Phase::Downsweep => "downsweep",
            Phase::FinalCopy => "final_copy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    ElementRead,
    ElementWrite,
    /// Status counter loads and stores, and other bookkeeping words.
    CounterOp,
    /// Elements moved by the final copy (one per element, read and write together).
    CopyOp,
}

impl OpKind {
    const ALL: [OpKind; 4] = [
        OpKind::ElementRead,
        OpKind::ElementWrite,
        OpKind::CounterOp,
        OpKind::CopyOp,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

const PHASES: usize = Phase::ALL.len();
const KINDS: usize = OpKind::ALL.len();

/// Thread-safe memory-operation counters, one per (phase, kind).
#[derive(Debug, Default)]
pub struct MemOpLedger {
    cells: [[AtomicU64; KINDS]; PHASES],
}

impl MemOpLedger {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn record(&self, phase: Phase, kind: OpKind, count: u64) {
        if count != 0 {
            self.cells[phase.index()][kind.index()].fetch_add(count, Ordering::Relaxed);
        }
    }

    /// Consistent only when taken while no blocks are running.
    pub fn snapshot(&self) -> LedgerSnapshot {
        let mut out = LedgerSnapshot::default();
        for p in Phase::ALL {
            for k in OpKind::ALL {
                out.cells[p.index()][k.index()] =
                    self.cells[p.index()][k.index()].load(Ordering::Relaxed);
            }
        }
        out
    }

    pub fn reset(&self) {
        for row in &self.cells {
            for c in row {
                c.store(0, Ordering::Relaxed);
            }
        }
    }
}

/// Plain copy of a [`MemOpLedger`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LedgerSnapshot {
    cells: [[u64; KINDS]; PHASES],
}

impl LedgerSnapshot {
    pub fn get(&self, phase: Phase, kind: OpKind) -> u64 {
        self.cells[phase.index()][kind.index()]
    }

    pub fn element_reads(&self) -> u64 {
        Phase::ALL
            .iter()
            .map(|&p| self.get(p, OpKind::ElementRead))
            .sum()
    }

    pub fn element_writes(&self) -> u64 {
        Phase::ALL
            .iter()
            .map(|&p| self.get(p, OpKind::ElementWrite))
            .sum()
    }

    /// Element reads plus writes, excluding the final-copy line item.
    pub fn element_ops(&self) -> u64 {
        self.element_reads() + self.element_writes()
    }

    pub fn counter_ops(&self) -> u64 {
        Phase::ALL
            .iter()
            .map(|&p| self.get(p, OpKind::CounterOp))
            .sum()
    }

    pub fn copy_ops(&self) -> u64 {
        self.get(Phase::FinalCopy, OpKind::CopyOp)
    }

    /// Difference of two snapshots of the same ledger.
    pub fn since(&self, earlier: &LedgerSnapshot) -> LedgerSnapshot {
        let mut out = *self;
        for p in 0..PHASES {
            for k in 0..KINDS {
                out.cells[p][k] -= earlier.cells[p][k];
            }
        }
        out
    }
}

/// Random pauses between body steps, for exploring schedules in tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayInjection {
    pub seed: u64,
    /// Upper bound of a single pause.
    pub max_micros: u64,
}

/// Per-worker view handed to block bodies.
pub struct BlockContext<'a> {
    worker: usize,
    cancel: &'a AtomicBool,
    delay: Option<(ChaCha8Rng, u64)>,
}

impl BlockContext<'_> {
    pub fn worker(&self) -> usize {
        self.worker
    }

    /// Set once any block has failed; waiting bodies should give up.
    pub fn cancel_flag(&self) -> &AtomicBool {
        self.cancel
    }

    /// Injection point between body steps. A no-op unless delay injection
    /// is enabled on the executor.
    #[inline]
    pub fn delay_point(&mut self) {
        if let Some((rng, max)) = self.delay.as_mut() {
            match rng.random_range(0..4u32) {
                0 => {}
                1 => thread::yield_now(),
                _ => thread::sleep(Duration::from_micros(rng.random_range(0..=*max))),
            }
        }
    }
}

/// The worker pool. Cheap to construct; threads are scoped to each
/// `run_blocks` call.
#[derive(Debug)]
pub struct Executor {
    workers: usize,
    delay: Option<DelayInjection>,
    ledger: MemOpLedger,
}

impl Default for Executor {
    fn default() -> Self {
        Executor::new(default_workers())
    }
}

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
}

impl Executor {
    /// `workers` is clamped to at least one.
    pub fn new(workers: usize) -> Self {
        Executor {
            workers: workers.max(1),
            delay: None,
            ledger: MemOpLedger::new(),
        }
    }

    pub fn with_delay_injection(mut self, delay: DelayInjection) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn ledger(&self) -> &MemOpLedger {
        &self.ledger
    }

    #[inline]
    pub fn ledger_record(&self, phase: Phase, kind: OpKind, count: u64) {
        self.ledger.record(phase, kind, count);
    }

    pub fn ledger_snapshot(&self) -> LedgerSnapshot {
        self.ledger.snapshot()
    }

    /// Runs `body` once for every tile in `0..tiles` and returns after all
    /// of them finish.
    ///
    /// With one worker the tiles run on the calling thread in order. On the
    /// first error no further tickets are drawn, the cancel flag is raised,
    /// and that error is returned once every worker has stopped. A panic in
    /// a body is re-raised on the calling thread the same way.
    pub fn run_blocks<E, F>(&self, tiles: usize, body: F) -> Result<(), E>
    where
        E: Send,
        F: Fn(usize, &mut BlockContext<'_>) -> Result<(), E> + Sync,
    {
        if tiles == 0 {
            return Ok(());
        }
        let ticket = TileTicket::new(tiles);
        let cancel = AtomicBool::new(false);
        let first_error: Mutex<Option<E>> = Mutex::new(None);
        let first_panic: Mutex<Option<Box<dyn Any + Send>>> = Mutex::new(None);

        let work = |worker: usize| {
            let mut ctx = BlockContext {
                worker,
                cancel: &cancel,
                delay: self.delay.map(|d| {
                    (
                        ChaCha8Rng::seed_from_u64(
                            d.seed ^ (worker as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                        ),
                        d.max_micros,
                    )
                }),
            };
            while !cancel.load(Ordering::Relaxed) {
                let Some(tile) = ticket.next_tile() else {
                    break;
                };
                match panic::catch_unwind(AssertUnwindSafe(|| body(tile, &mut ctx))) {
                    Ok(Ok(())) => {}
                    Ok(Err(e)) => {
                        cancel.store(true, Ordering::Release);
                        first_error.lock().unwrap().get_or_insert(e);
                        break;
                    }
                    Err(payload) => {
                        cancel.store(true, Ordering::Release);
                        first_panic.lock().unwrap().get_or_insert(payload);
                        break;
                    }
                }
            }
        };

        let spawned = self.workers.min(tiles);
        if spawned == 1 {
            work(0);
        } else {
            thread::scope(|s| {
                for w in 1..spawned {
                    let work = &work;
                    s.spawn(move || work(w));
                }
                work(0);
            });
        }

        if let Some(payload) = first_panic.into_inner().unwrap() {
            panic::resume_unwind(payload);
        }
        match first_error.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}
