//! Chained-scan status counters with decoupled lookback.
//!
//! Each counter is one 32-bit word: status in bits 31..30, value in bits
//! 29..0. Because status and value travel in the same word, a single atomic
//! load always observes a pair that was written together.
//!
//! ```text
//!  31 30 29                                                  0
//! +-----+-----------------------------------------------------+
//! | st  |                       value                         |
//! +-----+-----------------------------------------------------+
//! ```
//!
//! A tile publishes its local digit count (`Local`), walks backwards over
//! its predecessors adding `Local` values until it meets a `Global`
//! inclusive prefix, then publishes its own inclusive prefix (`Global`).

use std::hint;
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::thread;

use thiserror::Error;

pub const STATUS_SHIFT: u32 = 30;
pub const VALUE_MASK: u32 = (1 << STATUS_SHIFT) - 1;
/// Polls of a not-ready counter before yielding the thread.
const SPINS_BEFORE_YIELD: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Status {
    /// No value yet.
    NotReady = 0,
    /// Value is the tile's own digit count.
    Local = 1,
    /// Value is the inclusive prefix over this and all earlier tiles.
    Global = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CounterError {
    #[error("counter value {0} does not fit in 30 bits")]
    Overflow(u64),
    #[error("lookback cancelled while waiting on a predecessor")]
    Cancelled,
}

pub fn pack_counter(status: Status, value: u32) -> Result<u32, CounterError> {
    if value > VALUE_MASK {
        return Err(CounterError::Overflow(value as u64));
    }
    Ok(((status as u32) << STATUS_SHIFT) | value)
}

/// Splits a counter word. `None` for the unused status pattern `0b11`.
pub fn unpack_counter(word: u32) -> Option<(Status, u32)> {
    let status = match word >> STATUS_SHIFT {
        0 => Status::NotReady,
        1 => Status::Local,
        2 => Status::Global,
        _ => return None,
    };
    Some((status, word & VALUE_MASK))
}

/// Outcome of one lookback walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lookback {
    /// Sum of the digit counts of all earlier tiles.
    pub exclusive: u32,
    /// Counter words loaded, including re-reads while waiting.
    pub reads: u64,
}

/// One column of status counters per digit, one row per tile, all
/// starting as `NotReady`.
#[derive(Debug)]
pub struct CounterMatrix {
    radix: usize,
    tiles: usize,
    words: Vec<AtomicU32>,
}

impl CounterMatrix {
    pub fn new(radix: usize, tiles: usize) -> Self {
        CounterMatrix {
            radix,
            tiles,
            words: (0..radix * tiles).map(|_| AtomicU32::new(0)).collect(),
        }
    }

    pub fn radix(&self) -> usize {
        self.radix
    }

    pub fn tiles(&self) -> usize {
        self.tiles
    }

    #[inline(always)]
    fn cell(&self, digit: usize, tile: usize) -> &AtomicU32 {
        &self.words[digit * self.tiles + tile]
    }

    /// Current word of counter (`digit`, `tile`).
    pub fn load(&self, digit: usize, tile: usize) -> u32 {
        self.cell(digit, tile).load(Ordering::Acquire)
    }

    pub fn publish_local(&self, digit: usize, tile: usize, count: u32) -> Result<(), CounterError> {
        let word = pack_counter(Status::Local, count)?;
        let cell = self.cell(digit, tile);
        debug_assert_eq!(
            cell.load(Ordering::Relaxed) >> STATUS_SHIFT,
            Status::NotReady as u32,
            "counter ({digit}, {tile}) published twice"
        );
        cell.store(word, Ordering::Release);
        Ok(())
    }

    pub fn publish_inclusive(
        &self,
        digit: usize,
        tile: usize,
        inclusive: u32,
    ) -> Result<(), CounterError> {
        let word = pack_counter(Status::Global, inclusive)?;
        let cell = self.cell(digit, tile);
        debug_assert_eq!(
            cell.load(Ordering::Relaxed) >> STATUS_SHIFT,
            Status::Local as u32,
            "counter ({digit}, {tile}) must hold a local count before its prefix"
        );
        cell.store(word, Ordering::Release);
        Ok(())
    }

    /// Exclusive prefix of `digit` for `tile`.
    ///
    /// The caller must already have published its own local count for every
    /// digit; that is what lets later tiles make progress while this one
    /// waits. Returns [`CounterError::Cancelled`] if `cancel` is raised
    /// while waiting on a predecessor that has not published.
    pub fn lookback_exclusive(
        &self,
        digit: usize,
        tile: usize,
        cancel: &AtomicBool,
    ) -> Result<Lookback, CounterError> {
        let mut exclusive = 0u32;
        let mut reads = 0u64;
        let mut pred = tile;
        while pred > 0 {
            pred -= 1;
            let cell = self.cell(digit, pred);
            let mut spins = 0;
            let word = loop {
                let w = cell.load(Ordering::Acquire);
                reads += 1;
                if w >> STATUS_SHIFT != Status::NotReady as u32 {
                    break w;
                }
                spins += 1;
                if spins < SPINS_BEFORE_YIELD {
                    hint::spin_loop();
                } else {
                    if cancel.load(Ordering::Relaxed) {
                        return Err(CounterError::Cancelled);
                    }
                    spins = 0;
                    thread::yield_now();
                }
            };
            exclusive += word & VALUE_MASK;
            if word >> STATUS_SHIFT == Status::Global as u32 {
                break;
            }
        }
        Ok(Lookback { exclusive, reads })
    }

    /// Decoded column for `digit`; meant for inspection once a pass is done.
    pub fn column(&self, digit: usize) -> Vec<(Status, u32)> {
        (0..self.tiles)
            .map(|t| unpack_counter(self.load(digit, t)).expect("valid counter word"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{DelayInjection, Executor};

    const FIG7_LOCAL: [u32; 5] = [11, 15, 9, 10, 8];

    #[test]
    fn pack_layout() {
        assert_eq!(pack_counter(Status::Local, 15), Ok(0x4000_000F));
        assert_eq!(pack_counter(Status::Global, 53), Ok(0x8000_0035));
        assert_eq!(pack_counter(Status::NotReady, 0), Ok(0));
        assert_eq!(unpack_counter(0x4000_000F), Some((Status::Local, 15)));
        assert_eq!(unpack_counter(0x8000_0035), Some((Status::Global, 53)));
        assert_eq!(unpack_counter(0), Some((Status::NotReady, 0)));
        assert_eq!(unpack_counter(0xC000_0000), None);
        assert_eq!(
            pack_counter(Status::Local, 1 << 30),
            Err(CounterError::Overflow(1 << 30))
        );
    }

    #[test]
    fn publish_words() {
        let m = CounterMatrix::new(1, 5);
        m.publish_local(0, 0, 11).unwrap();
        assert_eq!(m.load(0, 0), 0x4000_000B);
        m.publish_local(0, 4, 8).unwrap();
        assert_eq!(m.load(0, 4), 0x4000_0008);
        m.publish_local(0, 2, 0).unwrap();
        assert_eq!(m.load(0, 2), 0x4000_0000);
        m.publish_inclusive(0, 0, 11).unwrap();
        assert_eq!(m.load(0, 0), 0x8000_000B);
        assert!(m.publish_inclusive(0, 4, 1 << 30).is_err());
    }

    #[test]
    #[should_panic(expected = "published twice")]
    #[cfg(debug_assertions)]
    fn double_publish_is_caught() {
        let m = CounterMatrix::new(1, 1);
        m.publish_local(0, 0, 1).unwrap();
        m.publish_local(0, 0, 1).unwrap();
    }

    #[test]
    fn sequential_walkthrough() {
        let m = CounterMatrix::new(1, 5);
        let cancel = AtomicBool::new(false);
        for (t, &c) in FIG7_LOCAL.iter().enumerate() {
            m.publish_local(0, t, c).unwrap();
        }
        // All local: tile 2 must add tiles 1 and 0.
        assert_eq!(m.lookback_exclusive(0, 2, &cancel).unwrap().exclusive, 26);
        assert_eq!(m.lookback_exclusive(0, 4, &cancel).unwrap().exclusive, 45);
        assert_eq!(
            m.lookback_exclusive(0, 0, &cancel).unwrap(),
            Lookback {
                exclusive: 0,
                reads: 0
            }
        );

        m.publish_inclusive(0, 0, 11).unwrap();
        m.publish_inclusive(0, 1, 26).unwrap();
        // Stops at tile 1's global value after a single read.
        let lb = m.lookback_exclusive(0, 2, &cancel).unwrap();
        assert_eq!(
            lb,
            Lookback {
                exclusive: 26,
                reads: 1
            }
        );
        m.publish_inclusive(0, 2, 35).unwrap();
        // Tile 4 adds tile 3's local 10 and stops at tile 2's 35.
        let lb = m.lookback_exclusive(0, 4, &cancel).unwrap();
        assert_eq!(
            lb,
            Lookback {
                exclusive: 45,
                reads: 2
            }
        );
    }

    #[test]
    fn waiting_lookback_is_cancellable() {
        let m = CounterMatrix::new(1, 2);
        let cancel = AtomicBool::new(true);
        m.publish_local(0, 1, 3).unwrap();
        assert_eq!(
            m.lookback_exclusive(0, 1, &cancel),
            Err(CounterError::Cancelled)
        );
    }

    fn run_chained(local: &[u32], workers: usize, seed: u64) -> Vec<(Status, u32)> {
        let m = CounterMatrix::new(1, local.len());
        let ex = Executor::new(workers).with_delay_injection(DelayInjection {
            seed,
            max_micros: 20,
        });
        ex.run_blocks(local.len(), |t, ctx| {
            ctx.delay_point();
            m.publish_local(0, t, local[t])?;
            ctx.delay_point();
            let lb = m.lookback_exclusive(0, t, ctx.cancel_flag())?;
            ctx.delay_point();
            m.publish_inclusive(0, t, lb.exclusive + local[t])
        })
        .unwrap();
        m.column(0)
    }

    #[test]
    fn randomized_schedules_reach_inclusive_prefix() {
        let expected: Vec<(Status, u32)> = [11, 26, 35, 45, 53]
            .iter()
            .map(|&v| (Status::Global, v))
            .collect();
        for seed in 0..100 {
            let workers = 1 + (seed as usize % 5);
            assert_eq!(
                run_chained(&FIG7_LOCAL, workers, seed),
                expected,
                "seed {seed}"
            );
        }
    }

    #[test]
    fn racing_reader_only_sees_whole_words() {
        let tiles = 4096;
        let local: Vec<u32> = (0..tiles as u32).map(|i| (i * 7919) % 1000).collect();
        let m = CounterMatrix::new(1, tiles);
        let done = AtomicBool::new(false);
        let ex = Executor::new(3);
        thread::scope(|s| {
            s.spawn(|| {
                let mut seen = 0u64;
                while !done.load(Ordering::Acquire) {
                    for t in (0..tiles).step_by(61) {
                        let w = m.load(0, t);
                        let (status, value) = unpack_counter(w).expect("pack-valid word");
                        match status {
                            Status::NotReady => assert_eq!(value, 0),
                            Status::Local => assert_eq!(value, local[t]),
                            Status::Global => {
                                let want: u32 = local[..=t].iter().sum();
                                assert_eq!(value, want);
                            }
                        }
                        seen += 1;
                    }
                }
                assert!(seen > 0);
            });
            ex.run_blocks(tiles, |t, ctx| {
                m.publish_local(0, t, local[t])?;
                let lb = m.lookback_exclusive(0, t, ctx.cancel_flag())?;
                m.publish_inclusive(0, t, lb.exclusive + local[t])
            })
            .unwrap();
            done.store(true, Ordering::Release);
        });
    }
}
