//! Counters for linear-system work, split by the kind of matrix involved.
//!
//! Callers record every factorization or iterative solve together with
//! whether the system carried a positive diagonal shift (`K + Λ`, `K + σ²I`)
//! or was a bare kernel matrix. With the `std` feature the counters are
//! thread-local; without it they are process-wide atomics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    /// Kernel matrix plus a strictly positive diagonal.
    Shifted,
    /// Kernel matrix with at most jitter added.
    Bare,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveCounts {
    pub shifted: usize,
    pub bare: usize,
}

impl SolveCounts {
    /// Work recorded between `earlier` and `self`.
    pub fn since(&self, earlier: &SolveCounts) -> SolveCounts {
        SolveCounts { shifted: self.shifted - earlier.shifted, bare: self.bare - earlier.bare }
    }
}

#[cfg(feature = "std")]
mod imp {
    use super::*;
    use core::cell::Cell;

    std::thread_local! {
        static COUNTS: Cell<SolveCounts> = const { Cell::new(SolveCounts { shifted: 0, bare: 0 }) };
    }

    pub fn record(kind: SystemKind) {
        COUNTS.with(|c| {
            let mut v = c.get();
            match kind {
                SystemKind::Shifted => v.shifted += 1,
                SystemKind::Bare => v.bare += 1,
            }
            c.set(v);
        });
    }

    pub fn snapshot() -> SolveCounts {
        COUNTS.with(|c| c.get())
    }
}

#[cfg(not(feature = "std"))]
mod imp {
    use super::*;
    use core::sync::atomic::{AtomicUsize, Ordering};

    static SHIFTED: AtomicUsize = AtomicUsize::new(0);
    static BARE: AtomicUsize = AtomicUsize::new(0);

    pub fn record(kind: SystemKind) {
        match kind {
            SystemKind::Shifted => SHIFTED.fetch_add(1, Ordering::Relaxed),
            SystemKind::Bare => BARE.fetch_add(1, Ordering::Relaxed),
        };
    }

    pub fn snapshot() -> SolveCounts {
        SolveCounts { shifted: SHIFTED.load(Ordering::Relaxed), bare: BARE.load(Ordering::Relaxed) }
    }
}

pub use imp::{record, snapshot};
