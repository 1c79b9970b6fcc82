//! Thread-local multiply-accumulate counter.
//!
//! Forward kernels report the multiply-accumulate slots they execute while a
//! [`MacCounter`] is alive on the current thread. Adjoint kernels never
//! report.

use std::cell::Cell;

thread_local! {
    static ACTIVE: Cell<bool> = const { Cell::new(false) };
    static COUNT: Cell<u64> = const { Cell::new(0) };
}

#[inline]
pub(crate) fn record(macs: usize) {
    ACTIVE.with(|active| {
        if active.get() {
            COUNT.with(|c| c.set(c.get() + macs as u64));
        }
    });
}

/// Scoped counter; counting stops when it is dropped.
pub struct MacCounter {
    _private: (),
}

impl MacCounter {
    pub fn start() -> Self {
        ACTIVE.with(|a| a.set(true));
        COUNT.with(|c| c.set(0));
        Self { _private: () }
    }

    pub fn count(&self) -> u64 {
        COUNT.with(|c| c.get())
    }
}

impl Drop for MacCounter {
    fn drop(&mut self) {
        ACTIVE.with(|a| a.set(false));
    }
}
