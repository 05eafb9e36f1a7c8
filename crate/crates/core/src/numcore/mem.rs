//! Allocation counters for tensor buffers.
//!
//! Every tensor buffer registers its size on creation and releases it on drop.
//! Counters are per thread, so a measurement only sees the work done on the
//! calling thread.

use std::cell::Cell;

thread_local! {
    static LIVE: Cell<usize> = const { Cell::new(0) };
    static PEAK: Cell<usize> = const { Cell::new(0) };
}

pub(crate) fn on_alloc(bytes: usize) {
    LIVE.with(|live| {
        let now = live.get() + bytes;
        live.set(now);
        PEAK.with(|peak| {
            if now > peak.get() {
                peak.set(now);
            }
        });
    });
}

pub(crate) fn on_free(bytes: usize) {
    // A buffer may be released on a different thread than it was allocated on.
    LIVE.with(|live| live.set(live.get().saturating_sub(bytes)));
}

/// Bytes currently held by tensor buffers on this thread.
pub fn live_bytes() -> usize {
    LIVE.with(Cell::get)
}

/// Highest value of [`live_bytes`] since the last [`reset_peak`].
pub fn peak_bytes() -> usize {
    PEAK.with(Cell::get)
}

/// Resets the peak to the current live count.
pub fn reset_peak() {
    let live = live_bytes();
    PEAK.with(|peak| peak.set(live));
}

/// Runs `f` and returns its result with the transient peak it caused, i.e.
/// the peak above the live count at entry.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, usize) {
    let base = live_bytes();
    let saved_peak = peak_bytes();
    reset_peak();
    let out = f();
    let transient = peak_bytes().saturating_sub(base);
    PEAK.with(|peak| peak.set(peak.get().max(saved_peak)));
    (out, transient)
}
