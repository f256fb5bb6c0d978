//! Execution mode for the data-parallel inner loops.
//!
//! Every hot loop in the crate (per-ray rendering, per-ray gradients,
//! per-candidate scoring) goes through [`map`] so that the same code path can
//! run on the rayon pool or on the calling thread. The `parallel` cargo
//! feature decides whether rayon is compiled in at all; [`with_exec`] picks the
//! mode at runtime, which is what the benchmarks use to compare the two.
//!
//! Results are always collected in index order, so both modes produce
//! bit-identical output.

use std::cell::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

thread_local! {
    static MODE: Cell<Option<Exec>> = const { Cell::new(None) };
}

pub fn default_exec() -> Exec {
    if cfg!(feature = "parallel") {
        Exec::Parallel
    } else {
        Exec::Sequential
    }
}

/// Mode in effect on the current thread.
pub fn current() -> Exec {
    MODE.with(|m| m.get()).unwrap_or_else(default_exec)
}

/// Runs `f` with the given execution mode on the current thread.
///
/// Requesting [`Exec::Parallel`] without the `parallel` feature silently
/// falls back to sequential execution.
pub fn with_exec<R>(exec: Exec, f: impl FnOnce() -> R) -> R {
    let prev = MODE.with(|m| m.replace(Some(exec)));
    let out = f();
    MODE.with(|m| m.set(prev));
    out
}

/// Configures the global rayon pool size. A no-op without the feature.
pub fn set_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match current() {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            let seq = MODE.with(|m| m.get());
            (0..n)
                .into_par_iter()
                .map(|i| {
                    // Workers inherit the caller's explicit mode.
                    if let Some(mode) = seq {
                        MODE.with(|m| m.set(Some(mode)));
                    }
                    f(i)
                })
                .collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Maps over a slice, possibly in parallel.
pub fn map_slice<'a, T, U, F>(items: &'a [T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&'a T) -> U + Sync + Send,
{
    map(items.len(), |i| f(&items[i]))
}
