//! Concurrency helpers shared by extraction backends and the ablation grid.

use crate::error::Result;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

/// Applies `f` to every input on up to `limit` worker threads.
///
/// Output order matches input order regardless of completion order, so
/// callers stay deterministic. `limit` is clamped to `1..=inputs.len()`.
pub fn map_bounded<T, R, F>(inputs: &[T], limit: usize, f: F) -> Vec<Result<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let n = inputs.len();
    if n == 0 {
        return Vec::new();
    }
    let limit = limit.max(1).min(n);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<R>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..limit {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let out = f(&inputs[i]);
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every slot is filled"))
        .collect()
}

/// Runs `f` up to `attempts` times, sleeping `base_delay * 2^i` between tries.
///
/// Only errors marked retryable are retried; anything else returns
/// immediately. The final failure is returned unchanged so callers see the
/// real cause, not a retry wrapper.
pub fn with_retry<R>(
    attempts: usize,
    base_delay: Duration,
    f: impl Fn() -> Result<R>,
) -> Result<R> {
    let attempts = attempts.max(1);
    for i in 0..attempts {
        match f() {
            Ok(v) => return Ok(v),
            Err(e) if e.is_retryable() && i + 1 < attempts => {
                std::thread::sleep(base_delay * 2u32.saturating_pow(i as u32));
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!("loop returns on the final attempt")
}
