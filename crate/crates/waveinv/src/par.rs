//! Deterministic data-parallel helpers.
//!
//! All hot loops are gather-style: every output entry is written by exactly
//! one closure call over a disjoint chunk, so results are bit-identical for
//! any thread count and no reduction ordering is involved.

use std::sync::atomic::{AtomicUsize, Ordering};

static THREAD_CAP: AtomicUsize = AtomicUsize::new(0);

/// Overrides the worker count (0 restores the default).
pub fn set_threads(n: usize) {
    THREAD_CAP.store(n, Ordering::Relaxed);
}

pub fn threads() -> usize {
    let cap = THREAD_CAP.load(Ordering::Relaxed);
    if cap > 0 {
        return cap;
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(8)
}

/// Splits `out` into contiguous chunks and runs `fill(start_index, chunk)` on
/// worker threads. Each entry is produced independently of the others, so the
/// output does not depend on the number of workers.
pub fn fill_chunks<T: Send, F>(out: &mut [T], fill: F)
where
    F: Fn(usize, &mut [T]) + Sync,
{
    let n = out.len();
    let workers = threads().min(n.max(1));
    if workers <= 1 || n < 1024 {
        fill(0, out);
        return;
    }
    let chunk = n.div_ceil(workers);
    std::thread::scope(|scope| {
        for (c, slice) in out.chunks_mut(chunk).enumerate() {
            let fill = &fill;
            scope.spawn(move || fill(c * chunk, slice));
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_chunks_matches_serial() {
        let mut a = vec![0u64; 10_000];
        let mut b = vec![0u64; 10_000];
        fill_chunks(&mut a, |start, chunk| {
            for (i, v) in chunk.iter_mut().enumerate() {
                *v = ((start + i) as u64).wrapping_mul(2654435761);
            }
        });
        for (i, v) in b.iter_mut().enumerate() {
            *v = (i as u64).wrapping_mul(2654435761);
        }
        assert_eq!(a, b);
    }
}
