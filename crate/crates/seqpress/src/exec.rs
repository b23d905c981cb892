use std::ops::Range;
use std::thread;

use seqpress_core::bptt::Gradients;
use seqpress_core::train::{BatchExecutor, ChunkJob, Sequential, TrainError};

pub const THREADS_ENV: &str = "SEQPRESS_THREADS";

/// Splits every batch into contiguous chunks, one per thread, and reduces
/// the chunk results in chunk order. The result depends on the thread
/// count, so runs are reproducible for a fixed count but not bitwise equal
/// to [`Sequential`].
#[derive(Debug, Clone, Copy)]
pub struct Threaded {
    pub threads: usize,
}

fn chunks(n: usize, parts: usize) -> Vec<Range<usize>> {
    let parts = parts.clamp(1, n.max(1));
    (0..parts).map(|k| (k * n / parts)..((k + 1) * n / parts)).collect()
}

impl BatchExecutor for Threaded {
    fn accumulate(&self, n: usize, template: &Gradients, job: &ChunkJob<'_>) -> Result<(f64, Gradients), TrainError> {
        let parts = chunks(n, self.threads);
        let results: Vec<Result<(f64, Gradients), TrainError>> = thread::scope(|s| {
            let handles: Vec<_> = parts
                .into_iter()
                .map(|r| {
                    s.spawn(move || {
                        let mut g = template.zeros_like();
                        job(r, &mut g).map(|l| (l, g))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        let mut loss = 0.0;
        let mut total = template.zeros_like();
        for r in results {
            let (l, g) = r?;
            loss += l;
            total.add_assign(&g);
        }
        Ok((loss, total))
    }

    fn map(&self, n: usize, f: &(dyn Fn(usize) -> Result<f64, TrainError> + Sync)) -> Result<Vec<f64>, TrainError> {
        let parts = chunks(n, self.threads);
        let results: Vec<Result<Vec<f64>, TrainError>> = thread::scope(|s| {
            let handles: Vec<_> = parts.into_iter().map(|r| s.spawn(move || r.map(f).collect())).collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        let mut out = Vec::with_capacity(n);
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }
}

/// `Sequential` unless `SEQPRESS_THREADS` is set to a count above 1.
pub fn executor_from_env() -> Box<dyn BatchExecutor> {
    executor_for(std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()).unwrap_or(0))
}

pub fn executor_for(threads: usize) -> Box<dyn BatchExecutor> {
    if threads > 1 {
        Box::new(Threaded { threads })
    } else {
        Box::new(Sequential)
    }
}
