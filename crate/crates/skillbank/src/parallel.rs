//! Bounded thread-pool executor for simulation batches.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use skillbank_core::simulation::{BatchExecutor, Transcript};

/// Runs jobs on at most `parallelism` scoped threads. Results keep job order.
#[derive(Debug, Clone, Copy)]
pub struct ThreadExecutor {
    pub parallelism: usize,
}

impl ThreadExecutor {
    pub fn new(parallelism: usize) -> Self {
        ThreadExecutor {
            parallelism: parallelism.max(1),
        }
    }
}

impl BatchExecutor for ThreadExecutor {
    fn run_all(&self, jobs: usize, job: &(dyn Fn(usize) -> Transcript + Sync)) -> Vec<Transcript> {
        let workers = self.parallelism.clamp(1, jobs.max(1));
        if workers == 1 {
            return (0..jobs).map(job).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Transcript>>> = (0..jobs).map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= jobs {
                        break;
                    }
                    let t = job(i);
                    *slots[i].lock().expect("slot lock") = Some(t);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot lock").expect("every job ran"))
            .collect()
    }
}
