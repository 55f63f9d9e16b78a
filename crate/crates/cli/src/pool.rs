use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

/// Runs `work` over `jobs` on up to `workers` threads and hands results to
/// `emit` in job order, each as soon as every earlier job has finished.
pub fn run_ordered<J, R, E>(
    jobs: &[J],
    workers: usize,
    work: impl Fn(&J) -> R + Sync,
    mut emit: impl FnMut(usize, R) -> Result<(), E>,
) -> Result<(), E>
where
    J: Sync,
    R: Send,
{
    let workers = workers.clamp(1, jobs.len().max(1));
    let next = AtomicUsize::new(0);
    thread::scope(|s| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, work) = (&next, &work);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                if tx.send((i, work(job))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending = BTreeMap::new();
        let mut cursor = 0;
        for (i, r) in rx {
            pending.insert(i, r);
            while let Some(r) = pending.remove(&cursor) {
                if let Err(e) = emit(cursor, r) {
                    // Stop handing out jobs; running ones finish and are dropped.
                    next.store(jobs.len(), Ordering::Relaxed);
                    return Err(e);
                }
                cursor += 1;
            }
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_arrive_in_job_order() {
        let jobs: Vec<u64> = (0..50).collect();
        for workers in [1, 3, 8] {
            let mut seen = Vec::new();
            run_ordered(
                &jobs,
                workers,
                |&j| {
                    thread::sleep(std::time::Duration::from_micros((50 - j) * 20));
                    j * j
                },
                |i, r| {
                    seen.push((i, r));
                    Ok::<_, ()>(())
                },
            )
            .unwrap();
            assert_eq!(seen, jobs.iter().map(|&j| (j as usize, j * j)).collect::<Vec<_>>());
        }
    }

    #[test]
    fn emit_error_stops_the_run() {
        let jobs: Vec<u32> = (0..10).collect();
        let mut count = 0;
        let r = run_ordered(&jobs, 2, |&j| j, |i, _| {
            count += 1;
            if i == 3 {
                Err("stop")
            } else {
                Ok(())
            }
        });
        assert_eq!((r, count), (Err("stop"), 4));
    }

    #[test]
    fn empty_job_list() {
        let jobs: Vec<u32> = vec![];
        run_ordered(&jobs, 4, |&j| j, |_, _| Err::<(), _>(())).unwrap();
    }
}
