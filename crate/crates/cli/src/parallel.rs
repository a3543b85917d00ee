//! Worker pool for grid scans and ensembles. Work is split into contiguous
//! chunks and results are concatenated in input order, so output never
//! depends on the worker count.

use std::thread;

use diffpass_core::conditions::{assemble_report, evaluate_point, Condition, ConditionReport, SampleGrid};
use diffpass_core::model::ControlAffineSystem;
use diffpass_core::simulate::{integrate_prolonged, Horizon, Signal, Trajectory};
use diffpass_core::storage::QuadraticStorage;

use crate::error::CliError;

pub const THREADS_ENV: &str = "DIFFPASS_THREADS";

/// Worker count from `DIFFPASS_THREADS` (unset or `0` means one per
/// available core).
pub fn worker_count() -> Result<usize, CliError> {
    let auto = || thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(auto()),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) => Ok(auto()),
            Ok(n) => Ok(n),
            Err(_) => Err(CliError::Usage(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`"))),
        },
    }
}

/// `items.iter().map(f)` on up to `workers` threads, in input order.
pub fn map_ordered<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Same report as a sequential scan, evaluated in parallel chunks.
pub fn scan(cond: &dyn Condition, grid: &SampleGrid, tol: f64, workers: usize) -> ConditionReport {
    let points: Vec<Vec<f64>> = grid.points().collect();
    let results = map_ordered(&points, workers, |x| evaluate_point(cond, x, grid.u_samples()));
    assemble_report(cond, grid, tol, points.into_iter().zip(results).collect())
}

/// Prolonged trajectories from several initial states under shared inputs.
#[allow(clippy::too_many_arguments)]
pub fn prolonged_members(
    sys: &ControlAffineSystem,
    x0_list: &[Vec<f64>],
    dx0: &[f64],
    u: &dyn Signal,
    du: &dyn Signal,
    st: &QuadraticStorage,
    horizon: Horizon,
    workers: usize,
) -> Vec<diffpass_core::Result<Trajectory>> {
    map_ordered(x0_list, workers, |x0| integrate_prolonged(sys, x0, dx0, u, du, st, horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use diffpass_core::conditions::{scan_region, MetricContraction};
    use diffpass_core::examples::{oscillator, OscillatorVariant};

    #[test]
    fn order_is_preserved() {
        let items: Vec<usize> = (0..1000).collect();
        for w in [1, 2, 3, 7, 64, 5000] {
            assert_eq!(map_ordered(&items, w, |i| i * 2), items.iter().map(|i| i * 2).collect::<Vec<_>>());
        }
        assert!(map_ordered(&Vec::<u8>::new(), 4, |v| *v).is_empty());
    }

    #[test]
    fn parallel_scan_matches_sequential() {
        let o = oscillator(OscillatorVariant::A);
        let cond = MetricContraction {
            system: o.system,
            storage: o.storage,
        };
        let grid = SampleGrid::interval(-3.1, 3.1, 1001).unwrap();
        let seq = scan_region(&cond, &grid, 1e-9);
        for w in [1, 3, 8] {
            let par = scan(&cond, &grid, 1e-9, w);
            assert_eq!(par.margins, seq.margins);
            assert_eq!(par.worst_point, seq.worst_point);
            assert_eq!(par.verdict, seq.verdict);
        }
    }
}
