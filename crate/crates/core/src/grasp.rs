//! Multi-start GRASP: construct, improve, keep the best.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::construct::construct_solution;
use crate::localsearch::{local_search_traced, Move, Operator};
use crate::model::{evaluate, Instance, RunReport, Solution, TimeMatrices, Variant};

pub const DEFAULT_ITERATIONS: usize = 5000;
/// Iteration budget used for the truck-only comparison runs.
pub const COMPARISON_ITERATIONS: usize = 50_000;

#[derive(Clone, Debug, PartialEq)]
pub struct GraspConfig {
    pub n_max: usize,
    pub seed: u64,
    pub variant: Variant,
    pub time_limit: Option<Duration>,
    pub threads: usize,
}

impl GraspConfig {
    pub fn new(variant: Variant, seed: u64) -> Self {
        GraspConfig {
            n_max: DEFAULT_ITERATIONS,
            seed,
            variant,
            time_limit: None,
            threads: 1,
        }
    }

    pub fn iterations(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }

    pub fn threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraspError {
    #[error("n_max must be at least 1")]
    NoIterations,
    #[error("threads must be at least 1")]
    NoThreads,
    #[error("all {failed} constructions failed; no solution found")]
    NoSolution { failed: usize },
}

#[derive(Clone, Debug)]
pub struct GraspOutcome {
    pub best: Solution,
    pub report: RunReport,
}

#[derive(Clone, Debug, Default)]
struct WorkerResult {
    best: Option<Solution>,
    iterations: usize,
    failed: usize,
}

/// Seed of worker `w` derived from the master seed (splitmix64 finalizer).
pub fn worker_seed(master: u64, w: usize) -> u64 {
    let mut z = master ^ (w as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Callback receiving (iteration, operator, accepted move, delta).
pub type Trace<'t> = &'t mut dyn FnMut(usize, Operator, &Move, f64);

/// One construct + local search step; `None` when construction fails.
pub fn iterate(inst: &Instance, mats: &TimeMatrices, variant: Variant, rng: &mut ChaCha8Rng) -> Option<Solution> {
    iterate_traced(inst, mats, variant, rng, &mut |_, _, _| {})
}

fn iterate_traced(
    inst: &Instance,
    mats: &TimeMatrices,
    variant: Variant,
    rng: &mut ChaCha8Rng,
    trace: &mut dyn FnMut(Operator, &Move, f64),
) -> Option<Solution> {
    let start = construct_solution(inst, mats, variant, rng).ok()?;
    Some(local_search_traced(&start, inst, mats, trace))
}

fn better(candidate: &Solution, incumbent: &Solution) -> bool {
    candidate.objective < incumbent.objective
        || (candidate.objective == incumbent.objective && candidate.tie_break_key() < incumbent.tie_break_key())
}

fn worker(
    inst: &Instance,
    mats: &TimeMatrices,
    variant: Variant,
    seed: u64,
    budget: usize,
    deadline: Option<Instant>,
    trace: Option<Trace<'_>>,
) -> WorkerResult {
    let mut trace = trace;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = WorkerResult::default();
    for _ in 0..budget {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        out.iterations += 1;
        let it = out.iterations;
        let step = match trace.as_mut() {
            Some(f) => iterate_traced(inst, mats, variant, &mut rng, &mut |op, mv, d| f(it, op, mv, d)),
            None => iterate(inst, mats, variant, &mut rng),
        };
        match step {
            None => out.failed += 1,
            Some(sol) => {
                if out.best.as_ref().is_none_or(|b| sol.objective < b.objective) {
                    out.best = Some(sol);
                }
            }
        }
    }
    out
}

/// Runs the GRASP loop on `inst` (its `num_drones` is the fleet size).
pub fn run(inst: &Instance, cfg: &GraspConfig) -> Result<GraspOutcome, GraspError> {
    let mats = TimeMatrices::new(inst);
    run_with(inst, &mats, cfg)
}

pub fn run_with(inst: &Instance, mats: &TimeMatrices, cfg: &GraspConfig) -> Result<GraspOutcome, GraspError> {
    run_inner(inst, mats, cfg, None)
}

/// Single-worker run reporting every accepted local-search move.
pub fn run_traced(
    inst: &Instance,
    mats: &TimeMatrices,
    cfg: &GraspConfig,
    trace: Trace<'_>,
) -> Result<GraspOutcome, GraspError> {
    let cfg = GraspConfig { threads: 1, ..cfg.clone() };
    run_inner(inst, mats, &cfg, Some(trace))
}

fn run_inner(
    inst: &Instance,
    mats: &TimeMatrices,
    cfg: &GraspConfig,
    trace: Option<Trace<'_>>,
) -> Result<GraspOutcome, GraspError> {
    if cfg.n_max == 0 {
        return Err(GraspError::NoIterations);
    }
    if cfg.threads == 0 {
        return Err(GraspError::NoThreads);
    }
    let started = Instant::now();
    let deadline = cfg.time_limit.map(|t| started + t);

    let results: Vec<WorkerResult> = if cfg.threads == 1 {
        vec![worker(inst, mats, cfg.variant, cfg.seed, cfg.n_max, deadline, trace)]
    } else {
        let threads = cfg.threads.min(cfg.n_max);
        let base = cfg.n_max / threads;
        let extra = cfg.n_max % threads;
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|w| {
                    let budget = base + usize::from(w < extra);
                    let seed = worker_seed(cfg.seed, w);
                    scope.spawn(move || worker(inst, mats, cfg.variant, seed, budget, deadline, None))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    };

    let iterations = results.iter().map(|r| r.iterations).sum();
    let failed = results.iter().map(|r| r.failed).sum();
    let mut best: Option<Solution> = None;
    for sol in results.into_iter().filter_map(|r| r.best) {
        if best.as_ref().is_none_or(|b| better(&sol, b)) {
            best = Some(sol);
        }
    }
    let best = best.ok_or(GraspError::NoSolution { failed })?;
    let eval = evaluate(&best, inst, mats).expect("GRASP keeps feasible solutions");
    let mut report = RunReport::new(inst, &best, &eval);
    report.iterations = iterations;
    report.failed_iterations = failed;
    report.wall_time = started.elapsed().as_secs_f64();
    Ok(GraspOutcome { best, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instancegen::{generate, GenConfig};

    fn tiny(seed: u64) -> Instance {
        generate(&GenConfig::new(20.0, 4, 5, seed)).unwrap()
    }

    #[test]
    fn one_iteration_is_construct_plus_local_search() {
        let inst = tiny(3);
        let mats = TimeMatrices::new(&inst);
        let out = run(&inst, &GraspConfig::new(Variant::MultiTrip, 9).iterations(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let direct = iterate(&inst, &mats, Variant::MultiTrip, &mut rng).unwrap();
        assert_eq!(out.best, direct);
        assert_eq!(out.report.iterations, 1);
    }

    #[test]
    fn best_is_non_increasing_in_iterations() {
        let inst = tiny(5);
        let mut last = f64::INFINITY;
        for n in [1, 5, 20, 80] {
            let out = run(&inst, &GraspConfig::new(Variant::SingleTrip, 1).iterations(n)).unwrap();
            assert!(out.best.objective <= last + 1e-12);
            last = out.best.objective;
        }
    }

    #[test]
    fn report_matches_fresh_evaluation() {
        let inst = tiny(8);
        let mats = TimeMatrices::new(&inst);
        let out = run(&inst, &GraspConfig::new(Variant::MultiTrip, 2).iterations(30).threads(3)).unwrap();
        let eval = evaluate(&out.best, &inst, &mats).unwrap();
        assert!((out.report.objective - eval.objective).abs() < 1e-9);
        assert!((out.report.objective - out.report.wait_time - out.report.travel_time).abs() < 1e-9);
        assert_eq!(out.report.iterations, 30);
    }

    #[test]
    fn every_iteration_failing_is_an_error() {
        // three customers reachable only from one node, one single-trip drone
        let mut inst = tiny(1);
        inst.truck_nodes = vec![crate::model::Point::new(0.0, 0.0), crate::model::Point::new(10.0, 10.0)];
        inst.customers = vec![crate::model::Point::new(10.0, 11.0); 3];
        inst.num_drones = 1;
        let err = run(&inst, &GraspConfig::new(Variant::SingleTrip, 0).iterations(4)).unwrap_err();
        assert_eq!(err, GraspError::NoSolution { failed: 4 });
    }

    #[test]
    fn worker_seeds_differ() {
        let seeds: Vec<u64> = (0..8).map(|w| worker_seed(42, w)).collect();
        for a in 0..8 {
            for b in a + 1..8 {
                assert_ne!(seeds[a], seeds[b]);
            }
        }
    }
}
