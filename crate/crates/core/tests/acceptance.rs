//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use twoecho::baseline::gap_percent;
use twoecho::construct::construct_solution;
use twoecho::exact::{count_constraints, export_milp, import_milp_solution, solve_exact, ExactLimits, MilpModel, MilpOptions};
use twoecho::grasp::{run_with, GraspConfig};
use twoecho::instancegen::{assignment_with_capacity, compute_u_min, generate, GenConfig};
use twoecho::localsearch::{local_search, Move, Operator, SearchState};
use twoecho::{check_feasibility, evaluate, Instance, Solution, TimeMatrices, Variant};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

const VARIANTS: [Variant; 2] = [Variant::SingleTrip, Variant::MultiTrip];

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let limits = ExactLimits::default();
    let (mut runs, mut matched) = (0, 0);
    for idx in 0..30 {
        let inst = tiny_instance(idx);
        let mats = TimeMatrices::new(&inst);
        for variant in VARIANTS {
            let oracle = brute_force_optimum(&inst, variant).ok_or(format!("instance {idx}: oracle found nothing"))?;
            let exact = solve_exact(&inst, &mats, variant, &limits).map_err(|e| e.to_string())?;
            ensure(
                (exact.solution.objective - oracle).abs() <= 1e-9,
                format!("instance {idx} {variant}: exact {} vs brute force {oracle}", exact.solution.objective),
            )?;
            let cfg = GraspConfig::new(variant, idx as u64);
            let g = run_with(&inst, &mats, &cfg).map_err(|e| e.to_string())?;
            ensure(
                g.best.objective >= oracle - 1e-9,
                format!("instance {idx} {variant}: GRASP {} beats optimum {oracle}", g.best.objective),
            )?;
            runs += 1;
            if g.best.objective <= oracle + 1e-9 {
                matched += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    ensure(matched * 10 >= runs * 9, format!("GRASP matched {matched}/{runs}"))?;
    ensure(elapsed < Duration::from_secs(300), format!("took {elapsed:?}"))?;
    Ok(format!("exact == brute force on {runs} runs; GRASP optimal on {matched}/{runs}; {elapsed:.1?}"))
}

fn delta_correctness() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut summary = Vec::new();
    for variant in VARIANTS {
        let ops = Operator::sequence(variant);
        let mut counts = vec![0usize; ops.len()];
        let mut attempts = 0;
        while counts.iter().any(|&c| c < 1000) {
            attempts += 1;
            ensure(attempts < 20_000, format!("{variant}: could not reach 1000 moves, counts {counts:?}"))?;
            let mut cfg = GenConfig::new(rng.gen_range(8.0..16.0), rng.gen_range(4..8), rng.gen_range(5..11), rng.gen());
            cfg.num_drones = Some(3);
            let Ok(inst) = generate(&cfg) else { continue };
            let mats = TimeMatrices::new(&inst);
            let Ok(start) = construct_solution(&inst, &mats, variant, &mut rng) else { continue };
            let mut state = SearchState::new(&inst, &mats, &start);
            let mut before = start.objective;
            for _ in 0..40 {
                for (slot, &op) in ops.iter().enumerate() {
                    if counts[slot] >= 1000 {
                        continue;
                    }
                    let mv: Option<Move> = if rng.gen_bool(0.5) {
                        state.find_first(op).map(|(mv, _)| mv)
                    } else {
                        let mut all = Vec::new();
                        state.scan(op, &mut |mv, _| {
                            all.push(*mv);
                            false
                        });
                        all.choose(&mut rng).copied()
                    };
                    let Some(mv) = mv else { continue };
                    let predicted = state.delta(&mv);
                    state.apply(&mv);
                    let after_sol = state.to_solution();
                    let after = evaluate(&after_sol, &inst, &mats).map_err(|e| format!("{op}: {e}"))?.objective;
                    let err = (after - before - predicted).abs();
                    worst = worst.max(err);
                    ensure(err <= 1e-9, format!("{variant} {op} {mv:?}: delta {predicted} vs {}", after - before))?;
                    ensure(state.cache_is_coherent(), format!("{variant} {op}: stale cache after {mv:?}"))?;
                    before = after;
                    counts[slot] += 1;
                }
            }
        }
        summary.push(format!("{variant}: {} ops x >=1000", ops.len()));
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("{}; max error {worst:.1e}; {elapsed:.1?}", summary.join(", ")))
}

fn feasibility_fuzzing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut runs, mut built, mut violations) = (0, 0, 0);
    let mut inst: Option<(Instance, TimeMatrices)> = None;
    while runs < 10_000 {
        if runs % 50 == 0 {
            let cfg = GenConfig::new(rng.gen_range(8.0..30.0), rng.gen_range(2..10), rng.gen_range(0..14), rng.gen());
            let extra = rng.gen_range(0..3);
            let Ok(mut g) = generate(&cfg) else { continue };
            g.num_drones += extra;
            let mats = TimeMatrices::new(&g);
            inst = Some((g, mats));
        }
        let (inst, mats) = inst.as_ref().expect("instance set");
        runs += 1;
        let variant = if rng.gen_bool(0.5) { Variant::SingleTrip } else { Variant::MultiTrip };
        let Ok(start) = construct_solution(inst, mats, variant, &mut rng) else {
            ensure(variant == Variant::SingleTrip, "multi-trip construction failed")?;
            continue;
        };
        built += 1;
        violations += check_feasibility(&start, inst, mats).len();
        let improved = local_search(&start, inst, mats);
        violations += check_feasibility(&improved, inst, mats).len();
        ensure(improved.objective <= start.objective + 1e-9, "local search worsened a solution")?;
    }
    ensure(violations == 0, format!("{violations} violations"))?;
    Ok(format!("{runs} runs, {built} constructed, 0 violations"))
}

fn published_row_arithmetic() -> Outcome {
    let text = include_str!("data/published_rows.csv");
    let mut rows = 0;
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let num = |i: usize| f[i].trim().parse::<f64>().map_err(|e| format!("{line}: {e}"));
        let (tsp, obj, td, tt, gap) = (num(4)?, num(6)?, num(7)?, num(8)?, num(9)?);
        ensure((obj - td - tt).abs() <= 0.001 + 1e-12, format!("{line}: Obj != T_d + T_t"))?;
        let g = gap_percent(tsp, obj).map_err(|e| e.to_string())?;
        ensure((g - gap).abs() <= 0.01, format!("{line}: gap {g:.4} vs {gap}"))?;
        rows += 1;
    }
    ensure(rows == 80, format!("{rows} rows"))?;
    Ok("80 rows: Obj = T_d + T_t and Gap reproduced (e.g. 7.163 = 0.363 + 6.800, 0.51%)".into())
}

fn monotonicity() -> Outcome {
    let limits = ExactLimits::default();
    let opt = |inst: &Instance, v: Variant| -> Result<f64, String> {
        let mats = TimeMatrices::new(inst);
        solve_exact(inst, &mats, v, &limits)
            .map(|r| r.solution.objective)
            .map_err(|e| e.to_string())
    };
    for idx in 0..30 {
        let inst = tiny_instance(idx);
        let fast = inst.with_drone_speed(80.0);
        let more = inst.with_drones(inst.num_drones + 1);
        for v in VARIANTS {
            let base = opt(&inst, v)?;
            ensure(opt(&more, v)? <= base + 1e-9, format!("instance {idx} {v}: more drones got slower"))?;
            ensure(opt(&fast, v)? <= base + 1e-9, format!("instance {idx} {v}: faster drones got slower"))?;
        }
        ensure(
            opt(&inst, Variant::MultiTrip)? <= opt(&inst, Variant::SingleTrip)? + 1e-9,
            format!("instance {idx}: multi-trip worse than single-trip"),
        )?;
    }
    Ok("30 instances: non-increasing in u and drone speed; multi <= single".into())
}

fn u_min_matches() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut done = 0;
    while done < 50 {
        let n = rng.gen_range(2..=5);
        let m = rng.gen_range(1..=6);
        let pts = |count: usize, rng: &mut ChaCha8Rng| -> Vec<(f64, f64)> {
            (0..count).map(|_| (rng.gen_range(0.0..25.0), rng.gen_range(0.0..25.0))).collect()
        };
        let mut inst = instance_from(&pts(n, &mut rng), &pts(m, &mut rng), 1, 40.0);
        inst.endurance = rng.gen_range(0.2..0.6);
        let mats = TimeMatrices::new(&inst);
        let reach: Vec<Vec<usize>> = (0..m).map(|k| (0..n).filter(|&i| reachable(&inst, i, k)).collect()).collect();
        if reach.iter().any(|r| r.is_empty()) {
            continue;
        }
        let expected = brute_u_min(&reach, n);
        let got = compute_u_min(&mats).map_err(|e| e.to_string())?;
        ensure(got.u == expected, format!("u_min {} vs brute force {expected} on {reach:?}", got.u))?;
        let mut load = vec![0; n];
        for (k, &i) in got.witness.iter().enumerate() {
            ensure(reach[k].contains(&i), "witness uses an unreachable node")?;
            load[i] += 1;
        }
        ensure(load.iter().all(|&l| l <= got.u), "witness exceeds u_min")?;
        if got.u > 1 {
            ensure(!brute_feasible(&reach, n, got.u - 1), "u_min - 1 is feasible")?;
            ensure(assignment_with_capacity(&mats, got.u - 1).is_none(), "matching accepts u_min - 1")?;
        }
        done += 1;
    }
    Ok("50 reachability structures agree with brute force".into())
}

fn lp_export() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..10 {
        let mut cfg = GenConfig::new(20.0, rng.gen_range(3..8), rng.gen_range(2..9), rng.gen());
        cfg.num_drones = Some(rng.gen_range(1..4));
        let inst = generate(&cfg).map_err(|e| e.to_string())?;
        let mats = TimeMatrices::new(&inst);
        let (n, m, u) = (inst.truck_nodes.len(), inst.customers.len(), inst.num_drones);
        // tallies from the geometry, independent of the library's W_i sets
        let sizes: Vec<usize> = (1..n).map(|i| (0..m).filter(|&k| reachable(&inst, i, k)).count()).collect();
        let sum_w: usize = sizes.iter().sum();
        let nonempty = sizes.iter().filter(|&&s| s > 0).count();
        let routing = 4 + 3 * (n - 1) + m + n + (n - 1) * (n - 1);
        let expected = [
            (MilpModel::Routing(Variant::SingleTrip), false, routing + sum_w + 2 * nonempty + sum_w),
            (MilpModel::Routing(Variant::SingleTrip), true, routing + sum_w + 2 * nonempty + nonempty),
            (MilpModel::Routing(Variant::MultiTrip), false, routing + u * sum_w + nonempty + u * nonempty),
            (MilpModel::UMin, false, m + nonempty),
        ];
        for (model, literal, count) in expected {
            let lp = export_milp(
                &inst,
                &mats,
                &MilpOptions {
                    model,
                    big_m: 100.0,
                    literal_wait_sum: literal,
                },
            );
            ensure(
                lp.constraints == count && count_constraints(&lp.text) == count,
                format!("case {case} {model:?}: writer {} / text {} vs formula {count}", lp.constraints, count_constraints(&lp.text)),
            )?;
        }
    }

    // m = 1: hand-written optimal values survive the import
    let inst = instance_from(&[(0.0, 0.0), (6.0, 2.0), (1.0, 9.0)], &[(4.0, 6.0)], 1, 40.0);
    let mats = TimeMatrices::new(&inst);
    let best = (1..3)
        .filter(|&i| reachable(&inst, i, 0))
        .min_by(|&a, &b| {
            let c = |i| 2.0 * truck_time(&inst, 0, i) + round_trip(&inst, i, 0);
            c(a).total_cmp(&c(b))
        })
        .ok_or("no reachable node")?;
    let closed = 2.0 * truck_time(&inst, 0, best) + round_trip(&inst, best, 0);
    for (variant, z) in [(Variant::SingleTrip, format!("z_{best}_0")), (Variant::MultiTrip, format!("z_0_{best}_0"))] {
        let values = format!("x_0_{best} = 1\nx_{best}_3 = 1\ny_{best} = 1\n{z} = 1\na_3 = {closed}\n");
        let sol = import_milp_solution(&values, &inst, &mats, variant).map_err(|e| e.to_string())?;
        let exact = solve_exact(&inst, &mats, variant, &ExactLimits::default()).map_err(|e| e.to_string())?;
        ensure((sol.objective - closed).abs() < 1e-9, "imported objective differs from closed form")?;
        ensure((sol.objective - exact.solution.objective).abs() < 1e-9, "imported objective differs from oracle")?;
    }
    Ok("10 instances x 4 models match the closed-form tally; m=1 import round-trips".into())
}

fn performance() -> Outcome {
    let inst = generate(&GenConfig::new(20.0, 20, 10, 8)).map_err(|e| e.to_string())?;
    let mats = TimeMatrices::new(&inst);
    let mut lines = Vec::new();
    for v in VARIANTS {
        let started = Instant::now();
        run_with(&inst, &mats, &GraspConfig::new(v, 1)).map_err(|e| e.to_string())?;
        let t = started.elapsed();
        ensure(t < Duration::from_secs(10), format!("{v}: {t:?}"))?;
        lines.push(format!("{v} {t:.2?}"));
    }
    Ok(format!("n_max 5000 on 20-20-10: {}", lines.join(", ")))
}

fn determinism() -> Outcome {
    let inst = generate(&GenConfig::new(20.0, 6, 12, 99)).map_err(|e| e.to_string())?;
    let mats = TimeMatrices::new(&inst);
    for v in VARIANTS {
        let cfg = GraspConfig::new(v, 4).iterations(500);
        let a = run_with(&inst, &mats, &cfg).map_err(|e| e.to_string())?.best.to_json();
        let b = run_with(&inst, &mats, &cfg).map_err(|e| e.to_string())?.best.to_json();
        ensure(a == b, format!("{v}: solution JSON differs between runs"))?;
        let back = Solution::from_json(&a).map_err(|e| e.to_string())?;
        ensure(back.to_json() == a, "solution JSON does not round-trip")?;
    }
    Ok("identical seeds give byte-identical solution JSON".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("delta correctness", delta_correctness),
        ("feasibility fuzzing", feasibility_fuzzing),
        ("published row arithmetic", published_row_arithmetic),
        ("monotonicity", monotonicity),
        ("u_min", u_min_matches),
        ("LP export", lp_export),
        ("performance smoke", performance),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("criterion {} ({name}): PASS - {detail}", n + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL - {why}", n + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
