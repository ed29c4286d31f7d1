//! Truck-only TSP tours and the gap statistic of the drone-assisted mode.

use std::thread;

use thiserror::Error;

use crate::grasp::{run_with, GraspConfig, GraspError};
use crate::model::{Instance, Point, RunReport, TimeMatrices, Variant};

/// Largest point count solved exactly by dynamic programming.
pub const EXACT_TSP_LIMIT: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct TspResult {
    /// Visiting order starting at point 0; the return leg is implicit.
    pub tour: Vec<usize>,
    /// Closed tour time (hours).
    pub objective: f64,
    /// `false` when the heuristic was used.
    pub exact: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("gap undefined for a TSP objective of {0}")]
    NonPositiveTsp(f64),
    #[error(transparent)]
    Grasp(#[from] GraspError),
}

/// Held-Karp table over the points `1..n` with point 0 as the fixed start.
///
/// `cost(mask, j)` is the cheapest path from 0 through exactly the points in
/// `mask` (bit `j-1` for point `j`) ending at `j`.
pub struct HeldKarp {
    n: usize,
    dp: Vec<f64>,
    parent: Vec<u8>,
}

impl HeldKarp {
    pub fn new(n: usize, t: impl Fn(usize, usize) -> f64) -> Self {
        assert!((1..=24).contains(&n), "Held-Karp size out of range");
        let k = n - 1;
        let states = 1usize << k;
        let mut dp = vec![f64::INFINITY; states * k.max(1)];
        let mut parent = vec![u8::MAX; states * k.max(1)];
        for j in 0..k {
            dp[(1 << j) * k + j] = t(0, j + 1);
        }
        for mask in 1..states {
            for j in 0..k {
                if mask & (1 << j) == 0 {
                    continue;
                }
                let here = dp[mask * k + j];
                if !here.is_finite() {
                    continue;
                }
                for nx in 0..k {
                    if mask & (1 << nx) != 0 {
                        continue;
                    }
                    let next = mask | (1 << nx);
                    let c = here + t(j + 1, nx + 1);
                    if c < dp[next * k + nx] {
                        dp[next * k + nx] = c;
                        parent[next * k + nx] = j as u8;
                    }
                }
            }
        }
        HeldKarp { n, dp, parent }
    }

    /// Cheapest closed tour through 0 and the points in `mask`, as
    /// (time, visiting order starting at 0).
    pub fn closed_tour(&self, mask: usize, t: impl Fn(usize, usize) -> f64) -> (f64, Vec<usize>) {
        let k = self.n - 1;
        if mask == 0 {
            return (0.0, vec![0]);
        }
        let mut best = (f64::INFINITY, usize::MAX);
        for j in 0..k {
            if mask & (1 << j) != 0 {
                let c = self.dp[mask * k + j] + t(j + 1, 0);
                if c < best.0 {
                    best = (c, j);
                }
            }
        }
        let mut order = Vec::new();
        let (mut m, mut j) = (mask, best.1);
        loop {
            order.push(j + 1);
            let p = self.parent[m * k + j];
            m &= !(1 << j);
            if p == u8::MAX {
                break;
            }
            j = p as usize;
        }
        order.push(0);
        order.reverse();
        (best.0, order)
    }
}

fn tour_time(tour: &[usize], t: &dyn Fn(usize, usize) -> f64) -> f64 {
    let len = tour.len();
    (0..len).map(|p| t(tour[p], tour[(p + 1) % len])).sum()
}

fn nearest_neighbour(n: usize, t: &dyn Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut used = vec![false; n];
    let mut tour = vec![0];
    used[0] = true;
    for _ in 1..n {
        let last = *tour.last().expect("nonempty");
        let next = (0..n)
            .filter(|&j| !used[j])
            .min_by(|&a, &b| t(last, a).total_cmp(&t(last, b)))
            .expect("unused point left");
        used[next] = true;
        tour.push(next);
    }
    tour
}

fn two_opt_pass(tour: &mut [usize], t: &dyn Fn(usize, usize) -> f64) -> bool {
    let len = tour.len();
    for i in 1..len {
        for j in i + 1..len {
            let (a, b) = (tour[i - 1], tour[i]);
            let (c, d) = (tour[j], tour[(j + 1) % len]);
            if t(a, c) + t(b, d) - t(a, b) - t(c, d) < -1e-12 {
                tour[i..=j].reverse();
                return true;
            }
        }
    }
    false
}

fn or_opt_pass(tour: &mut Vec<usize>, t: &dyn Fn(usize, usize) -> f64) -> bool {
    let len = tour.len();
    for seg in 1..=3usize {
        for i in 1..len {
            if i + seg > len {
                break;
            }
            let (prev, first, last) = (tour[i - 1], tour[i], tour[i + seg - 1]);
            let next = tour[(i + seg) % len];
            let gain = t(prev, first) + t(last, next) - t(prev, next);
            let rest: Vec<usize> = tour[..i].iter().chain(&tour[i + seg..]).copied().collect();
            for p in 0..rest.len() {
                let (a, b) = (rest[p], rest[(p + 1) % rest.len()]);
                if a == prev && b == next {
                    continue;
                }
                let fwd = t(a, first) + t(last, b) - t(a, b);
                let rev = t(a, last) + t(first, b) - t(a, b);
                let (add, reversed) = if rev < fwd { (rev, true) } else { (fwd, false) };
                if add - gain < -1e-12 {
                    let mut block: Vec<usize> = tour[i..i + seg].to_vec();
                    if reversed {
                        block.reverse();
                    }
                    let mut out = rest[..=p].to_vec();
                    out.extend(block);
                    out.extend(&rest[p + 1..]);
                    *tour = out;
                    return true;
                }
            }
        }
    }
    false
}

/// Truck-only tour over all points (Manhattan metric), starting at point 0.
pub fn solve_tsp(points: &[Point], truck_speed: f64) -> TspResult {
    assert!(!points.is_empty(), "TSP needs at least one point");
    let t = |a: usize, b: usize| points[a].manhattan(&points[b]) / truck_speed;
    let n = points.len();
    if n <= EXACT_TSP_LIMIT {
        let hk = HeldKarp::new(n, t);
        let (objective, tour) = hk.closed_tour((1 << (n - 1)) - 1, t);
        return TspResult {
            tour,
            objective,
            exact: true,
        };
    }
    let mut tour = nearest_neighbour(n, &t);
    loop {
        if two_opt_pass(&mut tour, &t) {
            continue;
        }
        if or_opt_pass(&mut tour, &t) {
            continue;
        }
        break;
    }
    TspResult {
        objective: tour_time(&tour, &t),
        tour,
        exact: false,
    }
}

/// `100 (tsp - obj) / tsp`; negative when the drone mode is slower.
pub fn gap_percent(tsp: f64, obj: f64) -> Result<f64, BaselineError> {
    if !(tsp > 0.0) {
        return Err(BaselineError::NonPositiveTsp(tsp));
    }
    Ok(100.0 * (tsp - obj) / tsp)
}

/// Runs the truck-only tour once and multi-trip GRASP for every
/// (drone speed, fleet size) pair; one report row per pair.
pub fn compare_mode(
    inst: &Instance,
    speeds: &[f64],
    fleet_sizes: &[usize],
    cfg: &GraspConfig,
) -> Result<Vec<RunReport>, BaselineError> {
    let tsp = solve_tsp(&inst.truck_nodes, inst.truck_speed);
    let cells: Vec<(f64, usize)> = speeds
        .iter()
        .flat_map(|&s| fleet_sizes.iter().map(move |&u| (s, u)))
        .collect();
    let cfg = GraspConfig {
        variant: Variant::MultiTrip,
        threads: 1,
        ..cfg.clone()
    };
    let results: Vec<Result<RunReport, BaselineError>> = thread::scope(|scope| {
        let handles: Vec<_> = cells
            .iter()
            .map(|&(speed, u)| {
                let cfg = &cfg;
                let tsp = &tsp;
                scope.spawn(move || {
                    let row = inst.with_drone_speed(speed).with_drones(u);
                    let mats = TimeMatrices::new(&row);
                    let out = run_with(&row, &mats, cfg)?;
                    let mut report = out.report;
                    report.tsp_objective = Some(tsp.objective);
                    report.tsp_exact = Some(tsp.exact);
                    report.gap = Some(gap_percent(tsp.objective, report.objective)?);
                    Ok(report)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("row worker panicked")).collect()
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(raw: &[(f64, f64)]) -> Vec<Point> {
        raw.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn square_perimeter() {
        let d = 10.0;
        let r = solve_tsp(&pts(&[(0.0, 0.0), (d, d), (d, 0.0), (0.0, d)]), 40.0);
        assert!((r.objective - 4.0 * d / 40.0).abs() < 1e-12);
        assert!(r.exact);
        assert_eq!(r.tour.len(), 4);
    }

    #[test]
    fn single_point() {
        let r = solve_tsp(&pts(&[(3.0, 3.0)]), 40.0);
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.tour, vec![0]);
    }

    #[test]
    fn heuristic_handles_large_inputs() {
        let raw: Vec<(f64, f64)> = (0..30).map(|i| ((i * 7 % 13) as f64, (i * 5 % 11) as f64)).collect();
        let p = pts(&raw);
        let r = solve_tsp(&p, 40.0);
        assert!(!r.exact);
        let mut seen = r.tour.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..30).collect::<Vec<_>>());
        let t = |a: usize, b: usize| p[a].manhattan(&p[b]) / 40.0;
        assert!((tour_time(&r.tour, &t) - r.objective).abs() < 1e-12);
    }

    #[test]
    fn gap_values() {
        assert!((gap_percent(7.2, 6.702).unwrap() - 6.9167).abs() < 1e-3);
        assert_eq!(gap_percent(5.0, 5.0).unwrap(), 0.0);
        assert!((gap_percent(9.4, 9.55).unwrap() + 1.5957).abs() < 1e-3);
        assert!(gap_percent(0.0, 1.0).is_err());
    }
}
