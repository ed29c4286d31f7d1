//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use twoecho::instancegen::{compute_u_min, generate, GenConfig};
use twoecho::{Instance, Point, TimeMatrices, Variant};

pub fn truck_time(inst: &Instance, a: usize, b: usize) -> f64 {
    inst.truck_nodes[a].manhattan(&inst.truck_nodes[b]) / inst.truck_speed
}

pub fn round_trip(inst: &Instance, i: usize, k: usize) -> f64 {
    2.0 * inst.truck_nodes[i].euclidean(&inst.customers[k]) / inst.drone_speed
}

pub fn reachable(inst: &Instance, i: usize, k: usize) -> bool {
    i != 0 && round_trip(inst, i, k) <= inst.endurance + 1e-9
}

pub fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(p);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Shortest closed tour from 0 through `nodes`, by trying every order.
pub fn brute_tour(inst: &Instance, nodes: &[usize]) -> f64 {
    permutations(nodes)
        .into_iter()
        .map(|order| {
            let mut stops = vec![0];
            stops.extend(order);
            stops.push(0);
            stops.windows(2).map(|w| truck_time(inst, w[0], w[1])).sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Smallest maximum drone load over every labelling of trips with drones.
pub fn brute_packing(trips: &[f64], drones: usize) -> f64 {
    let c = trips.len();
    let total = drones.pow(c as u32);
    let mut best = f64::INFINITY;
    for code in 0..total {
        let mut loads = vec![0.0; drones];
        let mut x = code;
        for t in trips {
            loads[x % drones] += t;
            x /= drones;
        }
        best = best.min(loads.into_iter().fold(0.0, f64::max));
    }
    best
}

/// Optimum over subsets x tour orders x assignments x packings.
pub fn brute_force_optimum(inst: &Instance, variant: Variant) -> Option<f64> {
    let n = inst.truck_nodes.len();
    let m = inst.customers.len();
    let u = inst.num_drones;
    let mut packing_memo: HashMap<(usize, Vec<usize>), f64> = HashMap::new();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << (n - 1)) {
        let nodes: Vec<usize> = (1..n).filter(|&i| mask & (1 << (i - 1)) != 0).collect();
        if m == 0 && !nodes.is_empty() {
            continue;
        }
        let tour = brute_tour(inst, &nodes);
        // every assignment of customers to nodes of the subset
        let mut choice = vec![0usize; m];
        let options: Vec<Vec<usize>> = (0..m)
            .map(|k| nodes.iter().copied().filter(|&i| reachable(inst, i, k)).collect())
            .collect();
        if options.iter().any(|o| o.is_empty()) {
            continue;
        }
        loop {
            let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
            for k in 0..m {
                groups.entry(options[k][choice[k]]).or_default().push(k);
            }
            if groups.len() == nodes.len() {
                let mut wait = 0.0;
                let mut ok = true;
                for (&i, members) in &groups {
                    let trips: Vec<f64> = members.iter().map(|&k| round_trip(inst, i, k)).collect();
                    wait += match variant {
                        Variant::SingleTrip => {
                            if members.len() > u {
                                ok = false;
                                break;
                            }
                            trips.iter().copied().fold(0.0, f64::max)
                        }
                        Variant::MultiTrip => *packing_memo
                            .entry((i, members.clone()))
                            .or_insert_with(|| brute_packing(&trips, u)),
                    };
                }
                if ok {
                    best = best.min(tour + wait);
                }
            }
            // odometer increment
            let mut p = 0;
            loop {
                if p == m {
                    break;
                }
                choice[p] += 1;
                if choice[p] < options[p].len() {
                    break;
                }
                choice[p] = 0;
                p += 1;
            }
            if p == m {
                break;
            }
        }
    }
    best.is_finite().then_some(best)
}

/// Smallest capacity admitting an assignment, by trying every assignment.
pub fn brute_u_min(reach: &[Vec<usize>], n: usize) -> usize {
    let m = reach.len();
    (1..=m.max(1))
        .find(|&u| brute_feasible(reach, n, u))
        .expect("capacity m always suffices")
}

pub fn brute_feasible(reach: &[Vec<usize>], n: usize, u: usize) -> bool {
    fn go(k: usize, reach: &[Vec<usize>], load: &mut [usize], u: usize) -> bool {
        if k == reach.len() {
            return true;
        }
        for &i in &reach[k] {
            if load[i] < u {
                load[i] += 1;
                if go(k + 1, reach, load, u) {
                    return true;
                }
                load[i] -= 1;
            }
        }
        false
    }
    go(0, reach, &mut vec![0; n], u)
}

/// Tiny instance `idx` of the shared suite: at most 5 truck nodes, 6
/// customers, 1 to 3 drones, always feasible for single trips.
pub fn tiny_instance(idx: usize) -> Instance {
    let u = 1 + idx % 3;
    let n = 3 + (idx / 3) % 3;
    let m = (2 + idx % 5).min((n - 1) * u).min(6);
    let mut seed = 1000 + idx as u64 * 7919;
    loop {
        let mut cfg = GenConfig::new(14.0, n, m, seed);
        cfg.num_drones = Some(u);
        let inst = generate(&cfg).expect("tiny instances generate");
        let need = compute_u_min(&TimeMatrices::new(&inst)).expect("reachable").u;
        if need <= u {
            return inst;
        }
        seed += 1;
    }
}

pub fn instance_from(truck: &[(f64, f64)], cust: &[(f64, f64)], u: usize, drone_speed: f64) -> Instance {
    Instance {
        name: "fixture".into(),
        d: 30.0,
        truck_speed: 40.0,
        drone_speed,
        endurance: 0.5,
        num_drones: u,
        truck_nodes: truck.iter().map(|&(x, y)| Point::new(x, y)).collect(),
        customers: cust.iter().map(|&(x, y)| Point::new(x, y)).collect(),
        generator: None,
    }
}
