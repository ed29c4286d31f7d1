//! Greedy randomized cheapest-insertion construction.
//!
//! Each round picks one unserviced customer through three nested roulette
//! draws: an insertion arc for every unvisited truck node, a serving node for
//! every unserviced customer, and finally the customer itself.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::model::{Instance, Solution, TimeMatrices, Variant, DEPOT};

/// Added to every roulette cost so zero-cost candidates stay finite.
pub const ROULETTE_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CandidateKind {
    /// Insert `node` right after tour position `after`.
    InsertTruckNode { node: usize, after: usize },
    AssignCustomer { customer: usize, node: usize, drone: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateOp {
    pub kind: CandidateKind,
    pub cost: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConstructError {
    #[error("no launch node with a free drone left for customer {customer}")]
    NoFreeDrone { customer: usize },
}

/// Selection probabilities, proportional to `1 / (cost + eps)`.
pub fn roulette_probabilities(costs: &[f64]) -> Vec<f64> {
    let weights: Vec<f64> = costs.iter().map(|&c| 1.0 / (c.max(0.0) + ROULETTE_EPS)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Draws an index with probability proportional to inverse cost.
///
/// Panics on an empty slice.
pub fn roulette_index<R: Rng + ?Sized>(costs: &[f64], rng: &mut R) -> usize {
    assert!(!costs.is_empty(), "roulette over an empty candidate list");
    if costs.len() == 1 {
        return 0;
    }
    let total: f64 = costs.iter().map(|&c| 1.0 / (c.max(0.0) + ROULETTE_EPS)).sum();
    let mut target = rng.gen::<f64>() * total;
    for (i, &c) in costs.iter().enumerate() {
        target -= 1.0 / (c.max(0.0) + ROULETTE_EPS);
        if target < 0.0 {
            return i;
        }
    }
    costs.len() - 1
}

pub fn roulette_pick<'a, R: Rng + ?Sized>(candidates: &'a [CandidateOp], rng: &mut R) -> &'a CandidateOp {
    let costs: Vec<f64> = candidates.iter().map(|c| c.cost).collect();
    &candidates[roulette_index(&costs, rng)]
}

/// Extra truck time for visiting `node` between `from` and `to`.
pub fn truck_insertion_cost(mats: &TimeMatrices, node: usize, from: usize, to: usize) -> f64 {
    mats.truck(from, node) + mats.truck(node, to) - mats.truck(from, to)
}

/// Wait increase at the serving node, plus its insertion cost when the node
/// is not yet on the tour.
pub fn assignment_cost(wait_before: f64, wait_after: f64, insertion: Option<f64>) -> f64 {
    (wait_after - wait_before) + insertion.unwrap_or(0.0)
}

struct Builder<'a> {
    mats: &'a TimeMatrices,
    variant: Variant,
    u: usize,
    tour: Vec<usize>,
    visited: Vec<bool>,
    count: Vec<usize>,
    // single trip: current longest trip per node
    longest: Vec<f64>,
    // multi trip: per node per drone flying time, flattened
    loads: Vec<f64>,
    // (position, cost) of the roulette-chosen insertion per unvisited node
    insertion: Vec<Option<(usize, f64)>>,
    tour_dirty: bool,
}

impl<'a> Builder<'a> {
    fn new(inst: &Instance, mats: &'a TimeMatrices, variant: Variant) -> Self {
        let n = inst.num_truck_nodes();
        let u = inst.num_drones;
        let mut visited = vec![false; n];
        visited[DEPOT] = true;
        Builder {
            mats,
            variant,
            u,
            tour: vec![DEPOT],
            visited,
            count: vec![0; n],
            longest: vec![0.0; n],
            loads: vec![0.0; n * u],
            insertion: vec![None; n],
            tour_dirty: true,
        }
    }

    fn least_loaded(&self, i: usize) -> usize {
        let row = &self.loads[i * self.u..(i + 1) * self.u];
        let mut best = 0;
        for l in 1..self.u {
            if row[l] < row[best] {
                best = l;
            }
        }
        best
    }

    fn wait(&self, i: usize) -> f64 {
        match self.variant {
            Variant::SingleTrip => self.longest[i],
            Variant::MultiTrip => self.loads[i * self.u..(i + 1) * self.u]
                .iter()
                .copied()
                .fold(0.0, f64::max),
        }
    }

    /// Step 1: roulette an insertion arc for every unvisited node still useful.
    fn refresh_insertions<R: Rng + ?Sized>(&mut self, pending: &[usize], rng: &mut R) {
        let n = self.visited.len();
        let mut useful = vec![false; n];
        for &k in pending {
            for &i in self.mats.launch_sites(k) {
                useful[i] = true;
            }
        }
        let len = self.tour.len();
        let mut costs = Vec::with_capacity(len);
        for j in 0..n {
            self.insertion[j] = None;
            if self.visited[j] || !useful[j] {
                continue;
            }
            costs.clear();
            for p in 0..len {
                let to = self.tour[(p + 1) % len];
                costs.push(truck_insertion_cost(self.mats, j, self.tour[p], to).max(0.0));
            }
            let p = roulette_index(&costs, rng);
            self.insertion[j] = Some((p, costs[p]));
        }
        self.tour_dirty = false;
    }

    /// Step 2 for one customer: every admissible serving node with its cost.
    fn assignment_candidates(&self, k: usize, out: &mut Vec<CandidateOp>) {
        out.clear();
        for &i in self.mats.launch_sites(k) {
            let trip = self.mats.round_trip(i, k);
            let before = self.wait(i);
            let (after, drone) = match self.variant {
                Variant::SingleTrip => {
                    if self.count[i] >= self.u {
                        continue;
                    }
                    (before.max(trip), self.count[i])
                }
                Variant::MultiTrip => {
                    let l = self.least_loaded(i);
                    (before.max(self.loads[i * self.u + l] + trip), l)
                }
            };
            let insertion = if self.visited[i] {
                None
            } else {
                Some(self.insertion[i].expect("insertion cached for useful node").1)
            };
            out.push(CandidateOp {
                kind: CandidateKind::AssignCustomer {
                    customer: k,
                    node: i,
                    drone,
                },
                cost: assignment_cost(before, after, insertion),
            });
        }
    }

    fn commit(&mut self, customer: usize, node: usize, drone: usize) {
        if !self.visited[node] {
            let (p, _) = self.insertion[node].expect("insertion cached");
            self.tour.insert(p + 1, node);
            self.visited[node] = true;
            self.tour_dirty = true;
        }
        let trip = self.mats.round_trip(node, customer);
        self.count[node] += 1;
        match self.variant {
            Variant::SingleTrip => self.longest[node] = self.longest[node].max(trip),
            Variant::MultiTrip => self.loads[node * self.u + drone] += trip,
        }
    }
}

/// Builds one randomized feasible solution.
pub fn construct_solution<R: Rng + ?Sized>(
    inst: &Instance,
    mats: &TimeMatrices,
    variant: Variant,
    rng: &mut R,
) -> Result<Solution, ConstructError> {
    let mut b = Builder::new(inst, mats, variant);
    let mut pending: Vec<usize> = (0..inst.num_customers()).collect();
    let mut assign = BTreeMap::new();
    let mut drones = BTreeMap::new();
    let mut per_customer: Vec<CandidateOp> = Vec::with_capacity(pending.len());
    let mut options = Vec::new();

    while !pending.is_empty() {
        if b.tour_dirty {
            b.refresh_insertions(&pending, rng);
        }
        per_customer.clear();
        for &k in &pending {
            b.assignment_candidates(k, &mut options);
            if options.is_empty() {
                return Err(ConstructError::NoFreeDrone { customer: k });
            }
            per_customer.push(*roulette_pick(&options, rng));
        }
        let chosen = roulette_index(&per_customer.iter().map(|c| c.cost).collect::<Vec<_>>(), rng);
        let CandidateKind::AssignCustomer {
            customer,
            node,
            drone,
        } = per_customer[chosen].kind
        else {
            unreachable!("step 2 only yields assignments")
        };
        b.commit(customer, node, drone);
        assign.insert(customer, node);
        drones.insert(customer, drone);
        pending.remove(chosen);
    }

    let drone_of = match variant {
        Variant::SingleTrip => None,
        Variant::MultiTrip => Some(drones),
    };
    Ok(Solution::evaluated(inst, mats, variant, b.tour, assign, drone_of)
        .expect("construction keeps every invariant"))
}
