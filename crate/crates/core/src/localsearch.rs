//! First-improvement local search with constant-time move evaluation.
//!
//! [`SearchState`] mirrors a [`Solution`] together with a [`DeltaCache`]:
//! per-node longest/second-longest trips for single-trip drones, per-drone
//! loads kept in sorted order for multi-trip drones, and the cheapest
//! insertion arc of every unvisited truck node. Every [`Move`] is priced from
//! those caches without touching the rest of the solution.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::model::{Instance, Solution, TimeMatrices, Variant, DEPOT, TIME_EPS};

/// Minimum objective decrease for a move to be accepted (hours).
pub const IMPROVEMENT_EPS: f64 = TIME_EPS;

const NOWHERE: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operator {
    RelocateTruckNode,
    SwapTruckNode,
    TwoOpt,
    SwapAssignment1,
    ReAssignment1,
    RelocateDroneAssignment1,
    SwapDroneAssignment1,
    RelocateDroneAssignment2,
    SwapDroneAssignment2,
    TriangleDroneAssignment,
    GreedyRepack,
    ReAssignment2,
    ZigzagAssignment,
}

const SINGLE_SEQUENCE: [Operator; 5] = [
    Operator::RelocateTruckNode,
    Operator::SwapTruckNode,
    Operator::TwoOpt,
    Operator::SwapAssignment1,
    Operator::ReAssignment1,
];

const MULTI_SEQUENCE: [Operator; 13] = [
    Operator::RelocateTruckNode,
    Operator::SwapTruckNode,
    Operator::TwoOpt,
    Operator::RelocateDroneAssignment1,
    Operator::SwapDroneAssignment1,
    Operator::RelocateDroneAssignment2,
    Operator::SwapDroneAssignment2,
    Operator::TriangleDroneAssignment,
    Operator::GreedyRepack,
    Operator::ReAssignment1,
    Operator::ReAssignment2,
    Operator::SwapAssignment1,
    Operator::ZigzagAssignment,
];

impl Operator {
    /// Operators in the order one local-search pass applies them.
    pub fn sequence(variant: Variant) -> &'static [Operator] {
        match variant {
            Variant::SingleTrip => &SINGLE_SEQUENCE,
            Variant::MultiTrip => &MULTI_SEQUENCE,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Operator::RelocateTruckNode => "relocateTruckNode",
            Operator::SwapTruckNode => "swapTruckNode",
            Operator::TwoOpt => "2-opt",
            Operator::SwapAssignment1 => "swapAssignment1",
            Operator::ReAssignment1 => "reAssignment1",
            Operator::RelocateDroneAssignment1 => "relocateDroneAssignment1",
            Operator::SwapDroneAssignment1 => "swapDroneAssignment1",
            Operator::RelocateDroneAssignment2 => "relocateDroneAssignment2",
            Operator::SwapDroneAssignment2 => "swapDroneAssignment2",
            Operator::TriangleDroneAssignment => "triangleDroneAssignment",
            Operator::GreedyRepack => "greedyHeuristic",
            Operator::ReAssignment2 => "reAssignment2",
            Operator::ZigzagAssignment => "zigzagAssignment",
        }
    }

    fn multi_only(&self) -> bool {
        matches!(
            self,
            Operator::RelocateDroneAssignment1
                | Operator::SwapDroneAssignment1
                | Operator::RelocateDroneAssignment2
                | Operator::SwapDroneAssignment2
                | Operator::TriangleDroneAssignment
                | Operator::GreedyRepack
                | Operator::ReAssignment2
                | Operator::ZigzagAssignment
        )
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Up to three (customer, new drone) pairs at one node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DroneChanges {
    len: usize,
    items: [(usize, usize); 3],
}

impl DroneChanges {
    pub fn new(items: &[(usize, usize)]) -> Self {
        assert!(items.len() <= 3);
        let mut out = DroneChanges {
            len: items.len(),
            items: [(0, 0); 3],
        };
        out.items[..items.len()].copy_from_slice(items);
        out
    }

    pub fn as_slice(&self) -> &[(usize, usize)] {
        &self.items[..self.len]
    }
}

/// A neighbourhood move. Positions index the current tour; everything else
/// is a node, customer or drone id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    /// Move the node at tour position `from` to just after position `after`.
    RelocateNode { from: usize, after: usize },
    SwapNodes { first: usize, second: usize },
    /// Reverse tour positions `from..=to`.
    TwoOpt { from: usize, to: usize },
    /// Serve `customer` from `target` (with `drone` there in multi-trip).
    Reassign { customer: usize, target: usize, drone: usize },
    ReassignPair {
        first: usize,
        second: usize,
        target: usize,
        first_drone: usize,
        second_drone: usize,
    },
    /// Exchange the serving nodes of two customers; each lands on the given drone.
    SwapAssign {
        first: usize,
        second: usize,
        first_drone: usize,
        second_drone: usize,
    },
    /// `moved` leaves for `target`; `shifted` takes over `moved`'s drone.
    Zigzag {
        moved: usize,
        target: usize,
        target_drone: usize,
        shifted: usize,
    },
    /// Intra-node drone reassignment.
    Redrone { node: usize, changes: DroneChanges },
    /// Rebuild the node's drone loads greedily by increasing trip time.
    Repack { node: usize },
}

/// How an unvisited node enters the tour: right after node `after`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Insertion {
    pub after: usize,
    pub before: usize,
    pub cost: f64,
}

/// Per-node state for O(1) move pricing.
#[derive(Clone, Debug)]
pub struct DeltaCache {
    u: usize,
    furthest: Vec<f64>,
    second: Vec<f64>,
    loads: Vec<f64>,
    // drone ids per node, ascending by (load, id)
    order: Vec<usize>,
    insertion: Vec<Option<Insertion>>,
}

impl DeltaCache {
    /// `t^f_i`: longest round trip launched at `i` (single trip).
    pub fn furthest(&self, i: usize) -> f64 {
        self.furthest[i]
    }

    /// `t^s_i`: the longest trip once one occurrence of the maximum is dropped.
    pub fn second_furthest(&self, i: usize) -> f64 {
        self.second[i]
    }

    pub fn drone_load(&self, i: usize, l: usize) -> f64 {
        self.loads[i * self.u + l]
    }

    fn order(&self, i: usize) -> &[usize] {
        &self.order[i * self.u..(i + 1) * self.u]
    }

    pub fn largest_drone(&self, i: usize) -> usize {
        self.order(i)[self.u - 1]
    }

    pub fn second_largest_drone(&self, i: usize) -> Option<usize> {
        (self.u >= 2).then(|| self.order(i)[self.u - 2])
    }

    pub fn least_loaded_drone(&self, i: usize) -> usize {
        self.order(i)[0]
    }

    /// Cheapest insertion arc of an unvisited node.
    pub fn best_insertion(&self, j: usize) -> Option<Insertion> {
        self.insertion[j]
    }

    /// Longest load over drones not in `skip` (at most `skip.len() + 1` probes).
    fn max_load_excluding(&self, i: usize, skip: &[(usize, f64)]) -> f64 {
        for &l in self.order(i).iter().rev() {
            if !skip.iter().any(|&(s, _)| s == l) {
                return self.drone_load(i, l);
            }
        }
        0.0
    }

    /// Least-loaded drone other than `l`.
    fn least_excluding(&self, i: usize, l: usize) -> Option<usize> {
        self.order(i).iter().copied().find(|&d| d != l)
    }
}

fn load_cmp(loads: &[f64], a: usize, b: usize) -> Ordering {
    loads[a].total_cmp(&loads[b]).then(a.cmp(&b))
}

/// Accumulates per-drone load changes, merging repeated drones.
#[derive(Default)]
struct LoadChanges {
    len: usize,
    items: [(usize, f64); 6],
}

impl LoadChanges {
    fn add(&mut self, drone: usize, delta: f64) {
        for item in &mut self.items[..self.len] {
            if item.0 == drone {
                item.1 += delta;
                return;
            }
        }
        self.items[self.len] = (drone, delta);
        self.len += 1;
    }

    fn as_slice(&self) -> &[(usize, f64)] {
        &self.items[..self.len]
    }
}

/// Wait increase when a trip joins a single-trip node.
pub fn delta_add_customer_single(furthest: f64, trip: f64) -> f64 {
    (trip - furthest).max(0.0)
}

/// Wait decrease when a trip leaves a single-trip node.
pub fn delta_remove_customer_single(furthest: f64, second: f64, trip: f64) -> f64 {
    if trip < furthest {
        0.0
    } else {
        furthest - second
    }
}

/// Greedy packing of trips onto `drones` drones: trips taken in increasing
/// order, each to the currently least-loaded drone (lowest id on ties).
/// Returns the drone of every trip, in input order.
pub fn greedy_repack(trips: &[f64], drones: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..trips.len()).collect();
    idx.sort_by(|&a, &b| trips[a].total_cmp(&trips[b]).then(a.cmp(&b)));
    let mut loads = vec![0.0; drones];
    let mut out = vec![0; trips.len()];
    for t in idx {
        let mut best = 0;
        for l in 1..drones {
            if loads[l] < loads[best] {
                best = l;
            }
        }
        loads[best] += trips[t];
        out[t] = best;
    }
    out
}

/// Working copy of a solution plus its delta caches.
#[derive(Clone, Debug)]
pub struct SearchState<'a> {
    inst: &'a Instance,
    mats: &'a TimeMatrices,
    variant: Variant,
    u: usize,
    tour: Vec<usize>,
    pos: Vec<usize>,
    assign: Vec<usize>,
    drone: Vec<usize>,
    members: Vec<Vec<usize>>,
    cache: DeltaCache,
    objective: f64,
}

impl<'a> SearchState<'a> {
    /// Panics if `sol` is not feasible for `inst`.
    pub fn new(inst: &'a Instance, mats: &'a TimeMatrices, sol: &Solution) -> Self {
        let eval = crate::model::evaluate(sol, inst, mats).expect("local search needs a feasible solution");
        let n = inst.num_truck_nodes();
        let m = inst.num_customers();
        let u = inst.num_drones;
        let mut assign = vec![NOWHERE; m];
        let mut drone = vec![0; m];
        let mut members = vec![Vec::new(); n];
        for (&k, &i) in &sol.assign {
            assign[k] = i;
            members[i].push(k);
        }
        match &sol.drone_of {
            Some(d) => {
                for (&k, &l) in d {
                    drone[k] = l;
                }
            }
            None => {
                // single trip: drone slot is the rank within the node
                for list in &members {
                    for (slot, &k) in list.iter().enumerate() {
                        drone[k] = slot;
                    }
                }
            }
        }
        let mut state = SearchState {
            inst,
            mats,
            variant: sol.variant,
            u,
            tour: sol.tour.clone(),
            pos: vec![NOWHERE; n],
            assign,
            drone,
            members,
            cache: DeltaCache {
                u,
                furthest: vec![0.0; n],
                second: vec![0.0; n],
                loads: vec![0.0; n * u],
                order: (0..n).flat_map(|_| 0..u).collect(),
                insertion: vec![None; n],
            },
            objective: eval.objective,
        };
        for i in 0..n {
            state.refresh_node(i);
        }
        state.refresh_tour();
        state
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn tour(&self) -> &[usize] {
        &self.tour
    }

    pub fn cache(&self) -> &DeltaCache {
        &self.cache
    }

    /// Objective tracked incrementally through accepted deltas.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn customers_at(&self, i: usize) -> &[usize] {
        &self.members[i]
    }

    pub fn drone_of(&self, k: usize) -> usize {
        self.drone[k]
    }

    pub fn assigned_node(&self, k: usize) -> usize {
        self.assign[k]
    }

    pub fn is_visited(&self, i: usize) -> bool {
        self.pos[i] != NOWHERE
    }

    #[inline]
    fn t(&self, a: usize, b: usize) -> f64 {
        self.mats.truck(a, b)
    }

    #[inline]
    fn trip(&self, i: usize, k: usize) -> f64 {
        self.mats.round_trip(i, k)
    }

    #[inline]
    fn next_node(&self, p: usize) -> usize {
        self.tour[(p + 1) % self.tour.len()]
    }

    /// Current waiting time at node `i`.
    pub fn wait(&self, i: usize) -> f64 {
        match self.variant {
            Variant::SingleTrip => self.cache.furthest[i],
            Variant::MultiTrip => self.cache.drone_load(i, self.cache.largest_drone(i)),
        }
    }

    fn refresh_node(&mut self, i: usize) {
        match self.variant {
            Variant::SingleTrip => {
                let (mut f, mut s) = (0.0f64, 0.0f64);
                for &k in &self.members[i] {
                    let t = self.mats.round_trip(i, k);
                    if t > f {
                        s = f;
                        f = t;
                    } else if t > s {
                        s = t;
                    }
                }
                self.cache.furthest[i] = f;
                self.cache.second[i] = s;
            }
            Variant::MultiTrip => {
                let u = self.u;
                let row = &mut self.cache.loads[i * u..(i + 1) * u];
                row.iter_mut().for_each(|x| *x = 0.0);
                for &k in &self.members[i] {
                    row[self.drone[k]] += self.mats.round_trip(i, k);
                }
                let loads = &self.cache.loads[i * u..(i + 1) * u];
                let order = &mut self.cache.order[i * u..(i + 1) * u];
                for (slot, l) in order.iter_mut().enumerate() {
                    *l = slot;
                }
                order.sort_by(|&a, &b| load_cmp(loads, a, b));
            }
        }
    }

    fn refresh_tour(&mut self) {
        self.pos.iter_mut().for_each(|p| *p = NOWHERE);
        for (p, &i) in self.tour.iter().enumerate() {
            self.pos[i] = p;
        }
        let len = self.tour.len();
        for j in 0..self.pos.len() {
            self.cache.insertion[j] = None;
            if j == DEPOT || self.pos[j] != NOWHERE || self.mats.servable(j).is_empty() {
                continue;
            }
            let mut best: Option<Insertion> = None;
            for p in 0..len {
                let (a, b) = (self.tour[p], self.tour[(p + 1) % len]);
                let cost = self.t(a, j) + self.t(j, b) - self.t(a, b);
                if best.is_none_or(|x| cost < x.cost) {
                    best = Some(Insertion {
                        after: a,
                        before: b,
                        cost,
                    });
                }
            }
            self.cache.insertion[j] = best;
        }
    }

    // -- pricing helpers ---------------------------------------------------

    fn single_wait_after(&self, i: usize, removed: Option<usize>, added: Option<usize>) -> f64 {
        let f = self.cache.furthest[i];
        let mut w = match removed {
            Some(k) => f - delta_remove_customer_single(f, self.cache.second[i], self.trip(i, k)),
            None => f,
        };
        if let Some(k) = added {
            w += delta_add_customer_single(w, self.trip(i, k));
        }
        w
    }

    fn multi_wait_after(&self, i: usize, changes: &LoadChanges) -> f64 {
        let mut w = self.cache.max_load_excluding(i, changes.as_slice());
        for &(l, d) in changes.as_slice() {
            w = w.max(self.cache.drone_load(i, l) + d);
        }
        w
    }

    /// Drone that receives a newcomer at `i` after `k` (on `l`) has left.
    fn least_after_removal(&self, i: usize, l: usize, trip: f64) -> usize {
        match self.cache.least_excluding(i, l) {
            None => l,
            Some(o) => {
                let reduced = self.cache.drone_load(i, l) - trip;
                let other = self.cache.drone_load(i, o);
                if reduced < other || (reduced == other && l < o) {
                    l
                } else {
                    o
                }
            }
        }
    }

    fn removal_gain(&self, i: usize) -> f64 {
        let p = self.pos[i];
        let (a, b) = (self.tour[p - 1], self.next_node(p));
        self.t(a, b) - self.t(a, i) - self.t(i, b)
    }

    /// Tour delta and insertion anchor for dropping `removed` and/or adding `added`.
    fn tour_change(&self, removed: Option<usize>, added: Option<usize>) -> (f64, Option<usize>) {
        match (removed, added) {
            (None, None) => (0.0, None),
            (Some(i), None) => (self.removal_gain(i), None),
            (None, Some(j)) => {
                let ins = self.cache.insertion[j].expect("insertion cached for launch node");
                (ins.cost, Some(ins.after))
            }
            (Some(i), Some(j)) => {
                let ins = self.cache.insertion[j].expect("insertion cached for launch node");
                if ins.after == i || ins.before == i {
                    let p = self.pos[i];
                    let (a, b) = (self.tour[p - 1], self.next_node(p));
                    (self.t(a, j) + self.t(j, b) - self.t(a, i) - self.t(i, b), Some(a))
                } else {
                    (self.removal_gain(i) + ins.cost, Some(ins.after))
                }
            }
        }
    }

    fn wait_change_single(&self, i: usize, removed: Option<usize>, added: Option<usize>) -> f64 {
        self.single_wait_after(i, removed, added) - self.cache.furthest[i]
    }

    fn wait_change_multi(&self, i: usize, changes: &LoadChanges) -> f64 {
        self.multi_wait_after(i, changes) - self.wait(i)
    }

    /// Objective change `move` would cause, from the caches only.
    pub fn delta(&self, mv: &Move) -> f64 {
        match *mv {
            Move::RelocateNode { from, after } => {
                let x = self.tour[from];
                let (a, b) = (self.tour[from - 1], self.next_node(from));
                let (c, d) = (self.tour[after], self.next_node(after));
                self.t(a, b) - self.t(a, x) - self.t(x, b) + self.t(c, x) + self.t(x, d) - self.t(c, d)
            }
            Move::SwapNodes { first, second } => {
                let (x, y) = (self.tour[first], self.tour[second]);
                let px = self.tour[first - 1];
                let ny = self.next_node(second);
                if second == first + 1 {
                    self.t(px, y) + self.t(x, ny) - self.t(px, x) - self.t(y, ny)
                } else {
                    let nx = self.tour[first + 1];
                    let py = self.tour[second - 1];
                    self.t(px, y) + self.t(y, nx) + self.t(py, x) + self.t(x, ny)
                        - self.t(px, x)
                        - self.t(x, nx)
                        - self.t(py, y)
                        - self.t(y, ny)
                }
            }
            Move::TwoOpt { from, to } => {
                let (a, b) = (self.tour[from - 1], self.tour[from]);
                let (c, d) = (self.tour[to], self.next_node(to));
                self.t(a, c) + self.t(b, d) - self.t(a, b) - self.t(c, d)
            }
            Move::Reassign {
                customer: k,
                target: j,
                drone,
            } => {
                let i = self.assign[k];
                let emptied = self.members[i].len() == 1;
                let waits = match self.variant {
                    Variant::SingleTrip => {
                        self.wait_change_single(i, Some(k), None) + self.wait_change_single(j, None, Some(k))
                    }
                    Variant::MultiTrip => {
                        let mut at_i = LoadChanges::default();
                        at_i.add(self.drone[k], -self.trip(i, k));
                        let mut at_j = LoadChanges::default();
                        at_j.add(drone, self.trip(j, k));
                        self.wait_change_multi(i, &at_i) + self.wait_change_multi(j, &at_j)
                    }
                };
                let added = (!self.is_visited(j)).then_some(j);
                waits + self.tour_change(emptied.then_some(i), added).0
            }
            Move::ReassignPair {
                first,
                second,
                target: j,
                first_drone,
                second_drone,
            } => {
                let i = self.assign[first];
                let emptied = self.members[i].len() == 2;
                let mut at_i = LoadChanges::default();
                at_i.add(self.drone[first], -self.trip(i, first));
                at_i.add(self.drone[second], -self.trip(i, second));
                let mut at_j = LoadChanges::default();
                at_j.add(first_drone, self.trip(j, first));
                at_j.add(second_drone, self.trip(j, second));
                let added = (!self.is_visited(j)).then_some(j);
                self.wait_change_multi(i, &at_i)
                    + self.wait_change_multi(j, &at_j)
                    + self.tour_change(emptied.then_some(i), added).0
            }
            Move::SwapAssign {
                first,
                second,
                first_drone,
                second_drone,
            } => {
                let (i, i2) = (self.assign[first], self.assign[second]);
                match self.variant {
                    Variant::SingleTrip => {
                        self.wait_change_single(i, Some(first), Some(second))
                            + self.wait_change_single(i2, Some(second), Some(first))
                    }
                    Variant::MultiTrip => {
                        let mut at_i = LoadChanges::default();
                        at_i.add(self.drone[first], -self.trip(i, first));
                        at_i.add(second_drone, self.trip(i, second));
                        let mut at_i2 = LoadChanges::default();
                        at_i2.add(self.drone[second], -self.trip(i2, second));
                        at_i2.add(first_drone, self.trip(i2, first));
                        self.wait_change_multi(i, &at_i) + self.wait_change_multi(i2, &at_i2)
                    }
                }
            }
            Move::Zigzag {
                moved,
                target: j,
                target_drone,
                shifted,
            } => {
                let i = self.assign[moved];
                let mut at_i = LoadChanges::default();
                at_i.add(self.drone[moved], self.trip(i, shifted) - self.trip(i, moved));
                at_i.add(self.drone[shifted], -self.trip(i, shifted));
                let mut at_j = LoadChanges::default();
                at_j.add(target_drone, self.trip(j, moved));
                let added = (!self.is_visited(j)).then_some(j);
                self.wait_change_multi(i, &at_i)
                    + self.wait_change_multi(j, &at_j)
                    + self.tour_change(None, added).0
            }
            Move::Redrone { node: i, changes } => {
                let mut at_i = LoadChanges::default();
                for &(k, l) in changes.as_slice() {
                    let t = self.trip(i, k);
                    at_i.add(self.drone[k], -t);
                    at_i.add(l, t);
                }
                self.wait_change_multi(i, &at_i)
            }
            Move::Repack { node: i } => {
                let trips: Vec<f64> = self.members[i].iter().map(|&k| self.trip(i, k)).collect();
                let plan = greedy_repack(&trips, self.u);
                let mut loads = vec![0.0; self.u];
                for (t, l) in trips.iter().zip(plan) {
                    loads[l] += t;
                }
                loads.into_iter().fold(0.0, f64::max) - self.wait(i)
            }
        }
    }

    // -- applying moves ----------------------------------------------------

    fn detach(&mut self, k: usize) {
        let i = self.assign[k];
        let p = self.members[i].binary_search(&k).expect("customer listed at its node");
        self.members[i].remove(p);
        self.assign[k] = NOWHERE;
    }

    fn attach(&mut self, k: usize, i: usize, l: usize) {
        let p = self.members[i].binary_search(&k).unwrap_err();
        self.members[i].insert(p, k);
        self.assign[k] = i;
        self.drone[k] = l;
    }

    fn next_free_slot(&self, i: usize) -> usize {
        // single trip: slots are bookkeeping only
        self.members[i].len()
    }

    /// Applies `mv`; returns the delta that was charged.
    pub fn apply(&mut self, mv: &Move) -> f64 {
        let delta = self.delta(mv);
        match *mv {
            Move::RelocateNode { from, after } => {
                let x = self.tour.remove(from);
                let anchor = if after < from { after } else { after - 1 };
                self.tour.insert(anchor + 1, x);
                self.refresh_tour();
            }
            Move::SwapNodes { first, second } => {
                self.tour.swap(first, second);
                self.refresh_tour();
            }
            Move::TwoOpt { from, to } => {
                self.tour[from..=to].reverse();
                self.refresh_tour();
            }
            Move::Reassign {
                customer: k,
                target: j,
                drone,
            } => {
                let i = self.assign[k];
                let emptied = self.members[i].len() == 1;
                let added = (!self.is_visited(j)).then_some(j);
                let (_, anchor) = self.tour_change(emptied.then_some(i), added);
                self.detach(k);
                let l = match self.variant {
                    Variant::SingleTrip => self.next_free_slot(j),
                    Variant::MultiTrip => drone,
                };
                self.attach(k, j, l);
                self.restructure(emptied.then_some(i), added.zip(anchor));
                self.refresh_node(i);
                self.refresh_node(j);
            }
            Move::ReassignPair {
                first,
                second,
                target: j,
                first_drone,
                second_drone,
            } => {
                let i = self.assign[first];
                let emptied = self.members[i].len() == 2;
                let added = (!self.is_visited(j)).then_some(j);
                let (_, anchor) = self.tour_change(emptied.then_some(i), added);
                self.detach(first);
                self.detach(second);
                self.attach(first, j, first_drone);
                self.attach(second, j, second_drone);
                self.restructure(emptied.then_some(i), added.zip(anchor));
                self.refresh_node(i);
                self.refresh_node(j);
            }
            Move::SwapAssign {
                first,
                second,
                first_drone,
                second_drone,
            } => {
                let (i, i2) = (self.assign[first], self.assign[second]);
                let (slot1, slot2) = (self.drone[first], self.drone[second]);
                self.detach(first);
                self.detach(second);
                match self.variant {
                    Variant::SingleTrip => {
                        self.attach(first, i2, slot2);
                        self.attach(second, i, slot1);
                    }
                    Variant::MultiTrip => {
                        self.attach(first, i2, first_drone);
                        self.attach(second, i, second_drone);
                    }
                }
                self.refresh_node(i);
                self.refresh_node(i2);
            }
            Move::Zigzag {
                moved,
                target: j,
                target_drone,
                shifted,
            } => {
                let i = self.assign[moved];
                let added = (!self.is_visited(j)).then_some(j);
                let (_, anchor) = self.tour_change(None, added);
                let l = self.drone[moved];
                self.detach(moved);
                self.drone[shifted] = l;
                self.attach(moved, j, target_drone);
                self.restructure(None, added.zip(anchor));
                self.refresh_node(i);
                self.refresh_node(j);
            }
            Move::Redrone { node, changes } => {
                for &(k, l) in changes.as_slice() {
                    self.drone[k] = l;
                }
                self.refresh_node(node);
            }
            Move::Repack { node } => {
                let list = self.members[node].clone();
                let trips: Vec<f64> = list.iter().map(|&k| self.trip(node, k)).collect();
                for (k, l) in list.into_iter().zip(greedy_repack(&trips, self.u)) {
                    self.drone[k] = l;
                }
                self.refresh_node(node);
            }
        }
        self.objective += delta;
        delta
    }

    /// Drops an emptied node and/or inserts a new one after `anchor`.
    fn restructure(&mut self, removed: Option<usize>, added: Option<(usize, usize)>) {
        if removed.is_none() && added.is_none() {
            return;
        }
        if let Some(i) = removed {
            let p = self.tour.iter().position(|&x| x == i).expect("removed node on tour");
            self.tour.remove(p);
        }
        if let Some((j, anchor)) = added {
            let p = self.tour.iter().position(|&x| x == anchor).expect("anchor on tour");
            self.tour.insert(p + 1, j);
        }
        self.refresh_tour();
    }

    // -- neighbourhood scans -----------------------------------------------

    /// Visits every candidate of `op` in scan order with its delta; stops when
    /// `visit` returns `true`.
    pub fn scan(&self, op: Operator, visit: &mut dyn FnMut(&Move, f64) -> bool) {
        if op.multi_only() && self.variant != Variant::MultiTrip {
            return;
        }
        let len = self.tour.len();
        let mut offer = |mv: Move| -> bool {
            let d = self.delta(&mv);
            visit(&mv, d)
        };
        match op {
            Operator::RelocateTruckNode => {
                for from in 1..len {
                    for after in 0..len {
                        if after == from || after + 1 == from {
                            continue;
                        }
                        if offer(Move::RelocateNode { from, after }) {
                            return;
                        }
                    }
                }
            }
            Operator::SwapTruckNode => {
                for first in 1..len {
                    for second in first + 1..len {
                        if offer(Move::SwapNodes { first, second }) {
                            return;
                        }
                    }
                }
            }
            Operator::TwoOpt => {
                for from in 1..len {
                    for to in from + 1..len {
                        if offer(Move::TwoOpt { from, to }) {
                            return;
                        }
                    }
                }
            }
            Operator::ReAssignment1 => {
                for p in 1..len {
                    let i = self.tour[p];
                    for &k in &self.members[i] {
                        for &j in self.mats.launch_sites(k) {
                            if j == i {
                                continue;
                            }
                            let drone = match self.variant {
                                Variant::SingleTrip => {
                                    if self.members[j].len() >= self.u {
                                        continue;
                                    }
                                    0
                                }
                                Variant::MultiTrip => self.cache.least_loaded_drone(j),
                            };
                            if offer(Move::Reassign {
                                customer: k,
                                target: j,
                                drone,
                            }) {
                                return;
                            }
                        }
                    }
                }
            }
            Operator::SwapAssignment1 => {
                for p in 1..len {
                    let i = self.tour[p];
                    for &k in &self.members[i] {
                        for q in p + 1..len {
                            let i2 = self.tour[q];
                            if !self.mats.can_serve(i2, k) {
                                continue;
                            }
                            for &k2 in &self.members[i2] {
                                if !self.mats.can_serve(i, k2) {
                                    continue;
                                }
                                let (first_drone, second_drone) = match self.variant {
                                    Variant::SingleTrip => (0, 0),
                                    Variant::MultiTrip => (
                                        self.least_after_removal(i2, self.drone[k2], self.trip(i2, k2)),
                                        self.least_after_removal(i, self.drone[k], self.trip(i, k)),
                                    ),
                                };
                                if offer(Move::SwapAssign {
                                    first: k,
                                    second: k2,
                                    first_drone,
                                    second_drone,
                                }) {
                                    return;
                                }
                            }
                        }
                    }
                }
            }
            Operator::ReAssignment2 => {
                for p in 1..len {
                    let i = self.tour[p];
                    let list = &self.members[i];
                    for (a, &k1) in list.iter().enumerate() {
                        for &k2 in &list[a + 1..] {
                            for &j in self.mats.launch_sites(k1) {
                                if j == i || !self.mats.can_serve(j, k2) {
                                    continue;
                                }
                                let d1 = self.cache.least_loaded_drone(j);
                                let d2 = match self.cache.least_excluding(j, d1) {
                                    None => d1,
                                    Some(o) => {
                                        let l1 = self.cache.drone_load(j, d1) + self.trip(j, k1);
                                        let lo = self.cache.drone_load(j, o);
                                        if l1 < lo || (l1 == lo && d1 < o) {
                                            d1
                                        } else {
                                            o
                                        }
                                    }
                                };
                                if offer(Move::ReassignPair {
                                    first: k1,
                                    second: k2,
                                    target: j,
                                    first_drone: d1,
                                    second_drone: d2,
                                }) {
                                    return;
                                }
                            }
                        }
                    }
                }
            }
            Operator::ZigzagAssignment => {
                for p in 1..len {
                    let i = self.tour[p];
                    for &k in &self.members[i] {
                        for &k2 in &self.members[i] {
                            if self.drone[k2] == self.drone[k] {
                                continue;
                            }
                            for &j in self.mats.launch_sites(k) {
                                if j == i {
                                    continue;
                                }
                                if offer(Move::Zigzag {
                                    moved: k,
                                    target: j,
                                    target_drone: self.cache.least_loaded_drone(j),
                                    shifted: k2,
                                }) {
                                    return;
                                }
                            }
                        }
                    }
                }
            }
            Operator::RelocateDroneAssignment1 => {
                for p in 1..len {
                    let i = self.tour[p];
                    for &k in &self.members[i] {
                        for l in 0..self.u {
                            if l == self.drone[k] {
                                continue;
                            }
                            if offer(Move::Redrone {
                                node: i,
                                changes: DroneChanges::new(&[(k, l)]),
                            }) {
                                return;
                            }
                        }
                    }
                }
            }
            Operator::SwapDroneAssignment1 => {
                for p in 1..len {
                    let i = self.tour[p];
                    let list = &self.members[i];
                    for (a, &k) in list.iter().enumerate() {
                        for &k2 in &list[a + 1..] {
                            let (l, l2) = (self.drone[k], self.drone[k2]);
                            if l == l2 {
                                continue;
                            }
                            if offer(Move::Redrone {
                                node: i,
                                changes: DroneChanges::new(&[(k, l2), (k2, l)]),
                            }) {
                                return;
                            }
                        }
                    }
                }
            }
            Operator::RelocateDroneAssignment2 => {
                for p in 1..len {
                    let i = self.tour[p];
                    let list = &self.members[i];
                    for (a, &k) in list.iter().enumerate() {
                        for &k2 in &list[a + 1..] {
                            let l = self.drone[k];
                            if self.drone[k2] != l {
                                continue;
                            }
                            for target in 0..self.u {
                                if target == l {
                                    continue;
                                }
                                if offer(Move::Redrone {
                                    node: i,
                                    changes: DroneChanges::new(&[(k, target), (k2, target)]),
                                }) {
                                    return;
                                }
                            }
                        }
                    }
                }
            }
            Operator::SwapDroneAssignment2 => {
                for p in 1..len {
                    let i = self.tour[p];
                    let list = &self.members[i];
                    for (a, &k) in list.iter().enumerate() {
                        for &k2 in &list[a + 1..] {
                            let l = self.drone[k];
                            if self.drone[k2] != l {
                                continue;
                            }
                            for &k3 in list {
                                let l3 = self.drone[k3];
                                if l3 == l {
                                    continue;
                                }
                                if offer(Move::Redrone {
                                    node: i,
                                    changes: DroneChanges::new(&[(k, l3), (k2, l3), (k3, l)]),
                                }) {
                                    return;
                                }
                            }
                        }
                    }
                }
            }
            Operator::TriangleDroneAssignment => {
                for p in 1..len {
                    let i = self.tour[p];
                    let list = &self.members[i];
                    for &k in list {
                        for &k2 in list {
                            for &k3 in list {
                                let (l, l2, l3) = (self.drone[k], self.drone[k2], self.drone[k3]);
                                if l == l2 || l2 == l3 || l == l3 {
                                    continue;
                                }
                                // l takes k2, l2 takes k3, l3 takes k
                                if offer(Move::Redrone {
                                    node: i,
                                    changes: DroneChanges::new(&[(k2, l), (k3, l2), (k, l3)]),
                                }) {
                                    return;
                                }
                            }
                        }
                    }
                }
            }
            Operator::GreedyRepack => {
                for p in 1..len {
                    if offer(Move::Repack { node: self.tour[p] }) {
                        return;
                    }
                }
            }
        }
    }

    /// First strictly improving move of `op`, if any.
    pub fn find_first(&self, op: Operator) -> Option<(Move, f64)> {
        let mut found = None;
        self.scan(op, &mut |mv, d| {
            if d < -IMPROVEMENT_EPS {
                found = Some((*mv, d));
                true
            } else {
                false
            }
        });
        found
    }

    /// Applies first-improvement moves of `op` until none is left.
    pub fn run_operator(&mut self, op: Operator, trace: &mut dyn FnMut(Operator, &Move, f64)) -> bool {
        let mut improved = false;
        while let Some((mv, _)) = self.find_first(op) {
            let d = self.apply(&mv);
            trace(op, &mv, d);
            improved = true;
        }
        improved
    }

    /// Whether every cache equals its from-scratch recomputation.
    pub fn cache_is_coherent(&self) -> bool {
        let mut fresh = self.clone();
        for i in 0..self.pos.len() {
            fresh.refresh_node(i);
        }
        fresh.refresh_tour();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
        let n = self.pos.len();
        (0..n).all(|i| {
            close(fresh.cache.furthest[i], self.cache.furthest[i])
                && close(fresh.cache.second[i], self.cache.second[i])
                && (0..self.u).all(|l| close(fresh.cache.drone_load(i, l), self.cache.drone_load(i, l)))
                && close(
                    fresh.cache.drone_load(i, fresh.cache.largest_drone(i)),
                    self.cache.drone_load(i, self.cache.largest_drone(i)),
                )
                && close(
                    fresh.cache.drone_load(i, fresh.cache.least_loaded_drone(i)),
                    self.cache.drone_load(i, self.cache.least_loaded_drone(i)),
                )
                && fresh.cache.insertion[i].map(|x| x.cost) == self.cache.insertion[i].map(|x| x.cost)
        }) && fresh.pos == self.pos
    }

    /// Materializes the current state as an evaluated [`Solution`].
    pub fn to_solution(&self) -> Solution {
        let assign: BTreeMap<usize, usize> = self.assign.iter().copied().enumerate().collect();
        let drone_of = match self.variant {
            Variant::SingleTrip => None,
            Variant::MultiTrip => Some(self.drone.iter().copied().enumerate().collect()),
        };
        Solution::evaluated(self.inst, self.mats, self.variant, self.tour.clone(), assign, drone_of)
            .expect("moves preserve feasibility")
    }
}

/// Runs the operator sequence until a whole pass yields no improvement.
pub fn local_search(sol: &Solution, inst: &Instance, mats: &TimeMatrices) -> Solution {
    local_search_traced(sol, inst, mats, &mut |_, _, _| {})
}

/// Like [`local_search`], reporting every accepted move to `trace`.
pub fn local_search_traced(
    sol: &Solution,
    inst: &Instance,
    mats: &TimeMatrices,
    trace: &mut dyn FnMut(Operator, &Move, f64),
) -> Solution {
    let mut state = SearchState::new(inst, mats, sol);
    let mut improved = false;
    loop {
        let mut beta = false;
        for &op in Operator::sequence(sol.variant) {
            beta |= state.run_operator(op, trace);
        }
        if !beta {
            break;
        }
        improved = true;
    }
    if improved {
        state.to_solution()
    } else {
        sol.clone()
    }
}
