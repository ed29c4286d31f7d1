//! Problem data, solutions, and exact from-scratch evaluation.
//!
//! All times are hours, distances kilometres and speeds km/h. Truck legs use
//! the Manhattan metric, drone flights the Euclidean one. The depot (truck
//! node 0) is never a launch site, so `W_0` is always empty.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for every time comparison (hours).
pub const TIME_EPS: f64 = 1e-9;

/// Index of the depot among the truck nodes.
pub const DEPOT: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn manhattan(&self, other: &Point) -> f64 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    pub fn euclidean(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from(p: [f64; 2]) -> Self {
        Point::new(p[0], p[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Whether a drone flies once per stop (single trip) or repeatedly (multi trip).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "single")]
    SingleTrip,
    #[serde(rename = "multi")]
    MultiTrip,
}

impl Variant {
    pub fn short(&self) -> &'static str {
        match self {
            Variant::SingleTrip => "s",
            Variant::MultiTrip => "m",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::SingleTrip => f.write_str("single"),
            Variant::MultiTrip => f.write_str("multi"),
        }
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s" | "single" | "single-trip" => Ok(Variant::SingleTrip),
            "m" | "multi" | "multi-trip" => Ok(Variant::MultiTrip),
            other => Err(ModelError::UnknownVariant(other.to_string())),
        }
    }
}

/// Provenance of a generated instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub algorithm: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub name: String,
    /// Side of the square the nodes were drawn from (km).
    pub d: f64,
    pub truck_speed: f64,
    pub drone_speed: f64,
    /// Maximum airborne time of one drone round trip (hours).
    pub endurance: f64,
    /// Drones carried by the truck.
    pub num_drones: usize,
    /// Truck nodes; index 0 is the depot.
    pub truck_nodes: Vec<Point>,
    pub customers: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorInfo>,
}

impl Instance {
    pub fn num_truck_nodes(&self) -> usize {
        self.truck_nodes.len()
    }

    pub fn num_customers(&self) -> usize {
        self.customers.len()
    }

    pub fn with_drones(&self, num_drones: usize) -> Instance {
        Instance {
            num_drones,
            ..self.clone()
        }
    }

    pub fn with_drone_speed(&self, drone_speed: f64) -> Instance {
        Instance {
            drone_speed,
            ..self.clone()
        }
    }

    /// Checks the parameter and reachability invariants.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.truck_nodes.is_empty() {
            return Err(ModelError::NoTruckNodes);
        }
        let finite = |p: &Point| p.x.is_finite() && p.y.is_finite();
        if !self.truck_nodes.iter().all(finite) || !self.customers.iter().all(finite) {
            return Err(ModelError::NonFiniteCoordinate);
        }
        if !(self.truck_speed > 0.0 && self.drone_speed >= self.truck_speed)
            || !self.drone_speed.is_finite()
        {
            return Err(ModelError::InvalidSpeeds {
                truck: self.truck_speed,
                drone: self.drone_speed,
            });
        }
        if !(self.endurance > 0.0) || !self.endurance.is_finite() {
            return Err(ModelError::InvalidEndurance(self.endurance));
        }
        if self.num_drones == 0 {
            return Err(ModelError::NoDrones);
        }
        let mats = TimeMatrices::new(self);
        if let Some(k) = (0..self.num_customers()).find(|&k| mats.launch_sites(k).is_empty()) {
            return Err(ModelError::UnreachableCustomer { customer: k });
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Instance, ModelError> {
        let inst: Instance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }
}

/// Travel-time tables derived from an [`Instance`].
#[derive(Clone, Debug)]
pub struct TimeMatrices {
    n: usize,
    m: usize,
    endurance: f64,
    truck: Vec<f64>,
    drone: Vec<f64>,
    reachable: Vec<bool>,
    launch_sites: Vec<Vec<usize>>,
    servable: Vec<Vec<usize>>,
}

impl TimeMatrices {
    pub fn new(inst: &Instance) -> Self {
        let n = inst.num_truck_nodes();
        let m = inst.num_customers();
        let mut truck = vec![0.0; n * n];
        for (i, a) in inst.truck_nodes.iter().enumerate() {
            for (j, b) in inst.truck_nodes.iter().enumerate() {
                truck[i * n + j] = a.manhattan(b) / inst.truck_speed;
            }
        }
        let mut drone = vec![0.0; n * m];
        let mut reachable = vec![false; n * m];
        let mut launch_sites = vec![Vec::new(); m];
        let mut servable = vec![Vec::new(); n];
        for (i, a) in inst.truck_nodes.iter().enumerate() {
            for (k, c) in inst.customers.iter().enumerate() {
                let t = a.euclidean(c) / inst.drone_speed;
                drone[i * m + k] = t;
                if i != DEPOT && 2.0 * t <= inst.endurance + TIME_EPS {
                    reachable[i * m + k] = true;
                    launch_sites[k].push(i);
                    servable[i].push(k);
                }
            }
        }
        TimeMatrices {
            n,
            m,
            endurance: inst.endurance,
            truck,
            drone,
            reachable,
            launch_sites,
            servable,
        }
    }

    pub fn num_truck_nodes(&self) -> usize {
        self.n
    }

    pub fn num_customers(&self) -> usize {
        self.m
    }

    pub fn endurance(&self) -> f64 {
        self.endurance
    }

    /// Truck travel time between truck nodes `i` and `j`.
    #[inline]
    pub fn truck(&self, i: usize, j: usize) -> f64 {
        self.truck[i * self.n + j]
    }

    /// One-way drone flight time from truck node `i` to customer `k`.
    #[inline]
    pub fn drone(&self, i: usize, k: usize) -> f64 {
        self.drone[i * self.m + k]
    }

    #[inline]
    pub fn round_trip(&self, i: usize, k: usize) -> f64 {
        2.0 * self.drone[i * self.m + k]
    }

    /// Whether a drone launched at `i` can serve `k` and come back.
    #[inline]
    pub fn can_serve(&self, i: usize, k: usize) -> bool {
        self.reachable[i * self.m + k]
    }

    /// `V_k`: truck nodes that can launch a drone to customer `k`, ascending.
    pub fn launch_sites(&self, k: usize) -> &[usize] {
        &self.launch_sites[k]
    }

    /// `W_i`: customers reachable from truck node `i`, ascending.
    pub fn servable(&self, i: usize) -> &[usize] {
        &self.servable[i]
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("instance has no truck nodes")]
    NoTruckNodes,
    #[error("coordinates must be finite")]
    NonFiniteCoordinate,
    #[error("speeds must satisfy drone >= truck > 0 (truck {truck}, drone {drone})")]
    InvalidSpeeds { truck: f64, drone: f64 },
    #[error("endurance must be positive, got {0}")]
    InvalidEndurance(f64),
    #[error("at least one drone is required")]
    NoDrones,
    #[error("customer {customer} cannot be reached from any launch node")]
    UnreachableCustomer { customer: usize },
    #[error("{trips} single trips exceed the {capacity} drones available")]
    CapacityExceeded { trips: usize, capacity: usize },
    #[error("unknown variant `{0}` (expected s|single|m|multi)")]
    UnknownVariant(String),
    #[error(transparent)]
    Infeasible(#[from] FeasibilityError),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Waiting time at a node where each drone flies at most once: the longest trip.
pub fn node_wait_single(trips: &[f64], capacity: usize) -> Result<f64, ModelError> {
    if trips.len() > capacity {
        return Err(ModelError::CapacityExceeded {
            trips: trips.len(),
            capacity,
        });
    }
    Ok(trips.iter().copied().fold(0.0, f64::max))
}

/// Waiting time at a node with repeated flights: the busiest drone's total.
pub fn node_wait_multi(per_drone_trips: &[Vec<f64>]) -> f64 {
    per_drone_trips
        .iter()
        .map(|trips| trips.iter().sum::<f64>())
        .fold(0.0, f64::max)
}

/// A single broken solution invariant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind")]
pub enum Violation {
    TourMissingDepot,
    UnknownTruckNode { node: usize },
    RepeatedTruckNode { node: usize },
    UnknownCustomer { customer: usize },
    UnassignedCustomer { customer: usize },
    DuplicateAssignment { customer: usize },
    DepotLaunch { customer: usize },
    NodeNotVisited { customer: usize, node: usize },
    RangeViolation { customer: usize, node: usize },
    CapacityViolation { node: usize, count: usize, capacity: usize },
    IdleNode { node: usize },
    VariantMismatch,
    MissingDrone { customer: usize },
    DroneOutOfRange { customer: usize, drone: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            TourMissingDepot => write!(f, "tour does not start at the depot"),
            UnknownTruckNode { node } => write!(f, "truck node {node} does not exist"),
            RepeatedTruckNode { node } => write!(f, "truck node {node} visited more than once"),
            UnknownCustomer { customer } => write!(f, "customer {customer} does not exist"),
            UnassignedCustomer { customer } => write!(f, "customer {customer} is not served"),
            DuplicateAssignment { customer } => {
                write!(f, "customer {customer} is served more than once")
            }
            DepotLaunch { customer } => write!(f, "customer {customer} launched from the depot"),
            NodeNotVisited { customer, node } => {
                write!(f, "customer {customer} served from unvisited node {node}")
            }
            RangeViolation { customer, node } => {
                write!(f, "customer {customer} out of flying range of node {node}")
            }
            CapacityViolation {
                node,
                count,
                capacity,
            } => write!(f, "node {node} launches {count} single trips but has {capacity} drones"),
            IdleNode { node } => write!(f, "visited node {node} serves no customer"),
            VariantMismatch => write!(f, "drone assignment does not match the variant"),
            MissingDrone { customer } => write!(f, "customer {customer} has no drone"),
            DroneOutOfRange { customer, drone } => {
                write!(f, "customer {customer} assigned to nonexistent drone {drone}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
#[error("infeasible solution: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct FeasibilityError(pub Vec<Violation>);

/// A truck tour plus the customer (and, for multi-trip, drone) assignment.
///
/// `tour` starts at the depot and is implicitly closed by the depot copy,
/// which is keyed as node `n` in `arrivals`. The cached fields are filled by
/// [`Solution::evaluated`] / [`Solution::refresh`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub variant: Variant,
    pub tour: Vec<usize>,
    pub assign: BTreeMap<usize, usize>,
    #[serde(default)]
    pub drone_of: Option<BTreeMap<usize, usize>>,
    #[serde(default)]
    pub objective: f64,
    #[serde(default)]
    pub waits: BTreeMap<usize, f64>,
    #[serde(default)]
    pub arrivals: BTreeMap<usize, f64>,
}

/// Result of evaluating a solution from scratch.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    /// Sum of truck leg times (`T_t`).
    pub travel: f64,
    /// Sum of waiting times (`T_d`).
    pub wait: f64,
    pub waits: BTreeMap<usize, f64>,
    pub arrivals: BTreeMap<usize, f64>,
}

impl Solution {
    /// Builds a solution and fills its caches, failing on any violation.
    pub fn evaluated(
        inst: &Instance,
        mats: &TimeMatrices,
        variant: Variant,
        tour: Vec<usize>,
        assign: BTreeMap<usize, usize>,
        drone_of: Option<BTreeMap<usize, usize>>,
    ) -> Result<Solution, FeasibilityError> {
        let mut sol = Solution {
            variant,
            tour,
            assign,
            drone_of,
            objective: 0.0,
            waits: BTreeMap::new(),
            arrivals: BTreeMap::new(),
        };
        sol.refresh(inst, mats)?;
        Ok(sol)
    }

    pub fn refresh(&mut self, inst: &Instance, mats: &TimeMatrices) -> Result<Evaluation, FeasibilityError> {
        let eval = evaluate(self, inst, mats)?;
        self.objective = eval.objective;
        self.waits = eval.waits.clone();
        self.arrivals = eval.arrivals.clone();
        Ok(eval)
    }

    /// Visited truck nodes other than the depot.
    pub fn visited_nodes(&self) -> usize {
        self.tour.iter().filter(|&&i| i != DEPOT).count()
    }

    /// Total ordering used to break objective ties deterministically.
    pub fn tie_break_key(&self) -> (Vec<usize>, Vec<(usize, usize)>, Vec<(usize, usize)>) {
        (
            self.tour.clone(),
            self.assign.iter().map(|(&k, &i)| (k, i)).collect(),
            self.drone_of
                .iter()
                .flat_map(|d| d.iter().map(|(&k, &l)| (k, l)))
                .collect(),
        )
    }

    pub fn from_json(text: &str) -> Result<Solution, ModelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }
}

/// Lists every broken invariant of `sol`; empty iff the solution is feasible.
pub fn check_feasibility(sol: &Solution, inst: &Instance, mats: &TimeMatrices) -> Vec<Violation> {
    let n = inst.num_truck_nodes();
    let m = inst.num_customers();
    let u = inst.num_drones;
    let mut out = Vec::new();

    if sol.tour.first() != Some(&DEPOT) {
        out.push(Violation::TourMissingDepot);
    }
    let mut visited = vec![false; n];
    for &i in &sol.tour {
        if i >= n {
            out.push(Violation::UnknownTruckNode { node: i });
        } else if visited[i] {
            out.push(Violation::RepeatedTruckNode { node: i });
        } else {
            visited[i] = true;
        }
    }

    for &k in sol.assign.keys().filter(|&&k| k >= m) {
        out.push(Violation::UnknownCustomer { customer: k });
    }
    let mut load = vec![0usize; n];
    for k in 0..m {
        let Some(&i) = sol.assign.get(&k) else {
            out.push(Violation::UnassignedCustomer { customer: k });
            continue;
        };
        if i >= n {
            out.push(Violation::UnknownTruckNode { node: i });
            continue;
        }
        if i == DEPOT {
            out.push(Violation::DepotLaunch { customer: k });
            continue;
        }
        load[i] += 1;
        if !visited[i] {
            out.push(Violation::NodeNotVisited { customer: k, node: i });
        }
        if !mats.can_serve(i, k) {
            out.push(Violation::RangeViolation { customer: k, node: i });
        }
    }

    match (sol.variant, &sol.drone_of) {
        (Variant::SingleTrip, None) => {
            for (i, &count) in load.iter().enumerate() {
                if count > u {
                    out.push(Violation::CapacityViolation {
                        node: i,
                        count,
                        capacity: u,
                    });
                }
            }
        }
        (Variant::MultiTrip, Some(drones)) => {
            for k in 0..m {
                match drones.get(&k) {
                    None => out.push(Violation::MissingDrone { customer: k }),
                    Some(&l) if l >= u => {
                        out.push(Violation::DroneOutOfRange { customer: k, drone: l })
                    }
                    Some(_) => {}
                }
            }
        }
        _ => out.push(Violation::VariantMismatch),
    }

    for &i in sol.tour.iter().skip(1) {
        if i < n && i != DEPOT && load[i] == 0 {
            out.push(Violation::IdleNode { node: i });
        }
    }
    out
}

/// Recomputes arrivals, waits and the completion time from scratch.
pub fn evaluate(sol: &Solution, inst: &Instance, mats: &TimeMatrices) -> Result<Evaluation, FeasibilityError> {
    let violations = check_feasibility(sol, inst, mats);
    if !violations.is_empty() {
        return Err(FeasibilityError(violations));
    }
    let n = inst.num_truck_nodes();
    let u = inst.num_drones;

    let mut per_drone: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for (&k, &i) in &sol.assign {
        let lane = match &sol.drone_of {
            Some(d) => d[&k],
            None => 0,
        };
        let slots = per_drone.entry(i).or_insert_with(|| vec![Vec::new(); u]);
        slots[lane].push(mats.round_trip(i, k));
    }

    let mut waits = BTreeMap::new();
    for &i in &sol.tour {
        let s = match (sol.variant, per_drone.get(&i)) {
            (_, None) => 0.0,
            (Variant::SingleTrip, Some(slots)) => {
                node_wait_single(&slots[0], u).expect("capacity checked above")
            }
            (Variant::MultiTrip, Some(slots)) => node_wait_multi(slots),
        };
        waits.insert(i, s);
    }

    let mut arrivals = BTreeMap::new();
    let mut clock = 0.0;
    let mut travel = 0.0;
    let mut wait = 0.0;
    for (p, &i) in sol.tour.iter().enumerate() {
        arrivals.insert(i, clock);
        let next = sol.tour.get(p + 1).copied().unwrap_or(DEPOT);
        let leg = mats.truck(i, next);
        let s = waits[&i];
        clock += s + leg;
        travel += leg;
        wait += s;
    }
    arrivals.insert(n, clock);

    Ok(Evaluation {
        objective: clock,
        travel,
        wait,
        waits,
        arrivals,
    })
}

/// One row of an experiment: mirrors the columns of the published tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub instance: String,
    pub variant: Variant,
    pub num_drones: usize,
    pub drone_speed: f64,
    pub truck_speed: f64,
    /// `|V_t|`: visited truck nodes, depot excluded.
    pub visited_nodes: usize,
    /// `Obj` (hours).
    pub objective: f64,
    /// `T_d`: total time the truck waits for drones (hours).
    pub wait_time: f64,
    /// `T_t`: pure truck travel time (hours).
    pub travel_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tsp_objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tsp_exact: Option<bool>,
    /// `Gap` in percent against the truck-only tour.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    pub iterations: usize,
    pub failed_iterations: usize,
    pub wall_time: f64,
}

impl RunReport {
    pub fn new(inst: &Instance, sol: &Solution, eval: &Evaluation) -> Self {
        RunReport {
            instance: inst.name.clone(),
            variant: sol.variant,
            num_drones: inst.num_drones,
            drone_speed: inst.drone_speed,
            truck_speed: inst.truck_speed,
            visited_nodes: sol.visited_nodes(),
            objective: eval.objective,
            wait_time: eval.wait,
            travel_time: eval.travel,
            tsp_objective: None,
            tsp_exact: None,
            gap: None,
            iterations: 0,
            failed_iterations: 0,
            wall_time: 0.0,
        }
    }
}
