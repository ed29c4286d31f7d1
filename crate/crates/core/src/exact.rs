//! Exact enumeration for small instances, and LP export of the MILP models.
//!
//! The oracle enumerates visited node subsets in order of optimal tour time,
//! then assignments of customers to nodes of the subset. Node waits come from
//! a table of per-(node, customer set) values; multi-trip values are exact
//! min-max packings found by brute force.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::baseline::HeldKarp;
use crate::model::{FeasibilityError, Instance, Solution, TimeMatrices, Variant, Violation, DEPOT};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExactLimits {
    pub max_truck_nodes: usize,
    pub max_customers: usize,
    pub max_drones: usize,
}

impl Default for ExactLimits {
    fn default() -> Self {
        ExactLimits {
            max_truck_nodes: 8,
            max_customers: 8,
            max_drones: 4,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ExactError {
    #[error(
        "instance too large for exhaustive search: {n} truck nodes (max {max_n}), {m} customers (max {max_m}), {u} drones (max {max_u})"
    )]
    TooLarge {
        n: usize,
        m: usize,
        u: usize,
        max_n: usize,
        max_m: usize,
        max_u: usize,
    },
    #[error("no feasible solution exists")]
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct ExactResult {
    pub solution: Solution,
    /// Node subsets whose tour was cheaper than the incumbent.
    pub subsets_explored: usize,
    /// Complete assignments evaluated.
    pub leaves: usize,
}

/// Minimum over packings of `trips` onto `drones` identical drones of the
/// largest load, with the packing (drone of each trip).
pub fn min_max_packing(trips: &[f64], drones: usize) -> (f64, Vec<usize>) {
    fn go(
        idx: usize,
        trips: &[f64],
        loads: &mut Vec<f64>,
        used: usize,
        current: &mut Vec<usize>,
        best: &mut (f64, Vec<usize>),
    ) {
        let peak = loads.iter().copied().fold(0.0, f64::max);
        if peak >= best.0 {
            return;
        }
        if idx == trips.len() {
            *best = (peak, current.clone());
            return;
        }
        // drones are interchangeable: a trip may open at most one new drone
        let limit = (used + 1).min(loads.len());
        for l in 0..limit {
            loads[l] += trips[idx];
            current.push(l);
            go(idx + 1, trips, loads, used.max(l + 1), current, best);
            current.pop();
            loads[l] -= trips[idx];
        }
    }
    if trips.is_empty() {
        return (0.0, Vec::new());
    }
    let mut best = (f64::INFINITY, Vec::new());
    go(0, trips, &mut vec![0.0; drones], 0, &mut Vec::new(), &mut best);
    best
}

struct WaitTable {
    m: usize,
    // wait[i * 2^m + mask], infinite when not allowed
    wait: Vec<f64>,
    packing: HashMap<(usize, usize), Vec<usize>>,
}

impl WaitTable {
    fn new(mats: &TimeMatrices, variant: Variant, u: usize) -> Self {
        let n = mats.num_truck_nodes();
        let m = mats.num_customers();
        let size = 1usize << m;
        let mut wait = vec![f64::INFINITY; n * size];
        let mut packing = HashMap::new();
        for i in 1..n {
            let reach: usize = mats.servable(i).iter().map(|&k| 1 << k).sum();
            // every submask of the reachable set
            let mut sub = reach;
            loop {
                let members: Vec<usize> = (0..m).filter(|&k| sub & (1 << k) != 0).collect();
                let trips: Vec<f64> = members.iter().map(|&k| mats.round_trip(i, k)).collect();
                let w = match variant {
                    Variant::SingleTrip if members.len() > u => f64::INFINITY,
                    Variant::SingleTrip => trips.iter().copied().fold(0.0, f64::max),
                    Variant::MultiTrip => {
                        let (w, plan) = min_max_packing(&trips, u);
                        packing.insert((i, sub), plan);
                        w
                    }
                };
                wait[i * size + sub] = w;
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & reach;
            }
        }
        WaitTable { m, wait, packing }
    }

    fn get(&self, i: usize, mask: usize) -> f64 {
        self.wait[i * (1 << self.m) + mask]
    }
}

struct Search<'a> {
    mats: &'a TimeMatrices,
    table: &'a WaitTable,
    order: Vec<usize>,
    nodes: Vec<usize>,
    masks: Vec<usize>,
    base: f64,
    best: f64,
    best_masks: Option<Vec<usize>>,
    leaves: usize,
}

impl Search<'_> {
    fn bound(&self) -> f64 {
        self.base
            + self
                .nodes
                .iter()
                .zip(&self.masks)
                .map(|(&i, &mask)| self.table.get(i, mask))
                .sum::<f64>()
    }

    fn dfs(&mut self, depth: usize) {
        let value = self.bound();
        if !(value < self.best) {
            return;
        }
        if depth == self.order.len() {
            self.leaves += 1;
            if self.masks.iter().all(|&mask| mask != 0) {
                self.best = value;
                self.best_masks = Some(self.masks.clone());
            }
            return;
        }
        let k = self.order[depth];
        // nodes still empty must be filled by the remaining customers
        let empty = self.masks.iter().filter(|&&mask| mask == 0).count();
        if empty > self.order.len() - depth {
            return;
        }
        for slot in 0..self.nodes.len() {
            if !self.mats.can_serve(self.nodes[slot], k) {
                continue;
            }
            self.masks[slot] |= 1 << k;
            self.dfs(depth + 1);
            self.masks[slot] &= !(1 << k);
        }
    }
}

/// Proven optimum by exhaustive search; refuses instances above `limits`.
pub fn solve_exact(
    inst: &Instance,
    mats: &TimeMatrices,
    variant: Variant,
    limits: &ExactLimits,
) -> Result<ExactResult, ExactError> {
    let n = inst.num_truck_nodes();
    let m = inst.num_customers();
    let u = inst.num_drones;
    if n > limits.max_truck_nodes || m > limits.max_customers || u > limits.max_drones {
        return Err(ExactError::TooLarge {
            n,
            m,
            u,
            max_n: limits.max_truck_nodes,
            max_m: limits.max_customers,
            max_u: limits.max_drones,
        });
    }

    let t = |a: usize, b: usize| mats.truck(a, b);
    let hk = HeldKarp::new(n, t);
    let table = WaitTable::new(mats, variant, u);

    // useful nodes only: a visited node must serve someone
    let useful: usize = (1..n)
        .filter(|&i| !mats.servable(i).is_empty())
        .map(|i| 1 << (i - 1))
        .sum();
    let mut subsets: Vec<(f64, usize, Vec<usize>)> = Vec::new();
    let mut sub = useful;
    loop {
        let size = sub.count_ones() as usize;
        if size <= m && (size > 0 || m == 0) {
            let (time, tour) = hk.closed_tour(sub, t);
            subsets.push((time, sub, tour));
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & useful;
    }
    subsets.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    // customers with the fewest launch options first
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&k| (mats.launch_sites(k).len(), k));

    let mut best = f64::INFINITY;
    let mut best_plan: Option<(Vec<usize>, Vec<usize>, Vec<usize>)> = None;
    let mut explored = 0;
    let mut leaves = 0;
    for (time, mask, tour) in subsets {
        if !(time < best) {
            break;
        }
        explored += 1;
        let nodes: Vec<usize> = (1..n).filter(|&i| mask & (1 << (i - 1)) != 0).collect();
        if order.iter().any(|&k| !nodes.iter().any(|&i| mats.can_serve(i, k))) {
            continue;
        }
        let mut search = Search {
            mats,
            table: &table,
            order: order.clone(),
            masks: vec![0; nodes.len()],
            nodes: nodes.clone(),
            base: time,
            best,
            best_masks: None,
            leaves: 0,
        };
        search.dfs(0);
        leaves += search.leaves;
        if let Some(masks) = search.best_masks {
            best = search.best;
            best_plan = Some((tour, nodes, masks));
        }
    }

    let (tour, nodes, masks) = best_plan.ok_or(ExactError::Infeasible)?;
    let mut assign = BTreeMap::new();
    let mut drone_of = BTreeMap::new();
    for (&i, &mask) in nodes.iter().zip(&masks) {
        let members: Vec<usize> = (0..m).filter(|&k| mask & (1 << k) != 0).collect();
        let plan = table.packing.get(&(i, mask));
        for (slot, &k) in members.iter().enumerate() {
            assign.insert(k, i);
            if let Some(plan) = plan {
                drone_of.insert(k, plan[slot]);
            }
        }
    }
    let drone_of = (variant == Variant::MultiTrip).then_some(drone_of);
    let solution = Solution::evaluated(inst, mats, variant, tour, assign, drone_of)
        .expect("oracle builds feasible solutions");
    debug_assert!((solution.objective - best).abs() < 1e-9);
    Ok(ExactResult {
        solution,
        subsets_explored: explored,
        leaves,
    })
}

// ---------------------------------------------------------------------------
// LP export

/// Which model to write.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MilpModel {
    Routing(Variant),
    /// Minimum fleet size over all feasible assignments.
    UMin,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MilpOptions {
    pub model: MilpModel,
    /// Big-M, normally a known feasible objective.
    pub big_m: f64,
    /// Write the summed single-trip wait row per node instead of one row per customer.
    pub literal_wait_sum: bool,
}

/// A written LP model and the number of rows it contains.
#[derive(Clone, Debug, PartialEq)]
pub struct MilpText {
    pub text: String,
    pub constraints: usize,
}

struct LpWriter {
    body: String,
    rows: usize,
}

impl LpWriter {
    fn row(&mut self, name: &str, terms: &[(f64, String)], sense: &str, rhs: f64) {
        if terms.is_empty() {
            return;
        }
        self.rows += 1;
        let mut line = format!(" {name}:");
        for (p, (c, v)) in terms.iter().enumerate() {
            let sign = if *c < 0.0 { "-" } else if p == 0 { "" } else { "+" };
            let mag = c.abs();
            if mag == 1.0 {
                let _ = write!(line, " {sign} {v}");
            } else {
                let _ = write!(line, " {sign} {} {v}", fmt_num(mag));
            }
        }
        let _ = writeln!(self.body, "{line} {sense} {}", fmt_num(rhs));
    }
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".into()
    } else {
        s.into()
    }
}

fn x(i: usize, j: usize) -> String {
    format!("x_{i}_{j}")
}

/// Writes the model in CPLEX LP format. The depot copy is node `n`.
pub fn export_milp(inst: &Instance, mats: &TimeMatrices, opts: &MilpOptions) -> MilpText {
    let n = inst.num_truck_nodes();
    let m = inst.num_customers();
    let u = inst.num_drones;
    let big_m = opts.big_m;
    let mut w = LpWriter {
        body: String::new(),
        rows: 0,
    };
    let mut binaries: Vec<String> = Vec::new();
    let mut bounds: Vec<String> = Vec::new();
    let mut generals: Vec<String> = Vec::new();

    let objective;
    match opts.model {
        MilpModel::UMin => {
            objective = "u".to_string();
            generals.push("u".into());
            for k in 0..m {
                let terms: Vec<_> = mats.launch_sites(k).iter().map(|&i| (1.0, format!("z_{i}_{k}"))).collect();
                w.row(&format!("assign_{k}"), &terms, "=", 1.0);
            }
            for i in 1..n {
                let mut terms: Vec<_> = mats.servable(i).iter().map(|&k| (1.0, format!("z_{i}_{k}"))).collect();
                if terms.is_empty() {
                    continue;
                }
                terms.push((-1.0, "u".into()));
                w.row(&format!("cap_{i}"), &terms, "<=", 0.0);
                binaries.extend(mats.servable(i).iter().map(|&k| format!("z_{i}_{k}")));
            }
            bounds.push(" u >= 1".into());
        }
        MilpModel::Routing(variant) => {
            objective = format!("a_{n}");
            let all: Vec<usize> = (0..=n).collect();
            for &i in &all {
                for &j in &all {
                    if i != j {
                        binaries.push(x(i, j));
                    }
                }
            }
            binaries.extend((1..n).map(|i| format!("y_{i}")));
            let z = |l: usize, i: usize, k: usize| match variant {
                Variant::SingleTrip => format!("z_{i}_{k}"),
                Variant::MultiTrip => format!("z_{l}_{i}_{k}"),
            };
            let lanes = match variant {
                Variant::SingleTrip => 1,
                Variant::MultiTrip => u,
            };

            // leave the depot once, never return to it
            w.row("depot_out", &(1..=n).map(|j| (1.0, x(0, j))).collect::<Vec<_>>(), "=", 1.0);
            w.row("depot_in", &(1..=n).map(|i| (1.0, x(i, 0))).collect::<Vec<_>>(), "=", 0.0);
            // end at the copy and stay there
            w.row("copy_in", &(0..n).map(|i| (1.0, x(i, n))).collect::<Vec<_>>(), "=", 1.0);
            w.row("copy_out", &(0..n).map(|j| (1.0, x(n, j))).collect::<Vec<_>>(), "=", 0.0);
            for j in 1..n {
                let mut terms: Vec<_> = (0..n).filter(|&i| i != j).map(|i| (1.0, x(i, j))).collect();
                terms.push((-1.0, format!("y_{j}")));
                w.row(&format!("enter_{j}"), &terms, "=", 0.0);
            }
            for i in 1..n {
                let mut terms: Vec<_> = (0..n).filter(|&j| j != i).map(|j| (1.0, x(j, i))).collect();
                terms.extend((1..=n).filter(|&j| j != i).map(|j| (-1.0, x(i, j))));
                w.row(&format!("flow_{i}"), &terms, "=", 0.0);
            }
            for i in 1..n {
                w.row(
                    &format!("idle_arrival_{i}"),
                    &[(1.0, format!("a_{i}")), (-big_m, format!("y_{i}"))],
                    "<=",
                    0.0,
                );
            }
            for i in 1..n {
                for &k in mats.servable(i) {
                    for l in 0..lanes {
                        w.row(
                            &format!("launch_{}", z(l, i, k).trim_start_matches("z_")),
                            &[(1.0, z(l, i, k)), (-1.0, format!("y_{i}"))],
                            "<=",
                            0.0,
                        );
                        binaries.push(z(l, i, k));
                    }
                }
            }
            for i in 1..n {
                if mats.servable(i).is_empty() {
                    // no customer in range: never visited
                    bounds.push(format!(" y_{i} = 0"));
                    continue;
                }
                let mut terms: Vec<_> = mats
                    .servable(i)
                    .iter()
                    .flat_map(|&k| (0..lanes).map(move |l| (1.0, z(l, i, k))))
                    .collect();
                terms.push((-1.0, format!("y_{i}")));
                w.row(&format!("useful_{i}"), &terms, ">=", 0.0);
            }
            for k in 0..m {
                let terms: Vec<_> = mats
                    .launch_sites(k)
                    .iter()
                    .flat_map(|&i| (0..lanes).map(move |l| (1.0, z(l, i, k))))
                    .collect();
                w.row(&format!("assign_{k}"), &terms, "=", 1.0);
            }
            if variant == Variant::SingleTrip {
                for i in 1..n {
                    let terms: Vec<_> = mats.servable(i).iter().map(|&k| (1.0, z(0, i, k))).collect();
                    w.row(&format!("cap_{i}"), &terms, "<=", u as f64);
                }
            }
            // a_j >= a_i + s_i + t_ij x_ij - M (1 - x_ij)
            for i in 0..n {
                for j in 1..=n {
                    if j == i {
                        continue;
                    }
                    let tij = if j == n { mats.truck(i, DEPOT) } else { mats.truck(i, j) };
                    w.row(
                        &format!("time_{i}_{j}"),
                        &[
                            (1.0, format!("a_{j}")),
                            (-1.0, format!("a_{i}")),
                            (-1.0, format!("s_{i}")),
                            (-(tij + big_m), x(i, j)),
                        ],
                        ">=",
                        -big_m,
                    );
                }
            }
            for i in 1..n {
                match (variant, opts.literal_wait_sum) {
                    (Variant::SingleTrip, false) => {
                        for &k in mats.servable(i) {
                            w.row(
                                &format!("wait_{i}_{k}"),
                                &[(1.0, format!("s_{i}")), (-mats.round_trip(i, k), z(0, i, k))],
                                ">=",
                                0.0,
                            );
                        }
                    }
                    (Variant::SingleTrip, true) => {
                        if mats.servable(i).is_empty() {
                            continue;
                        }
                        let mut terms = vec![(1.0, format!("s_{i}"))];
                        terms.extend(mats.servable(i).iter().map(|&k| (-mats.round_trip(i, k), z(0, i, k))));
                        w.row(&format!("wait_{i}"), &terms, ">=", 0.0);
                    }
                    (Variant::MultiTrip, _) => {
                        if mats.servable(i).is_empty() {
                            continue;
                        }
                        for l in 0..u {
                            let mut terms = vec![(1.0, format!("s_{i}"))];
                            terms.extend(mats.servable(i).iter().map(|&k| (-mats.round_trip(i, k), z(l, i, k))));
                            w.row(&format!("wait_{l}_{i}"), &terms, ">=", 0.0);
                        }
                    }
                }
            }
        }
    }

    let mut text = String::new();
    let _ = writeln!(text, "\\ {} ({})", inst.name, model_label(opts.model));
    let _ = writeln!(text, "Minimize\n obj: {objective}\nSubject To");
    text.push_str(&w.body);
    if !bounds.is_empty() {
        text.push_str("Bounds\n");
        for b in &bounds {
            let _ = writeln!(text, "{b}");
        }
    }
    if !generals.is_empty() {
        let _ = writeln!(text, "Generals\n {}", generals.join(" "));
    }
    if !binaries.is_empty() {
        text.push_str("Binaries\n");
        for chunk in binaries.chunks(8) {
            let _ = writeln!(text, " {}", chunk.join(" "));
        }
    }
    text.push_str("End\n");
    MilpText {
        text,
        constraints: w.rows,
    }
}

fn model_label(model: MilpModel) -> &'static str {
    match model {
        MilpModel::Routing(Variant::SingleTrip) => "single-trip routing",
        MilpModel::Routing(Variant::MultiTrip) => "multi-trip routing",
        MilpModel::UMin => "minimum fleet size",
    }
}

/// Number of rows in an LP text (lines inside `Subject To` carrying a name).
pub fn count_constraints(lp: &str) -> usize {
    let mut inside = false;
    let mut rows = 0;
    for line in lp.lines() {
        let t = line.trim();
        match t {
            "Subject To" => inside = true,
            "Bounds" | "Generals" | "Binaries" | "End" => inside = false,
            _ if inside && t.contains(':') => rows += 1,
            _ => {}
        }
    }
    rows
}

// ---------------------------------------------------------------------------
// Importing solver output

#[derive(Debug, Error, PartialEq)]
pub enum ImportError {
    #[error("line {line}: expected `name = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("variable {name}: value {value} is not binary")]
    NotBinary { name: String, value: f64 },
    #[error("variable {name}: unknown index")]
    UnknownVariable { name: String },
    #[error("tour arcs do not form a path from the depot to its copy")]
    BrokenTour,
    #[error(transparent)]
    Infeasible(#[from] FeasibilityError),
}

const BINARY_TOL: f64 = 1e-6;

fn as_binary(name: &str, value: f64) -> Result<bool, ImportError> {
    if value.abs() <= BINARY_TOL {
        Ok(false)
    } else if (value - 1.0).abs() <= BINARY_TOL {
        Ok(true)
    } else {
        Err(ImportError::NotBinary {
            name: name.into(),
            value,
        })
    }
}

/// Rebuilds a solution from `name = value` lines (`#` starts a comment).
/// Variables other than `x_*` and `z_*` are ignored.
pub fn import_milp_solution(text: &str, inst: &Instance, mats: &TimeMatrices, variant: Variant) -> Result<Solution, ImportError> {
    let n = inst.num_truck_nodes();
    let m = inst.num_customers();
    let mut next: BTreeMap<usize, usize> = BTreeMap::new();
    let mut assign = BTreeMap::new();
    let mut drone_of = BTreeMap::new();
    let mut duplicates = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (name, value) = line
            .split_once('=')
            .and_then(|(a, b)| Some((a.trim(), b.trim().parse::<f64>().ok()?)))
            .ok_or_else(|| ImportError::Syntax {
                line: lineno + 1,
                text: raw.to_string(),
            })?;
        let parts: Vec<&str> = name.split('_').collect();
        let idx: Option<Vec<usize>> = parts[1..].iter().map(|p| p.parse().ok()).collect();
        let unknown = || ImportError::UnknownVariable { name: name.into() };
        match (parts[0], idx.as_deref()) {
            ("x", Some(&[i, j])) => {
                if i > n || j > n || i == j {
                    return Err(unknown());
                }
                if as_binary(name, value)? && next.insert(i, j).is_some() {
                    return Err(ImportError::BrokenTour);
                }
            }
            ("z", Some(ids)) if ids.len() == 2 || ids.len() == 3 => {
                let (l, i, k) = match *ids {
                    [i, k] => (0, i, k),
                    [l, i, k] => (l, i, k),
                    _ => unreachable!(),
                };
                if i >= n || k >= m || (ids.len() == 3 && l >= inst.num_drones) {
                    return Err(unknown());
                }
                if as_binary(name, value)? {
                    if assign.insert(k, i).is_some() {
                        duplicates.push(Violation::DuplicateAssignment { customer: k });
                    }
                    if ids.len() == 3 {
                        drone_of.insert(k, l);
                    }
                }
            }
            ("x" | "z", _) => return Err(unknown()),
            _ => {}
        }
    }
    if !duplicates.is_empty() {
        return Err(FeasibilityError(duplicates).into());
    }

    let mut tour = vec![DEPOT];
    let mut at = DEPOT;
    while let Some(&j) = next.get(&at) {
        if j == n {
            break;
        }
        if tour.contains(&j) || tour.len() > n {
            return Err(ImportError::BrokenTour);
        }
        tour.push(j);
        at = j;
    }
    if next.get(&at) != Some(&n) || next.len() != tour.len() {
        return Err(ImportError::BrokenTour);
    }
    let drone_of = (variant == Variant::MultiTrip).then_some(drone_of);
    Ok(Solution::evaluated(inst, mats, variant, tour, assign, drone_of)?)
}

/// `name = value` lines for a solution, readable by [`import_milp_solution`].
pub fn solution_assignment_text(sol: &Solution, n: usize) -> String {
    let mut out = String::new();
    let mut stops = sol.tour.clone();
    stops.push(n);
    for w in stops.windows(2) {
        let _ = writeln!(out, "{} = 1", x(w[0], w[1]));
    }
    for (&k, &i) in &sol.assign {
        match &sol.drone_of {
            Some(d) => {
                let _ = writeln!(out, "z_{}_{i}_{k} = 1", d[&k]);
            }
            None => {
                let _ = writeln!(out, "z_{i}_{k} = 1");
            }
        }
    }
    out
}
