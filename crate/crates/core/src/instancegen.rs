//! Random instance generation and the minimum fleet size `u_min`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{GeneratorInfo, Instance, Point, TimeMatrices, TIME_EPS};

pub const DEFAULT_TRUCK_SPEED: f64 = 40.0;
pub const DEFAULT_ENDURANCE: f64 = 0.5;
/// Slowest drone speed of the experiment grid; reachability is filtered at it.
pub const REFERENCE_DRONE_SPEED: f64 = 40.0;
pub const DRONE_SPEEDS: [f64; 5] = [40.0, 50.0, 60.0, 70.0, 80.0];
pub const MAX_DRAWS_PER_CUSTOMER: usize = 1_000_000;
pub const RNG_ALGORITHM: &str = "chacha8";

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
    #[error("customer {customer} still unreachable after {draws} draws")]
    Impossible { customer: usize, draws: usize },
    #[error("customer {customer} cannot be served from any launch node")]
    Infeasible { customer: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub d: f64,
    /// Truck nodes including the depot.
    pub n_truck: usize,
    pub m_customers: usize,
    pub truck_speed: f64,
    pub drone_speed: f64,
    pub endurance: f64,
    pub seed: u64,
    pub reference_drone_speed: f64,
    /// Fleet size written into the instance; `None` uses `u_min`.
    pub num_drones: Option<usize>,
}

impl GenConfig {
    pub fn new(d: f64, n_truck: usize, m_customers: usize, seed: u64) -> Self {
        GenConfig {
            d,
            n_truck,
            m_customers,
            truck_speed: DEFAULT_TRUCK_SPEED,
            drone_speed: REFERENCE_DRONE_SPEED,
            endurance: DEFAULT_ENDURANCE,
            seed,
            reference_drone_speed: REFERENCE_DRONE_SPEED,
            num_drones: None,
        }
    }

    fn check(&self) -> Result<(), GenError> {
        if !(self.d > 0.0) || !self.d.is_finite() {
            return Err(GenError::InvalidConfig(format!("d must be positive, got {}", self.d)));
        }
        if self.n_truck == 0 || self.m_customers == 0 {
            return Err(GenError::InvalidConfig("node counts must be at least 1".into()));
        }
        if !(self.truck_speed > 0.0)
            || self.drone_speed < self.truck_speed
            || self.reference_drone_speed <= 0.0
            || self.drone_speed < self.reference_drone_speed
        {
            return Err(GenError::InvalidConfig(
                "speeds must satisfy drone >= reference > 0 and drone >= truck > 0".into(),
            ));
        }
        if !(self.endurance > 0.0) {
            return Err(GenError::InvalidConfig("endurance must be positive".into()));
        }
        if self.num_drones == Some(0) {
            return Err(GenError::InvalidConfig("at least one drone is required".into()));
        }
        Ok(())
    }
}

/// `"d-n-m"`, with `d` printed without a fractional part when integral.
pub fn instance_name(d: f64, parts: &[usize]) -> String {
    let mut name = if d.fract() == 0.0 {
        format!("{}", d as i64)
    } else {
        format!("{d}")
    };
    for p in parts {
        name.push('-');
        name.push_str(&p.to_string());
    }
    name
}

fn uniform_point(rng: &mut ChaCha8Rng, d: f64) -> Point {
    Point::new(rng.gen_range(0.0..=d), rng.gen_range(0.0..=d))
}

/// Draws truck nodes uniformly, then customers uniformly with rejection until
/// each can be served from a non-depot truck node at the reference speed.
pub fn generate(cfg: &GenConfig) -> Result<Instance, GenError> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let truck_nodes: Vec<Point> = (0..cfg.n_truck).map(|_| uniform_point(&mut rng, cfg.d)).collect();

    let reachable = |c: &Point| {
        truck_nodes
            .iter()
            .skip(1)
            .any(|v| 2.0 * v.euclidean(c) / cfg.reference_drone_speed <= cfg.endurance + TIME_EPS)
    };
    let mut customers = Vec::with_capacity(cfg.m_customers);
    for k in 0..cfg.m_customers {
        let mut draws = 0;
        loop {
            if draws == MAX_DRAWS_PER_CUSTOMER {
                return Err(GenError::Impossible { customer: k, draws });
            }
            draws += 1;
            let c = uniform_point(&mut rng, cfg.d);
            if reachable(&c) {
                customers.push(c);
                break;
            }
        }
    }

    let mut inst = Instance {
        name: instance_name(cfg.d, &[cfg.n_truck, cfg.m_customers]),
        d: cfg.d,
        truck_speed: cfg.truck_speed,
        drone_speed: cfg.drone_speed,
        endurance: cfg.endurance,
        num_drones: 1,
        truck_nodes,
        customers,
        generator: Some(GeneratorInfo {
            algorithm: RNG_ALGORITHM.to_string(),
            seed: cfg.seed,
        }),
    };
    inst.num_drones = match cfg.num_drones {
        Some(u) => u,
        None => u_min_at_speed(&inst, cfg.reference_drone_speed)?.u,
    };
    Ok(inst)
}

/// Instance whose customers sit on the non-depot truck nodes, as used for
/// the truck-only comparison. Named `"d-n_total"`.
pub fn generate_coincident(
    d: f64,
    n_total: usize,
    drone_speed: f64,
    num_drones: usize,
    seed: u64,
) -> Result<Instance, GenError> {
    if n_total < 2 {
        return Err(GenError::InvalidConfig("need the depot and at least one customer".into()));
    }
    let mut cfg = GenConfig::new(d, n_total, 1, seed);
    cfg.drone_speed = drone_speed;
    cfg.num_drones = Some(num_drones);
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Point> = (0..n_total).map(|_| uniform_point(&mut rng, d)).collect();
    Ok(Instance {
        name: instance_name(d, &[n_total]),
        d,
        truck_speed: DEFAULT_TRUCK_SPEED,
        drone_speed,
        endurance: DEFAULT_ENDURANCE,
        num_drones,
        customers: points[1..].to_vec(),
        truck_nodes: points,
        generator: Some(GeneratorInfo {
            algorithm: RNG_ALGORITHM.to_string(),
            seed,
        }),
    })
}

/// Smallest per-node drone count admitting a feasible assignment, with a
/// witness (`witness[k]` is the launch node of customer `k`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UMin {
    pub u: usize,
    pub witness: Vec<usize>,
}

/// Assigns every customer to a launch node with at most `capacity` customers
/// per node, if possible. Augmenting-path capacitated bipartite matching.
pub fn assignment_with_capacity(mats: &TimeMatrices, capacity: usize) -> Option<Vec<usize>> {
    let n = mats.num_truck_nodes();
    let m = mats.num_customers();
    let mut owner: Vec<Option<usize>> = vec![None; m];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];

    fn augment(
        k: usize,
        mats: &TimeMatrices,
        capacity: usize,
        seen: &mut [bool],
        owner: &mut [Option<usize>],
        members: &mut [Vec<usize>],
    ) -> bool {
        for &i in mats.launch_sites(k) {
            if seen[i] {
                continue;
            }
            seen[i] = true;
            if members[i].len() < capacity {
                members[i].push(k);
                owner[k] = Some(i);
                return true;
            }
            for slot in 0..members[i].len() {
                let other = members[i][slot];
                if augment(other, mats, capacity, seen, owner, members) {
                    // `other` moved elsewhere; take its slot.
                    let pos = members[i].iter().position(|&c| c == other).expect("member");
                    members[i][pos] = k;
                    owner[k] = Some(i);
                    return true;
                }
            }
        }
        false
    }

    for k in 0..m {
        let mut seen = vec![false; n];
        if !augment(k, mats, capacity, &mut seen, &mut owner, &mut members) {
            return None;
        }
    }
    Some(owner.into_iter().map(|o| o.expect("matched")).collect())
}

/// Binary search on the capacity with a matching feasibility test.
pub fn compute_u_min(mats: &TimeMatrices) -> Result<UMin, GenError> {
    let m = mats.num_customers();
    if let Some(k) = (0..m).find(|&k| mats.launch_sites(k).is_empty()) {
        return Err(GenError::Infeasible { customer: k });
    }
    let (mut lo, mut hi) = (1, m.max(1));
    let mut witness = assignment_with_capacity(mats, hi).expect("every customer reachable");
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match assignment_with_capacity(mats, mid) {
            Some(w) => {
                hi = mid;
                witness = w;
            }
            None => lo = mid + 1,
        }
    }
    Ok(UMin { u: hi, witness })
}

/// `u_min` of the instance geometry at the given drone speed.
pub fn u_min_at_speed(inst: &Instance, drone_speed: f64) -> Result<UMin, GenError> {
    compute_u_min(&TimeMatrices::new(&inst.with_drone_speed(drone_speed)))
}
