//! `twoecho`: generate, solve, verify and benchmark truck-and-drone instances.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use twoecho::baseline::{compare_mode, gap_percent, solve_tsp};
use twoecho::exact::{
    count_constraints, export_milp, import_milp_solution, solve_exact, ExactError, ExactLimits, ImportError,
    MilpModel, MilpOptions,
};
use twoecho::grasp::{run_traced, run_with, GraspConfig, GraspError, DEFAULT_ITERATIONS};
use twoecho::instancegen::{
    compute_u_min, generate, generate_coincident, GenConfig, DEFAULT_ENDURANCE, DEFAULT_TRUCK_SPEED, DRONE_SPEEDS,
    REFERENCE_DRONE_SPEED,
};
use twoecho::model::{check_feasibility, evaluate, Instance, RunReport, Solution, TimeMatrices, Variant};

#[derive(Parser)]
#[command(name = "twoecho", version, about = "Truck-and-drone two-echelon routing solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance.
    Gen(GenArgs),
    /// Run GRASP on an instance.
    Solve(SolveArgs),
    /// Solve a small instance to proven optimality.
    Exact(ExactArgs),
    /// Write the MILP model in CPLEX LP format.
    ExportMilp(ExportArgs),
    /// Rebuild a solution from `name = value` solver output.
    ImportMilpSolution(ImportArgs),
    /// Compare multi-trip GRASP with the truck-only tour.
    CompareTsp(CompareArgs),
    /// Run the fleet-size by drone-speed grid over a directory of instances.
    Bench(BenchArgs),
    /// Check a solution file against an instance.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Side of the square (km).
    #[arg(long)]
    d: f64,
    /// Truck nodes including the depot (all points with --coincident).
    #[arg(long)]
    n: usize,
    /// Customers (ignored with --coincident).
    #[arg(long, default_value_t = 0)]
    m: usize,
    #[arg(long, default_value_t = REFERENCE_DRONE_SPEED)]
    drone_speed: f64,
    #[arg(long, default_value_t = DEFAULT_TRUCK_SPEED)]
    truck_speed: f64,
    /// Drone endurance (hours).
    #[arg(long, default_value_t = DEFAULT_ENDURANCE)]
    endurance: f64,
    /// Drones per node; defaults to u_min.
    #[arg(long)]
    drones: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Every point is both a truck node and a customer.
    #[arg(long)]
    coincident: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    #[value(alias = "single")]
    S,
    #[value(alias = "multi")]
    M,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::S => Variant::SingleTrip,
            VariantArg::M => Variant::MultiTrip,
        }
    }
}

#[derive(Args)]
struct Overrides {
    /// Override the instance's drones per node.
    #[arg(long)]
    drones: Option<usize>,
    /// Override the instance's drone speed (km/h).
    #[arg(long)]
    drone_speed: Option<f64>,
}

impl Overrides {
    fn apply(&self, mut inst: Instance) -> Result<Instance> {
        if let Some(u) = self.drones {
            inst = inst.with_drones(u);
        }
        if let Some(s) = self.drone_speed {
            inst = inst.with_drone_speed(s);
        }
        inst.validate()?;
        Ok(inst)
    }
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "m")]
    variant: VariantArg,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "TWOECHO_THREADS", default_value_t = 1)]
    threads: usize,
    /// Wall-clock limit in seconds, checked between iterations.
    #[arg(long)]
    time_limit: Option<f64>,
    #[command(flatten)]
    overrides: Overrides,
    /// Solution path (default `<instance stem>.solution.json`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report path (default `<instance stem>.report.json`).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print every accepted local-search move to stderr.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct ExactArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "m")]
    variant: VariantArg,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    #[value(alias = "single")]
    S,
    #[value(alias = "multi")]
    M,
    Umin,
}

#[derive(Args)]
struct ExportArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "m")]
    model: ModelArg,
    /// Big-M constant; defaults to a short GRASP run's objective.
    #[arg(long)]
    big_m: Option<f64>,
    /// Emit one summed wait row per node instead of one row per customer.
    #[arg(long)]
    literal_eq13: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ImportArgs {
    instance: PathBuf,
    values: PathBuf,
    #[arg(long, value_enum, default_value = "m")]
    variant: VariantArg,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    instances: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = DRONE_SPEEDS.to_vec())]
    speeds: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![2, 3, 4, 5])]
    drones: Vec<usize>,
    #[arg(long, default_value_t = twoecho::grasp::COMPARISON_ITERATIONS)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of instance JSON files.
    dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "TWOECHO_THREADS", default_value_t = 1)]
    threads: usize,
    /// Also run the exact oracle where the instance is small enough.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    solution: PathBuf,
}

/// Exit status 1: the run completed but found the solution infeasible.
#[derive(Debug)]
struct Infeasible(String);

impl std::fmt::Display for Infeasible {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Infeasible {}

/// Exit status 2: arguments parsed but make no sense together.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Exact(a) => cmd_exact(a),
        Command::ExportMilp(a) => cmd_export(a),
        Command::ImportMilpSolution(a) => cmd_import(a),
        Command::CompareTsp(a) => cmd_compare(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn read_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Instance::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn sibling(instance: &Path, suffix: &str) -> PathBuf {
    let stem = instance.file_stem().and_then(|s| s.to_str()).unwrap_or("instance");
    instance.with_file_name(format!("{stem}.{suffix}"))
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let inst = if a.coincident {
        let mut inst = generate_coincident(a.d, a.n, a.drone_speed, a.drones.unwrap_or(1), a.seed)?;
        inst.truck_speed = a.truck_speed;
        inst.endurance = a.endurance;
        inst
    } else {
        let mut cfg = GenConfig::new(a.d, a.n, a.m, a.seed);
        cfg.drone_speed = a.drone_speed;
        cfg.truck_speed = a.truck_speed;
        cfg.endurance = a.endurance;
        cfg.num_drones = a.drones;
        generate(&cfg)?
    };
    inst.validate()?;
    write_file(&a.out, &inst.to_json())?;
    println!(
        "{}: {} truck nodes, {} customers, {} drones",
        inst.name,
        inst.num_truck_nodes(),
        inst.num_customers(),
        inst.num_drones
    );
    Ok(())
}

fn grasp_error(e: GraspError) -> anyhow::Error {
    match e {
        GraspError::NoSolution { .. } => Infeasible(e.to_string()).into(),
        _ => Usage(e.to_string()).into(),
    }
}

fn cmd_solve(a: SolveArgs) -> Result<()> {
    let inst = a.overrides.apply(read_instance(&a.instance)?)?;
    let mats = TimeMatrices::new(&inst);
    let cfg = GraspConfig {
        n_max: a.iters,
        seed: a.seed,
        variant: a.variant.into(),
        time_limit: a.time_limit.map(Duration::from_secs_f64),
        threads: a.threads,
    };
    let out = if a.trace {
        if a.threads > 1 {
            return Err(Usage("--trace needs --threads 1".into()).into());
        }
        let stderr = std::io::stderr();
        let mut lock = stderr.lock();
        run_traced(&inst, &mats, &cfg, &mut |it, op, mv, d| {
            let _ = writeln!(lock, "iter {it} {op} {mv:?} delta {d:.9}");
        })
    } else {
        run_with(&inst, &mats, &cfg)
    }
    .map_err(grasp_error)?;

    let sol_path = a.out.unwrap_or_else(|| sibling(&a.instance, "solution.json"));
    let rep_path = a.report.unwrap_or_else(|| sibling(&a.instance, "report.json"));
    write_file(&sol_path, &out.best.to_json())?;
    write_file(&rep_path, &serde_json::to_string_pretty(&out.report)?)?;
    print_report(&out.report);
    Ok(())
}

fn print_report(r: &RunReport) {
    println!(
        "{} {} u={} vd={}: Obj {:.3} h (T_d {:.3}, T_t {:.3}), |V_t| {}, {} iterations ({} failed), {:.2} s",
        r.instance,
        r.variant.short(),
        r.num_drones,
        r.drone_speed,
        r.objective,
        r.wait_time,
        r.travel_time,
        r.visited_nodes,
        r.iterations,
        r.failed_iterations,
        r.wall_time
    );
}

fn cmd_exact(a: ExactArgs) -> Result<()> {
    let inst = a.overrides.apply(read_instance(&a.instance)?)?;
    let mats = TimeMatrices::new(&inst);
    let started = Instant::now();
    let res = match solve_exact(&inst, &mats, a.variant.into(), &ExactLimits::default()) {
        Ok(r) => r,
        Err(e @ ExactError::TooLarge { .. }) => return Err(Usage(e.to_string()).into()),
        Err(e @ ExactError::Infeasible) => return Err(Infeasible(e.to_string()).into()),
    };
    let eval = evaluate(&res.solution, &inst, &mats)?;
    let mut report = RunReport::new(&inst, &res.solution, &eval);
    report.wall_time = started.elapsed().as_secs_f64();
    if let Some(path) = &a.out {
        write_file(path, &res.solution.to_json())?;
    }
    print_report(&report);
    println!(
        "optimal: {} node subsets searched, {} complete assignments",
        res.subsets_explored, res.leaves
    );
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<()> {
    let inst = a.overrides.apply(read_instance(&a.instance)?)?;
    let mats = TimeMatrices::new(&inst);
    let model = match a.model {
        ModelArg::S => MilpModel::Routing(Variant::SingleTrip),
        ModelArg::M => MilpModel::Routing(Variant::MultiTrip),
        ModelArg::Umin => MilpModel::UMin,
    };
    let big_m = match (a.big_m, model) {
        (Some(m), _) => m,
        (None, MilpModel::UMin) => 0.0,
        (None, MilpModel::Routing(variant)) => {
            let cfg = GraspConfig::new(variant, 0).iterations(200);
            run_with(&inst, &mats, &cfg).map_err(grasp_error)?.best.objective
        }
    };
    let lp = export_milp(
        &inst,
        &mats,
        &MilpOptions {
            model,
            big_m,
            literal_wait_sum: a.literal_eq13,
        },
    );
    debug_assert_eq!(count_constraints(&lp.text), lp.constraints);
    write_file(&a.out, &lp.text)?;
    println!("{} constraints written to {}", lp.constraints, a.out.display());
    Ok(())
}

fn cmd_import(a: ImportArgs) -> Result<()> {
    let inst = a.overrides.apply(read_instance(&a.instance)?)?;
    let mats = TimeMatrices::new(&inst);
    let text = fs::read_to_string(&a.values).with_context(|| format!("reading {}", a.values.display()))?;
    let sol = match import_milp_solution(&text, &inst, &mats, a.variant.into()) {
        Ok(s) => s,
        Err(e @ ImportError::Infeasible(_)) => return Err(Infeasible(e.to_string()).into()),
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = &a.out {
        write_file(path, &sol.to_json())?;
    }
    println!("objective {:.6} h", sol.objective);
    Ok(())
}

#[derive(Serialize)]
struct CompareRow {
    #[serde(rename = "Data")]
    data: String,
    #[serde(rename = "v_d")]
    drone_speed: f64,
    u: usize,
    #[serde(rename = "TSP")]
    tsp: f64,
    #[serde(rename = "TSP exact")]
    tsp_exact: bool,
    #[serde(rename = "Obj")]
    obj: f64,
    #[serde(rename = "|V_t|")]
    visited: usize,
    #[serde(rename = "T_d")]
    wait: f64,
    #[serde(rename = "T_t")]
    travel: f64,
    #[serde(rename = "Gap")]
    gap: f64,
    #[serde(rename = "Time")]
    time: f64,
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    if a.instances.is_empty() {
        return Err(Usage("no instance files given".into()).into());
    }
    let mut csv = csv::Writer::from_path(&a.out)?;
    for path in &a.instances {
        let inst = read_instance(path)?;
        let cfg = GraspConfig::new(Variant::MultiTrip, a.seed).iterations(a.iters);
        let rows = compare_mode(&inst, &a.speeds, &a.drones, &cfg).map_err(|e| Infeasible(e.to_string()))?;
        for r in rows {
            csv.serialize(CompareRow {
                data: r.instance.clone(),
                drone_speed: r.drone_speed,
                u: r.num_drones,
                tsp: r.tsp_objective.unwrap_or(f64::NAN),
                tsp_exact: r.tsp_exact.unwrap_or(false),
                obj: r.objective,
                visited: r.visited_nodes,
                wait: r.wait_time,
                travel: r.travel_time,
                gap: r.gap.unwrap_or(f64::NAN),
                time: r.wall_time,
            })?;
        }
    }
    csv.flush()?;
    Ok(())
}

fn instance_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".json") && !name.ends_with(".solution.json") && !name.ends_with(".report.json")
        })
        .collect();
    files.sort();
    Ok(files)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let files = instance_files(&a.dir)?;
    if files.is_empty() {
        return Err(Usage(format!("no instance files in {}", a.dir.display())).into());
    }
    let methods: Vec<(&str, Option<Variant>)> = {
        let mut m = vec![("GRASP-s", Some(Variant::SingleTrip)), ("GRASP-m", Some(Variant::MultiTrip))];
        if a.exact {
            m.push(("Exact-s", None));
            m.push(("Exact-m", None));
        }
        m
    };
    let mut header = vec!["Data".to_string(), "u".into(), "v_d".into()];
    for (name, _) in &methods {
        for col in ["Time (s)", "Time (min)", "Obj (h)", "Obj (min)"] {
            header.push(format!("{name} {col}"));
        }
    }
    let mut csv = csv::Writer::from_path(&a.out)?;
    csv.write_record(&header)?;
    let mut rows = 0;
    for path in files {
        let base = read_instance(&path)?;
        let u_min = compute_u_min(&TimeMatrices::new(&base.with_drone_speed(REFERENCE_DRONE_SPEED)))?.u;
        for u in u_min..u_min + 4 {
            for speed in DRONE_SPEEDS {
                let inst = base.with_drones(u).with_drone_speed(speed);
                let mats = TimeMatrices::new(&inst);
                let mut record = vec![inst.name.clone(), u.to_string(), speed.to_string()];
                for (name, variant) in &methods {
                    let started = Instant::now();
                    let obj = match variant {
                        Some(v) => {
                            let cfg = GraspConfig::new(*v, a.seed).iterations(a.iters).threads(a.threads);
                            run_with(&inst, &mats, &cfg).ok().map(|o| o.best.objective)
                        }
                        None => {
                            let v = if name.ends_with('s') { Variant::SingleTrip } else { Variant::MultiTrip };
                            solve_exact(&inst, &mats, v, &ExactLimits::default())
                                .ok()
                                .map(|r| r.solution.objective)
                        }
                    };
                    let secs = started.elapsed().as_secs_f64();
                    let ran = obj.is_some();
                    record.push(if ran { format!("{secs:.4}") } else { String::new() });
                    record.push(if ran { format!("{:.4}", secs / 60.0) } else { String::new() });
                    record.push(fmt_opt(obj));
                    record.push(fmt_opt(obj.map(|h| h * 60.0)));
                }
                csv.write_record(&record)?;
                rows += 1;
            }
        }
    }
    csv.flush()?;
    println!("{rows} rows written to {}", a.out.display());
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<()> {
    let inst = read_instance(&a.instance)?;
    let mats = TimeMatrices::new(&inst);
    let text = fs::read_to_string(&a.solution).with_context(|| format!("reading {}", a.solution.display()))?;
    let sol = Solution::from_json(&text).with_context(|| format!("parsing {}", a.solution.display()))?;
    let violations = check_feasibility(&sol, &inst, &mats);
    if !violations.is_empty() {
        for v in &violations {
            println!("violation: {v}");
        }
        bail!(Infeasible(format!("{} violation(s)", violations.len())));
    }
    let eval = evaluate(&sol, &inst, &mats)?;
    if (eval.objective - sol.objective).abs() > 1e-6 {
        println!(
            "warning: stored objective {:.9} differs from recomputed {:.9}",
            sol.objective, eval.objective
        );
    }
    let tsp = solve_tsp(&inst.truck_nodes, inst.truck_speed);
    println!(
        "feasible: Obj {:.6} h = T_d {:.6} + T_t {:.6}, |V_t| {}",
        eval.objective,
        eval.wait,
        eval.travel,
        sol.visited_nodes()
    );
    if let Ok(g) = gap_percent(tsp.objective, eval.objective) {
        println!(
            "truck-only tour {:.6} h ({}), gap {g:.2}%",
            tsp.objective,
            if tsp.exact { "optimal" } else { "heuristic" }
        );
    }
    Ok(())
}
