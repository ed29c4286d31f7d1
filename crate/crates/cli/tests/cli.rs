use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use twoecho::{Instance, RunReport, Solution};

fn twoecho(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoecho"))
        .args(args)
        .env_remove("TWOECHO_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = twoecho(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn gen(dir: &TempDir, name: &str, n: &str, m: &str, seed: &str) -> String {
    let out = path(dir, name);
    ok(&["gen", "--d", "20", "--n", n, "--m", m, "--seed", seed, "--out", &out]);
    out
}

#[test]
fn generate_solve_verify_pipeline() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "i.json", "5", "15", "7");
    ok(&["solve", "--variant", "m", "--iters", "5000", "--seed", "1", &inst]);
    let sol_path = path(&dir, "i.solution.json");
    let rep_path = path(&dir, "i.report.json");
    let sol = Solution::from_json(&fs::read_to_string(&sol_path).unwrap()).unwrap();
    let report: RunReport = serde_json::from_str(&fs::read_to_string(&rep_path).unwrap()).unwrap();
    assert!((report.objective - sol.objective).abs() < 1e-12);
    assert!((report.objective - report.wait_time - report.travel_time).abs() < 1e-9);
    assert_eq!(report.iterations, 5000);
    let stdout = ok(&["verify", &inst, &sol_path]);
    assert!(stdout.contains("feasible"));
    // every written file reads back
    let instance = Instance::from_json(&fs::read_to_string(&inst).unwrap()).unwrap();
    assert_eq!(instance.name, "20-5-15");
}

#[test]
fn tampered_solution_fails_verification() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "t.json", "5", "8", "3");
    ok(&["solve", "--variant", "s", "--iters", "50", "--seed", "2", &inst]);
    let sol_path = path(&dir, "t.solution.json");
    let mut sol = Solution::from_json(&fs::read_to_string(&sol_path).unwrap()).unwrap();
    sol.assign.remove(&0);
    fs::write(&sol_path, sol.to_json()).unwrap();
    let out = twoecho(&["verify", &inst, &sol_path]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("customer 0 is not served"));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(twoecho(&["solve", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(twoecho(&["frobnicate"]).status.code(), Some(2));
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "u.json", "4", "4", "1");
    let out = twoecho(&["solve", "--iters", "0", &inst]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn same_seed_same_bytes() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "r.json", "6", "10", "4");
    let a = path(&dir, "a.json");
    let b = path(&dir, "b.json");
    for out in [&a, &b] {
        ok(&["solve", "--iters", "300", "--seed", "9", "--threads", "1", "--out", out, &inst]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let again = gen(&dir, "r2.json", "6", "10", "4");
    assert_eq!(fs::read(&inst).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn bench_writes_one_row_per_cell() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    for (name, seed) in [("a.json", "1"), ("b.json", "2")] {
        let out = data.join(name);
        ok(&["gen", "--d", "20", "--n", "5", "--m", "8", "--seed", seed, "--out", out.to_str().unwrap()]);
    }
    let csv = path(&dir, "bench.csv");
    ok(&["bench", data.to_str().unwrap(), "--iters", "20", "--out", &csv]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("Data,u,v_d,"));
    assert!(header.contains("GRASP-m Obj (h)"));
    assert_eq!(lines.count(), 40);
}

#[test]
fn compare_tsp_rows_follow_the_grid() {
    let dir = TempDir::new().unwrap();
    let inst = path(&dir, "c.json");
    ok(&["gen", "--coincident", "--d", "12", "--n", "8", "--drones", "2", "--seed", "5", "--out", &inst]);
    let csv = path(&dir, "c.csv");
    ok(&["compare-tsp", &inst, "--iters", "30", "--out", &csv]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    for col in ["Data", "TSP", "Obj", "|V_t|", "T_d", "T_t", "Gap", "Time"] {
        assert!(header.split(',').any(|h| h == col), "missing {col}");
    }
    assert_eq!(lines.count(), 20);
}

#[test]
fn milp_export_and_import() {
    let dir = TempDir::new().unwrap();
    let inst_path = path(&dir, "e.json");
    ok(&["gen", "--d", "10", "--n", "3", "--m", "1", "--seed", "6", "--out", &inst_path]);
    for model in ["s", "m", "umin"] {
        let lp = path(&dir, &format!("e-{model}.lp"));
        let stdout = ok(&["export-milp", &inst_path, "--model", model, "--out", &lp]);
        let text = fs::read_to_string(&lp).unwrap();
        assert!(text.starts_with("\\ "));
        assert!(text.contains("Subject To") && text.trim_end().ends_with("End"));
        assert!(stdout.contains("constraints"));
    }
    // solve exactly, write the optimum as solver values, read it back
    let opt = path(&dir, "opt.json");
    ok(&["exact", &inst_path, "--variant", "s", "--out", &opt]);
    let sol = Solution::from_json(&fs::read_to_string(&opt).unwrap()).unwrap();
    let inst = Instance::from_json(&fs::read_to_string(&inst_path).unwrap()).unwrap();
    let values = twoecho::exact::solution_assignment_text(&sol, inst.num_truck_nodes());
    let values_path = path(&dir, "values.txt");
    fs::write(&values_path, values).unwrap();
    let back = path(&dir, "back.json");
    ok(&["import-milp-solution", &inst_path, &values_path, "--variant", "s", "--out", &back]);
    let imported = Solution::from_json(&fs::read_to_string(&back).unwrap()).unwrap();
    assert!((imported.objective - sol.objective).abs() < 1e-12);

    fs::write(&values_path, "x_0_1 = 0.4\n").unwrap();
    let out = twoecho(&["import-milp-solution", &inst_path, &values_path]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("x_0_1"));
}

#[test]
fn trace_lists_accepted_moves() {
    let dir = TempDir::new().unwrap();
    let inst = gen(&dir, "tr.json", "6", "10", "8");
    let out = twoecho(&["solve", "--iters", "5", "--trace", &inst]);
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.lines().all(|l| l.starts_with("iter ")));
    assert!(Path::new(&path(&dir, "tr.solution.json")).exists());
}
