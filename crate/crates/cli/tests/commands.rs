mod common;

use std::sync::Arc;

use common::{assert_valid, bin, pose_json, run, stdout_json};
use kinoptik::assets;
use kinoptik::tasks::reachable_targets;

/// Bundled Panda written out as files, so the URDF path is exercised.
fn panda_files(dir: &std::path::Path) -> (String, String) {
    let urdf = dir.join("panda.urdf");
    let sidecar = dir.join("panda.json");
    std::fs::write(&urdf, assets::PANDA_URDF).unwrap();
    std::fs::write(&sidecar, assets::PANDA_SIDECAR).unwrap();
    (urdf.display().to_string(), sidecar.display().to_string())
}

fn reachable_pose(seed: u64) -> String {
    let m = Arc::new(assets::panda());
    let link = m.link_id(assets::PANDA_EE).unwrap();
    pose_json(&reachable_targets(&m, link, 1, seed)[0].1)
}

#[test]
fn solve_ik_reaches_fk_pose() {
    let dir = tempfile::tempdir().unwrap();
    let (urdf, sidecar) = panda_files(dir.path());
    let target = reachable_pose(11);
    let out = run(&["solve-ik", "--urdf", &urdf, "--sidecar", &sidecar, "--link", "panda_hand", "--target", &target]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_valid("ik_result.schema.json", &doc);
    assert_eq!(doc["success"], true);
    assert!(doc["pos_error"].as_f64().unwrap() < 0.005);
}

#[test]
fn solve_ik_is_deterministic_across_workers() {
    let target = reachable_pose(4);
    let args = ["solve-ik", "--robot", "panda", "--target", &target, "--rng-seed", "7"];
    let a = bin().args(args).env("KINOPTIK_WORKERS", "1").output().unwrap();
    let b = bin().args(args).env("KINOPTIK_WORKERS", "3").output().unwrap();
    let c = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn unreachable_target_exits_two() {
    let out = run(&["solve-ik", "--robot", "panda", "--target", r#"{"wxyz":[1,0,0,0],"pos":[4,0,0]}"#]);
    assert_eq!(out.status.code(), Some(2));
    let doc = stdout_json(&out);
    assert_valid("ik_result.schema.json", &doc);
    assert_eq!(doc["success"], false);
}

#[test]
fn mobile_flag_moves_base() {
    let out = run(&["solve-ik", "--robot", "panda", "--mobile", "--target", r#"{"wxyz":[0,1,0,0],"pos":[2.0,1.0,0.4]}"#]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_valid("ik_result.schema.json", &doc);
    assert!(doc["base"]["pos"][0].as_f64().unwrap() > 0.5);
}

#[test]
fn missing_urdf_exits_one_naming_path() {
    let out = run(&["solve-ik", "--urdf", "/no/such/robot.urdf", "--link", "ee", "--target", r#"{"wxyz":[1,0,0,0],"pos":[0,0,0]}"#]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/robot.urdf"));
}

#[test]
fn malformed_inputs_exit_one() {
    for args in [
        vec!["solve-ik", "--robot", "panda", "--target", "{\"pos\":[0,0,0]}"],
        vec!["solve-ik", "--robot", "panda"],
        vec!["solve-ik", "--robot", "nao", "--target", r#"{"wxyz":[1,0,0,0],"pos":[0,0,0]}"#],
        vec!["solve-ik", "--robot", "panda", "--link", "nope", "--target", r#"{"wxyz":[1,0,0,0],"pos":[0,0,0]}"#],
        vec!["no-such-command"],
        vec!["serve", "--robot", "panda", "--task", "traj"],
    ] {
        assert_eq!(run(&args).status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn problem_file_drives_solve() {
    let dir = tempfile::tempdir().unwrap();
    panda_files(dir.path());
    let problem: serde_json::Value = serde_json::from_str(&format!(
        r#"{{"task":"ik","urdf":"panda.urdf","sidecar":"panda.json","link":"panda_hand",
            "target":{},"weights":{{"rest":0.01}},"options":{{"rng_seed":3,"seeds":16}}}}"#,
        reachable_pose(2)
    ))
    .unwrap();
    assert_valid("problem.schema.json", &problem);
    let path = dir.path().join("problem.json");
    std::fs::write(&path, problem.to_string()).unwrap();
    let out = run(&["solve-ik", "--problem", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_valid("ik_result.schema.json", &stdout_json(&out));
    // A trajectory problem is not an IK problem.
    std::fs::write(&path, r#"{"task":"traj","robot":"panda"}"#).unwrap();
    assert_eq!(run(&["solve-ik", "--problem", path.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn plan_traj_scene_is_collision_free() {
    let out = run(&["plan-traj", "--robot", "ur5", "--scene", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_valid("traj_result.schema.json", &doc);
    assert!(doc["min_world_distance"].as_f64().unwrap() >= 0.0);
    assert!(doc["min_swept_distance"].as_f64().unwrap() >= 0.0);
    assert_eq!(doc["trajectory"].as_array().unwrap().len(), 32);
}

#[test]
fn plan_traj_with_world_file() {
    let dir = tempfile::tempdir().unwrap();
    let world = serde_json::json!({"obstacles":[{"type":"sphere","center":[3.0,3.0,3.0],"radius":0.1}]});
    assert_valid("world.schema.json", &world);
    let path = dir.path().join("world.json");
    std::fs::write(&path, world.to_string()).unwrap();
    let m = Arc::new(assets::ur5());
    let link = m.link_id(assets::UR5_EE).unwrap();
    let t = reachable_targets(&m, link, 2, 8);
    let out = run(&[
        "plan-traj", "--robot", "ur5", "--start", &pose_json(&t[0].1), "--goal", &pose_json(&t[1].1),
        "--world", path.to_str().unwrap(), "--timesteps", "12", "--dt", "0.2",
    ]);
    assert_ne!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_valid("traj_result.schema.json", &doc);
    assert_eq!(doc["trajectory"].as_array().unwrap().len(), 12);
    assert_eq!(doc["dt"], 0.2);
}

#[test]
fn plan_traj_rejects_short_horizon() {
    let out = run(&["plan-traj", "--robot", "ur5", "--scene", "0", "--timesteps", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("5 timesteps"));
}

fn benchmark(spec: serde_json::Value) -> (std::process::Output, serde_json::Value) {
    assert_valid("benchmark_spec.schema.json", &spec);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.json");
    std::fs::write(&path, spec.to_string()).unwrap();
    let out = run(&["benchmark", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_valid("benchmark_result.schema.json", &doc);
    (out, doc)
}

#[test]
fn ik_benchmark_batch_100() {
    let (out, doc) = benchmark(serde_json::json!({"task":"ik","robot":"panda","num_targets":100,"batch_sizes":[10,100]}));
    for row in doc["rows"].as_array().unwrap() {
        assert_eq!(row["success_rate"], 1.0);
        assert!(row["pos_error"]["p98"].as_f64().unwrap() < 0.005);
    }
    let table = String::from_utf8_lossy(&out.stderr);
    assert!(table.contains("p98 pos [mm]") && table.contains("informational"));
}

#[test]
fn mobile_benchmark_100_targets() {
    let (_, doc) = benchmark(serde_json::json!({"task":"ik_mobile","robot":"panda","num_targets":100,"rng_seed":5}));
    let rows = doc["rows"].as_array().unwrap();
    let rate = |base: &str| rows.iter().find(|r| r["base"] == base).unwrap()["success_rate"].as_f64().unwrap();
    assert_eq!(rate("optimized"), 1.0);
    assert!(rate("static") < 0.5);
}

#[test]
fn traj_benchmark_rows_per_scene() {
    let (_, doc) = benchmark(serde_json::json!({"task":"traj","robot":"ur5","num_targets":2}));
    assert_eq!(doc["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn benchmark_rejects_zero_targets() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.json");
    std::fs::write(&path, r#"{"task":"ik","robot":"panda","num_targets":0}"#).unwrap();
    let out = run(&["benchmark", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("num_targets"));
}

#[test]
fn benchmark_json_ignoring_timing_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.json");
    std::fs::write(&path, r#"{"task":"ik","robot":"panda","num_targets":6,"batch_sizes":[2]}"#).unwrap();
    let strip = |out: std::process::Output| {
        let mut v = stdout_json(&out);
        v.as_object_mut().unwrap().remove("timing_informational");
        v
    };
    let a = strip(bin().args(["benchmark", path.to_str().unwrap()]).env("KINOPTIK_WORKERS", "1").output().unwrap());
    let b = strip(bin().args(["benchmark", path.to_str().unwrap()]).env("KINOPTIK_WORKERS", "4").output().unwrap());
    assert_eq!(a, b);
}
