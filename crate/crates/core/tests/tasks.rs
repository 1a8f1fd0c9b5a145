use std::sync::Arc;

use nalgebra::Vector3;

use kinoptik::assets::{panda, ur5, PANDA_EE, UR5_EE};
use kinoptik::liegroups::{Rotation3, Transform3};
use kinoptik::tasks::{
    optimize_trajectory, reachable_targets, solve_ik_beam, trajectory_scene, IkRequest, TrajRequest,
};

#[test]
fn returned_solution_is_the_best_survivor() {
    let m = Arc::new(panda());
    let link = m.link_id(PANDA_EE).unwrap();
    for (_, pose) in reachable_targets(&m, link, 10, 4) {
        let r = solve_ik_beam(&IkRequest::new(Arc::clone(&m), link, pose)).unwrap();
        assert_eq!(r.survivor_costs.len(), 4);
        assert!(r.survivor_costs.iter().all(|c| r.report.final_cost <= *c));
        assert_eq!(r.success, r.pos_error < 0.005 && r.rot_error < 0.05);
    }
}

#[test]
fn more_seeds_never_lower_success_rate() {
    let m = Arc::new(panda());
    let link = m.link_id(PANDA_EE).unwrap();
    let targets = reachable_targets(&m, link, 100, 12);
    let rate = |seeds: usize| {
        targets
            .iter()
            .filter(|(_, pose)| {
                let mut req = IkRequest::new(Arc::clone(&m), link, *pose);
                req.seeds = seeds;
                // Fewer steps make the comparison sensitive to seed coverage.
                req.total_steps = 8;
                req.prune_after = 3;
                solve_ik_beam(&req).unwrap().success
            })
            .count()
    };
    let (few, many) = (rate(8), rate(64));
    assert!(few <= many, "{few} > {many}");
}

#[test]
fn trajectory_is_equivariant_under_base_yaw() {
    let m = Arc::new(ur5());
    let link = m.link_id(UR5_EE).unwrap();
    let scene = trajectory_scene(&m, link, 5).unwrap();
    let mut req = TrajRequest::new(Arc::clone(&m), link, scene.start_pose, scene.goal_pose);
    req.world = scene.world.clone();
    let base = optimize_trajectory(&req, &scene.q_start, &scene.q_goal).unwrap();

    let theta = 0.7;
    let yaw = Transform3::from_rotation(Rotation3::from_axis_angle(&Vector3::z(), theta));
    let mut turned = req.clone();
    turned.world.obstacles = scene.world.obstacles.iter().map(|o| o.transformed(&yaw)).collect();
    let shift = |q: &[f64]| {
        let mut q = q.to_vec();
        q[0] += theta;
        q
    };
    let rotated = optimize_trajectory(&turned, &shift(&scene.q_start), &shift(&scene.q_goal)).unwrap();
    assert!(base.collision_free && rotated.collision_free);
    for (a, b) in base.trajectory.iter().zip(&rotated.trajectory) {
        let gap = shift(a).iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-6, "{gap:e}");
        let (pa, pb) = (m.forward_kinematics(a).unwrap()[link], m.forward_kinematics(b).unwrap()[link]);
        assert!((yaw.apply(&pa.translation) - pb.translation).norm() < 1e-6);
    }
}
