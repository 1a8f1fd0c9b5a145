use nalgebra::{DVector, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kinoptik::assets::{panda, planar_2r, ur5};
use kinoptik::robot::RobotModel;
use kinoptik::tasks::sample_config;

const MIMIC_URDF: &str = r#"<robot name="mimic">
    <link name="l0"/><link name="l1"/><link name="l2"/><link name="l3"/>
    <joint name="a" type="revolute"><parent link="l0"/><child link="l1"/>
      <axis xyz="0 0 1"/><limit lower="-2" upper="2"/></joint>
    <joint name="b" type="revolute"><parent link="l1"/><child link="l2"/>
      <origin xyz="0.5 0 0" rpy="0.3 0 0"/><axis xyz="0 1 1"/><limit lower="-2" upper="2"/>
      <mimic joint="a" multiplier="2" offset="0.1"/></joint>
    <joint name="s" type="prismatic"><parent link="l2"/><child link="l3"/>
      <origin xyz="0.4 0.1 0"/><axis xyz="1 0 0"/><limit lower="-1" upper="1"/></joint>
</robot>"#;

fn robots() -> Vec<RobotModel> {
    vec![planar_2r(), panda(), ur5(), RobotModel::from_urdf(MIMIC_URDF).unwrap()]
}

/// Body twist of `FK(q)⁻¹ ∘ FK(q + h·dq)` per unit `h`, by central difference.
fn numeric_body_velocity(m: &RobotModel, q: &DVector<f64>, dq: &DVector<f64>, link: usize, h: f64) -> Vector6<f64> {
    let fk = |x: DVector<f64>| m.forward_kinematics(x.as_slice()).unwrap()[link];
    let base = fk(q.clone()).inverse();
    let plus = base.compose(&fk(q + dq * h)).log().0;
    let minus = base.compose(&fk(q - dq * h)).log().0;
    (plus - minus) / (2.0 * h)
}

#[test]
fn fk_is_bitwise_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for m in robots() {
        for _ in 0..20 {
            let q = sample_config(&m, &mut rng);
            assert_eq!(m.forward_kinematics(q.as_slice()).unwrap(), m.forward_kinematics(q.as_slice()).unwrap());
        }
    }
}

#[test]
fn link_jacobians_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for m in robots() {
        let n = m.actuated_count();
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let q = sample_config(&m, &mut rng);
            for link in 0..m.links.len() {
                let j = m.link_jacobian(q.as_slice(), link).unwrap();
                for k in 0..n {
                    let e = DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 });
                    let fd = numeric_body_velocity(&m, &q, &e, link, 1e-6);
                    worst = worst.max((j.column(k) - fd).amax());
                }
            }
        }
        assert!(worst < 1e-6, "{}: {worst:e}", m.name);
    }
}

#[test]
fn velocity_composition_is_second_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for m in robots() {
        let link = m.links.len() - 1;
        for _ in 0..20 {
            let q = sample_config(&m, &mut rng);
            let dq = sample_config(&m, &mut rng).normalize();
            let j = m.link_jacobian(q.as_slice(), link).unwrap();
            let fk = |x: DVector<f64>| m.forward_kinematics(x.as_slice()).unwrap()[link];
            let gap = |eps: f64| {
                let rel = fk(&q + &dq * eps).inverse().compose(&fk(q.clone())).log().0;
                (rel + &j * &dq * eps).norm()
            };
            let (g1, g2) = (gap(1e-3), gap(1e-4));
            // Second order: a tenfold smaller step shrinks the gap about a hundredfold.
            assert!(g2 < g1 / 30.0 + 1e-13, "{}: {g1:e} {g2:e}", m.name);
        }
    }
}
