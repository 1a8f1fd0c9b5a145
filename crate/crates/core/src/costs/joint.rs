use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{check_config_var, check_vector_var, config};
use crate::robot::RobotModel;
use crate::solver::{CostTerm, Residual, SolveError, VarId, VarValue, VariableSet};

/// `max(0, q − upper) + max(0, lower − q)` per actuated coordinate.
struct LimitResidual {
    /// `None` for unbounded coordinates.
    limits: Vec<Option<(f64, f64)>>,
}

impl Residual for LimitResidual {
    fn dim(&self) -> usize {
        self.limits.len()
    }

    fn evaluate(&self, vars: &[&VarValue]) -> DVector<f64> {
        let q = config(vars[0]);
        DVector::from_iterator(
            q.len(),
            q.iter().zip(&self.limits).map(|(&x, lim)| match lim {
                Some((lo, hi)) => (x - hi).max(0.0) + (lo - x).max(0.0),
                None => 0.0,
            }),
        )
    }

    fn jacobian(&self, vars: &[&VarValue]) -> Option<Vec<DMatrix<f64>>> {
        let q = config(vars[0]);
        let diag = DVector::from_iterator(
            q.len(),
            q.iter().zip(&self.limits).map(|(&x, lim)| match lim {
                Some((_, hi)) if x > *hi => 1.0,
                Some((lo, _)) if x < *lo => -1.0,
                _ => 0.0,
            }),
        );
        Some(vec![DMatrix::from_diagonal(&diag)])
    }
}

pub fn limit_cost(model: &RobotModel, vars: &VariableSet, q: VarId) -> Result<CostTerm, SolveError> {
    check_config_var(model, vars, q)?;
    let limits = model
        .position_limits()
        .into_iter()
        .map(|l| l.map(|l| (l.lower, l.upper)))
        .collect();
    Ok(CostTerm::new("limit", vec![q], Arc::new(LimitResidual { limits })))
}

/// `max(0, |Δ| − bound)` per coordinate, where `Δ` is either a variable or a
/// difference of two variables.
struct ExcessResidual {
    /// `None` for coordinates without a bound.
    bounds: Vec<Option<f64>>,
    difference: bool,
}

impl ExcessResidual {
    fn delta(&self, vars: &[&VarValue]) -> DVector<f64> {
        if self.difference {
            vars[1].as_vector().unwrap() - vars[0].as_vector().unwrap()
        } else {
            vars[0].as_vector().unwrap().clone()
        }
    }
}

impl Residual for ExcessResidual {
    fn dim(&self) -> usize {
        self.bounds.len()
    }

    fn evaluate(&self, vars: &[&VarValue]) -> DVector<f64> {
        let d = self.delta(vars);
        DVector::from_iterator(
            d.len(),
            d.iter().zip(&self.bounds).map(|(x, b)| match b {
                Some(b) => (x.abs() - b).max(0.0),
                None => 0.0,
            }),
        )
    }

    fn jacobian(&self, vars: &[&VarValue]) -> Option<Vec<DMatrix<f64>>> {
        let d = self.delta(vars);
        let diag = DVector::from_iterator(
            d.len(),
            d.iter().zip(&self.bounds).map(|(x, b)| match b {
                Some(b) if x.abs() > *b => x.signum(),
                _ => 0.0,
            }),
        );
        let plus = DMatrix::from_diagonal(&diag);
        Some(if self.difference { vec![-&plus, plus] } else { vec![plus] })
    }
}

fn dt_check(dt: f64) -> Result<(), SolveError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SolveError::InvalidProblem(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

/// Penalizes per-step displacement `q_t − q_prev` beyond `velocity_limit · dt`.
pub fn velocity_limit_cost(
    model: &RobotModel,
    vars: &VariableSet,
    q_prev: VarId,
    q_t: VarId,
    dt: f64,
) -> Result<CostTerm, SolveError> {
    check_config_var(model, vars, q_prev)?;
    check_config_var(model, vars, q_t)?;
    dt_check(dt)?;
    let bounds = model.velocity_limits().into_iter().map(|v| v.map(|v| v * dt)).collect();
    Ok(CostTerm::new(
        "velocity",
        vec![q_prev, q_t],
        Arc::new(ExcessResidual { bounds, difference: true }),
    ))
}

/// Penalizes a joint-velocity variable beyond the velocity limits.
pub fn velocity_cost(model: &RobotModel, vars: &VariableSet, qdot: VarId) -> Result<CostTerm, SolveError> {
    check_config_var(model, vars, qdot)?;
    Ok(CostTerm::new(
        "velocity",
        vec![qdot],
        Arc::new(ExcessResidual { bounds: model.velocity_limits(), difference: false }),
    ))
}

/// `Σ c_i · q_i` over the referenced variables.
struct LinearCombination {
    n: usize,
    coefficients: Vec<f64>,
    offset: DVector<f64>,
}

impl Residual for LinearCombination {
    fn dim(&self) -> usize {
        self.n
    }

    fn evaluate(&self, vars: &[&VarValue]) -> DVector<f64> {
        let mut out = -&self.offset;
        for (c, v) in self.coefficients.iter().zip(vars) {
            out.axpy(*c, v.as_vector().unwrap(), 1.0);
        }
        out
    }

    fn jacobian(&self, _vars: &[&VarValue]) -> Option<Vec<DMatrix<f64>>> {
        Some(
            self.coefficients
                .iter()
                .map(|c| DMatrix::from_diagonal_element(self.n, self.n, *c))
                .collect(),
        )
    }
}

fn linear(
    name: &str,
    vars: &VariableSet,
    ids: Vec<VarId>,
    coefficients: Vec<f64>,
    offset: Option<DVector<f64>>,
) -> Result<CostTerm, SolveError> {
    let n = match vars.get(*ids.first().expect("at least one variable")).as_vector() {
        Some(v) => v.len(),
        None => return Err(SolveError::InvalidProblem(format!("`{name}` needs Euclidean variables"))),
    };
    for &id in &ids {
        check_vector_var(vars, id, n)?;
    }
    let offset = offset.unwrap_or_else(|| DVector::zeros(n));
    if offset.len() != n {
        return Err(SolveError::InvalidProblem(format!(
            "`{name}` reference has {} entries, variable has {n}",
            offset.len()
        )));
    }
    Ok(CostTerm::new(name, ids, Arc::new(LinearCombination { n, coefficients, offset })))
}

/// `q − q_rest`.
pub fn rest_cost(vars: &VariableSet, q: VarId, q_rest: &DVector<f64>) -> Result<CostTerm, SolveError> {
    linear("rest", vars, vec![q], vec![1.0], Some(q_rest.clone()))
}

/// `q_t − q_prev`.
pub fn smoothness_cost(vars: &VariableSet, q_prev: VarId, q_t: VarId) -> Result<CostTerm, SolveError> {
    linear("smoothness", vars, vec![q_prev, q_t], vec![-1.0, 1.0], None)
}

fn stencil(name: &str, vars: &VariableSet, window: [VarId; 5], coefficients: [f64; 5]) -> Result<CostTerm, SolveError> {
    linear(name, vars, window.to_vec(), coefficients.to_vec(), None)
}

/// Five-point central second difference at the middle of `window`.
pub fn acceleration_cost(vars: &VariableSet, window: [VarId; 5], dt: f64) -> Result<CostTerm, SolveError> {
    dt_check(dt)?;
    let s = 1.0 / (12.0 * dt * dt);
    stencil("acceleration", vars, window, [-s, 16.0 * s, -30.0 * s, 16.0 * s, -s])
}

/// Five-point central third difference at the middle of `window`.
pub fn jerk_cost(vars: &VariableSet, window: [VarId; 5], dt: f64) -> Result<CostTerm, SolveError> {
    dt_check(dt)?;
    let s = 1.0 / (2.0 * dt * dt * dt);
    stencil("jerk", vars, window, [-s, 2.0 * s, 0.0, -2.0 * s, s])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::dvec;
    use crate::assets::{panda, planar_2r};
    use crate::costs::testing::{jacobian_gap, random_config, rng};

    fn one_var(x: &[f64]) -> (VariableSet, VarId) {
        let mut vs = VariableSet::new();
        let id = vs.add("q", VarValue::Euclidean(dvec(x))).unwrap();
        (vs, id)
    }

    fn series(values: &[f64]) -> (VariableSet, Vec<VarId>) {
        let mut vs = VariableSet::new();
        let ids = values
            .iter()
            .enumerate()
            .map(|(k, x)| vs.add(format!("q{k}"), VarValue::Euclidean(dvec(&[*x]))).unwrap())
            .collect();
        (vs, ids)
    }

    #[test]
    fn limit_values() {
        let m = planar_2r();
        let (vs, q) = one_var(&[0.5, -1.0]);
        let c = limit_cost(&m, &vs, q).unwrap();
        assert_eq!(c.evaluate(&vs).unwrap().as_slice(), &[0.0, 0.0]);
        let (vs, _) = one_var(&[3.14159 + 0.2, 0.0]);
        let r = c.evaluate(&vs).unwrap();
        assert!((r[0] - 0.2).abs() < 1e-12);
        assert_eq!(c.linearize(&vs).unwrap().1[0][(0, 0)], 1.0);
        let (vs, _) = one_var(&[3.14159, -3.14159]);
        let (_, j) = c.linearize(&vs).unwrap();
        assert_eq!(j[0], DMatrix::zeros(2, 2));
    }

    #[test]
    fn limit_kink_numeric_check() {
        // At the boundary the analytic row is 0; a one-sided difference from
        // inside agrees while the outside one has slope 1.
        let m = planar_2r();
        let (vs, q) = one_var(&[3.14159, 0.0]);
        let c = limit_cost(&m, &vs, q).unwrap();
        let inside = c.evaluate(&vs.retract(&dvec(&[-1e-6, 0.0])).unwrap()).unwrap()[0];
        let at = c.evaluate(&vs).unwrap()[0];
        assert_eq!((at - inside) / 1e-6, 0.0);
        assert_eq!(c.linearize(&vs).unwrap().1[0][(0, 0)], 0.0);
    }

    #[test]
    fn velocity_values() {
        let m = planar_2r();
        // velocity limit 2 rad/s, dt 0.05: bound 0.1 per step.
        let mut vs = VariableSet::new();
        let a = vs.add("a", VarValue::Euclidean(dvec(&[0.0, 0.0]))).unwrap();
        let b = vs.add("b", VarValue::Euclidean(dvec(&[0.0, 0.0]))).unwrap();
        let c = velocity_limit_cost(&m, &vs, a, b, 0.05).unwrap();
        assert_eq!(c.evaluate(&vs).unwrap().as_slice(), &[0.0, 0.0]);
        vs.set(b, VarValue::Euclidean(dvec(&[0.1, -0.2]))).unwrap();
        let r = c.evaluate(&vs).unwrap();
        assert_eq!(r[0], 0.0);
        assert!((r[1] - 0.1).abs() < 1e-12);
        assert!(velocity_limit_cost(&m, &vs, a, b, 0.0).is_err());
        let direct = velocity_cost(&m, &vs, b).unwrap();
        assert_eq!(direct.evaluate(&vs).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn rest_and_smoothness() {
        let (vs, q) = one_var(&[1.0, 2.0, 3.0]);
        let c = rest_cost(&vs, q, &dvec(&[1.0, 1.0, 3.0])).unwrap();
        assert_eq!(c.evaluate(&vs).unwrap().as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(c.linearize(&vs).unwrap().1[0], DMatrix::identity(3, 3));
        let mut vs = VariableSet::new();
        let a = vs.add("a", VarValue::Euclidean(dvec(&[1.0, 2.0]))).unwrap();
        let b = vs.add("b", VarValue::Euclidean(dvec(&[1.0, 2.0]))).unwrap();
        let s = smoothness_cost(&vs, a, b).unwrap();
        assert_eq!(s.evaluate(&vs).unwrap().as_slice(), &[0.0, 0.0]);
        let (_, j) = s.linearize(&vs).unwrap();
        assert_eq!(j[0], -DMatrix::<f64>::identity(2, 2));
        assert_eq!(j[1], DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn stencils_are_exact_on_polynomials() {
        let dt = 0.1;
        let t = |k: usize| k as f64 * dt;
        let (vs, ids) = series(&[3.0; 5]);
        let w: [VarId; 5] = ids.try_into().unwrap();
        assert!(acceleration_cost(&vs, w, dt).unwrap().evaluate(&vs).unwrap()[0].abs() < 1e-10);
        assert!(jerk_cost(&vs, w, dt).unwrap().evaluate(&vs).unwrap()[0].abs() < 1e-10);

        let (vs, ids) = series(&(0..5).map(|k| 0.5 + 2.0 * t(k)).collect::<Vec<_>>());
        let w: [VarId; 5] = ids.try_into().unwrap();
        assert!(acceleration_cost(&vs, w, dt).unwrap().evaluate(&vs).unwrap()[0].abs() < 1e-10);

        // q = t³ has third derivative 6 everywhere.
        let (vs, ids) = series(&(0..5).map(|k| t(k).powi(3)).collect::<Vec<_>>());
        let w: [VarId; 5] = ids.try_into().unwrap();
        let jerk = jerk_cost(&vs, w, dt).unwrap().evaluate(&vs).unwrap()[0];
        assert!((jerk - 6.0).abs() < 1e-6, "{jerk}");
        // Second derivative at the middle sample t = 0.2 is 6t = 1.2.
        let acc = acceleration_cost(&vs, w, dt).unwrap().evaluate(&vs).unwrap()[0];
        assert!((acc - 1.2).abs() < 1e-9, "{acc}");
    }

    #[test]
    fn analytic_matches_numeric() {
        let mut r = rng(11);
        for model in [planar_2r(), panda()] {
            for _ in 0..100 {
                let mut vs = VariableSet::new();
                let ids: Vec<VarId> = (0..5)
                    .map(|k| vs.add(format!("q{k}"), VarValue::Euclidean(random_config(&model, &mut r, 0.3))).unwrap())
                    .collect();
                let w: [VarId; 5] = ids.clone().try_into().unwrap();
                let costs = [
                    limit_cost(&model, &vs, ids[0]).unwrap(),
                    velocity_limit_cost(&model, &vs, ids[0], ids[1], 0.1).unwrap(),
                    velocity_cost(&model, &vs, ids[2]).unwrap(),
                    rest_cost(&vs, ids[0], model.rest_pose()).unwrap(),
                    smoothness_cost(&vs, ids[0], ids[1]).unwrap(),
                    acceleration_cost(&vs, w, 0.1).unwrap(),
                    jerk_cost(&vs, w, 0.1).unwrap(),
                ];
                for c in &costs {
                    let gap = jacobian_gap(c, &vs);
                    assert!(gap < 1e-5, "{}: {gap}", c.name);
                }
            }
        }
    }

    #[test]
    fn residuals_are_nonnegative() {
        let model = panda();
        let mut r = rng(3);
        for _ in 0..50 {
            let mut vs = VariableSet::new();
            let a = vs.add("a", VarValue::Euclidean(random_config(&model, &mut r, 1.0))).unwrap();
            let b = vs.add("b", VarValue::Euclidean(random_config(&model, &mut r, 1.0))).unwrap();
            for c in [
                limit_cost(&model, &vs, a).unwrap(),
                velocity_limit_cost(&model, &vs, a, b, 0.1).unwrap(),
            ] {
                assert!(c.evaluate(&vs).unwrap().iter().all(|x| *x >= 0.0));
            }
        }
    }
}
