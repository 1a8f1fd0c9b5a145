use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use super::problem::Linearization;

/// Tangent dimension from which `LinearSolver::Auto` switches to the sparse factorization.
pub const DENSE_LIMIT: usize = 200;

/// Floor on the Marquardt scaling diagonal.
pub const MIN_SCALING: f64 = 1e-8;

/// `JᵀJ` kept as dense blocks keyed by `(first column, first column)`, plus `Jᵀr`.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    pub dim: usize,
    /// Upper and lower blocks are both stored.
    blocks: BTreeMap<(usize, usize), DMatrix<f64>>,
    pub gradient: DVector<f64>,
    /// `max(diag(JᵀJ), MIN_SCALING)`.
    pub scaling: DVector<f64>,
}

impl NormalEquations {
    pub fn new(lin: &Linearization) -> Self {
        let mut blocks: BTreeMap<(usize, usize), DMatrix<f64>> = BTreeMap::new();
        let mut by_cost: Vec<Vec<usize>> = vec![Vec::new(); lin.cost_rows.len()];
        for (k, b) in lin.blocks.iter().enumerate() {
            by_cost[b.cost].push(k);
        }
        for members in &by_cost {
            for &i in members {
                for &j in members {
                    let (a, b) = (&lin.blocks[i], &lin.blocks[j]);
                    let product = a.matrix.tr_mul(&b.matrix);
                    blocks
                        .entry((a.col, b.col))
                        .and_modify(|m| *m += &product)
                        .or_insert(product);
                }
            }
        }
        let mut scaling = DVector::from_element(lin.cols, MIN_SCALING);
        for (&(r, c), m) in &blocks {
            if r == c {
                for k in 0..m.nrows() {
                    scaling[r + k] = scaling[r + k].max(m[(k, k)]);
                }
            }
        }
        NormalEquations {
            dim: lin.cols,
            blocks,
            gradient: lin.gradient(),
            scaling,
        }
    }

    /// Undamped `JᵀJ`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for (&(r, c), m) in &self.blocks {
            h.view_mut((r, c), m.shape()).copy_from(m);
        }
        h
    }

    fn damped_dense(&self, lambda: f64) -> DMatrix<f64> {
        let mut h = self.to_dense();
        for k in 0..self.dim {
            h[(k, k)] += lambda * self.scaling[k];
        }
        h
    }

    fn damped_sparse(&self, lambda: f64) -> CscMatrix<f64> {
        let mut coo = CooMatrix::new(self.dim, self.dim);
        for (&(r, c), m) in &self.blocks {
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    coo.push(r + i, c + j, m[(i, j)]);
                }
            }
        }
        for k in 0..self.dim {
            coo.push(k, k, lambda * self.scaling[k]);
        }
        CscMatrix::from(&coo)
    }
}

/// Solves `(JᵀJ + λD) δ = −Jᵀr` with a dense Cholesky factorization.
pub fn dense_step(ne: &NormalEquations, lambda: f64) -> Option<DVector<f64>> {
    let chol = ne.damped_dense(lambda).cholesky()?;
    let step = -chol.solve(&ne.gradient);
    step.iter().all(|x| x.is_finite()).then_some(step)
}

/// Same system as [`dense_step`] through a sparse Cholesky factorization.
pub fn sparse_step(ne: &NormalEquations, lambda: f64) -> Option<DVector<f64>> {
    let chol = CscCholesky::factor(&ne.damped_sparse(lambda)).ok()?;
    let x = chol.solve(&ne.gradient);
    let step = -DVector::from_column_slice(x.as_slice());
    step.iter().all(|x| x.is_finite()).then_some(step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{CostTerm, Problem, VarValue, VariableSet};
    use proptest::prelude::*;

    /// Chain of scalar-pair variables tied by nonlinear difference costs.
    fn chain_problem(values: &[f64]) -> Problem {
        let mut vs = VariableSet::new();
        let ids: Vec<_> = values
            .chunks(2)
            .enumerate()
            .map(|(k, c)| vs.add(format!("x{k}"), VarValue::Euclidean(DVector::from_row_slice(c))).unwrap())
            .collect();
        let mut p = Problem::new(vs);
        for (k, &id) in ids.iter().enumerate() {
            p.add_cost(CostTerm::from_fn(format!("prior{k}"), vec![id], 2, move |v| {
                let x = v[0].as_vector().unwrap();
                DVector::from_vec(vec![x[0] - k as f64, x[1].sin()])
            }))
            .unwrap();
        }
        for w in ids.windows(2) {
            p.add_cost(
                CostTerm::from_fn("link", vec![w[0], w[1]], 2, |v| {
                    let (a, b) = (v[0].as_vector().unwrap(), v[1].as_vector().unwrap());
                    DVector::from_vec(vec![b[0] - a[0] * a[1], (b[1] - a[0]).powi(2)])
                })
                .weighted(2.0),
            )
            .unwrap();
        }
        p
    }

    #[test]
    fn normal_equations_match_dense_product() {
        let p = chain_problem(&[0.1, 0.2, -0.3, 0.4, 0.5, 0.6, 0.7, -0.8]);
        let lin = p.assemble(&p.variables).unwrap();
        let ne = NormalEquations::new(&lin);
        let j = lin.to_dense();
        assert!((ne.to_dense() - j.tr_mul(&j)).amax() < 1e-12);
        assert!((&ne.gradient - j.tr_mul(&lin.residual)).amax() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn sparse_and_dense_steps_agree(
            values in prop::collection::vec(-2.0f64..2.0, 2..40),
            lambda in 1e-6f64..1e2,
        ) {
            let mut values = values;
            if values.len() % 2 == 1 {
                values.pop();
            }
            prop_assume!(!values.is_empty());
            let p = chain_problem(&values);
            let ne = NormalEquations::new(&p.assemble(&p.variables).unwrap());
            let d = dense_step(&ne, lambda).unwrap();
            let s = sparse_step(&ne, lambda).unwrap();
            prop_assert!((&d - &s).amax() <= 1e-9 * (1.0 + d.amax()), "{d} vs {s}");
        }
    }
}
