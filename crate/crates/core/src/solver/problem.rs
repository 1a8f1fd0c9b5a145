use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::variables::{VarId, VarValue, VariableSet};
use super::SolveError;

/// Central-difference step per tangent coordinate.
pub const NUMERIC_STEP: f64 = 1e-6;

/// A vector-valued residual over some variables.
///
/// Implementations must be pure: the same inputs always give the same output.
pub trait Residual: Send + Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, vars: &[&VarValue]) -> DVector<f64>;

    /// One `dim × tangent_dim` block per referenced variable, in tangent
    /// coordinates of the right-multiplicative update. `None` falls back to
    /// central differences.
    fn jacobian(&self, _vars: &[&VarValue]) -> Option<Vec<DMatrix<f64>>> {
        None
    }

    /// Residual and Jacobian together; override to share work between them.
    fn linearize(&self, vars: &[&VarValue]) -> (DVector<f64>, Option<Vec<DMatrix<f64>>>) {
        (self.evaluate(vars), self.jacobian(vars))
    }
}

/// Residual built from a closure, differentiated numerically.
pub struct FnResidual<F> {
    dim: usize,
    f: F,
}

impl<F> FnResidual<F>
where
    F: Fn(&[&VarValue]) -> DVector<f64> + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnResidual { dim, f }
    }
}

impl<F> Residual for FnResidual<F>
where
    F: Fn(&[&VarValue]) -> DVector<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, vars: &[&VarValue]) -> DVector<f64> {
        (self.f)(vars)
    }
}

/// Weighted residual block: contributes `‖weight ⊙ r(vars)‖²` to the cost.
#[derive(Clone)]
pub struct CostTerm {
    pub name: String,
    pub vars: Vec<VarId>,
    pub weight: DVector<f64>,
    pub residual: Arc<dyn Residual>,
}

impl fmt::Debug for CostTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostTerm")
            .field("name", &self.name)
            .field("vars", &self.vars)
            .field("weight", &self.weight.as_slice())
            .finish()
    }
}

impl CostTerm {
    /// Unit weights on every row.
    pub fn new(name: impl Into<String>, vars: Vec<VarId>, residual: Arc<dyn Residual>) -> Self {
        let dim = residual.dim();
        CostTerm {
            name: name.into(),
            vars,
            weight: DVector::from_element(dim, 1.0),
            residual,
        }
    }

    pub fn from_fn<F>(name: impl Into<String>, vars: Vec<VarId>, dim: usize, f: F) -> Self
    where
        F: Fn(&[&VarValue]) -> DVector<f64> + Send + Sync + 'static,
    {
        Self::new(name, vars, Arc::new(FnResidual::new(dim, f)))
    }

    /// Same weight on every row.
    pub fn weighted(mut self, w: f64) -> Self {
        self.weight.fill(w);
        self
    }

    pub fn with_weights(mut self, weights: DVector<f64>) -> Self {
        self.weight = weights;
        self
    }

    pub fn dim(&self) -> usize {
        self.residual.dim()
    }

    fn values<'a>(&self, at: &'a VariableSet) -> Vec<&'a VarValue> {
        self.vars.iter().map(|&id| at.get(id)).collect()
    }

    /// Unweighted residual at `at`, checked for dimension and finiteness.
    pub fn evaluate(&self, at: &VariableSet) -> Result<DVector<f64>, SolveError> {
        let r = self.residual.evaluate(&self.values(at));
        self.check_residual(&r)?;
        Ok(r)
    }

    fn check_residual(&self, r: &DVector<f64>) -> Result<(), SolveError> {
        if r.len() != self.dim() {
            return Err(SolveError::Contract {
                cost: self.name.clone(),
                detail: format!("residual has {} rows, declared {}", r.len(), self.dim()),
            });
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(SolveError::CostEvaluation {
                cost: self.name.clone(),
                detail: "non-finite residual".into(),
            });
        }
        Ok(())
    }

    /// Unweighted residual and per-variable Jacobian blocks.
    pub fn linearize(&self, at: &VariableSet) -> Result<(DVector<f64>, Vec<DMatrix<f64>>), SolveError> {
        let values = self.values(at);
        let (r, analytic) = self.residual.linearize(&values);
        self.check_residual(&r)?;
        let blocks = match analytic {
            Some(blocks) => blocks,
            None => numeric_jacobian_values(self, &values, &[(NUMERIC_STEP, 0.5 / NUMERIC_STEP)])?,
        };
        if blocks.len() != self.vars.len() {
            return Err(SolveError::Contract {
                cost: self.name.clone(),
                detail: format!("{} Jacobian blocks for {} variables", blocks.len(), self.vars.len()),
            });
        }
        for (block, v) in blocks.iter().zip(&values) {
            if block.shape() != (self.dim(), v.tangent_dim()) {
                return Err(SolveError::Contract {
                    cost: self.name.clone(),
                    detail: format!(
                        "Jacobian block is {:?}, expected {:?}",
                        block.shape(),
                        (self.dim(), v.tangent_dim())
                    ),
                });
            }
            if block.iter().any(|x| !x.is_finite()) {
                return Err(SolveError::CostEvaluation {
                    cost: self.name.clone(),
                    detail: "non-finite Jacobian".into(),
                });
            }
        }
        Ok((r, blocks))
    }
}

/// Central differences of `cost`'s residual in each variable's tangent space,
/// step [`NUMERIC_STEP`].
pub fn numeric_jacobian(cost: &CostTerm, at: &VariableSet) -> Result<Vec<DMatrix<f64>>, SolveError> {
    numeric_jacobian_values(cost, &cost.values(at), &[(NUMERIC_STEP, 0.5 / NUMERIC_STEP)])
}

/// Fourth-order central differences `(−f(2h) + 8f(h) − 8f(−h) + f(−2h)) / 12h`.
///
/// Truncation error is `O(h⁴)` instead of `O(h²)`, which matters where the
/// residual has large higher derivatives.
pub fn numeric_jacobian_five_point(
    cost: &CostTerm,
    at: &VariableSet,
    step: f64,
) -> Result<Vec<DMatrix<f64>>, SolveError> {
    let c = 1.0 / (12.0 * step);
    numeric_jacobian_values(cost, &cost.values(at), &[(2.0 * step, -c), (step, 8.0 * c)])
}

/// `Σ w · (r(x ⊕ h e_k) − r(x ⊕ −h e_k))` over the `(h, w)` taps.
fn numeric_jacobian_values(
    cost: &CostTerm,
    values: &[&VarValue],
    taps: &[(f64, f64)],
) -> Result<Vec<DMatrix<f64>>, SolveError> {
    let m = cost.dim();
    let mut blocks = Vec::with_capacity(values.len());
    let mut perturbed: Vec<VarValue> = values.iter().map(|v| (*v).clone()).collect();
    for (slot, value) in values.iter().enumerate() {
        let dim = value.tangent_dim();
        let mut block = DMatrix::zeros(m, dim);
        let mut delta = vec![0.0; dim];
        for k in 0..dim {
            let mut eval = |h: f64| -> Result<DVector<f64>, SolveError> {
                delta[k] = h;
                perturbed[slot] = value
                    .local_update(&delta)
                    .map_err(|e| SolveError::InvalidProblem(e.to_string()))?;
                delta[k] = 0.0;
                let refs: Vec<&VarValue> = perturbed.iter().collect();
                let r = cost.residual.evaluate(&refs);
                cost.check_residual(&r)?;
                Ok(r)
            };
            let mut col = DVector::zeros(m);
            for &(h, w) in taps {
                let diff = eval(h)? - eval(-h)?;
                col.axpy(w, &diff, 1.0);
            }
            block.column_mut(k).copy_from(&col);
        }
        perturbed[slot] = (*value).clone();
        blocks.push(block);
    }
    Ok(blocks)
}

/// Variables plus weighted cost terms.
#[derive(Clone, Debug, Default)]
pub struct Problem {
    pub variables: VariableSet,
    costs: Vec<CostTerm>,
}

/// Non-zero Jacobian block of one cost with respect to one variable.
#[derive(Clone, Debug)]
pub struct JacobianBlock {
    pub cost: usize,
    pub var: VarId,
    /// First residual row of the block.
    pub row: usize,
    /// First tangent column of the block.
    pub col: usize,
    pub matrix: DMatrix<f64>,
}

/// Weighted residual and block-sparse Jacobian at a point.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub residual: DVector<f64>,
    pub blocks: Vec<JacobianBlock>,
    /// `(first row, row count)` per cost.
    pub cost_rows: Vec<(usize, usize)>,
    pub cols: usize,
}

impl Linearization {
    pub fn rows(&self) -> usize {
        self.residual.len()
    }

    pub fn cost(&self) -> f64 {
        self.residual.norm_squared()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.rows(), self.cols);
        for b in &self.blocks {
            j.view_mut((b.row, b.col), b.matrix.shape())
                .copy_from(&b.matrix);
        }
        j
    }

    /// `Jᵀ r`.
    pub fn gradient(&self) -> DVector<f64> {
        let mut g = DVector::zeros(self.cols);
        for b in &self.blocks {
            let r = self.residual.rows(b.row, b.matrix.nrows());
            let mut gv = g.rows_mut(b.col, b.matrix.ncols());
            gv.gemv_tr(1.0, &b.matrix, &r, 1.0);
        }
        g
    }
}

impl Problem {
    pub fn new(variables: VariableSet) -> Self {
        Problem {
            variables,
            costs: Vec::new(),
        }
    }

    pub fn costs(&self) -> &[CostTerm] {
        &self.costs
    }

    /// Adds a cost after checking its variable references and weights.
    pub fn add_cost(&mut self, cost: CostTerm) -> Result<usize, SolveError> {
        for &id in &cost.vars {
            if !self.variables.contains(id) {
                return Err(SolveError::InvalidProblem(format!(
                    "cost `{}` references unknown variable {}",
                    cost.name,
                    id.index()
                )));
            }
        }
        if cost.weight.len() != cost.dim() {
            return Err(SolveError::InvalidProblem(format!(
                "cost `{}` has {} weights for {} residual rows",
                cost.name,
                cost.weight.len(),
                cost.dim()
            )));
        }
        if cost.weight.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(SolveError::InvalidProblem(format!(
                "cost `{}` has a negative or non-finite weight",
                cost.name
            )));
        }
        self.costs.push(cost);
        Ok(self.costs.len() - 1)
    }

    /// `(cost index, variable index)` of every structurally non-zero block.
    pub fn sparsity(&self) -> Vec<(usize, usize)> {
        self.costs
            .iter()
            .enumerate()
            .flat_map(|(c, cost)| cost.vars.iter().map(move |v| (c, v.index())))
            .collect()
    }

    pub fn residual_dim(&self) -> usize {
        self.costs.iter().map(CostTerm::dim).sum()
    }

    /// Weighted residuals stacked in cost order.
    pub fn evaluate(&self, at: &VariableSet) -> Result<DVector<f64>, SolveError> {
        let mut out = DVector::zeros(self.residual_dim());
        let mut row = 0;
        for cost in &self.costs {
            let r = cost.evaluate(at)?;
            out.rows_mut(row, r.len()).copy_from(&r.component_mul(&cost.weight));
            row += r.len();
        }
        Ok(out)
    }

    /// Sum of squared weighted residuals.
    pub fn cost(&self, at: &VariableSet) -> Result<f64, SolveError> {
        let mut total = 0.0;
        for cost in &self.costs {
            let r = cost.evaluate(at)?;
            total += r.component_mul(&cost.weight).norm_squared();
        }
        Ok(total)
    }

    /// Squared weighted residual norm per cost.
    pub fn cost_breakdown(&self, at: &VariableSet) -> Result<Vec<(String, f64)>, SolveError> {
        self.costs
            .iter()
            .map(|c| Ok((c.name.clone(), c.evaluate(at)?.component_mul(&c.weight).norm_squared())))
            .collect()
    }

    /// Weighted residual and block-sparse Jacobian at `at`.
    pub fn assemble(&self, at: &VariableSet) -> Result<Linearization, SolveError> {
        let mut residual = DVector::zeros(self.residual_dim());
        let mut blocks = Vec::new();
        let mut cost_rows = Vec::with_capacity(self.costs.len());
        let mut row = 0;
        for (c, cost) in self.costs.iter().enumerate() {
            let (r, jac) = cost.linearize(at)?;
            let m = r.len();
            residual.rows_mut(row, m).copy_from(&r.component_mul(&cost.weight));
            for (&var, mut block) in cost.vars.iter().zip(jac) {
                for (i, mut block_row) in block.row_iter_mut().enumerate() {
                    block_row *= cost.weight[i];
                }
                blocks.push(JacobianBlock {
                    cost: c,
                    var,
                    row,
                    col: at.offset(var),
                    matrix: block,
                });
            }
            cost_rows.push((row, m));
            row += m;
        }
        Ok(Linearization {
            residual,
            blocks,
            cost_rows,
            cols: at.tangent_dim(),
        })
    }
}
