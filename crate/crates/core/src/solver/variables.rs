use nalgebra::DVector;

use super::SolveError;
use crate::liegroups::{LieError, LocalUpdate, Rotation3, Transform2, Transform3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Euclidean(usize),
    Transform3,
    Transform2,
    Rotation3,
}

impl VarKind {
    pub fn tangent_dim(&self) -> usize {
        match self {
            VarKind::Euclidean(n) => *n,
            VarKind::Transform3 => 6,
            VarKind::Transform2 | VarKind::Rotation3 => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum VarValue {
    Euclidean(DVector<f64>),
    Transform3(Transform3),
    Transform2(Transform2),
    Rotation3(Rotation3),
}

impl VarValue {
    pub fn kind(&self) -> VarKind {
        match self {
            VarValue::Euclidean(v) => VarKind::Euclidean(v.len()),
            VarValue::Transform3(_) => VarKind::Transform3,
            VarValue::Transform2(_) => VarKind::Transform2,
            VarValue::Rotation3(_) => VarKind::Rotation3,
        }
    }

    pub fn tangent_dim(&self) -> usize {
        self.kind().tangent_dim()
    }

    /// `self ⊕ delta`: vector addition or right-multiplicative retraction.
    pub fn local_update(&self, delta: &[f64]) -> Result<VarValue, LieError> {
        Ok(match self {
            VarValue::Euclidean(v) => {
                if delta.len() != v.len() {
                    return Err(LieError::DimensionMismatch {
                        expected: v.len(),
                        actual: delta.len(),
                    });
                }
                VarValue::Euclidean(v + DVector::from_column_slice(delta))
            }
            VarValue::Transform3(t) => VarValue::Transform3(t.local_update_slice(delta)?),
            VarValue::Transform2(t) => VarValue::Transform2(t.local_update_slice(delta)?),
            VarValue::Rotation3(r) => VarValue::Rotation3(r.local_update_slice(delta)?),
        })
    }

    pub fn as_vector(&self) -> Option<&DVector<f64>> {
        match self {
            VarValue::Euclidean(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_transform3(&self) -> Option<&Transform3> {
        match self {
            VarValue::Transform3(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_transform2(&self) -> Option<&Transform2> {
        match self {
            VarValue::Transform2(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_rotation3(&self) -> Option<&Rotation3> {
        match self {
            VarValue::Rotation3(r) => Some(r),
            _ => None,
        }
    }
}

/// Handle to a variable inside a [`VariableSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Ordered, named optimization variables with their tangent offsets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VariableSet {
    names: Vec<String>,
    values: Vec<VarValue>,
    offsets: Vec<usize>,
    tangent_dim: usize,
}

impl VariableSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: VarValue) -> Result<VarId, SolveError> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(SolveError::InvalidProblem(format!("duplicate variable id `{name}`")));
        }
        let id = VarId(self.values.len());
        self.offsets.push(self.tangent_dim);
        self.tangent_dim += value.tangent_dim();
        self.names.push(name);
        self.values.push(value);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tangent_dim(&self) -> usize {
        self.tangent_dim
    }

    pub fn offset(&self, id: VarId) -> usize {
        self.offsets[id.0]
    }

    pub fn get(&self, id: VarId) -> &VarValue {
        &self.values[id.0]
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<VarId> {
        self.names.iter().position(|n| n == name).map(VarId)
    }

    pub fn ids(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.values.len()).map(VarId)
    }

    pub fn values(&self) -> &[VarValue] {
        &self.values
    }

    pub(crate) fn contains(&self, id: VarId) -> bool {
        id.0 < self.values.len()
    }

    /// Replaces a value; the kind must not change.
    pub fn set(&mut self, id: VarId, value: VarValue) -> Result<(), SolveError> {
        let slot = self
            .values
            .get_mut(id.0)
            .ok_or_else(|| SolveError::InvalidProblem(format!("unknown variable {}", id.0)))?;
        if slot.kind() != value.kind() {
            return Err(SolveError::InvalidProblem(format!(
                "variable `{}` is {:?}, cannot assign {:?}",
                self.names[id.0],
                slot.kind(),
                value.kind()
            )));
        }
        *slot = value;
        Ok(())
    }

    /// Applies a stacked tangent step to every variable.
    pub fn retract(&self, delta: &DVector<f64>) -> Result<VariableSet, SolveError> {
        if delta.len() != self.tangent_dim {
            return Err(SolveError::InvalidProblem(format!(
                "step has {} entries, tangent dimension is {}",
                delta.len(),
                self.tangent_dim
            )));
        }
        let mut out = self.clone();
        for (k, value) in out.values.iter_mut().enumerate() {
            let dim = value.tangent_dim();
            let off = self.offsets[k];
            *value = value
                .local_update(&delta.as_slice()[off..off + dim])
                .map_err(|e| SolveError::InvalidProblem(e.to_string()))?;
        }
        Ok(out)
    }
}
