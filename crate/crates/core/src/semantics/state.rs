use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::SemanticsError;
use crate::real::{Real, Scalar};

/// Fixed ordering of the names a state is defined on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl VarTable {
    pub fn new<I, T>(names: I) -> VarTable
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        let mut table = VarTable { names: Vec::new(), index: HashMap::new() };
        for n in names {
            table.push(n.into());
        }
        table
    }

    /// Add a name if missing; returns its slot.
    pub fn push(&mut self, name: String) -> usize {
        if let Some(&i) = self.index.get(&name) {
            return i;
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.names.len() - 1
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Total valuation of the names in a [`VarTable`].
#[derive(Clone, Debug, PartialEq)]
pub struct State<S> {
    vars: Arc<VarTable>,
    values: Vec<S>,
}

impl<S: Scalar> State<S> {
    pub fn new(vars: Arc<VarTable>, values: Vec<S>) -> State<S> {
        assert_eq!(vars.len(), values.len(), "state size mismatch");
        State { vars, values }
    }

    /// All names zero.
    pub fn zeros(vars: Arc<VarTable>) -> State<S> {
        let values = vec![S::zero(); vars.len()];
        State { vars, values }
    }

    /// Build a state from name/value pairs; every name must be assigned.
    pub fn from_pairs(vars: Arc<VarTable>, pairs: &[(&str, S)]) -> Result<State<S>, SemanticsError> {
        let mut values: Vec<Option<S>> = vec![None; vars.len()];
        for (name, v) in pairs {
            let slot = vars.slot(name).ok_or_else(|| SemanticsError::UndeclaredVariable(name.to_string()))?;
            values[slot] = Some(v.clone());
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| SemanticsError::Unassigned(vars.name(i).to_string())))
            .collect::<Result<Vec<S>, _>>()?;
        Ok(State { vars, values })
    }

    pub fn vars(&self) -> &Arc<VarTable> {
        &self.vars
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn get(&self, name: &str) -> Option<&S> {
        self.vars.slot(name).map(|i| &self.values[i])
    }

    /// `state(x := value)`; only `x` changes.
    pub fn with(&self, name: &str, value: S) -> Result<State<S>, SemanticsError> {
        let slot = self.vars.slot(name).ok_or_else(|| SemanticsError::UndeclaredVariable(name.to_string()))?;
        let mut next = self.clone();
        next.values[slot] = value;
        Ok(next)
    }

    pub fn is_exact(&self) -> bool {
        self.values.iter().all(Scalar::is_exact)
    }

    pub fn to_f64(&self) -> State<f64> {
        State { vars: self.vars.clone(), values: self.values.iter().map(Scalar::to_f64).collect() }
    }
}

impl State<f64> {
    /// Exact rational image of a floating-point state.
    pub fn to_real(&self) -> State<Real> {
        State { vars: self.vars.clone(), values: self.values.iter().map(|v| Real::from_f64(*v)).collect() }
    }
}

impl<S: Scalar + fmt::Display> fmt::Display for State<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.vars.names().iter().zip(&self.values).map(|(n, v)| format!("{n}={v}")).collect();
        f.write_str(&parts.join(" "))
    }
}
