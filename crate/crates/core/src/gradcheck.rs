//! Central finite-difference verification of analytic gradients.

use serde::Serialize;

use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::param::ParamStore;
use crate::tensor::Tensor;
use crate::Real;

/// Finite-difference step.
pub const FD_STEP: Real = 1e-5;

/// Relative errors are measured against `max(|analytic|, |numeric|, DENOM_FLOOR)`
/// so that entries whose true gradient is zero are judged absolutely.
pub const DENOM_FLOOR: Real = 1e-6;

/// Anything holding parameters that a gradient check should perturb.
pub trait ParamSource {
    fn stores(&self) -> Vec<&ParamStore>;
    fn stores_mut(&mut self) -> Vec<&mut ParamStore>;
}

impl ParamSource for () {
    fn stores(&self) -> Vec<&ParamStore> {
        Vec::new()
    }
    fn stores_mut(&mut self) -> Vec<&mut ParamStore> {
        Vec::new()
    }
}

impl ParamSource for ParamStore {
    fn stores(&self) -> Vec<&ParamStore> {
        vec![self]
    }
    fn stores_mut(&mut self) -> Vec<&mut ParamStore> {
        vec![self]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckEntry {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: Real,
    pub max_abs_error: Real,
    pub passed: bool,
}

impl GradcheckEntry {
    pub fn compare(name: impl Into<String>, analytic: &[Real], numeric: &[Real], rel_tol: Real) -> Self {
        let mut max_rel: Real = 0.0;
        let mut max_abs: Real = 0.0;
        for (&a, &n) in analytic.iter().zip(numeric) {
            let abs = (a - n).abs();
            let rel = abs / a.abs().max(n.abs()).max(DENOM_FLOOR);
            max_abs = max_abs.max(abs);
            // NaN never compares greater, so fold it in explicitly.
            if rel.is_nan() || rel > max_rel {
                max_rel = rel;
            }
        }
        GradcheckEntry {
            name: name.into(),
            checked: analytic.len(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            passed: max_rel <= rel_tol,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub rel_tol: Real,
    pub entries: Vec<GradcheckEntry>,
    pub passed: bool,
}

impl GradcheckReport {
    pub fn from_entries(entries: Vec<GradcheckEntry>, rel_tol: Real) -> Self {
        let passed = entries.iter().all(|e| e.passed);
        GradcheckReport {
            rel_tol,
            entries,
            passed,
        }
    }

    pub fn max_rel_error(&self) -> Real {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, Real::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradcheckEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }
}

/// Checks the gradient of the scalar `f` with respect to each of `inputs`.
pub fn gradcheck<F>(inputs: &[Tensor], rel_tol: Real, mut f: F) -> Result<GradcheckReport>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    gradcheck_module(&mut (), inputs, rel_tol, |g, _, vars| f(g, vars))
}

/// Checks gradients with respect to `inputs` and every trainable
/// parameter reachable through `module`. Frozen parameters are skipped:
/// their gradient is zero by contract, not by calculus.
pub fn gradcheck_module<M, F>(module: &mut M, inputs: &[Tensor], rel_tol: Real, mut f: F) -> Result<GradcheckReport>
where
    M: ParamSource,
    F: FnMut(&mut Graph, &M, &[Var]) -> Result<Var>,
{
    // Analytic pass.
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let loss = f(&mut g, module, &vars)?;
    g.backward(loss)?;
    let input_grads: Vec<Vec<Real>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).map_or_else(|| vec![0.0; t.numel()], <[Real]>::to_vec))
        .collect();
    let mut param_grads = Vec::new();
    for (s, store) in module.stores().iter().enumerate() {
        for id in store.ids() {
            let p = store.get(id);
            if !p.trainable {
                continue;
            }
            let grad = g
                .bound_params()
                .find(|(pid, _)| *pid == id)
                .and_then(|(_, v)| g.grad(v))
                .map_or_else(|| vec![0.0; p.numel()], <[Real]>::to_vec);
            param_grads.push((s, id, p.name.clone(), grad));
        }
    }

    let mut eval = |module: &M, inputs: &[Tensor]| -> Result<Real> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let loss = f(&mut g, module, &vars)?;
        Ok(g.value(loss).item())
    };

    let mut entries = Vec::new();
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, analytic) in input_grads.iter().enumerate() {
        let mut numeric = vec![0.0; analytic.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + FD_STEP;
            let up = eval(module, &work)?;
            work[i].data_mut()[j] = orig - FD_STEP;
            let down = eval(module, &work)?;
            work[i].data_mut()[j] = orig;
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        entries.push(GradcheckEntry::compare(format!("input{i}"), analytic, &numeric, rel_tol));
    }
    for (s, id, name, analytic) in param_grads {
        let mut numeric = vec![0.0; analytic.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let orig = module.stores()[s].get(id).value.data()[j];
            module.stores_mut()[s].get_mut(id).value.data_mut()[j] = orig + FD_STEP;
            let up = eval(module, inputs)?;
            module.stores_mut()[s].get_mut(id).value.data_mut()[j] = orig - FD_STEP;
            let down = eval(module, inputs)?;
            module.stores_mut()[s].get_mut(id).value.data_mut()[j] = orig;
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        entries.push(GradcheckEntry::compare(name, &analytic, &numeric, rel_tol));
    }
    Ok(GradcheckReport::from_entries(entries, rel_tol))
}
