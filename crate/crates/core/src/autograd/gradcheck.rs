use serde::Serialize;

use super::{Graph, ParamId, ParamStore, Var};
use crate::error::Result;

/// Denominator floor for relative error, so entries whose true gradient is
/// zero are judged by absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares backprop gradients of the scalar built by `f` against central
/// differences `(f(p+h) - f(p-h)) / 2h` for every entry of `params`.
///
/// `f` must be deterministic: it is re-run for every perturbation.
pub fn grad_check<F>(
    mut f: F,
    store: &mut ParamStore,
    params: &[ParamId],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let mut graph = Graph::new();
    let loss = f(&mut graph, store)?;
    graph.backward(loss, store)?;

    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = f(&mut g, store)?;
        Ok(g.value(l).data()[0])
    };

    let mut checks = Vec::with_capacity(params.len());
    for &id in params {
        let analytic = store.get(id).grad.data().to_vec();
        let mut max_abs: f64 = 0.0;
        let mut max_rel: f64 = 0.0;
        for (k, &a) in analytic.iter().enumerate() {
            let original = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = original + h;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[k] = original - h;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[k] = original;
            let numeric = (plus - minus) / (2.0 * h);
            max_abs = max_abs.max((a - numeric).abs());
            max_rel = max_rel.max(relative_error(a, numeric));
        }
        checks.push(ParamCheck {
            name: store.get(id).name.clone(),
            entries: analytic.len(),
            max_abs_error: max_abs,
            max_rel_error: max_rel,
        });
    }
    let max_rel_error = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        params: checks,
        max_rel_error,
        tolerance: tol,
        passed: max_rel_error < tol,
    })
}
