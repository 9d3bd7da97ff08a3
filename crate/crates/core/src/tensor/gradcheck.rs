use super::{Graph, ParamId, ParamStore, Var};
use crate::error::Result;

/// Relative errors use `max(|analytic|, |numeric|, DENOM_FLOOR)` as denominator.
const DENOM_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct GroupReport {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Elements skipped because the perturbation crossed a relu kink or
    /// changed a pooling selection.
    pub exempted: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub max_rel_error: f64,
    pub tol: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn exempted_fraction(&self) -> f64 {
        let total: usize = self.groups.iter().map(|g| g.checked + g.exempted).sum();
        let skipped: usize = self.groups.iter().map(|g| g.exempted).sum();
        if total == 0 {
            0.0
        } else {
            skipped as f64 / total as f64
        }
    }
}

fn evaluate<F>(store: &ParamStore, build: &mut F) -> Result<(f64, u64)>
where
    F: FnMut(&ParamStore, &mut Graph) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = build(store, &mut g)?;
    Ok((g.value(loss).item(), g.regime()))
}

/// Compares analytic gradients of `build` with central differences
/// `(L(θ+eps) - L(θ-eps)) / 2eps` for every element of every parameter.
///
/// `build` must be a pure function of the parameter values: any randomness
/// (dropout) has to be reseeded on each call. Elements whose perturbation
/// moves any relu or pooling decision are exempted, since the loss is not
/// differentiable across that interval.
pub fn finite_diff_check<F>(
    store: &mut ParamStore,
    mut build: F,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &mut Graph) -> Result<Var>,
{
    assert!(eps > 0.0, "eps must be positive");
    store.zero_grads();
    let mut g = Graph::new();
    let loss = build(store, &mut g)?;
    g.backward(loss)?;
    let base_regime = g.regime();
    g.store_grads(store);
    let ids: Vec<ParamId> = store.ids().collect();
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| {
            store
                .grad(id)
                .map(|t| t.data().to_vec())
                .unwrap_or_else(|| vec![0.0; store.value(id).numel()])
        })
        .collect();

    let mut groups = Vec::with_capacity(ids.len());
    for (&id, grad) in ids.iter().zip(&analytic) {
        let mut report = GroupReport {
            name: store.name(id).to_string(),
            max_rel_error: 0.0,
            checked: 0,
            exempted: 0,
        };
        for (e, &a) in grad.iter().enumerate() {
            let original = store.value(id).data()[e];
            store.value_mut(id).data_mut()[e] = original + eps;
            let (plus, regime_plus) = evaluate(store, &mut build)?;
            store.value_mut(id).data_mut()[e] = original - eps;
            let (minus, regime_minus) = evaluate(store, &mut build)?;
            store.value_mut(id).data_mut()[e] = original;
            if regime_plus != base_regime || regime_minus != base_regime {
                report.exempted += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = a.abs().max(numeric.abs()).max(DENOM_FLOOR);
            let rel = (a - numeric).abs() / denom;
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
        groups.push(report);
    }
    store.zero_grads();
    let max_rel_error = groups.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        passed: max_rel_error <= tol,
        groups,
        max_rel_error,
        tol,
    })
}
