use super::graph::{Graph, NodeId};
use super::tensor::{ParamId, ParamStore};
use crate::error::{invalid, Error, Result};
use crate::math;

/// Compares reverse-mode gradients against central differences.
///
/// `build` records a scalar loss on a fresh graph. It is called once for the
/// analytic pass and twice per parameter element for the numerical pass, so
/// it must be deterministic. Returns the maximum over all elements of
/// `|analytic − numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(store: &mut ParamStore, params: &[ParamId], eps: f64, mut build: F) -> Result<f64>
where
    F: FnMut(&ParamStore, &mut Graph) -> Result<NodeId>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(invalid(alloc::format!("grad_check eps {eps} outside [1e-7, 1e-3]")));
    }
    let mut g = Graph::new();
    let loss = build(store, &mut g)?;
    let analytic = g.gradients(loss)?;
    drop(g);

    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let loss = build(store, &mut g)?;
        let v = g.scalar(loss);
        if !v.is_finite() {
            return Err(Error::NonFinite("loss during grad_check".into()));
        }
        Ok(v)
    };

    let mut worst: f64 = 0.0;
    for &id in params {
        let n = store.get(id).len();
        let exact: alloc::vec::Vec<f64> = match analytic.get(id) {
            Some(g) => g.to_vec(),
            None => alloc::vec![0.0; n],
        };
        for i in 0..n {
            let orig = store.get(id).values()[i];
            store.get_mut(id).values_mut()[i] = orig + eps;
            let plus = eval(store);
            store.get_mut(id).values_mut()[i] = orig - eps;
            let minus = eval(store);
            store.get_mut(id).values_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let a = exact[i];
            if !a.is_finite() {
                return Err(Error::NonFinite(alloc::format!("analytic gradient of {}", store.name(id))));
            }
            let rel = math::abs(a - numeric) / f64::max(1.0, math::abs(a));
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
