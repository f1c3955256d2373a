//! Central finite-difference gradient checking.

use indexmap::IndexMap;

use super::{ParamStore, Result};

/// Step sizes swept by [`finite_difference_check`]; the reported error for
/// each entry is the minimum across the sweep.
pub const FD_EPS_SWEEP: [f64; 3] = [1e-4, 1e-5, 1e-6];

/// Compare analytic gradients against central finite differences of a
/// deterministic scalar function of the parameters (dropout must be off).
///
/// The numeric derivative is a fourth-order (five-point) central difference,
/// whose roundoff floor sits around 1e-13 on unit-scale losses; a plain
/// two-point stencil bottoms out near 1e-10, which is too coarse to certify
/// the tiny gradients that saturated LSTM gates produce. For every entry of
/// every parameter named in `analytic`, the relative error is
/// `|analytic - numeric| / (|analytic| + |numeric| + 1e-12)`, minimized over
/// the entries of `eps_sweep`. Returns the maximum over all entries.
pub fn finite_difference_check<F>(
    store: &mut ParamStore,
    analytic: &IndexMap<String, Vec<f64>>,
    mut f: F,
    eps_sweep: &[f64],
) -> Result<f64>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    assert!(!eps_sweep.is_empty(), "need at least one step size");
    let mut max_err = 0.0f64;
    for (name, grad) in analytic {
        for index in 0..grad.len() {
            let a = grad[index];
            let original = store.entry_value(name, index)?;
            let mut best = f64::INFINITY;
            for &eps in eps_sweep {
                let mut at = |x: f64| -> Result<f64> {
                    store.set_entry(name, index, x)?;
                    f(store)
                };
                // grouped as paired differences so a locally constant f
                // cancels exactly instead of leaving summation dust
                let inner = at(original + eps)? - at(original - eps)?;
                let outer = at(original + 2.0 * eps)? - at(original - 2.0 * eps)?;
                store.set_entry(name, index, original)?;
                let numeric = (8.0 * inner - outer) / (12.0 * eps);
                let err = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
                best = best.min(err);
                if best < 1e-10 {
                    break; // well below any tolerance this check is used with
                }
            }
            max_err = max_err.max(best);
        }
    }
    Ok(max_err)
}
