//! Central finite-difference verification of analytic gradients.

use super::params::{Grads, ParamStore};

const STEP: f64 = 1e-5;
/// Differences below this are treated as agreement regardless of scale.
const ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compares the gradients `loss` writes into `Grads` with central finite
/// differences of its value, for every scalar of every parameter.
///
/// `loss(store, None)` must only evaluate; `loss(store, Some(g))` must also
/// backpropagate into `g`.
pub fn check_gradients<F>(store: &ParamStore, loss: F, rel_tol: f64) -> Result<GradCheckReport, String>
where
    F: Fn(&ParamStore, Option<&mut Grads>) -> f64,
{
    let mut grads = Grads::for_store(store);
    loss(store, Some(&mut grads));
    let mut probe = store.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for id in store.ids() {
        let n = store.get(id).len();
        for k in 0..n {
            let orig = store.get(id).as_slice().expect("contiguous")[k];
            probe.get_mut(id).as_slice_mut().expect("contiguous")[k] = orig + STEP;
            let up = loss(&probe, None);
            probe.get_mut(id).as_slice_mut().expect("contiguous")[k] = orig - STEP;
            let down = loss(&probe, None);
            probe.get_mut(id).as_slice_mut().expect("contiguous")[k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let analytic = grads.get(id).map_or(0.0, |g| g.as_slice().expect("contiguous")[k]);
            let diff = (numeric - analytic).abs();
            let scale = numeric.abs().max(analytic.abs());
            let rel = if diff <= ABS_FLOOR { 0.0 } else { diff / scale };
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((store.name(id).to_string(), k, analytic, numeric));
            }
        }
    }
    if report.max_rel_error > rel_tol {
        return Err(format!(
            "gradient mismatch: max relative error {:.3e} at {:?}",
            report.max_rel_error, report.worst
        ));
    }
    Ok(report)
}
