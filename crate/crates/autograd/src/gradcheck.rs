//! Central finite-difference checking of analytic gradients.
//!
//! The numeric side only ever evaluates forward passes, so it is independent
//! of every backward closure it is used to check.

use crate::tensor::Tensor;

/// Magnitude below which differences are measured absolutely rather than relatively.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Compares `analytic` against central differences of `f` around `at`.
///
/// `f` receives a perturbed copy of `at` and returns the scalar loss.
pub fn check_tensor(
    name: &str,
    at: &Tensor,
    analytic: &Tensor,
    step: f64,
    mut f: impl FnMut(&Tensor) -> f64,
) -> GradCheck {
    assert_eq!(at.shape(), analytic.shape(), "{name}: analytic gradient shape mismatch");
    let mut report = GradCheck {
        name: name.to_string(),
        max_rel_err: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: at.numel(),
    };
    let mut probe = at.clone();
    for i in 0..at.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let fp = f(&probe);
        probe.data_mut()[i] = orig - step;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;
        let numeric = (fp - fm) / (2.0 * step);
        let a = analytic.data()[i];
        let e = rel_err(a, numeric);
        if e > report.max_rel_err || i == 0 {
            report.max_rel_err = e.max(report.max_rel_err);
            if e >= report.max_rel_err {
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    report
}
