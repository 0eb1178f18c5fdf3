//! Numerical gradient checking by central finite differences.
//!
//! These utilities only ever evaluate forward passes, so they are an
//! independent oracle for [`crate::autodiff::Tape::backward`]: a checked
//! function is re-run with each input element nudged by `+h` and `-h` and the
//! centered difference is compared against the analytic gradient.

use crate::tensor::Tensor;

/// Default step for central differences.
pub const FD_STEP: f64 = 1e-5;
/// Absolute floor used when forming relative errors.
pub const ABS_FLOOR: f64 = 1e-8;

/// Relative error with an absolute floor: `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Result of checking one tensor worth of gradients.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub checked: usize,
}

impl CheckReport {
    pub fn within(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Central finite-difference gradient of `f` with respect to `x`,
/// element by element.
pub fn numeric_grad(x: &Tensor, h: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.dims().to_vec());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        out.data_mut()[i] = (up - down) / (2.0 * h);
    }
    out
}

/// Compare an analytic gradient against central differences of `f` at `x`.
pub fn check_grad(
    x: &Tensor,
    analytic: &Tensor,
    h: f64,
    f: impl FnMut(&Tensor) -> f64,
) -> CheckReport {
    let numeric = numeric_grad(x, h, f);
    let mut report = CheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        checked: x.len(),
    };
    for i in 0..x.len() {
        let a = analytic.data()[i];
        let n = numeric.data()[i];
        let rel = relative_error(a, n, ABS_FLOOR);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.analytic_at_worst = a;
            report.numeric_at_worst = n;
        }
    }
    report
}
