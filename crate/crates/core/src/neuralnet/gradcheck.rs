//! Central finite-difference gradient checking.

use super::Parameterized;

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

pub const FD_EPSILON: f64 = 1e-5;

/// Relative error with the denominator floored at `1e-6`, so entries whose
/// true gradient is essentially zero are judged on absolute error.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares `grads` against central differences of `loss` for every entry of
/// every tensor of `params`.
pub fn check_gradients<P, F>(params: &P, grads: &P, loss: F) -> GradCheckReport
where
    P: Parameterized + Clone,
    F: Fn(&P) -> f64,
{
    let mut report = GradCheckReport::default();
    let names: Vec<String> = params
        .named_tensors()
        .iter()
        .map(|(n, _)| n.to_string())
        .collect();
    let analytic: Vec<Vec<f64>> = grads
        .named_tensors()
        .iter()
        .map(|(_, t)| t.data().to_vec())
        .collect();
    let mut probe = params.clone();
    for (ti, name) in names.iter().enumerate() {
        let n = analytic[ti].len();
        for i in 0..n {
            let orig = probe.tensors_mut()[ti].data()[i];
            probe.tensors_mut()[ti].data_mut()[i] = orig + FD_EPSILON;
            let up = loss(&probe);
            probe.tensors_mut()[ti].data_mut()[i] = orig - FD_EPSILON;
            let down = loss(&probe);
            probe.tensors_mut()[ti].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_EPSILON);
            let err = relative_error(analytic[ti][i], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = Some((name.clone(), i));
                }
            }
        }
    }
    report
}
