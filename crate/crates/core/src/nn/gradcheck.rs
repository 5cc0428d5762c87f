use super::{Matrix, Module, NnError, Scalar};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Denominator floor for the relative error, so entries whose true
    /// gradient is essentially zero are judged on absolute error.
    pub floor: f64,
    /// Check at most this many evenly spaced entries per tensor.
    pub max_entries_per_tensor: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            floor: 1e-4,
            max_entries_per_tensor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Compare analytic gradients against central finite differences.
///
/// `loss` evaluates the model; when its flag is true it must also
/// backpropagate into the (already zeroed) parameter gradients. It is
/// called once with the flag set, then twice per checked entry without.
pub fn gradient_check<T, M, F>(
    model: &mut M,
    mut loss: F,
    options: GradCheckOptions,
) -> Result<GradCheckReport, NnError>
where
    T: Scalar,
    M: Module<T>,
    F: FnMut(&mut M, bool) -> Result<T, NnError>,
{
    model.zero_grad();
    loss(model, true)?;
    let analytic: Vec<(String, Matrix<T>)> = model
        .params()
        .into_iter()
        .map(|(n, p)| (n, p.grad.clone()))
        .collect();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        entries_checked: 0,
    };
    let h = T::lit(options.step);
    for (ti, (name, grad)) in analytic.iter().enumerate() {
        let len = grad.as_slice().len();
        let stride = match options.max_entries_per_tensor {
            Some(m) if m > 0 && len > m => len.div_ceil(m),
            _ => 1,
        };
        for idx in (0..len).step_by(stride) {
            let original = model.params_mut()[ti].1.value.as_slice()[idx];
            model.params_mut()[ti].1.value.as_mut_slice()[idx] = original + h;
            let plus = loss(model, false)?;
            model.params_mut()[ti].1.value.as_mut_slice()[idx] = original - h;
            let minus = loss(model, false)?;
            model.params_mut()[ti].1.value.as_mut_slice()[idx] = original;

            let numeric = (plus - minus).as_f64() / (2.0 * options.step);
            let a = grad.as_slice()[idx].as_f64();
            let denom = a.abs().max(numeric.abs()).max(options.floor);
            let rel = (a - numeric).abs() / denom;
            if !rel.is_finite() {
                return Err(NnError::NonFinite(format!("{name}[{idx}]")));
            }
            report.entries_checked += 1;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_tensor = name.clone();
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
