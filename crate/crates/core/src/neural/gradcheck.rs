use super::{GradBuffer, ParameterSet};

/// Absolute floor on the relative-error denominator, so that coordinates
/// whose true gradient is zero are judged against round-off rather than 0/0.
pub const DEFAULT_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Central differences on every coordinate of `params`; compares against
/// `analytic` with `|a - n| / max(|a|, |n|, DEFAULT_FLOOR)`.
pub fn grad_check<F>(params: &ParameterSet, analytic: &GradBuffer, step: f64, mut loss: F) -> GradCheckReport
where
    F: FnMut(&ParameterSet) -> f64,
{
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    for name in params.names() {
        let len = params.get(&name).map_or(0, |t| t.len());
        for i in 0..len {
            let orig = params.get(&name).unwrap().data()[i];
            probe.get_mut(&name).unwrap().data_mut()[i] = orig + step;
            let up = loss(&probe);
            probe.get_mut(&name).unwrap().data_mut()[i] = orig - step;
            let down = loss(&probe);
            probe.get_mut(&name).unwrap().data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.get(&name).map_or(0.0, |t| t.data()[i]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(DEFAULT_FLOOR);
            report.coordinates += 1;
            if rel > report.max_rel_error || !rel.is_finite() {
                report.max_rel_error = if rel.is_finite() { rel } else { f64::INFINITY };
                report.worst_param = name.clone();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    report
}
