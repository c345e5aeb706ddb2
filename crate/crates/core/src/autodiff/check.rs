//! Central finite-difference verification of taped gradients.

use super::{Tape, Tensor, Var};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_input: usize,
    pub worst_coord: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares the taped gradient of a scalar-valued function against
/// `(f(x+eps) - f(x-eps)) / (2 eps)` coordinate-wise over every input.
/// The relative error uses denominator `max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> GradCheckReport
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars);
    assert_eq!(
        tape.value(out).len(),
        1,
        "grad_check target must be scalar, got {:?}",
        tape.value(out).shape
    );
    let grads = tape.backward(out);

    let eval = |xs: &[Tensor]| -> f64 {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.leaf(x.clone())).collect();
        let o = f(&mut t, &vs);
        t.value(o).item()
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_input: 0,
        worst_coord: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for (vi, input) in inputs.iter().enumerate() {
        let analytic = grads.get(&tape, vars[vi]);
        for c in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[vi].data[c] += eps;
            let mut minus = inputs.to_vec();
            minus[vi].data[c] -= eps;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps);
            let a = analytic.data[c];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            if rel > report.max_rel_error {
                report = GradCheckReport {
                    max_rel_error: rel,
                    worst_input: vi,
                    worst_coord: c,
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    report
}
