//! Central finite-difference gradient checking.
//!
//! The reference derivatives here only ever evaluate the forward pass, so
//! they are independent of every backward rule they are compared against.

use super::{GradError, Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(input index, element index)` of the worst element.
    pub worst: (usize, usize),
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub checked: usize,
}

/// Relative error with a floor on the denominator so that gradients that
/// are both essentially zero compare equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-6);
    (a - b).abs() / denom
}

/// Loss value of `f` with every input fed as a constant.
pub fn eval<F>(inputs: &[Tensor<f64>], f: &F) -> Result<f64, GradError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, GradError>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    if g.value(out).numel() != 1 {
        return Err(GradError::NonScalarLoss(g.shape(out).to_vec()));
    }
    Ok(g.value(out).item())
}

/// Analytic gradients of `f` with respect to every input.
pub fn analytic<F>(inputs: &[Tensor<f64>], f: &F) -> Result<Vec<Tensor<f64>>, GradError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, GradError>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let mut grads = g.backward(out)?;
    Ok(vars
        .iter()
        .map(|&v| grads.take(v).expect("leaf gradient"))
        .collect())
}

/// Compares analytic gradients against central differences with step `h`.
/// At most `max_per_input` evenly spaced elements of each input are probed.
pub fn check<F>(
    inputs: &[Tensor<f64>],
    f: F,
    h: f64,
    max_per_input: usize,
) -> Result<GradCheckReport, GradError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, GradError>,
{
    let grads = analytic(inputs, &f)?;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        checked: 0,
    };
    let mut probe = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let step = n.div_ceil(max_per_input.max(1)).max(1);
        for j in (0..n).step_by(step) {
            let orig = input.data()[j];
            probe[i].data_mut()[j] = orig + h;
            let plus = eval(&probe, &f)?;
            probe[i].data_mut()[j] = orig - h;
            let minus = eval(&probe, &f)?;
            probe[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = grads[i].data()[j];
            let e = rel_err(a, numeric);
            report.checked += 1;
            if e > report.max_rel_err || report.checked == 1 {
                report.max_rel_err = e;
                report.worst = (i, j);
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
    }
    Ok(report)
}
